#pragma once
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <sstream>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "mlmlab/encoder.hpp"

namespace mlmlab {

inline constexpr char kCheckpointMagic[] = "MLMLAB01";

// shortest round-trippable decimal form
inline std::string format_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  double back = std::strtod(buf, nullptr);
  if (back == x) {
    for (int prec = 1; prec <= 16; ++prec) {
      char b2[64];
      std::snprintf(b2, sizeof(b2), "%.*g", prec, x);
      if (std::strtod(b2, nullptr) == x) return b2;
    }
  }
  return buf;
}

struct Checkpoint {
  EncoderConfig config;
  HeadSpec head;
  std::string objective;  // CLI spelling, e.g. "first:4"
  std::int64_t step = 0;
  ModelParams<float> params;
  ModelParams<float> adam_m;  // empty when no optimizer state is stored
  ModelParams<float> adam_v;
  std::map<std::string, std::string> meta;  // sorted, hence stable on disk

  // text manifest followed by raw little-endian float32 blobs
  void save(const std::filesystem::path& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write checkpoint: " + path.string());
    f << kCheckpointMagic << "\n";
    f << "encoder.num_layers=" << config.num_layers << "\n";
    f << "encoder.num_heads=" << config.num_heads << "\n";
    f << "encoder.hidden_dim=" << config.hidden_dim << "\n";
    f << "encoder.ffn_dim=" << config.ffn_dim << "\n";
    f << "encoder.max_seq_len=" << config.max_seq_len << "\n";
    f << "encoder.vocab_size=" << config.vocab_size << "\n";
    f << "encoder.dropout=" << format_double(config.dropout) << "\n";
    f << "head.kind=" << head.kind_name() << "\n";
    f << "head.num_classes=" << head.num_classes << "\n";
    f << "objective=" << objective << "\n";
    f << "step=" << step << "\n";
    for (const auto& [k, v] : meta) f << "meta." << k << "=" << v << "\n";
    auto emit_group = [&f](const char* group, const ModelParams<float>& p) {
      for (const auto& nt : p.tensors)
        f << "tensor " << group << " " << nt.name << " " << nt.t.rows << " " << nt.t.cols
          << "\n";
    };
    emit_group("params", params);
    emit_group("adam_m", adam_m);
    emit_group("adam_v", adam_v);
    f << "END\n";
    auto emit_blob = [&f](const ModelParams<float>& p) {
      for (const auto& nt : p.tensors)
        f.write(reinterpret_cast<const char*>(nt.t.v.data()),
                static_cast<std::streamsize>(nt.t.v.size() * sizeof(float)));
    };
    emit_blob(params);
    emit_blob(adam_m);
    emit_blob(adam_v);
    if (!f) throw std::runtime_error("write failure on checkpoint: " + path.string());
  }

  static Checkpoint load(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open checkpoint: " + path.string());
    std::string line;
    if (!std::getline(f, line) || line != kCheckpointMagic)
      throw std::runtime_error("bad checkpoint magic in " + path.string());
    Checkpoint ck;
    struct TensorDecl {
      std::string group, name;
      int rows, cols;
    };
    std::vector<TensorDecl> decls;
    while (std::getline(f, line)) {
      if (line == "END") break;
      if (line.rfind("tensor ", 0) == 0) {
        std::istringstream in(line.substr(7));
        TensorDecl d;
        in >> d.group >> d.name >> d.rows >> d.cols;
        if (!in) throw std::runtime_error("malformed tensor line: " + line);
        decls.push_back(std::move(d));
        continue;
      }
      auto eq = line.find('=');
      if (eq == std::string::npos) throw std::runtime_error("malformed manifest line: " + line);
      std::string key = line.substr(0, eq), val = line.substr(eq + 1);
      if (key == "encoder.num_layers") ck.config.num_layers = std::stoi(val);
      else if (key == "encoder.num_heads") ck.config.num_heads = std::stoi(val);
      else if (key == "encoder.hidden_dim") ck.config.hidden_dim = std::stoi(val);
      else if (key == "encoder.ffn_dim") ck.config.ffn_dim = std::stoi(val);
      else if (key == "encoder.max_seq_len") ck.config.max_seq_len = std::stoi(val);
      else if (key == "encoder.vocab_size") ck.config.vocab_size = std::stoi(val);
      else if (key == "encoder.dropout") ck.config.dropout = std::stod(val);
      else if (key == "head.kind")
        ck.head.kind = val == "mlm_head" ? HeadKind::kMlmHead : HeadKind::kLinearHead;
      else if (key == "head.num_classes") ck.head.num_classes = std::stoi(val);
      else if (key == "objective") ck.objective = val;
      else if (key == "step") ck.step = std::stoll(val);
      else if (key.rfind("meta.", 0) == 0) ck.meta[key.substr(5)] = val;
      else throw std::runtime_error("unknown manifest key: " + key);
    }
    for (const auto& d : decls) {
      Tensor<float> t(d.rows, d.cols);
      f.read(reinterpret_cast<char*>(t.v.data()),
             static_cast<std::streamsize>(t.v.size() * sizeof(float)));
      if (!f) throw std::runtime_error("truncated checkpoint blob in " + path.string());
      ModelParams<float>* group = d.group == "params"   ? &ck.params
                                  : d.group == "adam_m" ? &ck.adam_m
                                                        : &ck.adam_v;
      group->tensors.push_back({d.name, std::move(t)});
    }
    return ck;
  }
};

}  // namespace mlmlab
