#pragma once
#include <cctype>
#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "mlmlab/bpe.hpp"
#include "mlmlab/bytes.hpp"

namespace mlmlab {

enum class ObjectiveKind { kMlm, kFirstChar29, kLastChar29, kNChars };
enum class Direction { kFirst, kLast };

struct ObjectiveSpec {
  ObjectiveKind kind = ObjectiveKind::kMlm;
  Direction direction = Direction::kFirst;  // NChars only
  int n = 1;                                // NChars only

  static ObjectiveSpec mlm() { return {ObjectiveKind::kMlm}; }
  static ObjectiveSpec first_char29() { return {ObjectiveKind::kFirstChar29}; }
  static ObjectiveSpec last_char29() { return {ObjectiveKind::kLastChar29}; }
  static ObjectiveSpec nchars(Direction d, int n) {
    if (n < 1) throw std::invalid_argument("nchars: n must be >= 1");
    return {ObjectiveKind::kNChars, d, n};
  }

  // text form used by the CLI: mlm | firstchar29 | lastchar29 | first:N | last:N
  static ObjectiveSpec parse(const std::string& s) {
    if (s == "mlm") return mlm();
    if (s == "firstchar29") return first_char29();
    if (s == "lastchar29") return last_char29();
    auto colon = s.find(':');
    if (colon != std::string::npos) {
      std::string dir = s.substr(0, colon);
      int n = std::stoi(s.substr(colon + 1));
      if (dir == "first") return nchars(Direction::kFirst, n);
      if (dir == "last") return nchars(Direction::kLast, n);
    }
    throw std::invalid_argument("unknown objective syntax: " + s +
                                " (expected mlm|firstchar29|lastchar29|first:N|last:N)");
  }

  std::string to_string() const {
    switch (kind) {
      case ObjectiveKind::kMlm: return "mlm";
      case ObjectiveKind::kFirstChar29: return "firstchar29";
      case ObjectiveKind::kLastChar29: return "lastchar29";
      case ObjectiveKind::kNChars:
        return (direction == Direction::kFirst ? "first:" : "last:") + std::to_string(n);
    }
    return "?";
  }

  std::string direction_name() const {
    if (kind == ObjectiveKind::kMlm) return "mlm";
    if (kind == ObjectiveKind::kFirstChar29) return "first";
    if (kind == ObjectiveKind::kLastChar29) return "last";
    return direction == Direction::kFirst ? "first" : "last";
  }

  // n column for report rows: 0 for the 29-way baselines, -1 for MLM
  int n_for_report() const {
    if (kind == ObjectiveKind::kNChars) return n;
    if (kind == ObjectiveKind::kMlm) return -1;
    return 0;
  }
};

// First (or last) n characters of the Ġ-stripped surface, counted in Unicode
// scalar values; shorter tokens label as the whole remainder.
inline std::string token_label(const std::string& token_text, const ObjectiveSpec& spec) {
  if (spec.kind != ObjectiveKind::kNChars)
    throw std::invalid_argument("token_label requires an NChars objective");
  if (token_text.empty()) throw std::invalid_argument("token_label: empty token");
  auto cps = stripped_codepoints(token_text);
  auto n = static_cast<std::size_t>(spec.n);
  if (cps.size() <= n) return codepoints_to_utf8(cps, 0, cps.size());
  if (spec.direction == Direction::kFirst) return codepoints_to_utf8(cps, 0, n);
  return codepoints_to_utf8(cps, cps.size() - n, n);
}

// 29-way scheme: 26 case-folded letter classes, one digit class, one
// punctuation class, one catch-all.
inline constexpr int kChar29Classes = 29;
inline constexpr int kChar29Digit = 26;
inline constexpr int kChar29Punct = 27;
inline constexpr int kChar29Other = 28;

inline int classify_char_29(const std::string& token_text, Direction direction) {
  auto cps = stripped_codepoints(token_text);
  if (cps.empty()) return kChar29Other;
  std::uint32_t cp = direction == Direction::kFirst ? cps.front() : cps.back();
  if (cp < 128) {
    auto c = static_cast<unsigned char>(cp);
    if (std::isalpha(c)) return std::tolower(c) - 'a';
    if (std::isdigit(c)) return kChar29Digit;
    if (std::ispunct(c)) return kChar29Punct;
  }
  return kChar29Other;
}

inline std::string char29_label_text(int label) {
  if (label < 26) return std::string(1, static_cast<char>('a' + label));
  if (label == kChar29Digit) return "<digit>";
  if (label == kChar29Punct) return "<punct>";
  return "<other>";
}

struct LabelMap {
  static constexpr int kIgnore = -1;

  std::vector<int> token_id_to_label_id;  // kIgnore for special tokens
  std::vector<std::string> label_id_to_label_text;
  int num_classes = 0;

  int label_of(int token_id) const {
    return token_id_to_label_id.at(static_cast<std::size_t>(token_id));
  }
};

// Label ids are assigned by first occurrence over ascending token id.
inline LabelMap build_label_map(const Vocab& vocab, const ObjectiveSpec& spec) {
  LabelMap map;
  map.token_id_to_label_id.assign(static_cast<std::size_t>(vocab.size()), LabelMap::kIgnore);

  if (spec.kind == ObjectiveKind::kMlm) {
    for (int id = 0; id < vocab.size(); ++id) {
      if (vocab.is_special(id)) continue;
      map.token_id_to_label_id[static_cast<std::size_t>(id)] =
          static_cast<int>(map.label_id_to_label_text.size());
      map.label_id_to_label_text.push_back(vocab.token(id));
    }
  } else if (spec.kind == ObjectiveKind::kFirstChar29 || spec.kind == ObjectiveKind::kLastChar29) {
    Direction d =
        spec.kind == ObjectiveKind::kFirstChar29 ? Direction::kFirst : Direction::kLast;
    for (int k = 0; k < kChar29Classes; ++k)
      map.label_id_to_label_text.push_back(char29_label_text(k));
    for (int id = 0; id < vocab.size(); ++id) {
      if (vocab.is_special(id)) continue;
      map.token_id_to_label_id[static_cast<std::size_t>(id)] =
          classify_char_29(vocab.token(id), d);
    }
  } else {
    std::unordered_map<std::string, int> seen;
    for (int id = 0; id < vocab.size(); ++id) {
      if (vocab.is_special(id)) continue;
      std::string label = token_label(vocab.token(id), spec);
      auto [it, inserted] =
          seen.emplace(label, static_cast<int>(map.label_id_to_label_text.size()));
      if (inserted) map.label_id_to_label_text.push_back(label);
      map.token_id_to_label_id[static_cast<std::size_t>(id)] = it->second;
    }
  }
  map.num_classes = static_cast<int>(map.label_id_to_label_text.size());
  return map;
}

// class counts for complexity sweeps, keyed (direction, n)
struct ClassCountRow {
  std::string direction;
  int n = 0;  // 0 = the 29-way baseline, -1 = MLM reference line
  int num_classes = 0;
};

inline std::vector<ClassCountRow> count_classes_sweep(const Vocab& vocab,
                                                      const std::vector<Direction>& directions,
                                                      const std::vector<int>& n_values) {
  if (n_values.empty()) throw std::invalid_argument("count_classes_sweep: empty n_values");
  std::vector<ClassCountRow> rows;
  for (Direction d : directions) {
    std::string name = d == Direction::kFirst ? "first" : "last";
    rows.push_back({name, 0,
                    build_label_map(vocab, d == Direction::kFirst ? ObjectiveSpec::first_char29()
                                                                  : ObjectiveSpec::last_char29())
                        .num_classes});
    for (int n : n_values)
      rows.push_back(
          {name, n, build_label_map(vocab, ObjectiveSpec::nchars(d, n)).num_classes});
  }
  rows.push_back({"mlm", -1, build_label_map(vocab, ObjectiveSpec::mlm()).num_classes});
  return rows;
}

struct VocabCharStats {
  double mean = 0.0;
  double stddev = 0.0;  // population std
  int token_count = 0;
};

// mean/std of Ġ-stripped character lengths over non-special tokens
inline VocabCharStats vocab_char_stats(const Vocab& vocab) {
  double sum = 0.0, sumsq = 0.0;
  int count = 0;
  for (int id = 0; id < vocab.size(); ++id) {
    if (vocab.is_special(id)) continue;
    auto len = static_cast<double>(stripped_codepoints(vocab.token(id)).size());
    sum += len;
    sumsq += len * len;
    ++count;
  }
  if (count == 0) throw std::invalid_argument("vocab_char_stats: empty vocabulary");
  VocabCharStats s;
  s.token_count = count;
  s.mean = sum / count;
  double var = sumsq / count - s.mean * s.mean;
  s.stddev = var > 0 ? std::sqrt(var) : 0.0;
  return s;
}

}  // namespace mlmlab
