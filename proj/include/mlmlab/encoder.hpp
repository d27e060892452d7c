#pragma once
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "mlmlab/graph.hpp"
#include "mlmlab/rng.hpp"
#include "mlmlab/tensor.hpp"

namespace mlmlab {

struct EncoderConfig {
  int num_layers = 2;
  int num_heads = 4;
  int hidden_dim = 64;
  int ffn_dim = 256;
  int max_seq_len = 128;
  int vocab_size = 0;
  double dropout = 0.1;

  void validate() const {
    if (num_layers < 1 || num_heads < 1 || hidden_dim < 1 || ffn_dim < 1 || max_seq_len < 1 ||
        vocab_size < 1)
      throw std::invalid_argument("encoder config: all dimensions must be positive");
    if (hidden_dim % num_heads != 0)
      throw std::invalid_argument("encoder config: hidden_dim must be divisible by num_heads");
    if (dropout < 0.0 || dropout >= 1.0)
      throw std::invalid_argument("encoder config: dropout must be in [0,1)");
  }

  // BERT-base shape used by the reference preset
  static EncoderConfig bert_base(int vocab) {
    return {12, 12, 768, 3072, 512, vocab, 0.1};
  }
};

enum class HeadKind { kMlmHead, kLinearHead };

struct HeadSpec {
  HeadKind kind = HeadKind::kLinearHead;
  int num_classes = 0;

  static HeadSpec mlm_head(int vocab_classes) { return {HeadKind::kMlmHead, vocab_classes}; }
  static HeadSpec linear_head(int classes) { return {HeadKind::kLinearHead, classes}; }

  std::string kind_name() const {
    return kind == HeadKind::kMlmHead ? "mlm_head" : "linear_head";
  }
};

template <class Real>
struct NamedTensor {
  std::string name;
  Tensor<Real> t;
};

template <class Real>
struct ModelParams {
  std::vector<NamedTensor<Real>> tensors;

  Tensor<Real>& find(const std::string& name) {
    for (auto& nt : tensors)
      if (nt.name == name) return nt.t;
    throw std::out_of_range("no parameter named " + name);
  }
  const Tensor<Real>& find(const std::string& name) const {
    return const_cast<ModelParams*>(this)->find(name);
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& nt : tensors) n += nt.t.size();
    return n;
  }

  template <class Other>
  ModelParams<Other> cast() const {
    ModelParams<Other> out;
    for (const auto& nt : tensors)
      out.tensors.push_back({nt.name, nt.t.template cast<Other>()});
    return out;
  }

  // weight matrices get weight decay; biases and norm parameters do not
  static bool decayed(const std::string& name) {
    auto ends_with = [&](const char* s) {
      std::string suf(s);
      return name.size() >= suf.size() && name.compare(name.size() - suf.size(), suf.size(), suf) == 0;
    };
    return ends_with(".w") || ends_with(".wq") || ends_with(".wk") || ends_with(".wv") ||
           ends_with(".wo") || ends_with(".w1") || ends_with(".w2") || ends_with("embed.tok") ||
           ends_with("embed.pos");
  }
};

// truncated normal (std 0.02, clipped at 2 sigma) weights, zero biases,
// unit norm gains; deterministic per seed
template <class Real>
ModelParams<Real> init_params(const EncoderConfig& cfg, const HeadSpec& head,
                              std::uint64_t seed) {
  cfg.validate();
  if (head.num_classes < 1) throw std::invalid_argument("head: num_classes must be positive");
  ModelParams<Real> p;
  auto weight = [&](const std::string& name, int r, int c) {
    p.tensors.push_back({name, Tensor<Real>(r, c)});
  };
  weight("embed.tok", cfg.vocab_size, cfg.hidden_dim);
  weight("embed.pos", cfg.max_seq_len, cfg.hidden_dim);
  weight("embed.ln.gain", 1, cfg.hidden_dim);
  weight("embed.ln.bias", 1, cfg.hidden_dim);
  for (int l = 0; l < cfg.num_layers; ++l) {
    std::string base = "layer" + std::to_string(l) + ".";
    weight(base + "attn.wq", cfg.hidden_dim, cfg.hidden_dim);
    weight(base + "attn.bq", 1, cfg.hidden_dim);
    weight(base + "attn.wk", cfg.hidden_dim, cfg.hidden_dim);
    weight(base + "attn.bk", 1, cfg.hidden_dim);
    weight(base + "attn.wv", cfg.hidden_dim, cfg.hidden_dim);
    weight(base + "attn.bv", 1, cfg.hidden_dim);
    weight(base + "attn.wo", cfg.hidden_dim, cfg.hidden_dim);
    weight(base + "attn.bo", 1, cfg.hidden_dim);
    weight(base + "attn.ln.gain", 1, cfg.hidden_dim);
    weight(base + "attn.ln.bias", 1, cfg.hidden_dim);
    weight(base + "ffn.w1", cfg.hidden_dim, cfg.ffn_dim);
    weight(base + "ffn.b1", 1, cfg.ffn_dim);
    weight(base + "ffn.w2", cfg.ffn_dim, cfg.hidden_dim);
    weight(base + "ffn.b2", 1, cfg.hidden_dim);
    weight(base + "ffn.ln.gain", 1, cfg.hidden_dim);
    weight(base + "ffn.ln.bias", 1, cfg.hidden_dim);
  }
  if (head.kind == HeadKind::kMlmHead) {
    weight("head.transform.w", cfg.hidden_dim, cfg.hidden_dim);
    weight("head.transform.b", 1, cfg.hidden_dim);
    weight("head.ln.gain", 1, cfg.hidden_dim);
    weight("head.ln.bias", 1, cfg.hidden_dim);
  }
  weight("head.proj.w", cfg.hidden_dim, head.num_classes);
  weight("head.proj.b", 1, head.num_classes);

  Rng rng(seed);
  for (auto& nt : p.tensors) {
    bool is_gain = nt.name.find(".ln.gain") != std::string::npos;
    bool is_bias = nt.name.find(".b") != std::string::npos || is_gain ||
                   nt.name.find(".ln.bias") != std::string::npos;
    bool is_matrix = ModelParams<Real>::decayed(nt.name);
    if (is_gain) {
      for (auto& x : nt.t.v) x = Real(1);
    } else if (is_matrix) {
      for (auto& x : nt.t.v) x = static_cast<Real>(rng.next_trunc_gaussian(0.02));
    } else {
      (void)is_bias;  // biases stay zero
    }
  }
  return p;
}

template <class Real>
struct EncoderForward {
  std::vector<typename Graph<Real>::Id> param_ids;  // aligned with params.tensors
  typename Graph<Real>::Id hidden = -1;             // [batch*seq x hidden]
  int batch = 0;
  int seq_len = 0;
};

// Post-norm transformer stack; padding masked out of attention with a large
// negative additive term before softmax. Dropout is active only when
// `training` is set.
template <class Real>
EncoderForward<Real> encode_forward(Graph<Real>& g, const ModelParams<Real>& params,
                                    const EncoderConfig& cfg,
                                    const std::vector<std::vector<int>>& token_ids,
                                    const std::vector<std::vector<std::uint8_t>>& attention,
                                    bool training) {
  cfg.validate();
  using Id = typename Graph<Real>::Id;
  int batch = static_cast<int>(token_ids.size());
  if (batch == 0) throw std::invalid_argument("encode_forward: empty batch");
  int seq = static_cast<int>(token_ids[0].size());
  if (seq > cfg.max_seq_len)
    throw std::invalid_argument("encode_forward: sequence length " + std::to_string(seq) +
                                " exceeds max_seq_len " + std::to_string(cfg.max_seq_len));

  EncoderForward<Real> fwd;
  fwd.batch = batch;
  fwd.seq_len = seq;
  std::vector<Id> pid;
  pid.reserve(params.tensors.size());
  for (const auto& nt : params.tensors) pid.push_back(g.leaf(nt.t, true));
  fwd.param_ids = pid;
  auto P = [&](const std::string& name) -> Id {
    for (std::size_t i = 0; i < params.tensors.size(); ++i)
      if (params.tensors[i].name == name) return pid[i];
    throw std::out_of_range("no parameter named " + name);
  };

  double drop = training ? cfg.dropout : 0.0;

  std::vector<int> flat_ids, pos_ids;
  flat_ids.reserve(static_cast<std::size_t>(batch) * seq);
  pos_ids.reserve(flat_ids.capacity());
  for (int b = 0; b < batch; ++b) {
    if (static_cast<int>(token_ids[b].size()) != seq)
      throw std::invalid_argument("encode_forward: ragged batch");
    for (int s = 0; s < seq; ++s) {
      flat_ids.push_back(token_ids[b][s]);
      pos_ids.push_back(s);
    }
  }

  Id x = g.add(g.embedding_rows(P("embed.tok"), flat_ids),
               g.embedding_rows(P("embed.pos"), pos_ids));
  x = g.add_row_broadcast(g.mul_row_broadcast(g.layer_norm_rows(x), P("embed.ln.gain")),
                          P("embed.ln.bias"));
  x = g.dropout(x, drop);

  // per-sequence additive attention masks (constant, shared across layers)
  const Real neg = Real(-1e9);
  std::vector<Tensor<Real>> seq_masks;
  for (int b = 0; b < batch; ++b) {
    Tensor<Real> m(seq, seq);
    for (int i = 0; i < seq; ++i)
      for (int j = 0; j < seq; ++j)
        if (!attention[static_cast<std::size_t>(b)][static_cast<std::size_t>(j)])
          m.at(i, j) = neg;
    seq_masks.push_back(std::move(m));
  }
  std::vector<Id> mask_ids;
  for (auto& m : seq_masks) mask_ids.push_back(g.constant(std::move(m)));

  int dh = cfg.hidden_dim / cfg.num_heads;
  Real inv_sqrt_dh = Real(1) / static_cast<Real>(std::sqrt(static_cast<double>(dh)));

  for (int l = 0; l < cfg.num_layers; ++l) {
    std::string base = "layer" + std::to_string(l) + ".";
    Id q = g.add_row_broadcast(g.matmul(x, P(base + "attn.wq")), P(base + "attn.bq"));
    Id k = g.add_row_broadcast(g.matmul(x, P(base + "attn.wk")), P(base + "attn.bk"));
    Id v = g.add_row_broadcast(g.matmul(x, P(base + "attn.wv")), P(base + "attn.bv"));

    std::vector<Id> ctx_rows;
    for (int b = 0; b < batch; ++b) {
      Id qb = g.slice_rows(q, b * seq, seq);
      Id kb = g.slice_rows(k, b * seq, seq);
      Id vb = g.slice_rows(v, b * seq, seq);
      std::vector<Id> heads;
      for (int h = 0; h < cfg.num_heads; ++h) {
        Id qh = g.slice_cols(qb, h * dh, dh);
        Id kh = g.slice_cols(kb, h * dh, dh);
        Id vh = g.slice_cols(vb, h * dh, dh);
        Id scores = g.scale(g.matmul(qh, g.transpose(kh)), inv_sqrt_dh);
        scores = g.add(scores, mask_ids[static_cast<std::size_t>(b)]);
        Id attn = g.softmax_rows(scores);
        attn = g.dropout(attn, drop);
        heads.push_back(g.matmul(attn, vh));
      }
      ctx_rows.push_back(g.concat_cols(heads));
    }
    Id ctx = batch == 1 ? ctx_rows[0] : g.concat_rows(ctx_rows);
    Id attn_out =
        g.add_row_broadcast(g.matmul(ctx, P(base + "attn.wo")), P(base + "attn.bo"));
    x = g.add(x, g.dropout(attn_out, drop));
    x = g.add_row_broadcast(
        g.mul_row_broadcast(g.layer_norm_rows(x), P(base + "attn.ln.gain")),
        P(base + "attn.ln.bias"));

    Id ff = g.add_row_broadcast(g.matmul(x, P(base + "ffn.w1")), P(base + "ffn.b1"));
    ff = g.gelu(ff);
    ff = g.add_row_broadcast(g.matmul(ff, P(base + "ffn.w2")), P(base + "ffn.b2"));
    x = g.add(x, g.dropout(ff, drop));
    x = g.add_row_broadcast(
        g.mul_row_broadcast(g.layer_norm_rows(x), P(base + "ffn.ln.gain")),
        P(base + "ffn.ln.bias"));
  }
  fwd.hidden = x;
  return fwd;
}

// logits over the objective's classes at every position
template <class Real>
typename Graph<Real>::Id head_forward(Graph<Real>& g, const ModelParams<Real>& params,
                                      const EncoderForward<Real>& fwd, const HeadSpec& head) {
  using Id = typename Graph<Real>::Id;
  auto P = [&](const std::string& name) -> Id {
    for (std::size_t i = 0; i < params.tensors.size(); ++i)
      if (params.tensors[i].name == name) return fwd.param_ids[i];
    throw std::out_of_range("no parameter named " + name);
  };
  Id h = fwd.hidden;
  if (g.value(h).cols != params.find("head.proj.w").rows)
    throw std::invalid_argument("head_forward: hidden width mismatch");
  if (head.kind == HeadKind::kMlmHead) {
    h = g.add_row_broadcast(g.matmul(h, P("head.transform.w")), P("head.transform.b"));
    h = g.gelu(h);
    h = g.add_row_broadcast(g.mul_row_broadcast(g.layer_norm_rows(h), P("head.ln.gain")),
                            P("head.ln.bias"));
  }
  return g.add_row_broadcast(g.matmul(h, P("head.proj.w")), P("head.proj.b"));
}

// closed-form head parameter count: transform block (MLM only) + projection
inline std::size_t head_param_count(const HeadSpec& head, int hidden_dim) {
  std::size_t n = static_cast<std::size_t>(hidden_dim) * head.num_classes + head.num_classes;
  if (head.kind == HeadKind::kMlmHead)
    n += static_cast<std::size_t>(hidden_dim) * hidden_dim + 3u * hidden_dim;
  return n;
}

}  // namespace mlmlab
