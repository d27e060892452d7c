#pragma once
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mlmlab/checkpoint.hpp"
#include "mlmlab/corpus.hpp"
#include "mlmlab/encoder.hpp"
#include "mlmlab/graph.hpp"
#include "mlmlab/masking.hpp"
#include "mlmlab/objective.hpp"
#include "mlmlab/rng.hpp"

namespace mlmlab {

struct PretrainConfig {
  int batch_size = 16;
  std::int64_t total_steps = 2000;
  double peak_lr = 2e-4;
  std::int64_t warmup_steps = 100;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-6;
  double weight_decay = 0.01;
  double mask_prob = 0.15;
  int seq_len = 128;
  std::uint64_t seed = 0;
  double grad_clip_norm = 1.0;  // <= 0 disables clipping
  std::int64_t checkpoint_every = 0;  // 0 = only final

  void validate() const {
    if (warmup_steps >= total_steps)
      throw std::invalid_argument("pretrain config: warmup_steps must be < total_steps");
    if (batch_size < 1 || total_steps < 1 || peak_lr <= 0 || adam_eps <= 0 || seq_len < 2)
      throw std::invalid_argument("pretrain config: rates and sizes must be positive");
  }

  // BERT-base-scale reference schedule
  static PretrainConfig reference(bool last_char = false) {
    PretrainConfig c;
    c.batch_size = 128;
    c.total_steps = 500000;
    c.peak_lr = last_char ? 1e-4 : 2e-4;
    c.warmup_steps = 10000;
    c.seq_len = 512;
    return c;
  }
};

// linear 0 -> peak over warmup, then linear peak -> 0 at total_steps
inline double lr_at_step(std::int64_t step, const PretrainConfig& cfg) {
  if (step < 0 || step > cfg.total_steps)
    throw std::invalid_argument("lr_at_step: step out of [0, total_steps]");
  if (step <= cfg.warmup_steps)
    return cfg.peak_lr * static_cast<double>(step) / static_cast<double>(cfg.warmup_steps);
  return cfg.peak_lr * static_cast<double>(cfg.total_steps - step) /
         static_cast<double>(cfg.total_steps - cfg.warmup_steps);
}

// Bias-corrected AdamW with decoupled weight decay. Decay applies only to
// tensors ModelParams::decayed() marks (weight matrices and embeddings).
// `step` is 1-based.
inline void adamw_update(ModelParams<float>& params, const ModelParams<float>& grads,
                         ModelParams<float>& m, ModelParams<float>& v, std::int64_t step,
                         double lr, const PretrainConfig& cfg) {
  if (params.tensors.size() != grads.tensors.size())
    throw std::invalid_argument("adamw_update: param/grad tensor count mismatch");
  double bc1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(step));
  double bc2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(step));
  for (std::size_t t = 0; t < params.tensors.size(); ++t) {
    auto& p = params.tensors[t];
    const auto& gt = grads.tensors[t];
    if (p.name != gt.name || !p.t.same_shape(gt.t))
      throw std::invalid_argument("adamw_update: tensor mismatch at " + p.name);
    for (float x : gt.t.v)
      if (!std::isfinite(x))
        throw std::runtime_error("adamw_update: non-finite gradient in " + p.name);
    auto& mt = m.tensors[t].t;
    auto& vt = v.tensors[t].t;
    bool decay = ModelParams<float>::decayed(p.name) && cfg.weight_decay > 0;
    for (std::size_t i = 0; i < p.t.v.size(); ++i) {
      double g = gt.t.v[i];
      double mi = cfg.adam_beta1 * mt.v[i] + (1.0 - cfg.adam_beta1) * g;
      double vi = cfg.adam_beta2 * vt.v[i] + (1.0 - cfg.adam_beta2) * g * g;
      mt.v[i] = static_cast<float>(mi);
      vt.v[i] = static_cast<float>(vi);
      double update = (mi / bc1) / (std::sqrt(vi / bc2) + cfg.adam_eps);
      if (decay) update += cfg.weight_decay * p.t.v[i];
      p.t.v[i] = static_cast<float>(p.t.v[i] - lr * update);
    }
  }
}

struct LossCurve {
  std::vector<std::pair<std::int64_t, double>> points;

  void save_csv(const std::filesystem::path& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write loss curve: " + path.string());
    f << "step,loss\n";
    for (const auto& [s, l] : points) f << s << "," << format_double(l) << "\n";
  }
};

struct PretrainResult {
  Checkpoint checkpoint;
  LossCurve curve;
  std::int64_t skipped_batches = 0;  // degenerate zero-mask batches
};

namespace detail {
inline ModelParams<float> zeros_like(const ModelParams<float>& p) {
  ModelParams<float> out;
  for (const auto& nt : p.tensors)
    out.tensors.push_back({nt.name, Tensor<float>(nt.t.rows, nt.t.cols)});
  return out;
}

inline void clip_global_norm(ModelParams<float>& grads, double max_norm) {
  double sq = 0;
  for (const auto& nt : grads.tensors)
    for (float x : nt.t.v) sq += static_cast<double>(x) * x;
  double norm = std::sqrt(sq);
  if (norm <= max_norm || norm == 0) return;
  auto s = static_cast<float>(max_norm / norm);
  for (auto& nt : grads.tensors)
    for (auto& x : nt.t.v) x *= s;
}
}  // namespace detail

// Masked pretraining loop: batches cycle over the packed corpus, masks are
// re-sampled per batch draw from seeds derived from (cfg.seed, step).
inline PretrainResult pretrain(const std::vector<Document>& docs, const Vocab& vocab,
                               const ObjectiveSpec& objective, EncoderConfig enc_cfg,
                               const PretrainConfig& cfg,
                               const std::filesystem::path& checkpoint_dir = {}) {
  cfg.validate();
  enc_cfg.vocab_size = vocab.size();
  enc_cfg.validate();

  LabelMap label_map = build_label_map(vocab, objective);
  HeadSpec head = objective.kind == ObjectiveKind::kMlm
                      ? HeadSpec::mlm_head(label_map.num_classes)
                      : HeadSpec::linear_head(label_map.num_classes);

  auto batches = make_batches(docs, vocab, cfg.seq_len, cfg.batch_size, cfg.seed);
  ModelParams<float> params = init_params<float>(enc_cfg, head, cfg.seed);
  ModelParams<float> adam_m = detail::zeros_like(params);
  ModelParams<float> adam_v = detail::zeros_like(params);

  PretrainResult result;
  std::int64_t adam_step = 0;
  for (std::int64_t step = 0; step < cfg.total_steps; ++step) {
    const Batch& batch = batches[static_cast<std::size_t>(step % batches.size())];
    MaskingConfig mask_cfg;
    mask_cfg.mask_prob = cfg.mask_prob;
    mask_cfg.seed = Rng::derive(cfg.seed, static_cast<std::uint64_t>(step));
    MaskedBatch masked = apply_masking(batch, vocab, label_map, mask_cfg);
    if (masked.num_flagged == 0) {
      ++result.skipped_batches;
      continue;
    }

    Graph<float> g(Rng::derive(cfg.seed ^ 0xd50f, static_cast<std::uint64_t>(step)));
    auto fwd = encode_forward(g, params, enc_cfg, masked.token_ids, masked.attention, true);
    auto logits = head_forward(g, params, fwd, head);

    std::vector<int> targets;
    std::vector<std::uint8_t> flags;
    for (std::size_t r = 0; r < masked.token_ids.size(); ++r)
      for (int s = 0; s < masked.seq_len; ++s) {
        flags.push_back(masked.mask_flags[r][static_cast<std::size_t>(s)]);
        int label = masked.target_labels[r][static_cast<std::size_t>(s)];
        targets.push_back(label == LabelMap::kIgnore ? 0 : label);
      }
    auto loss = g.cross_entropy_masked(logits, targets, flags);
    result.curve.points.emplace_back(step, static_cast<double>(g.value(loss).at(0, 0)));
    g.backward(loss);

    ModelParams<float> grads = detail::zeros_like(params);
    for (std::size_t t = 0; t < params.tensors.size(); ++t)
      grads.tensors[t].t = g.grad(fwd.param_ids[t]);
    if (cfg.grad_clip_norm > 0) detail::clip_global_norm(grads, cfg.grad_clip_norm);
    adamw_update(params, grads, adam_m, adam_v, ++adam_step, lr_at_step(step + 1, cfg), cfg);

    if (cfg.checkpoint_every > 0 && !checkpoint_dir.empty() &&
        (step + 1) % cfg.checkpoint_every == 0 && step + 1 < cfg.total_steps) {
      Checkpoint ck{enc_cfg, head, objective.to_string(), step + 1, params, adam_m, adam_v, {}};
      ck.save(checkpoint_dir / ("checkpoint_" + std::to_string(step + 1) + ".mlmlab"));
    }
  }

  result.checkpoint =
      Checkpoint{enc_cfg, head, objective.to_string(), cfg.total_steps, std::move(params),
                 std::move(adam_m), std::move(adam_v), {}};
  return result;
}

}  // namespace mlmlab
