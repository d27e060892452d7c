#pragma once
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "mlmlab/checkpoint.hpp"
#include "mlmlab/corpus.hpp"
#include "mlmlab/encoder.hpp"
#include "mlmlab/metrics.hpp"
#include "mlmlab/objective.hpp"
#include "mlmlab/trainer.hpp"

namespace mlmlab {

struct FinetuneConfig {
  int batch_size = 16;
  int max_epochs = 10;
  double lr = 3e-5;
  double warmup_frac = 0.06;
  double weight_decay = 0.01;
  double patience_frac = 0.05;  // of total steps; <=0 disables early stopping
  double dev_frac = 0.2;
  int max_seq_len = 128;
  int max_answer_len = 30;  // span decoding window
  std::uint64_t seed = 0;

  void validate() const {
    if (batch_size < 1 || max_epochs < 1 || lr <= 0)
      throw std::invalid_argument("finetune config: sizes and rates must be positive");
    if (dev_frac <= 0 || dev_frac >= 1)
      throw std::invalid_argument("finetune config: dev_frac must be in (0,1)");
  }
};

struct MetricReport {
  // metric name -> per-seed values; aggregate() fills mean/std
  std::map<std::string, std::vector<double>> values;

  void add(const std::string& metric, double v) { values[metric].push_back(v); }

  MeanStd aggregate(const std::string& metric) const {
    auto it = values.find(metric);
    if (it == values.end()) throw std::out_of_range("no metric named " + metric);
    return mean_std(it->second);
  }

  int seed_count() const {
    return values.empty() ? 0 : static_cast<int>(values.begin()->second.size());
  }
};

namespace detail {

struct EncodedSample {
  std::vector<int> ids;
  std::vector<std::uint8_t> attention;
  int label = 0;            // classification
  TokenSpan gold{};         // span, token indices into ids
  int passage_begin = 0;    // first passage token position (span decoding window)
  int passage_end = 0;      // last passage token position
};

inline EncodedSample encode_classification(const std::string& text, int label,
                                           const Vocab& vocab, int seq_len) {
  EncodedSample s;
  s.label = label;
  s.ids.push_back(SpecialTokens::kCls);
  auto ids = vocab.encode(text);
  for (int id : ids) {
    if (static_cast<int>(s.ids.size()) >= seq_len - 1) break;
    s.ids.push_back(id);
  }
  s.ids.push_back(SpecialTokens::kSep);
  s.attention.assign(s.ids.size(), 1);
  while (static_cast<int>(s.ids.size()) < seq_len) {
    s.ids.push_back(SpecialTokens::kPad);
    s.attention.push_back(0);
  }
  return s;
}

// [CLS] question [SEP] passage [SEP]; passage words encoded one by one so
// word-index gold spans map exactly onto token spans
inline EncodedSample encode_span(const SpanSample& sample, const Vocab& vocab, int seq_len) {
  EncodedSample s;
  s.ids.push_back(SpecialTokens::kCls);
  for (int id : vocab.encode(sample.question)) s.ids.push_back(id);
  s.ids.push_back(SpecialTokens::kSep);
  s.passage_begin = static_cast<int>(s.ids.size());

  std::vector<std::string> words;
  {
    std::istringstream in(sample.passage);
    std::string w;
    while (in >> w) words.push_back(w);
  }
  if (sample.start_token < 0 || sample.end_token < sample.start_token ||
      sample.end_token >= static_cast<int>(words.size()))
    throw std::invalid_argument("span sample: gold span outside passage");

  int gold_start = -1, gold_end = -1;
  for (std::size_t w = 0; w < words.size(); ++w) {
    // word-initial tokens carry the space marker except the first word
    std::string piece = w == 0 ? words[w] : " " + words[w];
    auto ids = vocab.encode(piece);
    if (static_cast<int>(s.ids.size() + ids.size()) > seq_len - 1) break;
    if (static_cast<int>(w) == sample.start_token) gold_start = static_cast<int>(s.ids.size());
    for (int id : ids) s.ids.push_back(id);
    if (static_cast<int>(w) == sample.end_token) gold_end = static_cast<int>(s.ids.size()) - 1;
  }
  s.passage_end = static_cast<int>(s.ids.size()) - 1;
  s.ids.push_back(SpecialTokens::kSep);
  if (gold_start < 0 || gold_end < 0) {
    // gold truncated away; mark as an unanswerable degenerate, CLS position
    gold_start = gold_end = 0;
  }
  s.gold = {gold_start, gold_end};
  s.attention.assign(s.ids.size(), 1);
  while (static_cast<int>(s.ids.size()) < seq_len) {
    s.ids.push_back(SpecialTokens::kPad);
    s.attention.push_back(0);
  }
  return s;
}

struct FinetuneModel {
  EncoderConfig cfg;
  ModelParams<float> params;  // encoder + task head tensors
};

inline std::int64_t patience_steps(const FinetuneConfig& cfg, std::int64_t total_steps) {
  if (cfg.patience_frac <= 0) return -1;
  return std::max<std::int64_t>(1, static_cast<std::int64_t>(
                                       std::ceil(cfg.patience_frac * static_cast<double>(total_steps))));
}

inline double finetune_lr(std::int64_t step, std::int64_t total, const FinetuneConfig& cfg) {
  auto warmup = std::max<std::int64_t>(1, static_cast<std::int64_t>(
                                              cfg.warmup_frac * static_cast<double>(total)));
  if (step <= warmup) return cfg.lr * static_cast<double>(step) / static_cast<double>(warmup);
  if (total <= warmup) return cfg.lr;
  return cfg.lr * static_cast<double>(total - step) / static_cast<double>(total - warmup);
}

}  // namespace detail

struct FinetuneResult {
  MetricReport report;  // single-seed values
  double dev_metric = 0.0;
};

// Mean-pooled representation over attended positions -> dropout -> linear
// classifier; the whole network is tuned. Early stopping monitors dev
// accuracy.
inline FinetuneResult finetune_classifier(const Checkpoint& ck, const ProbeTask& task,
                                          const Vocab& vocab, const FinetuneConfig& cfg) {
  cfg.validate();
  if (task.kind != TaskKind::kClassification)
    throw std::invalid_argument("finetune_classifier: task is not classification");
  if (task.classification.empty()) throw std::invalid_argument("finetune_classifier: empty dataset");
  for (const auto& s : task.classification)
    if (s.label < 0 || s.label >= task.num_labels)
      throw std::invalid_argument("finetune_classifier: label outside head width");

  EncoderConfig enc = ck.config;
  int seq_len = std::min(cfg.max_seq_len, enc.max_seq_len);
  std::vector<detail::EncodedSample> samples;
  for (const auto& s : task.classification)
    samples.push_back(detail::encode_classification(s.text, s.label, vocab, seq_len));

  // deterministic shuffled split
  Rng rng(cfg.seed);
  std::vector<std::size_t> order(samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (std::size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[rng.next_below(i)]);
  auto dev_count = std::max<std::size_t>(1, static_cast<std::size_t>(
                                                cfg.dev_frac * static_cast<double>(samples.size())));
  if (dev_count >= samples.size()) dev_count = samples.size() - 1;
  std::vector<std::size_t> dev_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(dev_count));
  std::vector<std::size_t> train_idx(order.begin() + static_cast<std::ptrdiff_t>(dev_count), order.end());

  // model = pretrained encoder params + fresh classifier head
  ModelParams<float> params;
  for (const auto& nt : ck.params.tensors)
    if (nt.name.rfind("head.", 0) != 0) params.tensors.push_back(nt);
  Rng hrng(Rng::derive(cfg.seed, 0xc1a55));
  Tensor<float> cw(enc.hidden_dim, task.num_labels);
  for (auto& x : cw.v) x = static_cast<float>(hrng.next_trunc_gaussian(0.02));
  params.tensors.push_back({"task.cls.w", cw});
  params.tensors.push_back({"task.cls.b", Tensor<float>(1, task.num_labels)});

  auto forward_logits = [&](Graph<float>& g, const std::vector<std::size_t>& idx, bool training,
                            std::vector<typename Graph<float>::Id>* param_ids) {
    std::vector<std::vector<int>> ids;
    std::vector<std::vector<std::uint8_t>> att;
    for (std::size_t i : idx) {
      ids.push_back(samples[i].ids);
      att.push_back(samples[i].attention);
    }
    auto fwd = encode_forward(g, params, enc, ids, att, training);
    if (param_ids) *param_ids = fwd.param_ids;
    // mean over attended positions, as a constant pooling matrix
    int S = fwd.seq_len;
    Tensor<float> pool(fwd.batch, fwd.batch * S);
    for (int b = 0; b < fwd.batch; ++b) {
      const auto& a = att[static_cast<std::size_t>(b)];
      float count = 0;
      for (int s = 0; s < S; ++s) count += a[static_cast<std::size_t>(s)];
      for (int s = 0; s < S; ++s)
        if (a[static_cast<std::size_t>(s)]) pool.at(b, b * S + s) = 1.0f / count;
    }
    auto pooled = g.matmul(g.constant(pool), fwd.hidden);
    pooled = g.dropout(pooled, training ? enc.dropout : 0.0);
    auto P = [&](const std::string& name) {
      for (std::size_t i = 0; i < params.tensors.size(); ++i)
        if (params.tensors[i].name == name) return fwd.param_ids[i];
      throw std::out_of_range("no parameter named " + name);
    };
    return g.add_row_broadcast(g.matmul(pooled, P("task.cls.w")), P("task.cls.b"));
  };

  auto evaluate = [&](const std::vector<std::size_t>& idx) {
    std::vector<int> preds, golds;
    for (std::size_t off = 0; off < idx.size(); off += static_cast<std::size_t>(cfg.batch_size)) {
      std::vector<std::size_t> chunk(
          idx.begin() + static_cast<std::ptrdiff_t>(off),
          idx.begin() + static_cast<std::ptrdiff_t>(
                            std::min(idx.size(), off + static_cast<std::size_t>(cfg.batch_size))));
      Graph<float> g(0);
      auto logits = forward_logits(g, chunk, false, nullptr);
      const auto& L = g.value(logits);
      for (int r = 0; r < L.rows; ++r) {
        int best = 0;
        for (int c = 1; c < L.cols; ++c)
          if (L.at(r, c) > L.at(r, best)) best = c;
        preds.push_back(best);
        golds.push_back(samples[chunk[static_cast<std::size_t>(r)]].label);
      }
    }
    return std::pair<std::vector<int>, std::vector<int>>{preds, golds};
  };

  auto steps_per_epoch = static_cast<std::int64_t>(
      (train_idx.size() + static_cast<std::size_t>(cfg.batch_size) - 1) /
      static_cast<std::size_t>(cfg.batch_size));
  std::int64_t total_steps = steps_per_epoch * cfg.max_epochs;
  std::int64_t patience = detail::patience_steps(cfg, total_steps);

  ModelParams<float> adam_m = detail::zeros_like(params);
  ModelParams<float> adam_v = detail::zeros_like(params);
  PretrainConfig opt;
  opt.adam_eps = 1e-8;
  opt.weight_decay = cfg.weight_decay;

  ModelParams<float> best_params = params;
  double best_dev = -1.0;
  std::int64_t best_step = 0, step = 0;
  bool stop = false;
  for (int epoch = 0; epoch < cfg.max_epochs && !stop; ++epoch) {
    // fresh epoch shuffle
    Rng erng(Rng::derive(cfg.seed, 0xe90c + static_cast<std::uint64_t>(epoch)));
    std::vector<std::size_t> epoch_idx = train_idx;
    for (std::size_t i = epoch_idx.size(); i > 1; --i)
      std::swap(epoch_idx[i - 1], epoch_idx[erng.next_below(i)]);
    for (std::size_t off = 0; off < epoch_idx.size();
         off += static_cast<std::size_t>(cfg.batch_size)) {
      std::vector<std::size_t> chunk(
          epoch_idx.begin() + static_cast<std::ptrdiff_t>(off),
          epoch_idx.begin() +
              static_cast<std::ptrdiff_t>(std::min(
                  epoch_idx.size(), off + static_cast<std::size_t>(cfg.batch_size))));
      Graph<float> g(Rng::derive(cfg.seed ^ 0xf17e, static_cast<std::uint64_t>(step)));
      std::vector<typename Graph<float>::Id> param_ids;
      auto logits = forward_logits(g, chunk, true, &param_ids);
      std::vector<int> targets;
      std::vector<std::uint8_t> flags(chunk.size(), 1);
      for (std::size_t i : chunk) targets.push_back(samples[i].label);
      auto loss = g.cross_entropy_masked(logits, targets, flags);
      g.backward(loss);
      ModelParams<float> grads = detail::zeros_like(params);
      for (std::size_t t = 0; t < params.tensors.size(); ++t)
        grads.tensors[t].t = g.grad(param_ids[t]);
      detail::clip_global_norm(grads, 1.0);
      ++step;
      adamw_update(params, grads, adam_m, adam_v, step,
                   detail::finetune_lr(step, total_steps, cfg), opt);
    }
    auto [preds, golds] = evaluate(dev_idx);
    double dev = accuracy(preds, golds);
    if (dev > best_dev) {
      best_dev = dev;
      best_params = params;
      best_step = step;
    } else if (patience > 0 && step - best_step >= patience) {
      stop = true;
    }
  }
  params = best_params;

  FinetuneResult res;
  auto [preds, golds] = evaluate(dev_idx);
  res.dev_metric = accuracy(preds, golds);
  res.report.add("accuracy", res.dev_metric);
  if (task.num_labels == 2) res.report.add("matthews", matthews_corr(preds, golds));
  return res;
}

// Independent start/end position logits; decoding picks the argmax pair with
// start <= end within the answer window, restricted to passage tokens.
inline FinetuneResult finetune_span(const Checkpoint& ck, const ProbeTask& task,
                                    const Vocab& vocab, const FinetuneConfig& cfg) {
  cfg.validate();
  if (task.kind != TaskKind::kSpan) throw std::invalid_argument("finetune_span: task is not span");
  if (task.span.empty()) throw std::invalid_argument("finetune_span: empty dataset");

  EncoderConfig enc = ck.config;
  int seq_len = std::min(cfg.max_seq_len, enc.max_seq_len);
  std::vector<detail::EncodedSample> samples;
  for (const auto& s : task.span) samples.push_back(detail::encode_span(s, vocab, seq_len));

  Rng rng(cfg.seed);
  std::vector<std::size_t> order(samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (std::size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[rng.next_below(i)]);
  auto dev_count = std::max<std::size_t>(1, static_cast<std::size_t>(
                                                cfg.dev_frac * static_cast<double>(samples.size())));
  if (dev_count >= samples.size()) dev_count = samples.size() - 1;
  std::vector<std::size_t> dev_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(dev_count));
  std::vector<std::size_t> train_idx(order.begin() + static_cast<std::ptrdiff_t>(dev_count), order.end());

  ModelParams<float> params;
  for (const auto& nt : ck.params.tensors)
    if (nt.name.rfind("head.", 0) != 0) params.tensors.push_back(nt);
  Rng hrng(Rng::derive(cfg.seed, 0x59a2));
  Tensor<float> sw(enc.hidden_dim, 2);
  for (auto& x : sw.v) x = static_cast<float>(hrng.next_trunc_gaussian(0.02));
  params.tensors.push_back({"task.span.w", sw});
  params.tensors.push_back({"task.span.b", Tensor<float>(1, 2)});

  // returns start/end logit matrices [batch x seq]
  auto forward_logits = [&](Graph<float>& g, const std::vector<std::size_t>& idx, bool training,
                            std::vector<typename Graph<float>::Id>* param_ids) {
    std::vector<std::vector<int>> ids;
    std::vector<std::vector<std::uint8_t>> att;
    for (std::size_t i : idx) {
      ids.push_back(samples[i].ids);
      att.push_back(samples[i].attention);
    }
    auto fwd = encode_forward(g, params, enc, ids, att, training);
    if (param_ids) *param_ids = fwd.param_ids;
    auto P = [&](const std::string& name) {
      for (std::size_t i = 0; i < params.tensors.size(); ++i)
        if (params.tensors[i].name == name) return fwd.param_ids[i];
      throw std::out_of_range("no parameter named " + name);
    };
    auto both = g.add_row_broadcast(g.matmul(fwd.hidden, P("task.span.w")), P("task.span.b"));
    auto start = g.reshape(g.slice_cols(both, 0, 1), fwd.batch, fwd.seq_len);
    auto end = g.reshape(g.slice_cols(both, 1, 1), fwd.batch, fwd.seq_len);
    return std::pair{start, end};
  };

  auto decode = [&](const Tensor<float>& S, const Tensor<float>& E, std::size_t sample_idx,
                    int row) {
    const auto& s = samples[sample_idx];
    TokenSpan best{0, 0};
    float best_score = -std::numeric_limits<float>::infinity();
    for (int a = s.passage_begin; a <= s.passage_end; ++a)
      for (int b = a; b <= std::min(s.passage_end, a + cfg.max_answer_len); ++b) {
        float score = S.at(row, a) + E.at(row, b);
        if (score > best_score) {
          best_score = score;
          best = {a, b};
        }
      }
    return best;
  };

  auto evaluate = [&](const std::vector<std::size_t>& idx) {
    std::vector<TokenSpan> preds, golds;
    for (std::size_t off = 0; off < idx.size(); off += static_cast<std::size_t>(cfg.batch_size)) {
      std::vector<std::size_t> chunk(
          idx.begin() + static_cast<std::ptrdiff_t>(off),
          idx.begin() + static_cast<std::ptrdiff_t>(
                            std::min(idx.size(), off + static_cast<std::size_t>(cfg.batch_size))));
      Graph<float> g(0);
      auto [sl, el] = forward_logits(g, chunk, false, nullptr);
      const auto& S = g.value(sl);
      const auto& E = g.value(el);
      for (std::size_t r = 0; r < chunk.size(); ++r) {
        preds.push_back(decode(S, E, chunk[r], static_cast<int>(r)));
        golds.push_back(samples[chunk[r]].gold);
      }
    }
    return std::pair{preds, golds};
  };

  auto steps_per_epoch = static_cast<std::int64_t>(
      (train_idx.size() + static_cast<std::size_t>(cfg.batch_size) - 1) /
      static_cast<std::size_t>(cfg.batch_size));
  std::int64_t total_steps = steps_per_epoch * cfg.max_epochs;
  std::int64_t patience = detail::patience_steps(cfg, total_steps);

  ModelParams<float> adam_m = detail::zeros_like(params);
  ModelParams<float> adam_v = detail::zeros_like(params);
  PretrainConfig opt;
  opt.adam_eps = 1e-8;
  opt.weight_decay = cfg.weight_decay;

  ModelParams<float> best_params = params;
  double best_dev = -1.0;
  std::int64_t best_step = 0, step = 0;
  bool stop = false;
  for (int epoch = 0; epoch < cfg.max_epochs && !stop; ++epoch) {
    Rng erng(Rng::derive(cfg.seed, 0xe90c + static_cast<std::uint64_t>(epoch)));
    std::vector<std::size_t> epoch_idx = train_idx;
    for (std::size_t i = epoch_idx.size(); i > 1; --i)
      std::swap(epoch_idx[i - 1], epoch_idx[erng.next_below(i)]);
    for (std::size_t off = 0; off < epoch_idx.size();
         off += static_cast<std::size_t>(cfg.batch_size)) {
      std::vector<std::size_t> chunk(
          epoch_idx.begin() + static_cast<std::ptrdiff_t>(off),
          epoch_idx.begin() +
              static_cast<std::ptrdiff_t>(std::min(
                  epoch_idx.size(), off + static_cast<std::size_t>(cfg.batch_size))));
      Graph<float> g(Rng::derive(cfg.seed ^ 0x59a3, static_cast<std::uint64_t>(step)));
      std::vector<typename Graph<float>::Id> param_ids;
      auto [sl, el] = forward_logits(g, chunk, true, &param_ids);
      std::vector<int> start_t, end_t;
      std::vector<std::uint8_t> flags(chunk.size(), 1);
      for (std::size_t i : chunk) {
        start_t.push_back(samples[i].gold.start);
        end_t.push_back(samples[i].gold.end);
      }
      auto loss = g.scale(
          g.add(g.cross_entropy_masked(sl, start_t, flags),
                g.cross_entropy_masked(el, end_t, flags)),
          0.5f);
      g.backward(loss);
      ModelParams<float> grads = detail::zeros_like(params);
      for (std::size_t t = 0; t < params.tensors.size(); ++t)
        grads.tensors[t].t = g.grad(param_ids[t]);
      detail::clip_global_norm(grads, 1.0);
      ++step;
      adamw_update(params, grads, adam_m, adam_v, step,
                   detail::finetune_lr(step, total_steps, cfg), opt);
    }
    auto [preds, golds] = evaluate(dev_idx);
    double dev = evaluate_spans(preds, golds).f1_with_miss;
    if (dev > best_dev) {
      best_dev = dev;
      best_params = params;
      best_step = step;
    } else if (patience > 0 && step - best_step >= patience) {
      stop = true;
    }
  }
  params = best_params;

  FinetuneResult res;
  auto [preds, golds] = evaluate(dev_idx);
  SpanEval eval = evaluate_spans(preds, golds);
  res.dev_metric = eval.f1_with_miss;
  res.report.add("span_f1_with_miss", eval.f1_with_miss);
  res.report.add("span_f1_without_miss", eval.f1_without_miss);
  res.report.add("miss_rate", eval.miss_rate);
  return res;
}

// Mean/std aggregation over seeds; the CSV row shape used by reports.
struct ResultRow {
  std::string objective;
  std::string direction;
  int n = 0;
  int num_classes = 0;
  std::string task;
  std::string metric;
  double mean = 0.0;
  double stddev = 0.0;
  int seed_count = 0;
};

inline MetricReport run_finetune_seeds(const Checkpoint& ck, const ProbeTask& task,
                                       const Vocab& vocab, FinetuneConfig cfg,
                                       const std::vector<std::uint64_t>& seeds) {
  MetricReport combined;
  for (std::uint64_t s : seeds) {
    cfg.seed = s;
    FinetuneResult r = task.kind == TaskKind::kClassification
                           ? finetune_classifier(ck, task, vocab, cfg)
                           : finetune_span(ck, task, vocab, cfg);
    for (const auto& [metric, vals] : r.report.values)
      for (double v : vals) combined.add(metric, v);
  }
  return combined;
}

}  // namespace mlmlab
