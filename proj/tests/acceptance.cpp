// End-to-end acceptance checks. Each criterion prints exactly one
// [PASS]/[FAIL] line; the exit code is the number of failures.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mlmlab/bpe.hpp"
#include "mlmlab/bytes.hpp"
#include "mlmlab/checkpoint.hpp"
#include "mlmlab/corpus.hpp"
#include "mlmlab/encoder.hpp"
#include "mlmlab/finetune.hpp"
#include "mlmlab/flops.hpp"
#include "mlmlab/gradcheck.hpp"
#include "mlmlab/masking.hpp"
#include "mlmlab/metrics.hpp"
#include "mlmlab/objective.hpp"
#include "mlmlab/rng.hpp"
#include "mlmlab/trainer.hpp"

namespace {

using namespace mlmlab;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

struct Failure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require(bool cond, const std::string& msg) {
  if (!cond) throw Failure(msg);
}

std::string fmt(double v, int precision = 3) {
  std::ostringstream s;
  s.precision(precision);
  s << v;
  return s.str();
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string file_bytes(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  require(static_cast<bool>(f), "cannot reopen " + p.string());
  std::stringstream s;
  s << f.rdbuf();
  return s.str();
}

double median(std::vector<double> xs) {
  require(!xs.empty(), "median of empty vector");
  std::sort(xs.begin(), xs.end());
  auto n = xs.size();
  return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

// ---------------------------------------------------------------------------
// 1. FLOPs cost model at BERT-base scale
// ---------------------------------------------------------------------------

double reference_total_flops(const ObjectiveSpec& spec) {
  EncoderConfig enc = EncoderConfig::bert_base(50265);
  int classes = reference_num_classes(spec);
  HeadSpec head = spec.kind == ObjectiveKind::kMlm ? HeadSpec::mlm_head(classes)
                                                   : HeadSpec::linear_head(classes);
  auto fwd = estimate_forward_flops(enc, head, classes, 512);
  return estimate_training_flops(fwd, 500000, 128, 3.0);
}

std::string criterion_flops() {
  auto t0 = Clock::now();
  double mlm = reference_total_flops(ObjectiveSpec::mlm());
  double mlm_err = 100.0 * (mlm - 2.44e19) / 2.44e19;
  require(std::abs(mlm_err) < 15.0,
          "MLM total " + fmt(mlm) + " off published 2.44e19 by " + fmt(mlm_err) + "%");

  struct Row {
    ObjectiveSpec spec;
    double published;  // percent reduction
  };
  const Row rows[] = {{ObjectiveSpec::first_char29(), -31.0},
                      {ObjectiveSpec::last_char29(), -31.0},
                      {ObjectiveSpec::nchars(Direction::kFirst, 4), -18.0},
                      {ObjectiveSpec::nchars(Direction::kLast, 4), -20.0},
                      {ObjectiveSpec::nchars(Direction::kFirst, 9), -6.0}};
  std::string reductions;
  for (const auto& row : rows) {
    double red = relative_difference(reference_total_flops(row.spec), mlm);
    require(std::abs(red - row.published) <= 3.0,
            row.spec.to_string() + " reduction " + fmt(red) + "% vs published " +
                fmt(row.published) + "% exceeds 3pp");
    if (!reductions.empty()) reductions += "/";
    reductions += fmt(red);
  }
  double dt = seconds_since(t0);
  require(dt < 1.0, "took " + fmt(dt) + "s (limit 1s)");
  return "MLM " + fmt(mlm) + " (" + fmt(mlm_err) + "% vs 2.44e19), reductions " + reductions;
}

// ---------------------------------------------------------------------------
// 2. Label-space construction
// ---------------------------------------------------------------------------

std::string oracle_nchars_label(const std::string& token, bool first, int n) {
  auto cps = utf8_to_codepoints(token);
  if (!cps.empty() && cps.front() == kSpaceMarker) cps.erase(cps.begin());
  if (static_cast<int>(cps.size()) > n) {
    if (first)
      cps.resize(static_cast<std::size_t>(n));
    else
      cps.erase(cps.begin(), cps.end() - n);
  }
  std::string out;
  for (auto cp : cps) out += codepoint_to_utf8(cp);
  return out;
}

int oracle_char29_bucket(const std::string& token, bool first) {
  auto cps = utf8_to_codepoints(token);
  if (!cps.empty() && cps.front() == kSpaceMarker) cps.erase(cps.begin());
  if (cps.empty()) return kChar29Other;
  std::uint32_t cp = first ? cps.front() : cps.back();
  if (cp >= 'a' && cp <= 'z') return static_cast<int>(cp - 'a');
  if (cp >= 'A' && cp <= 'Z') return static_cast<int>(cp - 'A');
  if (cp >= '0' && cp <= '9') return kChar29Digit;
  if (cp < 128 && std::ispunct(static_cast<int>(cp))) return kChar29Punct;
  return kChar29Other;
}

void check_monotone_sweep(const Vocab& vocab) {
  std::vector<int> ns = {1, 2, 3, 4, 5, 6, 7, 8, 9};
  auto rows = count_classes_sweep(vocab, {Direction::kFirst, Direction::kLast}, ns);
  for (const char* dir : {"first", "last"}) {
    int prev = 0;
    for (int n : ns)
      for (const auto& r : rows)
        if (r.direction == dir && r.n == n) {
          require(r.num_classes >= prev, std::string(dir) + ":" + std::to_string(n) +
                                             " classes " + std::to_string(r.num_classes) +
                                             " < previous " + std::to_string(prev));
          prev = r.num_classes;
        }
  }
}

std::string criterion_label_space() {
  auto t0 = Clock::now();
  std::string detail;
  if (const char* ext = std::getenv("MLMLAB_EXTERNAL_VOCAB")) {
    Vocab vocab = load_external_vocab(ext);
    auto classes = [&](const ObjectiveSpec& s) { return build_label_map(vocab, s).num_classes; };
    int f1 = classes(ObjectiveSpec::nchars(Direction::kFirst, 1));
    require(f1 == 256, "first:1 classes " + std::to_string(f1) + " != 256");
    require(classes(ObjectiveSpec::first_char29()) == 29, "firstchar29 classes != 29");
    require(classes(ObjectiveSpec::last_char29()) == 29, "lastchar29 classes != 29");
    int f4 = classes(ObjectiveSpec::nchars(Direction::kFirst, 4));
    require(std::abs(f4 - 20000) <= 2000,
            "first:4 classes " + std::to_string(f4) + " outside 20000 +/- 10%");
    int l4 = classes(ObjectiveSpec::nchars(Direction::kLast, 4));
    require(std::abs(l4 - 18000) <= 1800,
            "last:4 classes " + std::to_string(l4) + " outside 18000 +/- 10%");
    check_monotone_sweep(vocab);
    detail = "external vocabulary (" + std::to_string(vocab.size()) + " tokens): first:1=" +
             std::to_string(f1) + ", first:4=" + std::to_string(f4) +
             ", last:4=" + std::to_string(l4);
  } else {
    auto docs = gen_synthetic_corpus(300, 42);
    Vocab vocab = train_bpe(docs, 700);
    for (bool first : {true, false}) {
      // 29-way: the fixed label inventory plus per-token bucket agreement
      auto spec = first ? ObjectiveSpec::first_char29() : ObjectiveSpec::last_char29();
      LabelMap map = build_label_map(vocab, spec);
      require(map.num_classes == 29, spec.to_string() + " classes != 29");
      for (int id = 0; id < vocab.size(); ++id) {
        if (vocab.is_special(id)) continue;
        require(map.label_of(id) == oracle_char29_bucket(vocab.token(id), first),
                spec.to_string() + " label mismatch for token " + std::to_string(id));
      }
      for (int n = 1; n <= 6; ++n) {
        auto nspec = ObjectiveSpec::nchars(first ? Direction::kFirst : Direction::kLast, n);
        LabelMap nmap = build_label_map(vocab, nspec);
        std::set<std::string> oracle;
        for (int id = 0; id < vocab.size(); ++id)
          if (!vocab.is_special(id)) oracle.insert(oracle_nchars_label(vocab.token(id), first, n));
        require(nmap.num_classes == static_cast<int>(oracle.size()),
                nspec.to_string() + " classes " + std::to_string(nmap.num_classes) +
                    " != oracle " + std::to_string(oracle.size()));
        std::set<std::string> produced(nmap.label_id_to_label_text.begin(),
                                       nmap.label_id_to_label_text.end());
        require(produced == oracle, nspec.to_string() + " label set differs from oracle");
      }
    }
    LabelMap mlm = build_label_map(vocab, ObjectiveSpec::mlm());
    require(mlm.num_classes == vocab.size() - vocab.num_special(),
            "mlm classes != non-special token count");
    check_monotone_sweep(vocab);
    detail = "synthetic brute-force oracle (" + std::to_string(vocab.size()) +
             "-token vocabulary; set MLMLAB_EXTERNAL_VOCAB for the published anchors)";
  }
  double dt = seconds_since(t0);
  require(dt < 10.0, "took " + fmt(dt) + "s (limit 10s)");
  return detail;
}

// ---------------------------------------------------------------------------
// 3. Vocabulary character statistics
// ---------------------------------------------------------------------------

std::string criterion_vocab_stats() {
  if (const char* ext = std::getenv("MLMLAB_EXTERNAL_VOCAB")) {
    Vocab vocab = load_external_vocab(ext);
    auto stats = vocab_char_stats(vocab);
    require(std::abs(stats.mean - 5.72) <= 0.05,
            "mean " + fmt(stats.mean) + " outside 5.72 +/- 0.05");
    require(std::abs(stats.stddev - 1.78) <= 0.05,
            "std " + fmt(stats.stddev) + " outside 1.78 +/- 0.05");
    return "external vocabulary: mean " + fmt(stats.mean) + ", std " + fmt(stats.stddev);
  }
  // no external vocabulary available: verify the estimator against an
  // independent recomputation on a trained vocabulary instead
  Vocab vocab = train_bpe(gen_synthetic_corpus(200, 17), 600);
  auto stats = vocab_char_stats(vocab);
  double sum = 0, sumsq = 0;
  int count = 0;
  for (int id = 0; id < vocab.size(); ++id) {
    if (vocab.is_special(id)) continue;
    auto cps = utf8_to_codepoints(vocab.token(id));
    if (!cps.empty() && cps.front() == kSpaceMarker) cps.erase(cps.begin());
    auto len = static_cast<double>(cps.size());
    sum += len;
    sumsq += len * len;
    ++count;
  }
  double mean = sum / count;
  double var = sumsq / count - mean * mean;
  double sd = var > 0 ? std::sqrt(var) : 0.0;
  require(std::abs(stats.mean - mean) < 1e-9 && std::abs(stats.stddev - sd) < 1e-9,
          "estimator disagrees with independent recomputation");
  require(stats.token_count == count, "token count mismatch");
  return "property check, mean " + fmt(stats.mean) + ", std " + fmt(stats.stddev) +
         " (set MLMLAB_EXTERNAL_VOCAB for the published 5.72/1.78 anchors)";
}

// ---------------------------------------------------------------------------
// 4. Gradient checks: primitives and the full micro encoder
// ---------------------------------------------------------------------------

Tensor<double> randt(int r, int c, std::uint64_t seed) {
  Tensor<double> t(r, c);
  Rng rng(seed);
  for (auto& x : t.v) x = rng.next_gaussian() * 0.5;
  return t;
}

std::string criterion_gradients() {
  auto t0 = Clock::now();
  using G = Graph<double>;
  struct Named {
    const char* name;
    GradCheckBuilder build;
    std::vector<Tensor<double>> params;
  };
  std::vector<Named> primitives;
  primitives.push_back(
      {"add/scale/transpose/reshape",
       [](G& g, const std::vector<Tensor<double>>& p, std::vector<G::Id>& ids) {
         ids.push_back(g.leaf(p[0]));
         ids.push_back(g.leaf(p[1]));
         auto x = g.reshape(g.transpose(g.scale(g.add(ids[0], ids[1]), 1.7)), 2, 6);
         return g.sum(g.mul_row_broadcast(x, g.constant(randt(1, 6, 3))));
       },
       {randt(3, 4, 1), randt(3, 4, 2)}});
  primitives.push_back(
      {"row broadcasts",
       [](G& g, const std::vector<Tensor<double>>& p, std::vector<G::Id>& ids) {
         ids.push_back(g.leaf(p[0]));
         ids.push_back(g.leaf(p[1]));
         ids.push_back(g.leaf(p[2]));
         return g.sum(g.mul_row_broadcast(g.add_row_broadcast(ids[0], ids[1]), ids[2]));
       },
       {randt(4, 3, 4), randt(1, 3, 5), randt(1, 3, 6)}});
  primitives.push_back(
      {"matmul",
       [](G& g, const std::vector<Tensor<double>>& p, std::vector<G::Id>& ids) {
         ids.push_back(g.leaf(p[0]));
         ids.push_back(g.leaf(p[1]));
         return g.sum(g.mul_row_broadcast(g.matmul(ids[0], ids[1]), g.constant(randt(1, 5, 7))));
       },
       {randt(3, 4, 8), randt(4, 5, 9)}});
  primitives.push_back(
      {"slices/concats",
       [](G& g, const std::vector<Tensor<double>>& p, std::vector<G::Id>& ids) {
         ids.push_back(g.leaf(p[0]));
         auto a = g.slice_rows(ids[0], 1, 2);
         auto b = g.slice_cols(ids[0], 0, 3);
         auto cat = g.concat_cols({a, g.slice_rows(b, 0, 2)});
         auto rows = g.concat_rows({cat, cat});
         return g.sum(g.mul_row_broadcast(rows, g.constant(randt(1, 7, 10))));
       },
       {randt(4, 4, 11)}});
  primitives.push_back({"gelu",
                        [](G& g, const std::vector<Tensor<double>>& p, std::vector<G::Id>& ids) {
                          ids.push_back(g.leaf(p[0]));
                          return g.sum(g.gelu(ids[0]));
                        },
                        {randt(4, 5, 12)}});
  primitives.push_back(
      {"softmax_rows",
       [](G& g, const std::vector<Tensor<double>>& p, std::vector<G::Id>& ids) {
         ids.push_back(g.leaf(p[0]));
         return g.sum(g.mul_row_broadcast(g.softmax_rows(ids[0]), g.constant(randt(1, 5, 13))));
       },
       {randt(3, 5, 14)}});
  primitives.push_back(
      {"layer_norm_rows",
       [](G& g, const std::vector<Tensor<double>>& p, std::vector<G::Id>& ids) {
         ids.push_back(g.leaf(p[0]));
         return g.sum(g.mul_row_broadcast(g.layer_norm_rows(ids[0]), g.constant(randt(1, 6, 15))));
       },
       {randt(4, 6, 16)}});
  primitives.push_back(
      {"embedding_rows",
       [](G& g, const std::vector<Tensor<double>>& p, std::vector<G::Id>& ids) {
         ids.push_back(g.leaf(p[0]));
         auto y = g.embedding_rows(ids[0], {0, 2, 2, 1, 0});
         return g.sum(g.mul_row_broadcast(y, g.constant(randt(1, 3, 17))));
       },
       {randt(4, 3, 18)}});
  primitives.push_back(
      {"cross_entropy_masked",
       [](G& g, const std::vector<Tensor<double>>& p, std::vector<G::Id>& ids) {
         ids.push_back(g.leaf(p[0]));
         return g.cross_entropy_masked(ids[0], {1, 0, 2, 1}, {1, 0, 1, 1});
       },
       {randt(4, 3, 19)}});
  primitives.push_back({"dropout",
                        [](G& g, const std::vector<Tensor<double>>& p, std::vector<G::Id>& ids) {
                          ids.push_back(g.leaf(p[0]));
                          return g.sum(g.dropout(ids[0], 0.3));
                        },
                        {randt(6, 6, 20)}});

  double worst_primitive = 0.0;
  for (auto& prim : primitives) {
    auto res = grad_check(prim.build, prim.params);
    require(res.checked_coords > 0, std::string(prim.name) + ": no coordinates checked");
    require(res.max_rel_error < 1e-6,
            std::string(prim.name) + " max rel error " + fmt(res.max_rel_error) + " >= 1e-6");
    worst_primitive = std::max(worst_primitive, res.max_rel_error);
  }

  // full micro encoder with an MLM head and masked cross entropy
  EncoderConfig cfg;
  cfg.num_layers = 2;
  cfg.num_heads = 2;
  cfg.hidden_dim = 8;
  cfg.ffn_dim = 16;
  cfg.max_seq_len = 8;
  cfg.vocab_size = 12;
  cfg.dropout = 0.0;
  HeadSpec head = HeadSpec::mlm_head(12);
  auto params64 = init_params<float>(cfg, head, 21).cast<double>();
  std::vector<std::vector<int>> ids = {{2, 5, 6, 7, 3, 0}, {2, 8, 9, 3, 0, 0}};
  std::vector<std::vector<std::uint8_t>> att = {{1, 1, 1, 1, 1, 0}, {1, 1, 1, 1, 0, 0}};
  std::vector<int> targets = {0, 5, 6, 7, 0, 0, 0, 8, 9, 0, 0, 0};
  std::vector<std::uint8_t> flags = {0, 1, 1, 1, 0, 0, 0, 1, 1, 0, 0, 0};
  std::vector<Tensor<double>> tensors;
  for (const auto& nt : params64.tensors) tensors.push_back(nt.t);
  auto build = [&](Graph<double>& g, const std::vector<Tensor<double>>& p,
                   std::vector<Graph<double>::Id>& out_ids) {
    ModelParams<double> mp;
    for (std::size_t t = 0; t < p.size(); ++t)
      mp.tensors.push_back({params64.tensors[t].name, p[t]});
    auto fwd = encode_forward(g, mp, cfg, ids, att, false);
    out_ids = fwd.param_ids;
    return g.cross_entropy_masked(head_forward(g, mp, fwd, head), targets, flags);
  };
  auto res = grad_check(build, tensors, 1e-6, 8);
  require(res.checked_coords > 100, "micro encoder: too few coordinates checked");
  require(res.max_rel_error < 1e-4,
          "micro encoder max rel error " + fmt(res.max_rel_error) + " >= 1e-4");

  double dt = seconds_since(t0);
  require(dt < 120.0, "took " + fmt(dt) + "s (limit 2min)");
  return std::to_string(primitives.size()) + " primitives worst " + fmt(worst_primitive) +
         ", encoder " + fmt(res.max_rel_error) + " over " + std::to_string(res.checked_coords) +
         " coords, " + fmt(dt) + "s";
}

// ---------------------------------------------------------------------------
// 5. Masking statistics
// ---------------------------------------------------------------------------

std::string criterion_masking() {
  Vocab vocab = Vocab::byte_base();
  const int rows = 1000, seq = 128;
  Batch batch;
  batch.seq_len = seq;
  Rng rng(314);
  for (int r = 0; r < rows; ++r) {
    std::vector<int> ids(seq);
    std::vector<std::uint8_t> att(seq, 1);
    ids[0] = SpecialTokens::kCls;
    for (int c = 1; c < seq - 1; ++c)
      ids[static_cast<std::size_t>(c)] =
          vocab.num_special() +
          static_cast<int>(rng.next_below(static_cast<std::uint64_t>(vocab.size() - vocab.num_special())));
    ids[seq - 1] = SpecialTokens::kPad;
    att[seq - 1] = 0;
    batch.token_ids.push_back(std::move(ids));
    batch.attention.push_back(std::move(att));
  }
  const long eligible = static_cast<long>(rows) * (seq - 2);
  require(eligible >= 100000, "test batch too small");

  LabelMap map = build_label_map(vocab, ObjectiveSpec::mlm());
  MaskingConfig cfg;
  cfg.seed = 99;
  MaskedBatch out = apply_masking(batch, vocab, map, cfg);

  long flagged = 0, masked = 0, kept = 0, randomized = 0;
  for (int r = 0; r < rows; ++r) {
    require(out.mask_flags[static_cast<std::size_t>(r)][0] == 0 &&
                out.mask_flags[static_cast<std::size_t>(r)][seq - 1] == 0,
            "special/pad position was flagged");
    require(out.token_ids[static_cast<std::size_t>(r)][0] == SpecialTokens::kCls &&
                out.token_ids[static_cast<std::size_t>(r)][seq - 1] == SpecialTokens::kPad,
            "special/pad token was altered");
    for (int c = 0; c < seq; ++c) {
      auto rc = static_cast<std::size_t>(r);
      auto cc = static_cast<std::size_t>(c);
      int orig = batch.token_ids[rc][cc];
      int now = out.token_ids[rc][cc];
      if (!out.mask_flags[rc][cc]) {
        require(now == orig, "unflagged position changed");
        require(out.target_labels[rc][cc] == LabelMap::kIgnore, "unflagged position has a target");
        continue;
      }
      ++flagged;
      require(out.target_labels[rc][cc] == map.label_of(orig), "target is not the original label");
      if (now == SpecialTokens::kMask)
        ++masked;
      else if (now == orig)
        ++kept;
      else {
        require(!vocab.is_special(now), "random replacement drew a special token");
        ++randomized;
      }
    }
  }
  double frac = static_cast<double>(flagged) / static_cast<double>(eligible);
  require(std::abs(frac - 0.15) <= 0.005, "masked fraction " + fmt(frac) + " outside 0.15 +/- 0.005");
  double fm = static_cast<double>(masked) / flagged;
  double fr = static_cast<double>(randomized) / flagged;
  double fk = static_cast<double>(kept) / flagged;
  require(std::abs(fm - 0.8) <= 0.01, "MASK fraction " + fmt(fm) + " outside 0.8 +/- 0.01");
  require(std::abs(fr - 0.1) <= 0.01, "random fraction " + fmt(fr) + " outside 0.1 +/- 0.01");
  require(std::abs(fk - 0.1) <= 0.01, "keep fraction " + fmt(fk) + " outside 0.1 +/- 0.01");
  return std::to_string(eligible) + " eligible: rate " + fmt(frac) + ", split " + fmt(fm) + "/" +
         fmt(fr) + "/" + fmt(fk);
}

// ---------------------------------------------------------------------------
// 6. Learning-rate schedule and AdamW
// ---------------------------------------------------------------------------

std::string criterion_schedule() {
  PretrainConfig cfg = PretrainConfig::reference();
  require(lr_at_step(0, cfg) == 0.0, "lr(0) != 0");
  require(std::abs(lr_at_step(10000, cfg) - 2e-4) < 1e-18, "lr(10000) != 2e-4");
  require(std::abs(lr_at_step(255000, cfg) - 1e-4) < 1e-18, "lr(255000) != 1e-4");

  PretrainConfig opt;
  opt.weight_decay = 0.01;
  double lr = 3e-4, g0 = 0.25, w0 = 1.5;
  ModelParams<float> p, g, m, v;
  Tensor<float> t(1, 1);
  t.at(0, 0) = static_cast<float>(w0);
  p.tensors.push_back({"task.w", t});
  t.at(0, 0) = static_cast<float>(g0);
  g.tensors.push_back({"task.w", t});
  t.at(0, 0) = 0.0f;
  m.tensors.push_back({"task.w", t});
  v.tensors.push_back({"task.w", t});
  adamw_update(p, g, m, v, 1, lr, opt);

  double m1 = (1 - opt.adam_beta1) * g0;
  double v1 = (1 - opt.adam_beta2) * g0 * g0;
  double mhat = m1 / (1 - opt.adam_beta1);
  double vhat = v1 / (1 - opt.adam_beta2);
  // the recurrence mirrors the float parameter storage of the update
  auto expect = static_cast<float>(
      w0 - lr * (mhat / (std::sqrt(vhat) + opt.adam_eps) + opt.weight_decay * w0));
  double diff = std::abs(static_cast<double>(p.tensors[0].t.at(0, 0)) -
                         static_cast<double>(expect));
  require(diff < 1e-12, "AdamW step differs from hand recurrence by " + fmt(diff));
  return "lr anchors exact, AdamW diff " + fmt(diff);
}

// ---------------------------------------------------------------------------
// 7. Metric oracles on random instances
// ---------------------------------------------------------------------------

std::string criterion_metrics() {
  Rng rng(20240815);
  const int trials = 1000;
  const double tol = 1e-9;

  for (int i = 0; i < trials; ++i) {
    auto n = static_cast<std::size_t>(1 + rng.next_below(50));
    int k = 2 + static_cast<int>(rng.next_below(5));
    std::vector<int> preds(n), golds(n);
    for (std::size_t j = 0; j < n; ++j) {
      preds[j] = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(k)));
      golds[j] = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(k)));
    }
    long correct = 0;
    for (std::size_t j = 0; j < n; ++j)
      if (preds[j] == golds[j]) ++correct;
    require(std::abs(accuracy(preds, golds) - static_cast<double>(correct) / n) <= tol,
            "accuracy mismatch at trial " + std::to_string(i));
  }

  for (int i = 0; i < trials; ++i) {
    auto n = static_cast<std::size_t>(2 + rng.next_below(40));
    std::vector<int> preds(n), golds(n);
    double tp = 0, tn = 0, fp = 0, fn = 0;
    for (std::size_t j = 0; j < n; ++j) {
      preds[j] = static_cast<int>(rng.next_below(2));
      golds[j] = static_cast<int>(rng.next_below(2));
      if (preds[j] == 1 && golds[j] == 1) ++tp;
      else if (preds[j] == 0 && golds[j] == 0) ++tn;
      else if (preds[j] == 1) ++fp;
      else ++fn;
    }
    double denom = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn);
    double oracle = denom == 0 ? 0.0 : (tp * tn - fp * fn) / std::sqrt(denom);
    require(std::abs(matthews_corr(preds, golds) - oracle) <= tol,
            "MCC mismatch at trial " + std::to_string(i));
  }

  auto oracle_ranks = [](const std::vector<double>& xs) {
    std::vector<double> r(xs.size());
    for (std::size_t a = 0; a < xs.size(); ++a) {
      double smaller = 0, equal = 0;
      for (double x : xs) {
        if (x < xs[a]) ++smaller;
        if (x == xs[a]) ++equal;
      }
      r[a] = 1.0 + smaller + (equal - 1.0) / 2.0;
    }
    return r;
  };
  auto oracle_pearson = [](const std::vector<double>& xs, const std::vector<double>& ys) {
    auto n = static_cast<double>(xs.size());
    double sx = 0, sy = 0, sxy = 0, sxx = 0, syy = 0;
    for (std::size_t j = 0; j < xs.size(); ++j) {
      sx += xs[j];
      sy += ys[j];
      sxy += xs[j] * ys[j];
      sxx += xs[j] * xs[j];
      syy += ys[j] * ys[j];
    }
    double cov = sxy - sx * sy / n;
    double vx = sxx - sx * sx / n;
    double vy = syy - sy * sy / n;
    if (vx <= 0 || vy <= 0) return 0.0;
    return cov / std::sqrt(vx * vy);
  };
  for (int i = 0; i < trials; ++i) {
    auto n = static_cast<std::size_t>(2 + rng.next_below(28));
    std::vector<double> xs(n), ys(n);
    for (std::size_t j = 0; j < n; ++j) {
      // small grid forces ties
      xs[j] = static_cast<double>(rng.next_below(5));
      ys[j] = static_cast<double>(rng.next_below(5));
    }
    double oracle = oracle_pearson(oracle_ranks(xs), oracle_ranks(ys));
    require(std::abs(spearman_rho(xs, ys) - oracle) <= tol,
            "Spearman mismatch at trial " + std::to_string(i));
  }

  for (int i = 0; i < trials; ++i) {
    auto n = static_cast<std::size_t>(1 + rng.next_below(20));
    std::vector<TokenSpan> preds(n), golds(n);
    auto rand_span = [&] {
      int s = static_cast<int>(rng.next_below(10));
      int e = s + static_cast<int>(rng.next_below(4)) - 1;  // e < s encodes empty
      return TokenSpan{s, e};
    };
    for (std::size_t j = 0; j < n; ++j) {
      preds[j] = rand_span();
      golds[j] = rand_span();
    }
    double sum_all = 0, sum_hit = 0, misses = 0;
    for (std::size_t j = 0; j < n; ++j) {
      const auto& a = preds[j];
      const auto& b = golds[j];
      bool ae = a.end < a.start, be = b.end < b.start;
      int lo = std::max(a.start, b.start), hi = std::min(a.end, b.end);
      int ov = (ae || be) ? 0 : std::max(0, hi - lo + 1);
      double f1;
      if (ae && be)
        f1 = 1.0;
      else if (ae || be || ov == 0)
        f1 = 0.0;
      else {
        double p = static_cast<double>(ov) / (a.end - a.start + 1);
        double r = static_cast<double>(ov) / (b.end - b.start + 1);
        f1 = 2 * p * r / (p + r);
      }
      bool miss = ov == 0 && !(ae && be);
      sum_all += f1;
      if (miss)
        ++misses;
      else
        sum_hit += f1;
    }
    auto dn = static_cast<double>(n);
    SpanEval eval = evaluate_spans(preds, golds);
    require(std::abs(eval.f1_with_miss - sum_all / dn) <= tol,
            "span F1 mismatch at trial " + std::to_string(i));
    require(std::abs(eval.miss_rate - misses / dn) <= tol,
            "miss rate mismatch at trial " + std::to_string(i));
    double hit_oracle = misses == dn ? 0.0 : sum_hit / (dn - misses);
    require(std::abs(eval.f1_without_miss - hit_oracle) <= tol,
            "miss-excluded F1 mismatch at trial " + std::to_string(i));
  }
  return "accuracy/MCC/Spearman/span metrics, 1000 random instances each within 1e-9";
}

// ---------------------------------------------------------------------------
// 8. Relative-difference round trip over the published tables
// ---------------------------------------------------------------------------

std::string criterion_round_trip() {
  // canonical examples first
  require(std::abs(round1(relative_difference(78.9, 80.8)) - (-2.4)) < 1e-9,
          "78.9 vs 80.8 does not round to -2.4");

  struct Cell {
    double value;
    double printed;
    bool inconsistent = false;  // printed value provably disagrees with the absolutes
  };
  // column baselines carry the same print precision as their cells
  struct Col {
    double baseline;
    double ulp;          // print precision of the absolute column
    double printed_ulp;  // print precision of the parenthetical
  };

  int checked = 0, skipped = 0;
  auto check_cell = [&](const Cell& cell, const Col& col, const std::string& where) {
    if (cell.inconsistent) {
      ++skipped;
      return;
    }
    double rel = relative_difference(cell.value, col.baseline);
    // both absolutes are rounded to ulp/2; the printed percentage to printed_ulp/2
    double tol = 100.0 * 0.5 * col.ulp / col.baseline +
                 100.0 * cell.value * 0.5 * col.ulp / (col.baseline * col.baseline) +
                 0.5 * col.printed_ulp + 1e-9;
    require(std::abs(rel - cell.printed) <= tol,
            where + ": recomputed " + fmt(rel) + "% vs printed " + fmt(cell.printed) +
                "% (tolerance " + fmt(tol) + ")");
    ++checked;
  };

  // efficiency table: FLOPs x1e19 plus three score columns
  const Col flops_col{2.44, 0.01, 1.0};
  const Col glue_col{80.8, 0.1, 0.1};
  const Col squad_col{88.1, 0.1, 0.1};
  const Col ud_col{88.8, 0.1, 0.1};
  struct EffRow {
    const char* name;
    Cell flops, glue, squad, ud;
  };
  // the First Char LAS parenthetical (-0.2) cannot follow from 87.8 vs 88.8:
  // the Last 1 Char row prints -1.1 for the identical absolutes
  const EffRow eff[] = {
      {"first:9", {2.29, -6}, {78.9, -2.4}, {87.4, -0.9}, {88.5, -0.3}},
      {"first:5", {2.12, -13}, {78.9, -2.4}, {87.9, -0.3}, {88.5, -0.4}},
      {"first:4", {1.99, -18}, {79.0, -2.3}, {87.9, -0.2}, {88.8, 0.0}},
      {"first:3", {1.83, -25}, {78.8, -2.5}, {87.6, -0.6}, {88.1, -0.8}},
      {"first:2", {1.72, -30}, {78.4, -3.0}, {86.8, -1.5}, {87.8, -1.1}},
      {"first:1", {1.69, -31}, {77.8, -3.8}, {86.1, -2.3}, {87.6, -1.4}},
      {"firstchar29", {1.68, -31}, {78.2, -3.2}, {85.6, -2.9}, {87.8, -0.2, true}},
      {"last:9", {2.30, -6}, {79.1, -2.2}, {88.4, 0.3}, {88.7, -0.2}},
      {"last:5", {2.09, -15}, {79.2, -2.1}, {87.5, -0.7}, {88.5, -0.4}},
      {"last:4", {1.96, -20}, {79.1, -2.2}, {87.6, -0.6}, {88.4, -0.4}},
      {"last:3", {1.82, -26}, {78.3, -3.1}, {87.0, -1.3}, {88.4, -0.5}},
      {"last:2", {1.72, -30}, {78.2, -3.3}, {87.0, -1.3}, {88.0, -1.0}},
      {"last:1", {1.69, -31}, {78.8, -2.5}, {86.0, -2.4}, {87.8, -1.1}},
      {"lastchar29", {1.68, -31}, {77.3, -4.4}, {85.5, -3.0}, {88.1, -0.8}},
  };
  for (const auto& row : eff) {
    std::string name(row.name);
    check_cell(row.flops, flops_col, name + " FLOPs");
    check_cell(row.glue, glue_col, name + " score avg");
    check_cell(row.squad, squad_col, name + " span F1");
    check_cell(row.ud, ud_col, name + " LAS");
  }

  // span case-study table: F1 with/without miss, miss rate
  const Col wm_col{88.1, 0.1, 0.1};
  const Col wom_col{94.4, 0.1, 0.1};
  const Col miss_col{6.6, 0.1, 0.1};
  struct MissRow {
    const char* name;
    Cell with_miss, without_miss, miss;
  };
  const MissRow miss[] = {
      {"first:9", {87.4, -0.9}, {94.2, -0.2}, {7.2, 9.8}},
      {"first:5", {87.9, -0.3}, {94.0, -0.3}, {6.5, -0.8}},
      {"first:4", {87.9, -0.2}, {94.3, 0.0}, {6.8, 3.1}},
      {"first:3", {87.6, -0.6}, {94.3, 0.0}, {7.1, 8.1}},
      {"first:2", {86.8, -1.5}, {93.8, -0.6}, {7.4, 12.4}},
      {"first:1", {86.1, -2.3}, {93.9, -0.5}, {8.2, 25.0}},
      {"firstchar29", {85.6, -2.9}, {93.9, -0.5}, {8.8, 34.0}},
      {"last:9", {88.4, 0.3}, {94.3, -0.1}, {6.3, -5.1}},
      {"last:5", {87.5, -0.7}, {94.2, -0.2}, {7.0, 6.7}},
      {"last:4", {87.6, -0.6}, {94.1, -0.3}, {6.8, 3.7}},
      {"last:3", {87.0, -1.3}, {94.0, -0.4}, {7.5, 13.1}},
      {"last:2", {87.0, -1.3}, {94.0, -0.4}, {7.5, 13.7}},
      {"last:1", {86.0, -2.4}, {93.7, -0.7}, {8.2, 24.2}},
      {"lastchar29", {85.5, -3.0}, {94.1, -0.3}, {9.1, 38.2}},
  };
  for (const auto& row : miss) {
    std::string name(row.name);
    check_cell(row.with_miss, wm_col, name + " F1 w/ miss");
    check_cell(row.without_miss, wom_col, name + " F1 w/o miss");
    check_cell(row.miss, miss_col, name + " miss rate");
  }

  return std::to_string(checked) + " parentheticals within propagated-rounding tolerance, " +
         std::to_string(skipped) + " known source inconsistency skipped";
}

// ---------------------------------------------------------------------------
// 9. Desk-scale complexity trend
// ---------------------------------------------------------------------------

std::string criterion_trend() {
  auto t0 = Clock::now();
  auto docs = gen_synthetic_corpus(400, 123);
  Vocab vocab = train_bpe(docs, 600);

  EncoderConfig enc;
  enc.num_layers = 2;
  enc.num_heads = 4;
  enc.hidden_dim = 64;
  enc.ffn_dim = 256;
  enc.max_seq_len = 32;

  PretrainConfig pre;
  pre.batch_size = 8;
  pre.total_steps = 2000;
  pre.warmup_steps = 100;
  pre.peak_lr = 3e-4;
  pre.seq_len = 32;
  pre.seed = 7;

  SyntheticTaskSpec task_spec;
  task_spec.kind = TaskKind::kClassification;
  task_spec.num_labels = 8;
  task_spec.size = 320;
  task_spec.seed = 77;
  ProbeTask task = gen_probe_task(task_spec);

  FinetuneConfig fin;
  fin.batch_size = 16;
  fin.max_epochs = 6;
  fin.lr = 5e-4;
  fin.max_seq_len = 32;
  fin.patience_frac = 0;  // run all epochs; keeps scores deterministic across objectives

  const char* objectives[] = {"firstchar29", "first:1", "first:2", "first:4", "mlm"};
  std::vector<double> log_classes, scores;
  std::string summary;
  for (const char* obj_str : objectives) {
    ObjectiveSpec spec = ObjectiveSpec::parse(obj_str);
    int classes = build_label_map(vocab, spec).num_classes;
    auto result = pretrain(docs, vocab, spec, enc, pre);
    require(!result.curve.points.empty(), std::string(obj_str) + ": empty loss curve");
    double first_loss = result.curve.points.front().second;
    double expect = std::log(static_cast<double>(classes));
    require(std::abs(first_loss - expect) <= 0.10 * expect,
            std::string(obj_str) + ": initial loss " + fmt(first_loss) + " outside ln(" +
                std::to_string(classes) + ")=" + fmt(expect) + " +/- 10%");
    MetricReport report = run_finetune_seeds(result.checkpoint, task, vocab, fin, {1, 2, 3});
    require(report.seed_count() == 3, std::string(obj_str) + ": expected 3 seeds");
    double score = median(report.values.at("accuracy"));
    log_classes.push_back(std::log10(static_cast<double>(classes)));
    scores.push_back(score);
    if (!summary.empty()) summary += ", ";
    summary += std::string(obj_str) + "(" + std::to_string(classes) + ")=" + fmt(score);
  }
  double rho = spearman_rho(log_classes, scores);
  require(rho >= 0.6, "Spearman rho " + fmt(rho) + " < 0.6 over " + summary);
  double dt = seconds_since(t0);
  require(dt < 1800.0, "took " + fmt(dt) + "s (limit 30min)");
  return "rho " + fmt(rho) + " over " + summary + ", " + fmt(dt / 60.0) + "min";
}

// ---------------------------------------------------------------------------
// 10. Determinism and persistence
// ---------------------------------------------------------------------------

std::string criterion_determinism() {
  auto dir = fs::temp_directory_path() / "mlmlab_acceptance_determinism";
  fs::remove_all(dir);
  fs::create_directories(dir);

  auto docs = gen_synthetic_corpus(20, 5);
  Vocab vocab = train_bpe(docs, 300);
  EncoderConfig enc;
  enc.num_layers = 1;
  enc.num_heads = 2;
  enc.hidden_dim = 16;
  enc.ffn_dim = 32;
  enc.max_seq_len = 16;
  PretrainConfig cfg;
  cfg.batch_size = 4;
  cfg.total_steps = 30;
  cfg.warmup_steps = 5;
  cfg.seq_len = 16;
  cfg.seed = 3;

  auto r1 = pretrain(docs, vocab, ObjectiveSpec::first_char29(), enc, cfg);
  auto r2 = pretrain(docs, vocab, ObjectiveSpec::first_char29(), enc, cfg);
  r1.checkpoint.save(dir / "run1.mlmlab");
  r2.checkpoint.save(dir / "run2.mlmlab");
  require(file_bytes(dir / "run1.mlmlab") == file_bytes(dir / "run2.mlmlab"),
          "repeated pretraining wrote different checkpoints");
  r1.curve.save_csv(dir / "curve1.csv");
  r2.curve.save_csv(dir / "curve2.csv");
  require(file_bytes(dir / "curve1.csv") == file_bytes(dir / "curve2.csv"),
          "repeated pretraining wrote different loss curves");

  Checkpoint loaded = Checkpoint::load(dir / "run1.mlmlab");
  loaded.save(dir / "run3.mlmlab");
  require(file_bytes(dir / "run1.mlmlab") == file_bytes(dir / "run3.mlmlab"),
          "save -> load -> save is not byte-identical");

  vocab.save(dir / "vocab1");
  vocab.save(dir / "vocab2");
  for (const auto& entry : fs::directory_iterator(dir / "vocab1"))
    require(file_bytes(entry.path()) ==
                file_bytes(dir / "vocab2" / entry.path().filename()),
            "repeated vocabulary save differs: " + entry.path().filename().string());

  fs::remove_all(dir);
  return "repeated pretrain, loss curve, vocabulary, and checkpoint round trip byte-identical";
}

}  // namespace

int main() {
  struct Entry {
    int id;
    const char* name;
    std::function<std::string()> run;
  };
  const std::vector<Entry> entries = {
      {1, "FLOPs cost model reproduces published totals", criterion_flops},
      {2, "label-space construction matches the oracle", criterion_label_space},
      {3, "vocabulary character statistics", criterion_vocab_stats},
      {4, "finite-difference gradient checks", criterion_gradients},
      {5, "masking statistics", criterion_masking},
      {6, "learning-rate schedule and AdamW step", criterion_schedule},
      {7, "metric implementations match brute-force oracles", criterion_metrics},
      {8, "relative-difference round trip over published tables", criterion_round_trip},
      {9, "desk-scale complexity/performance trend", criterion_trend},
      {10, "determinism and persistence", criterion_determinism},
  };

  int failures = 0;
  for (const auto& e : entries) {
    std::string line;
    try {
      std::string detail = e.run();
      line = "[PASS] " + std::to_string(e.id) + ". " + e.name;
      if (!detail.empty()) line += " — " + detail;
    } catch (const std::exception& ex) {
      ++failures;
      line = "[FAIL] " + std::to_string(e.id) + ". " + e.name + ": " + ex.what();
    }
    std::cout << line << "\n" << std::flush;
  }
  if (failures) std::cout << failures << " criterion(s) failed\n";
  return failures;
}
