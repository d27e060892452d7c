#pragma once
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace mlmlab {

inline double accuracy(const std::vector<int>& preds, const std::vector<int>& golds) {
  if (preds.size() != golds.size() || preds.empty())
    throw std::invalid_argument("accuracy: inputs must be non-empty and equal length");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i)
    if (preds[i] == golds[i]) ++correct;
  return static_cast<double>(correct) / static_cast<double>(preds.size());
}

// MCC over binary labels; any zero denominator factor yields 0 by convention
inline double matthews_corr(const std::vector<int>& preds, const std::vector<int>& golds) {
  if (preds.size() != golds.size() || preds.empty())
    throw std::invalid_argument("matthews_corr: inputs must be non-empty and equal length");
  double tp = 0, tn = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] != 0 && preds[i] != 1)
      throw std::invalid_argument("matthews_corr: labels must be binary");
    if (golds[i] != 0 && golds[i] != 1)
      throw std::invalid_argument("matthews_corr: labels must be binary");
    if (preds[i] == 1 && golds[i] == 1) ++tp;
    else if (preds[i] == 0 && golds[i] == 0) ++tn;
    else if (preds[i] == 1 && golds[i] == 0) ++fp;
    else ++fn;
  }
  double denom = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn);
  if (denom == 0) return 0.0;
  return (tp * tn - fp * fn) / std::sqrt(denom);
}

// fractional (mid-) ranks with ties averaged
inline std::vector<double> fractional_ranks(const std::vector<double>& xs) {
  std::vector<std::size_t> order(xs.size());
  std::iota(order.begin(), order.end(), 0u);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
  std::vector<double> ranks(xs.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && xs[order[j + 1]] == xs[order[i]]) ++j;
    double mid = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = mid;
    i = j + 1;
  }
  return ranks;
}

inline double pearson_r(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size() || xs.size() < 2)
    throw std::invalid_argument("pearson_r: need equal lengths >= 2");
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= static_cast<double>(xs.size());
  my /= static_cast<double>(ys.size());
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  if (sxx == 0 || syy == 0) return 0.0;  // degenerate constant input
  return sxy / std::sqrt(sxx * syy);
}

// Pearson correlation of fractional ranks; constant input returns 0
inline double spearman_rho(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size() || xs.size() < 2)
    throw std::invalid_argument("spearman_rho: need equal lengths >= 2");
  return pearson_r(fractional_ranks(xs), fractional_ranks(ys));
}

struct TokenSpan {
  int start = 0;  // inclusive
  int end = 0;    // inclusive

  bool empty() const { return end < start; }
  int overlap(const TokenSpan& o) const {
    int lo = std::max(start, o.start), hi = std::min(end, o.end);
    return hi >= lo ? hi - lo + 1 : 0;
  }
  int length() const { return empty() ? 0 : end - start + 1; }
};

// token-overlap F1; empty vs empty counts as 1, one-sided empty as 0
inline double span_f1(const TokenSpan& pred, const TokenSpan& gold) {
  bool pe = pred.empty(), ge = gold.empty();
  if (pe && ge) return 1.0;
  if (pe || ge) return 0.0;
  int ov = pred.overlap(gold);
  if (ov == 0) return 0.0;
  double p = static_cast<double>(ov) / pred.length();
  double r = static_cast<double>(ov) / gold.length();
  return 2.0 * p * r / (p + r);
}

struct SpanEval {
  double miss_rate = 0.0;         // fraction with zero token overlap
  double f1_with_miss = 0.0;      // mean F1 over all samples
  double f1_without_miss = 0.0;   // mean F1 over non-miss samples (1 if all miss)
};

inline SpanEval evaluate_spans(const std::vector<TokenSpan>& preds,
                               const std::vector<TokenSpan>& golds) {
  if (preds.size() != golds.size() || preds.empty())
    throw std::invalid_argument("evaluate_spans: inputs must be non-empty and equal length");
  SpanEval e;
  double sum_all = 0, sum_hit = 0;
  std::size_t misses = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    double f1 = span_f1(preds[i], golds[i]);
    bool miss = preds[i].overlap(golds[i]) == 0 && !(preds[i].empty() && golds[i].empty());
    sum_all += f1;
    if (miss) ++misses;
    else sum_hit += f1;
  }
  auto n = static_cast<double>(preds.size());
  e.miss_rate = static_cast<double>(misses) / n;
  e.f1_with_miss = sum_all / n;
  e.f1_without_miss = misses == preds.size() ? 0.0 : sum_hit / (n - static_cast<double>(misses));
  return e;
}

inline double miss_rate(const std::vector<TokenSpan>& preds, const std::vector<TokenSpan>& golds) {
  return evaluate_spans(preds, golds).miss_rate;
}

struct MeanStd {
  double mean = 0.0;
  double stddev = 0.0;  // population std
};

inline MeanStd mean_std(const std::vector<double>& xs) {
  if (xs.empty()) throw std::invalid_argument("mean_std: empty input");
  double m = 0;
  for (double x : xs) m += x;
  m /= static_cast<double>(xs.size());
  double v = 0;
  for (double x : xs) v += (x - m) * (x - m);
  v /= static_cast<double>(xs.size());
  return {m, v > 0 ? std::sqrt(v) : 0.0};
}

}  // namespace mlmlab
