#pragma once
#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "mlmlab/graph.hpp"
#include "mlmlab/rng.hpp"
#include "mlmlab/tensor.hpp"

namespace mlmlab {

// Finite-difference verification oracle. The builder constructs a fresh
// graph from the given parameter values and returns the scalar loss node;
// parameter leaf ids must be appended to `param_ids` in order.
//
// Runs in 64-bit only: float32 rounding would swamp the differences.
using GradCheckBuilder =
    std::function<Graph<double>::Id(Graph<double>&, const std::vector<Tensor<double>>&,
                                    std::vector<Graph<double>::Id>&)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked_coords = 0;
};

inline GradCheckResult grad_check(const GradCheckBuilder& build,
                                  std::vector<Tensor<double>> params, double eps = 1e-6,
                                  std::size_t max_coords_per_tensor = 64,
                                  std::uint64_t sample_seed = 17) {
  if (eps <= 0) throw std::invalid_argument("grad_check: eps must be positive");

  Graph<double> g;
  std::vector<Graph<double>::Id> ids;
  auto loss = build(g, params, ids);
  if (ids.size() != params.size())
    throw std::invalid_argument("grad_check: builder must register one leaf per parameter");
  g.backward(loss);

  auto eval = [&](const std::vector<Tensor<double>>& p) {
    Graph<double> h;
    std::vector<Graph<double>::Id> tmp;
    auto l = build(h, p, tmp);
    double v = h.value(l).at(0, 0);
    if (!std::isfinite(v)) throw std::runtime_error("grad_check: non-finite loss value");
    return v;
  };

  GradCheckResult res;
  // Components far below the loss scale are beneath central-difference
  // resolution (cancellation noise ~ |loss| * eps_machine / eps), so they are
  // compared against this floor instead of their own magnitude.
  double scale_floor = std::max(1.0, std::abs(g.value(loss).at(0, 0))) * 1e-4;
  Rng rng(sample_seed);
  for (std::size_t t = 0; t < params.size(); ++t) {
    const auto& analytic = g.grad(ids[t]);
    std::vector<std::size_t> coords;
    if (params[t].size() <= max_coords_per_tensor) {
      for (std::size_t i = 0; i < params[t].size(); ++i) coords.push_back(i);
    } else {
      for (std::size_t i = 0; i < max_coords_per_tensor; ++i)
        coords.push_back(rng.next_below(params[t].size()));
    }
    for (std::size_t i : coords) {
      double saved = params[t].v[i];
      params[t].v[i] = saved + eps;
      double up = eval(params);
      params[t].v[i] = saved - eps;
      double down = eval(params);
      params[t].v[i] = saved;
      double numeric = (up - down) / (2.0 * eps);
      double a = analytic.v[i];
      if (!std::isfinite(numeric) || !std::isfinite(a))
        throw std::runtime_error("grad_check: non-finite gradient");
      double rel = std::abs(a - numeric) /
                   std::max({std::abs(a), std::abs(numeric), scale_floor});
      res.max_rel_error = std::max(res.max_rel_error, rel);
      ++res.checked_coords;
    }
  }
  return res;
}

}  // namespace mlmlab
