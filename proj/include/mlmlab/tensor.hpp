#pragma once
#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace mlmlab {

// Dense 2D tensor. Row vectors are [1 x c], scalars [1 x 1].
template <class Real>
struct Tensor {
  int rows = 0;
  int cols = 0;
  std::vector<Real> v;  // row-major

  Tensor() = default;
  Tensor(int r, int c) : rows(r), cols(c), v(static_cast<std::size_t>(r) * c, Real(0)) {
    if (r < 0 || c < 0) throw std::invalid_argument("negative tensor shape");
  }
  Tensor(int r, int c, std::initializer_list<Real> init) : Tensor(r, c) {
    if (init.size() != v.size()) throw std::invalid_argument("tensor init size mismatch");
    std::size_t i = 0;
    for (Real x : init) v[i++] = x;
  }

  std::size_t size() const { return v.size(); }
  Real& at(int r, int c) { return v[static_cast<std::size_t>(r) * cols + c]; }
  Real at(int r, int c) const { return v[static_cast<std::size_t>(r) * cols + c]; }

  bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }

  std::string shape_str() const {
    return "[" + std::to_string(rows) + " x " + std::to_string(cols) + "]";
  }

  template <class Other>
  Tensor<Other> cast() const {
    Tensor<Other> out(rows, cols);
    for (std::size_t i = 0; i < v.size(); ++i) out.v[i] = static_cast<Other>(v[i]);
    return out;
  }
};

}  // namespace mlmlab
