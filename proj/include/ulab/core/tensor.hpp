#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

#include "ulab/core/error.hpp"

namespace ulab {

// Dense row-major tensor. Scalar type is a template parameter: experiments
// run in float, gradient-check builds instantiate double.
template <typename T>
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<T> data;

  Tensor() = default;
  Tensor(std::vector<std::size_t> s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
    ULAB_CHECK(data.size() == element_count(shape), "tensor data length does not match shape");
  }

  static std::size_t element_count(const std::vector<std::size_t>& s) {
    std::size_t n = 1;
    for (auto d : s) n *= d;
    return n;
  }

  static Tensor zeros(std::vector<std::size_t> s) {
    std::size_t n = element_count(s);
    return Tensor(std::move(s), std::vector<T>(n, T(0)));
  }

  std::size_t size() const { return data.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }
  std::size_t rank() const { return shape.size(); }

  // Leading dimension is the batch, rest is one example.
  std::size_t rows() const { return shape.empty() ? 0 : shape[0]; }
  std::size_t row_size() const { return rows() == 0 ? 0 : size() / rows(); }

  T* row(std::size_t r) { return data.data() + r * row_size(); }
  const T* row(std::size_t r) const { return data.data() + r * row_size(); }

  T& at(std::size_t i) { return data[i]; }
  const T& at(std::size_t i) const { return data[i]; }

  bool all_finite() const {
    for (const T& v : data)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out;
    out.shape = shape;
    out.data.resize(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
    return out;
  }
};

// Row-wise numerically stable softmax.
template <typename T>
inline Tensor<T> softmax(const Tensor<T>& logits) {
  Tensor<T> out = logits;
  const std::size_t n = logits.rows(), c = logits.row_size();
  for (std::size_t r = 0; r < n; ++r) {
    const T* in = logits.row(r);
    T* p = out.row(r);
    T mx = in[0];
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, in[j]);
    T sum = T(0);
    for (std::size_t j = 0; j < c; ++j) {
      p[j] = std::exp(in[j] - mx);
      sum += p[j];
    }
    for (std::size_t j = 0; j < c; ++j) p[j] /= sum;
  }
  return out;
}

template <typename T>
inline std::size_t argmax_row(const T* row, std::size_t c) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < c; ++j)
    if (row[j] > row[best]) best = j;
  return best;
}

}  // namespace ulab
