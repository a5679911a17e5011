// Dense row-major tensor of doubles. The only numeric container in the
// project; everything (activations, parameters, gradients) is one of these.
#pragma once

#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace calopt {

struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> values;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> s)
      : shape(std::move(s)), values(count(shape), 0.0) {}
  Tensor(std::vector<std::size_t> s, std::vector<double> v)
      : shape(std::move(s)), values(std::move(v)) {
    if (count(shape) != values.size())
      throw std::invalid_argument("Tensor: shape/value count mismatch");
  }

  static std::size_t count(const std::vector<std::size_t>& s) {
    std::size_t n = 1;
    for (auto e : s) n *= e;
    return n;
  }

  static Tensor zeros(std::vector<std::size_t> s) {
    std::size_t n = count(s);
    return Tensor(std::move(s), std::vector<double>(n, 0.0));
  }
  static Tensor full(std::vector<std::size_t> s, double v) {
    std::size_t n = count(s);
    return Tensor(std::move(s), std::vector<double>(n, v));
  }
  static Tensor scalar(double v) { return Tensor({1}, {v}); }
  // Column vector (n x 1).
  static Tensor column(const std::vector<double>& v) {
    return Tensor({v.size(), 1}, v);
  }
  static Tensor row(const std::vector<double>& v) {
    return Tensor({1, v.size()}, v);
  }

  std::size_t size() const { return values.size(); }
  bool is_scalar() const { return values.size() == 1; }

  // Matrix accessors; valid for rank-2 tensors.
  std::size_t rows() const { return shape.size() >= 1 ? shape[0] : 1; }
  std::size_t cols() const { return shape.size() >= 2 ? shape[1] : 1; }
  double& at(std::size_t r, std::size_t c) { return values[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return values[r * cols() + c]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  std::string shape_str() const {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i)
      s += (i ? "," : "") + std::to_string(shape[i]);
    return s + "]";
  }
};

}  // namespace calopt
