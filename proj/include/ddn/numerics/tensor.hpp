#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "ddn/errors.hpp"

namespace ddn::numerics {

// Dense 64-bit float tensor, row-major. Gradients accumulate into `grad`
// across backward calls until an optimizer step clears them.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;
  bool requires_grad = false;
  std::vector<double> grad;  // empty, or same length as data

  Tensor() = default;
  explicit Tensor(std::vector<int> shp, double fill = 0.0);
  Tensor(std::vector<int> shp, std::vector<double> values);

  static Tensor zeros(std::vector<int> shp) { return Tensor(std::move(shp)); }
  static Tensor full(std::vector<int> shp, double v) { return Tensor(std::move(shp), v); }
  static Tensor row(std::vector<double> values);                 // [1 x n]
  static Tensor matrix(int r, int c, std::vector<double> v);     // [r x c]
  static Tensor scalar(double v) { return Tensor({1, 1}, {v}); }
  static Tensor identity(int n);

  std::int64_t numel() const;
  int rank() const { return static_cast<int>(shape.size()); }
  // Rank-2 view: all ops in this engine treat a tensor as rows x last-dim.
  int rows() const;
  int cols() const;

  double& at(int r, int c);
  double at(int r, int c) const;

  bool has_grad() const { return !grad.empty(); }
  void ensure_grad();            // allocate zero grad buffer if absent
  void zero_grad();              // drop accumulated gradients
  bool all_finite() const;

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

std::string shape_str(const std::vector<int>& shape);

// Uniform(lo, hi) fill; the canonical fan-in init used by every network here.
void fill_uniform(Tensor& t, std::mt19937_64& rng, double lo, double hi);
void fill_fanin_uniform(Tensor& t, std::mt19937_64& rng, int fan_in);

}  // namespace ddn::numerics
