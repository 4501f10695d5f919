#include "ddn/numerics/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

namespace ddn::numerics {

static std::int64_t product(const std::vector<int>& shape) {
  std::int64_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw DimensionError("tensor dimension must be positive, got " + shape_str(shape));
    n *= d;
  }
  return n;
}

Tensor::Tensor(std::vector<int> shp, double fill) : shape(std::move(shp)) {
  data.assign(static_cast<size_t>(product(shape)), fill);
}

Tensor::Tensor(std::vector<int> shp, std::vector<double> values) : shape(std::move(shp)), data(std::move(values)) {
  if (product(shape) != static_cast<std::int64_t>(data.size()))
    throw DimensionError("tensor data length " + std::to_string(data.size()) + " does not match shape " +
                         shape_str(shape));
}

Tensor Tensor::row(std::vector<double> values) {
  int n = static_cast<int>(values.size());
  return Tensor({1, n}, std::move(values));
}

Tensor Tensor::matrix(int r, int c, std::vector<double> v) { return Tensor({r, c}, std::move(v)); }

Tensor Tensor::identity(int n) {
  Tensor t({n, n});
  for (int i = 0; i < n; ++i) t.data[static_cast<size_t>(i) * n + i] = 1.0;
  return t;
}

std::int64_t Tensor::numel() const { return static_cast<std::int64_t>(data.size()); }

int Tensor::rows() const {
  if (shape.empty()) throw DimensionError("rows() on rank-0 tensor");
  return static_cast<int>(numel() / shape.back());
}

int Tensor::cols() const {
  if (shape.empty()) throw DimensionError("cols() on rank-0 tensor");
  return shape.back();
}

double& Tensor::at(int r, int c) { return data[static_cast<size_t>(r) * cols() + c]; }
double Tensor::at(int r, int c) const { return data[static_cast<size_t>(r) * cols() + c]; }

void Tensor::ensure_grad() {
  if (grad.empty()) grad.assign(data.size(), 0.0);
}

void Tensor::zero_grad() { grad.clear(); }

bool Tensor::all_finite() const {
  for (double v : data)
    if (!std::isfinite(v)) return false;
  return true;
}

std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

void fill_uniform(Tensor& t, std::mt19937_64& rng, double lo, double hi) {
  // Plain scaling of the raw 53-bit draw keeps the layout reproducible across
  // standard library implementations.
  const double span = hi - lo;
  for (double& v : t.data) {
    double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    v = lo + span * u;
  }
}

void fill_fanin_uniform(Tensor& t, std::mt19937_64& rng, int fan_in) {
  double b = 1.0 / std::sqrt(static_cast<double>(fan_in > 0 ? fan_in : 1));
  fill_uniform(t, rng, -b, b);
}

}  // namespace ddn::numerics
