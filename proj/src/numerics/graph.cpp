#include "ddn/numerics/graph.hpp"

#include <cassert>
#include <cmath>
#include <cstring>

namespace ddn::numerics {

namespace {

std::int64_t numel_of(const std::vector<int>& shape) {
  std::int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

int rows_of(const std::vector<int>& shape) {
  return static_cast<int>(numel_of(shape) / shape.back());
}

// y[b,:] += a * x[b,:] style kernels; written so -O3 vectorizes the inner loop.
inline void axpy(double a, const double* x, double* y, int n) {
  for (int i = 0; i < n; ++i) y[i] += a * x[i];
}

inline double dot(const double* a, const double* b, int n) {
  double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
  int i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

// C[m x n] += A[m x k] . B[k x n]
void mm_acc(const double* A, const double* B, double* C, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* arow = A + static_cast<size_t>(i) * k;
    double* crow = C + static_cast<size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      double a = arow[p];
      if (a == 0.0) continue;
      axpy(a, B + static_cast<size_t>(p) * n, crow, n);
    }
  }
}

// C[m x n] += A[m x k] . B^T where B is [n x k]
void mm_bt_acc(const double* A, const double* B, double* C, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* arow = A + static_cast<size_t>(i) * k;
    double* crow = C + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) crow[j] += dot(arow, B + static_cast<size_t>(j) * k, k);
  }
}

// C[m x n] += A^T . B where A is [k x m], B is [k x n]
void mm_at_acc(const double* A, const double* B, double* C, int m, int k, int n) {
  for (int p = 0; p < k; ++p) {
    const double* arow = A + static_cast<size_t>(p) * m;
    const double* brow = B + static_cast<size_t>(p) * n;
    for (int i = 0; i < m; ++i) {
      double a = arow[i];
      if (a == 0.0) continue;
      axpy(a, brow, C + static_cast<size_t>(i) * n, n);
    }
  }
}

}  // namespace

Graph::Node& Graph::node(Val v) {
  if (v.id < 0 || v.id >= static_cast<int>(nodes_.size())) throw ContractError("Val does not belong to this graph");
  return nodes_[v.id];
}

const Graph::Node& Graph::node(Val v) const { return const_cast<Graph*>(this)->node(v); }

int Graph::push(Node n) {
#ifndef NDEBUG
  for (double x : n.val) assert(std::isfinite(x) && "non-finite value out of forward op");
#endif
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

Val Graph::param(Tensor& t) {
  Node n;
  n.op = Op::leaf;
  n.shape = t.shape;
  n.val = t.data;
  n.needs_grad = t.requires_grad;
  n.bound = t.requires_grad ? &t : nullptr;
  return {push(std::move(n))};
}

Val Graph::constant(const Tensor& t) {
  Node n;
  n.op = Op::leaf;
  n.shape = t.shape;
  n.val = t.data;
  return {push(std::move(n))};
}

Val Graph::constant(std::vector<int> shape, std::vector<double> data) {
  if (numel_of(shape) != static_cast<std::int64_t>(data.size()))
    throw DimensionError("constant data does not match shape " + shape_str(shape));
  Node n;
  n.op = Op::leaf;
  n.shape = std::move(shape);
  n.val = std::move(data);
  return {push(std::move(n))};
}

Val Graph::zeros(int rows, int cols) {
  Node n;
  n.op = Op::leaf;
  n.shape = {rows, cols};
  n.val.assign(static_cast<size_t>(rows) * cols, 0.0);
  return {push(std::move(n))};
}

Val Graph::matmul(Val a, Val b) {
  const Node& na = node(a);
  const Node& nb = node(b);
  if (na.shape.size() != 2 || nb.shape.size() != 2 || na.shape[1] != nb.shape[0])
    throw DimensionError("matmul shape mismatch: " + shape_str(na.shape) + " x " + shape_str(nb.shape));
  int m = na.shape[0], k = na.shape[1], n2 = nb.shape[1];
  Node out;
  out.op = Op::matmul;
  out.a = a.id;
  out.b = b.id;
  out.shape = {m, n2};
  out.val.assign(static_cast<size_t>(m) * n2, 0.0);
  mm_acc(na.val.data(), nb.val.data(), out.val.data(), m, k, n2);
  out.needs_grad = na.needs_grad || nb.needs_grad;
  return {push(std::move(out))};
}

Val Graph::linear(Val x, Val w, Val b) {
  const Node& nx = node(x);
  const Node& nw = node(w);
  const Node& nb = node(b);
  if (nx.shape.size() != 2 || nw.shape.size() != 2 || nx.shape[1] != nw.shape[1])
    throw DimensionError("linear: input " + shape_str(nx.shape) + " vs weight " + shape_str(nw.shape));
  int B = nx.shape[0], I = nx.shape[1], O = nw.shape[0];
  if (numel_of(nb.shape) != O) throw DimensionError("linear: bias " + shape_str(nb.shape) + " vs out width " + std::to_string(O));
  Node out;
  out.op = Op::linear;
  out.a = x.id;
  out.b = w.id;
  out.c = b.id;
  out.shape = {B, O};
  out.val.assign(static_cast<size_t>(B) * O, 0.0);
  mm_bt_acc(nx.val.data(), nw.val.data(), out.val.data(), B, I, O);
  const double* bias = nb.val.data();
  for (int r = 0; r < B; ++r)
    for (int j = 0; j < O; ++j) out.val[static_cast<size_t>(r) * O + j] += bias[j];
  out.needs_grad = nx.needs_grad || nw.needs_grad || nb.needs_grad;
  return {push(std::move(out))};
}

Val Graph::rowwise_matmul(Val x, Val w, int out_cols) {
  const Node& nx = node(x);
  const Node& nw = node(w);
  if (nx.shape.size() != 2 || nw.shape.size() != 2 || nx.shape[0] != nw.shape[0])
    throw DimensionError("rowwise_matmul: rows disagree " + shape_str(nx.shape) + " vs " + shape_str(nw.shape));
  int B = nx.shape[0], k = nx.shape[1];
  if (nw.shape[1] != k * out_cols)
    throw DimensionError("rowwise_matmul: weight width " + std::to_string(nw.shape[1]) + " != " +
                         std::to_string(k) + "*" + std::to_string(out_cols));
  Node out;
  out.op = Op::rowwise_matmul;
  out.a = x.id;
  out.b = w.id;
  out.i0 = out_cols;
  out.shape = {B, out_cols};
  out.val.assign(static_cast<size_t>(B) * out_cols, 0.0);
  for (int r = 0; r < B; ++r) {
    const double* xr = nx.val.data() + static_cast<size_t>(r) * k;
    const double* wr = nw.val.data() + static_cast<size_t>(r) * k * out_cols;
    double* orow = out.val.data() + static_cast<size_t>(r) * out_cols;
    for (int p = 0; p < k; ++p) axpy(xr[p], wr + static_cast<size_t>(p) * out_cols, orow, out_cols);
  }
  out.needs_grad = nx.needs_grad || nw.needs_grad;
  return {push(std::move(out))};
}

Val Graph::add(Val a, Val b) {
  const Node& na = node(a);
  const Node& nb = node(b);
  if (na.shape != nb.shape) throw DimensionError("add shape mismatch: " + shape_str(na.shape) + " vs " + shape_str(nb.shape));
  Node out;
  out.op = Op::add;
  out.a = a.id;
  out.b = b.id;
  out.shape = na.shape;
  out.val.resize(na.val.size());
  for (size_t i = 0; i < na.val.size(); ++i) out.val[i] = na.val[i] + nb.val[i];
  out.needs_grad = na.needs_grad || nb.needs_grad;
  return {push(std::move(out))};
}

Val Graph::sub(Val a, Val b) {
  const Node& na = node(a);
  const Node& nb = node(b);
  if (na.shape != nb.shape) throw DimensionError("sub shape mismatch: " + shape_str(na.shape) + " vs " + shape_str(nb.shape));
  Node out;
  out.op = Op::sub;
  out.a = a.id;
  out.b = b.id;
  out.shape = na.shape;
  out.val.resize(na.val.size());
  for (size_t i = 0; i < na.val.size(); ++i) out.val[i] = na.val[i] - nb.val[i];
  out.needs_grad = na.needs_grad || nb.needs_grad;
  return {push(std::move(out))};
}

Val Graph::mul(Val a, Val b) {
  const Node& na = node(a);
  const Node& nb = node(b);
  if (na.shape != nb.shape) throw DimensionError("mul shape mismatch: " + shape_str(na.shape) + " vs " + shape_str(nb.shape));
  Node out;
  out.op = Op::mul;
  out.a = a.id;
  out.b = b.id;
  out.shape = na.shape;
  out.val.resize(na.val.size());
  for (size_t i = 0; i < na.val.size(); ++i) out.val[i] = na.val[i] * nb.val[i];
  out.needs_grad = na.needs_grad || nb.needs_grad;
  return {push(std::move(out))};
}

Val Graph::add_row(Val x, Val r) {
  const Node& nx = node(x);
  const Node& nr = node(r);
  if (nx.shape.size() != 2 || numel_of(nr.shape) != nx.shape[1])
    throw DimensionError("add_row: " + shape_str(nx.shape) + " vs " + shape_str(nr.shape));
  int B = nx.shape[0], C = nx.shape[1];
  Node out;
  out.op = Op::add_row;
  out.a = x.id;
  out.b = r.id;
  out.shape = nx.shape;
  out.val.resize(nx.val.size());
  for (int i = 0; i < B; ++i)
    for (int j = 0; j < C; ++j)
      out.val[static_cast<size_t>(i) * C + j] = nx.val[static_cast<size_t>(i) * C + j] + nr.val[j];
  out.needs_grad = nx.needs_grad || nr.needs_grad;
  return {push(std::move(out))};
}

Val Graph::scale(Val x, double c) {
  const Node& nx = node(x);
  Node out;
  out.op = Op::scale;
  out.a = x.id;
  out.s0 = c;
  out.shape = nx.shape;
  out.val.resize(nx.val.size());
  for (size_t i = 0; i < nx.val.size(); ++i) out.val[i] = c * nx.val[i];
  out.needs_grad = nx.needs_grad;
  return {push(std::move(out))};
}

Val Graph::add_scalar(Val x, double c) {
  const Node& nx = node(x);
  Node out;
  out.op = Op::add_scalar;
  out.a = x.id;
  out.s0 = c;
  out.shape = nx.shape;
  out.val.resize(nx.val.size());
  for (size_t i = 0; i < nx.val.size(); ++i) out.val[i] = nx.val[i] + c;
  out.needs_grad = nx.needs_grad;
  return {push(std::move(out))};
}

Val Graph::activation(Val x, Act kind) {
  const Node& nx = node(x);
  if ((kind == Act::softmax_lastdim || kind == Act::log_softmax_lastdim) && nx.shape.empty())
    throw DimensionError("softmax requires rank >= 1");
  Node out;
  out.op = Op::act;
  out.a = x.id;
  out.act = kind;
  out.shape = nx.shape;
  out.val.resize(nx.val.size());
  const auto& xv = nx.val;
  switch (kind) {
    case Act::relu:
      for (size_t i = 0; i < xv.size(); ++i) out.val[i] = xv[i] > 0 ? xv[i] : 0.0;
      break;
    case Act::tanh:
      for (size_t i = 0; i < xv.size(); ++i) out.val[i] = std::tanh(xv[i]);
      break;
    case Act::sigmoid:
      for (size_t i = 0; i < xv.size(); ++i) out.val[i] = 1.0 / (1.0 + std::exp(-xv[i]));
      break;
    case Act::abs:
      for (size_t i = 0; i < xv.size(); ++i) out.val[i] = std::fabs(xv[i]);
      break;
    case Act::elu:
      for (size_t i = 0; i < xv.size(); ++i) out.val[i] = xv[i] > 0 ? xv[i] : std::expm1(xv[i]);
      break;
    case Act::softmax_lastdim:
    case Act::log_softmax_lastdim: {
      int C = nx.shape.back();
      int R = rows_of(nx.shape);
      for (int r = 0; r < R; ++r) {
        const double* in = xv.data() + static_cast<size_t>(r) * C;
        double* o = out.val.data() + static_cast<size_t>(r) * C;
        double mx = in[0];
        for (int j = 1; j < C; ++j) mx = std::max(mx, in[j]);
        double z = 0;
        for (int j = 0; j < C; ++j) z += std::exp(in[j] - mx);
        double lz = std::log(z) + mx;
        if (kind == Act::softmax_lastdim)
          for (int j = 0; j < C; ++j) o[j] = std::exp(in[j] - lz);
        else
          for (int j = 0; j < C; ++j) o[j] = in[j] - lz;
      }
      break;
    }
  }
  out.needs_grad = nx.needs_grad;
  return {push(std::move(out))};
}

Val Graph::sum_all(Val x) {
  const Node& nx = node(x);
  double s = 0;
  for (double v : nx.val) s += v;
  Node out;
  out.op = Op::sum_all;
  out.a = x.id;
  out.shape = {1, 1};
  out.val = {s};
  out.needs_grad = nx.needs_grad;
  return {push(std::move(out))};
}

Val Graph::slice_cols(Val x, int c0, int c1) {
  const Node& nx = node(x);
  if (nx.shape.size() != 2 || c0 < 0 || c1 > nx.shape[1] || c0 >= c1)
    throw DimensionError("slice_cols [" + std::to_string(c0) + "," + std::to_string(c1) + ") of " + shape_str(nx.shape));
  int B = nx.shape[0], C = nx.shape[1], W = c1 - c0;
  Node out;
  out.op = Op::slice_cols;
  out.a = x.id;
  out.i0 = c0;
  out.i1 = c1;
  out.shape = {B, W};
  out.val.resize(static_cast<size_t>(B) * W);
  for (int r = 0; r < B; ++r)
    std::memcpy(out.val.data() + static_cast<size_t>(r) * W, nx.val.data() + static_cast<size_t>(r) * C + c0,
                sizeof(double) * W);
  out.needs_grad = nx.needs_grad;
  return {push(std::move(out))};
}

Val Graph::concat_cols(Val a, Val b) {
  const Node& na = node(a);
  const Node& nb = node(b);
  if (na.shape.size() != 2 || nb.shape.size() != 2 || na.shape[0] != nb.shape[0])
    throw DimensionError("concat_cols: " + shape_str(na.shape) + " vs " + shape_str(nb.shape));
  int B = na.shape[0], Ca = na.shape[1], Cb = nb.shape[1];
  Node out;
  out.op = Op::concat_cols;
  out.a = a.id;
  out.b = b.id;
  out.shape = {B, Ca + Cb};
  out.val.resize(static_cast<size_t>(B) * (Ca + Cb));
  for (int r = 0; r < B; ++r) {
    std::memcpy(out.val.data() + static_cast<size_t>(r) * (Ca + Cb), na.val.data() + static_cast<size_t>(r) * Ca,
                sizeof(double) * Ca);
    std::memcpy(out.val.data() + static_cast<size_t>(r) * (Ca + Cb) + Ca, nb.val.data() + static_cast<size_t>(r) * Cb,
                sizeof(double) * Cb);
  }
  out.needs_grad = na.needs_grad || nb.needs_grad;
  return {push(std::move(out))};
}

Val Graph::gather_cols(Val x, std::vector<int> col_per_row) {
  const Node& nx = node(x);
  if (nx.shape.size() != 2 || static_cast<int>(col_per_row.size()) != nx.shape[0])
    throw DimensionError("gather_cols: need one index per row of " + shape_str(nx.shape));
  int B = nx.shape[0], C = nx.shape[1];
  Node out;
  out.op = Op::gather_cols;
  out.a = x.id;
  out.shape = {B, 1};
  out.val.resize(B);
  for (int r = 0; r < B; ++r) {
    int c = col_per_row[r];
    if (c < 0 || c >= C) throw ContractError("gather_cols: index " + std::to_string(c) + " out of width " + std::to_string(C));
    out.val[r] = nx.val[static_cast<size_t>(r) * C + c];
  }
  out.idx = std::move(col_per_row);
  out.needs_grad = nx.needs_grad;
  return {push(std::move(out))};
}

Val Graph::reshape(Val x, std::vector<int> shape) {
  const Node& nx = node(x);
  if (numel_of(shape) != static_cast<std::int64_t>(nx.val.size()))
    throw DimensionError("reshape " + shape_str(nx.shape) + " -> " + shape_str(shape));
  Node out;
  out.op = Op::reshape;
  out.a = x.id;
  out.shape = std::move(shape);
  out.val = nx.val;
  out.needs_grad = nx.needs_grad;
  return {push(std::move(out))};
}

Val Graph::repeat_rows(Val v, int n) {
  const Node& nv = node(v);
  if (nv.shape.size() != 2 || nv.shape[0] != 1) throw DimensionError("repeat_rows wants [1 x C], got " + shape_str(nv.shape));
  int C = nv.shape[1];
  Node out;
  out.op = Op::repeat_rows;
  out.a = v.id;
  out.shape = {n, C};
  out.val.resize(static_cast<size_t>(n) * C);
  for (int r = 0; r < n; ++r) std::memcpy(out.val.data() + static_cast<size_t>(r) * C, nv.val.data(), sizeof(double) * C);
  out.needs_grad = nv.needs_grad;
  return {push(std::move(out))};
}

void Graph::ensure_grad(Node& n) {
  if (n.grad.empty()) n.grad.assign(n.val.size(), 0.0);
}

void Graph::backward(Val loss) {
  Node& ln = node(loss);
  if (numel_of(ln.shape) != 1) throw ContractError("backward requires a scalar loss, got " + shape_str(ln.shape));
  if (consumed_) throw ContractError("backward already ran on this graph");
  consumed_ = true;
  if (!ln.needs_grad) return;  // nothing differentiable upstream
  ensure_grad(ln);
  ln.grad[0] = 1.0;
  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.needs_grad || n.grad.empty()) continue;
    backward_node(id);
  }
}

void Graph::backward_node(int id) {
  Node& n = nodes_[id];
  const std::vector<double>& g = n.grad;
  auto in_grad = [&](int input) -> std::vector<double>* {
    Node& m = nodes_[input];
    if (!m.needs_grad) return nullptr;
    ensure_grad(m);
    return &m.grad;
  };

  switch (n.op) {
    case Op::leaf:
      if (n.bound) {
        n.bound->ensure_grad();
        for (size_t i = 0; i < g.size(); ++i) n.bound->grad[i] += g[i];
      }
      break;
    case Op::matmul: {
      Node& na = nodes_[n.a];
      Node& nb = nodes_[n.b];
      int m = na.shape[0], k = na.shape[1], c = nb.shape[1];
      if (auto* ga = in_grad(n.a)) mm_bt_acc(g.data(), nb.val.data(), ga->data(), m, c, k);
      if (auto* gb = in_grad(n.b)) mm_at_acc(na.val.data(), g.data(), gb->data(), k, m, c);
      break;
    }
    case Op::linear: {
      Node& nx = nodes_[n.a];
      Node& nw = nodes_[n.b];
      int B = nx.shape[0], I = nx.shape[1], O = nw.shape[0];
      if (auto* gx = in_grad(n.a)) mm_acc(g.data(), nw.val.data(), gx->data(), B, O, I);
      if (auto* gw = in_grad(n.b)) mm_at_acc(g.data(), nx.val.data(), gw->data(), O, B, I);
      if (auto* gb = in_grad(n.c)) {
        for (int r = 0; r < B; ++r)
          for (int j = 0; j < O; ++j) (*gb)[j] += g[static_cast<size_t>(r) * O + j];
      }
      break;
    }
    case Op::rowwise_matmul: {
      Node& nx = nodes_[n.a];
      Node& nw = nodes_[n.b];
      int B = nx.shape[0], k = nx.shape[1], m = n.i0;
      auto* gx = in_grad(n.a);
      auto* gw = in_grad(n.b);
      for (int r = 0; r < B; ++r) {
        const double* grow = g.data() + static_cast<size_t>(r) * m;
        const double* xr = nx.val.data() + static_cast<size_t>(r) * k;
        const double* wr = nw.val.data() + static_cast<size_t>(r) * k * m;
        for (int p = 0; p < k; ++p) {
          if (gx) (*gx)[static_cast<size_t>(r) * k + p] += dot(grow, wr + static_cast<size_t>(p) * m, m);
          if (gw) axpy(xr[p], grow, gw->data() + static_cast<size_t>(r) * k * m + static_cast<size_t>(p) * m, m);
        }
      }
      break;
    }
    case Op::add:
      if (auto* ga = in_grad(n.a))
        for (size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
      if (auto* gb = in_grad(n.b))
        for (size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i];
      break;
    case Op::sub:
      if (auto* ga = in_grad(n.a))
        for (size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
      if (auto* gb = in_grad(n.b))
        for (size_t i = 0; i < g.size(); ++i) (*gb)[i] -= g[i];
      break;
    case Op::mul: {
      Node& na = nodes_[n.a];
      Node& nb = nodes_[n.b];
      if (auto* ga = in_grad(n.a))
        for (size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * nb.val[i];
      if (auto* gb = in_grad(n.b))
        for (size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * na.val[i];
      break;
    }
    case Op::add_row: {
      int B = n.shape[0], C = n.shape[1];
      if (auto* ga = in_grad(n.a))
        for (size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
      if (auto* gb = in_grad(n.b))
        for (int r = 0; r < B; ++r)
          for (int j = 0; j < C; ++j) (*gb)[j] += g[static_cast<size_t>(r) * C + j];
      break;
    }
    case Op::scale:
      if (auto* ga = in_grad(n.a))
        for (size_t i = 0; i < g.size(); ++i) (*ga)[i] += n.s0 * g[i];
      break;
    case Op::add_scalar:
      if (auto* ga = in_grad(n.a))
        for (size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
      break;
    case Op::act: {
      Node& nx = nodes_[n.a];
      auto* gx = in_grad(n.a);
      if (!gx) break;
      switch (n.act) {
        case Act::relu:
          for (size_t i = 0; i < g.size(); ++i) (*gx)[i] += nx.val[i] > 0 ? g[i] : 0.0;
          break;
        case Act::tanh:
          for (size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i] * (1.0 - n.val[i] * n.val[i]);
          break;
        case Act::sigmoid:
          for (size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i] * n.val[i] * (1.0 - n.val[i]);
          break;
        case Act::abs:
          for (size_t i = 0; i < g.size(); ++i) (*gx)[i] += nx.val[i] >= 0 ? g[i] : -g[i];
          break;
        case Act::elu:
          for (size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i] * (nx.val[i] > 0 ? 1.0 : n.val[i] + 1.0);
          break;
        case Act::softmax_lastdim: {
          int C = n.shape.back();
          int R = rows_of(n.shape);
          for (int r = 0; r < R; ++r) {
            const double* y = n.val.data() + static_cast<size_t>(r) * C;
            const double* gr = g.data() + static_cast<size_t>(r) * C;
            double gy = dot(gr, y, C);
            double* o = gx->data() + static_cast<size_t>(r) * C;
            for (int j = 0; j < C; ++j) o[j] += y[j] * (gr[j] - gy);
          }
          break;
        }
        case Act::log_softmax_lastdim: {
          int C = n.shape.back();
          int R = rows_of(n.shape);
          for (int r = 0; r < R; ++r) {
            const double* y = n.val.data() + static_cast<size_t>(r) * C;
            const double* gr = g.data() + static_cast<size_t>(r) * C;
            double gs = 0;
            for (int j = 0; j < C; ++j) gs += gr[j];
            double* o = gx->data() + static_cast<size_t>(r) * C;
            for (int j = 0; j < C; ++j) o[j] += gr[j] - std::exp(y[j]) * gs;
          }
          break;
        }
      }
      break;
    }
    case Op::sum_all:
      if (auto* ga = in_grad(n.a)) {
        double gv = g[0];
        for (size_t i = 0; i < ga->size(); ++i) (*ga)[i] += gv;
      }
      break;
    case Op::slice_cols: {
      Node& nx = nodes_[n.a];
      int B = n.shape[0], W = n.shape[1], C = nx.shape[1];
      if (auto* gx = in_grad(n.a))
        for (int r = 0; r < B; ++r)
          for (int j = 0; j < W; ++j) (*gx)[static_cast<size_t>(r) * C + n.i0 + j] += g[static_cast<size_t>(r) * W + j];
      break;
    }
    case Op::concat_cols: {
      Node& na = nodes_[n.a];
      Node& nb = nodes_[n.b];
      int B = n.shape[0], Ca = na.shape[1], Cb = nb.shape[1];
      if (auto* ga = in_grad(n.a))
        for (int r = 0; r < B; ++r)
          for (int j = 0; j < Ca; ++j) (*ga)[static_cast<size_t>(r) * Ca + j] += g[static_cast<size_t>(r) * (Ca + Cb) + j];
      if (auto* gb = in_grad(n.b))
        for (int r = 0; r < B; ++r)
          for (int j = 0; j < Cb; ++j)
            (*gb)[static_cast<size_t>(r) * Cb + j] += g[static_cast<size_t>(r) * (Ca + Cb) + Ca + j];
      break;
    }
    case Op::gather_cols: {
      Node& nx = nodes_[n.a];
      int B = n.shape[0], C = nx.shape[1];
      if (auto* gx = in_grad(n.a))
        for (int r = 0; r < B; ++r) (*gx)[static_cast<size_t>(r) * C + n.idx[r]] += g[r];
      break;
    }
    case Op::reshape:
      if (auto* ga = in_grad(n.a))
        for (size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
      break;
    case Op::repeat_rows: {
      int R = n.shape[0], C = n.shape[1];
      if (auto* ga = in_grad(n.a))
        for (int r = 0; r < R; ++r)
          for (int j = 0; j < C; ++j) (*ga)[j] += g[static_cast<size_t>(r) * C + j];
      break;
    }
  }
}

const std::vector<double>& Graph::value(Val v) const { return node(v).val; }
const std::vector<int>& Graph::shape(Val v) const { return node(v).shape; }

double Graph::scalar(Val v) const {
  const Node& n = node(v);
  if (numel_of(n.shape) != 1) throw ContractError("scalar() on tensor of shape " + shape_str(n.shape));
  return n.val[0];
}

bool Graph::finite(Val v) const {
  for (double x : node(v).val)
    if (!std::isfinite(x)) return false;
  return true;
}

Val apply_activation(Graph& g, Val x, Act kind) { return g.activation(x, kind); }

Val mse(Graph& g, Val pred, Val target) {
  Val d = g.sub(pred, target);
  Val sq = g.mul(d, d);
  size_t n = g.value(sq).size();
  return g.scale(g.sum_all(sq), 1.0 / static_cast<double>(n));
}

}  // namespace ddn::numerics
