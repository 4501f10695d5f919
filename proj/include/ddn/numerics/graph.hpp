#pragma once

#include <vector>

#include "ddn/numerics/tensor.hpp"

namespace ddn::numerics {

enum class Act { relu, tanh, sigmoid, softmax_lastdim, abs, elu, log_softmax_lastdim };

// Handle into a Graph; only valid for the graph that produced it.
struct Val {
  int id = -1;
};

// Reverse-mode tape. Nodes are appended in forward order, so every input id
// precedes its consumer and one reverse sweep computes all gradients.
// Parameter leaves are bound to external Tensors; their gradients accumulate
// into Tensor::grad across backward() calls until explicitly cleared.
class Graph {
 public:
  // Leaves.
  Val param(Tensor& t);                  // honors t.requires_grad
  Val constant(const Tensor& t);         // copied, never differentiated
  Val constant(std::vector<int> shape, std::vector<double> data);
  Val zeros(int rows, int cols);

  // Linear algebra.
  Val matmul(Val a, Val b);                          // [m x k] . [k x n]
  Val linear(Val x, Val w, Val b);                   // x [B x I], w [O x I], b [1 x O] -> [B x O]
  Val rowwise_matmul(Val x, Val w, int out_cols);    // out[r,:] = x[r,:] . reshape(w[r,:], k x m)

  // Elementwise / shape.
  Val add(Val a, Val b);
  Val sub(Val a, Val b);
  Val mul(Val a, Val b);
  Val add_row(Val x, Val r);             // broadcast a [1 x C] row over rows of x
  Val scale(Val x, double c);
  Val add_scalar(Val x, double c);
  Val activation(Val x, Act kind);
  Val sum_all(Val x);                    // -> [1 x 1]
  Val slice_cols(Val x, int c0, int c1); // half-open
  Val concat_cols(Val a, Val b);
  Val gather_cols(Val x, std::vector<int> col_per_row);  // -> [B x 1]
  Val reshape(Val x, std::vector<int> shape);
  Val repeat_rows(Val v, int n);         // [1 x C] -> [n x C]

  // Seeds d(loss)/d(node) = 1 at a scalar loss and sweeps the tape once in
  // reverse, accumulating into bound parameter tensors. A graph can be run
  // backward only once; build a fresh graph per loss.
  void backward(Val loss);

  const std::vector<double>& value(Val v) const;
  const std::vector<int>& shape(Val v) const;
  double scalar(Val v) const;
  bool finite(Val v) const;
  size_t size() const { return nodes_.size(); }

 private:
  enum class Op {
    leaf, matmul, linear, rowwise_matmul, add, sub, mul, add_row, scale,
    add_scalar, act, sum_all, slice_cols, concat_cols, gather_cols, reshape,
    repeat_rows
  };

  struct Node {
    Op op;
    int a = -1, b = -1, c = -1;
    std::vector<int> shape;
    std::vector<double> val;
    std::vector<double> grad;  // allocated lazily during backward
    bool needs_grad = false;
    Tensor* bound = nullptr;
    Act act = Act::relu;
    int i0 = 0, i1 = 0;
    double s0 = 0.0;
    std::vector<int> idx;
  };

  Node& node(Val v);
  const Node& node(Val v) const;
  int push(Node n);
  void ensure_grad(Node& n);
  void backward_node(int id);

  std::vector<Node> nodes_;
  bool consumed_ = false;
};

// Spec-surface convenience wrappers.
Val apply_activation(Graph& g, Val x, Act kind);
Val mse(Graph& g, Val pred, Val target);  // mean of squared differences

}  // namespace ddn::numerics
