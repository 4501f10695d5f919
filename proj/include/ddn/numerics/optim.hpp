#pragma once

#include <string>
#include <utility>
#include <vector>

#include "ddn/numerics/tensor.hpp"

namespace ddn::numerics {

using NamedParams = std::vector<std::pair<std::string, Tensor*>>;

// RMSprop / Adam over a fixed set of registered parameters. step() applies
// the update from each parameter's accumulated gradient and clears it.
class OptimizerState {
 public:
  enum class Kind { rmsprop, adam };

  static OptimizerState rmsprop(double lr, double decay = 0.99, double eps = 1e-5);
  static OptimizerState adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  void attach(std::string name, Tensor& param);
  void attach_all(const NamedParams& params);

  // Every attached parameter must carry a gradient; a missing one is a
  // contract violation named in the error.
  void step();

  Kind kind() const { return kind_; }
  long step_count() const { return step_count_; }
  double learning_rate() const { return lr_; }

 private:
  struct Slot {
    std::string name;
    Tensor* param;
    std::vector<double> acc;  // second moment
    std::vector<double> m1;   // first moment (adam)
  };

  Kind kind_ = Kind::rmsprop;
  double lr_ = 0;
  double decay_ = 0.99;
  double eps_ = 1e-5;
  double beta1_ = 0.9, beta2_ = 0.999;
  long step_count_ = 0;
  std::vector<Slot> slots_;
};

}  // namespace ddn::numerics
