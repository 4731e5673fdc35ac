#pragma once

#include <variant>

#include "tta/nn.hpp"

namespace tta {

struct Sgd {};

struct Adam {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

using OptimizerKind = std::variant<Sgd, Adam>;

// First/second moment state over a flat parameter vector.
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, Eigen::Index size);

  // Returns the updated parameters; state only advances when called.
  Vector step(const Vector& params, const Vector& grad, double learning_rate);

  const OptimizerKind& kind() const { return kind_; }
  long steps_taken() const { return t_; }

 private:
  OptimizerKind kind_;
  Vector m_;
  Vector v_;
  long t_ = 0;
};

}  // namespace tta
