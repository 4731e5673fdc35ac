#include "tta/optim.hpp"

#include <cmath>

#include "tta/error.hpp"

namespace tta {

Optimizer::Optimizer(OptimizerKind kind, Eigen::Index size)
    : kind_(kind), m_(Vector::Zero(size)), v_(Vector::Zero(size)) {}

Vector Optimizer::step(const Vector& params, const Vector& grad, double learning_rate) {
  require(params.size() == m_.size() && grad.size() == m_.size(), ErrorCode::kDimensionMismatch,
          "optimizer state size does not match parameters");
  ++t_;
  if (std::holds_alternative<Sgd>(kind_)) return params - learning_rate * grad;

  const auto& adam = std::get<Adam>(kind_);
  m_ = adam.beta1 * m_ + (1.0 - adam.beta1) * grad;
  v_ = adam.beta2 * v_ + (1.0 - adam.beta2) * grad.cwiseProduct(grad);
  const double bc1 = 1.0 - std::pow(adam.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(adam.beta2, static_cast<double>(t_));
  const Vector m_hat = m_ / bc1;
  const Vector v_hat = v_ / bc2;
  return params.array() - learning_rate * m_hat.array() / (v_hat.array().sqrt() + adam.eps);
}

}  // namespace tta
