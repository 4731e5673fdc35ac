#pragma once

// Feed-forward classifier with batch normalization after every linear layer,
// together with exact reverse-mode gradients for the parameter subsets used
// during test-time adaptation.

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace tta {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

enum class Activation : std::uint8_t { kIdentity = 0, kReLU = 1 };

// SourceStats normalizes with the stored running statistics; TestBatchStats
// normalizes with the statistics of the batch being evaluated and treats them
// as functions of the input when differentiating.
enum class StatsMode { kSourceStats, kTestBatchStats };

// AffineOnly touches the batch-norm scale/shift of every layer; AllParams
// additionally covers linear weights and biases. Running statistics are never
// parameters.
enum class ParamScope { kAffineOnly, kAllParams };

const char* to_string(ParamScope scope);

struct BatchNormState {
  Vector running_mean;
  Vector running_var;
  Vector gamma;
  Vector beta;
  double eps = 1e-5;
  StatsMode stats_mode = StatsMode::kSourceStats;
};

struct LayerBlock {
  Matrix weight;  // out_dim x in_dim
  Vector bias;
  BatchNormState bn;
  Activation activation = Activation::kReLU;

  int in_dim() const { return static_cast<int>(weight.cols()); }
  int out_dim() const { return static_cast<int>(weight.rows()); }
};

class SmallClassifier {
 public:
  SmallClassifier() = default;
  explicit SmallClassifier(std::vector<LayerBlock> layers);

  // He-initialized weights, zero biases, unit gamma, zero beta, running
  // statistics (0, 1). `dims` is {input_dim, hidden..., num_classes}.
  static SmallClassifier random(std::span<const int> dims, std::uint64_t seed);

  int input_dim() const;
  int num_classes() const;
  std::size_t num_layers() const { return layers_.size(); }
  const std::vector<LayerBlock>& layers() const { return layers_; }
  LayerBlock& layer(std::size_t k) { return layers_.at(k); }
  const LayerBlock& layer(std::size_t k) const { return layers_.at(k); }

  void set_stats_mode(StatsMode mode);
  bool uses_batch_stats() const;

  // Throws on broken dimension chains, non-finite values, or non-positive
  // running variances.
  void validate() const;
  bool same_architecture(const SmallClassifier& other) const;

  // Flattening order, per layer in sequence:
  //   AllParams:  weight (row-major), bias, gamma, beta
  //   AffineOnly: gamma, beta
  std::size_t param_count(ParamScope scope) const;
  Vector flat_params(ParamScope scope) const;
  void set_flat_params(ParamScope scope, const Vector& flat);

  // FNV-1a over the bytes of every stored array (parameters and running
  // statistics), used to assert that a model was not modified.
  std::uint64_t content_hash() const;

 private:
  std::vector<LayerBlock> layers_;
};

struct LayerCache {
  Matrix input;       // n x in
  Matrix normalized;  // n x out, after mean/variance standardization
  Matrix affine;      // n x out, gamma * normalized + beta (pre-activation)
  Vector inv_std;     // out
  Vector batch_mean;  // out, only under TestBatchStats
  Vector batch_var;   // out, biased, only under TestBatchStats
  StatsMode mode = StatsMode::kSourceStats;
};

struct ForwardTrace {
  std::vector<LayerCache> layers;
  Eigen::Index batch_size = 0;
};

struct ForwardResult {
  Matrix logits;
  ForwardTrace trace;
};

ForwardResult forward(const SmallClassifier& model, const Matrix& features);

struct LayerGradient {
  Matrix weight;  // empty under AffineOnly
  Vector bias;    // empty under AffineOnly
  Vector gamma;
  Vector beta;
};

struct GradientSet {
  ParamScope scope = ParamScope::kAffineOnly;
  std::vector<LayerGradient> layers;

  // Same ordering as SmallClassifier::flat_params.
  Vector flatten() const;
};

// Gradients of a scalar loss with respect to the in-scope parameters, given
// dLoss/dLogits. Batch statistics are differentiated through when the trace
// was recorded under TestBatchStats.
GradientSet backward(const SmallClassifier& model, const ForwardTrace& trace,
                     const Matrix& upstream, ParamScope scope);

// Row-wise, max-subtracted.
Matrix softmax(const Matrix& logits);

// Shannon entropy -sum p log p with 0 log 0 = 0 and log arguments clamped at
// 1e-12. Rejects negative entries and rows whose sum is off by more than 1e-6.
double entropy(std::span<const double> probs);
double entropy_row(const Matrix& probs, Eigen::Index row);

inline constexpr double kLogClamp = 1e-12;

// Row i holds dH(p_i)/dlogits_i for p = softmax(logits).
Matrix entropy_grad_logits(const Matrix& probs);

// Backpropagates each sample's own entropy H(softmax(f(x_i))) separately.
// The batch statistics of the full batch stay in the graph, so every sample's
// gradient also flows through the other rows' contribution to the mean and
// variance. Vector layout follows SmallClassifier::flat_params.
std::vector<Vector> per_sample_gradients(const SmallClassifier& model, const Matrix& features,
                                         ParamScope scope);

std::vector<int> argmax_rows(const Matrix& m);

}  // namespace tta
