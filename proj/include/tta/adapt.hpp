#pragma once

// Test-time adaptation loop: paired inference through the frozen source model
// and the adapted model, sample selection, the selected-entropy objective with
// the mean-prediction diversity term, and multi-round scenario execution.

#include <functional>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "tta/nn.hpp"
#include "tta/optim.hpp"
#include "tta/streams.hpp"

namespace tta {

// Owns the frozen original model and the adapted copy. The original is only
// reachable through a const reference, and both run with batch statistics.
class ModelPair {
 public:
  explicit ModelPair(SmallClassifier original);

  const SmallClassifier& original() const { return original_; }
  const SmallClassifier& adapted() const { return adapted_; }
  SmallClassifier& adapted() { return adapted_; }

 private:
  SmallClassifier original_;
  SmallClassifier adapted_;
};

struct SelectAll {};

struct ConfidenceThreshold {
  double p = 0.9;
};

struct EntropyThreshold {
  double e0 = 0.0;
  static EntropyThreshold eata_default(int num_classes);  // 0.4 ln C
};

enum class ScoreSpace { kSoftmax, kLogit };

struct ConfidenceDifference {
  double margin = 0.0;
  ScoreSpace score_space = ScoreSpace::kSoftmax;
};

using SelectionStrategy =
    std::variant<SelectAll, ConfidenceThreshold, EntropyThreshold, ConfidenceDifference>;

void validate(const SelectionStrategy& strategy);
std::string describe(const SelectionStrategy& strategy);

struct SelectedEntropy {};
struct Gce {
  double q = 0.8;
};
using LossKind = std::variant<SelectedEntropy, Gce>;

struct AdaptationConfig {
  SelectionStrategy strategy = ConfidenceDifference{};
  ParamScope scope = ParamScope::kAffineOnly;
  double lambda_max = 0.5;
  double learning_rate = 1e-3;
  OptimizerKind optimizer = Adam{};
  int batch_size = 200;
  LossKind loss_kind = SelectedEntropy{};
  std::uint64_t seed = 0;

  void validate() const;
};

// Per-sample quantities a strategy needs to decide, all measured on the
// original prediction c_o except where noted.
struct SampleScores {
  double conf_tilde = 0.0;    // original model, softmax at c_o
  double conf_hat = 0.0;      // adapted model, softmax at c_o
  double logit_tilde = 0.0;   // original model, logit at c_o
  double logit_hat = 0.0;     // adapted model, logit at c_o
  double max_prob_hat = 0.0;  // adapted model, max softmax
  double entropy_hat = 0.0;   // adapted model, entropy
};

bool selects(const SelectionStrategy& strategy, const SampleScores& scores);

struct PairPrediction {
  Matrix y_tilde;
  Matrix y_hat;
  Matrix logits_tilde;
  Matrix logits_hat;
  std::vector<int> c_o;
  std::vector<int> c_a;
  ForwardTrace adapted_trace;

  std::size_t size() const { return c_o.size(); }
  SampleScores scores(std::size_t i) const;
};

PairPrediction predict_pair(const ModelPair& pair, const Matrix& features);

using Mask = std::vector<bool>;

Mask select(const SelectionStrategy& strategy, const PairPrediction& prediction);

// Mean entropy over selected rows (0 when none is selected) minus
// lambda_max * H(mean over all rows).
double tta_loss(const Matrix& y_hat, const Mask& mask, double lambda_max);
Matrix tta_loss_grad_logits(const Matrix& y_hat, const Mask& mask, double lambda_max);

// Mean over selected rows of (1 - y_hat[c_o]^q) / q; 0 when none is selected.
double gce_loss(const Matrix& y_hat, const std::vector<int>& c_o, const Mask& mask, double q);
Matrix gce_loss_grad_logits(const Matrix& y_hat, const std::vector<int>& c_o, const Mask& mask,
                            double q);

struct SampleRecord {
  int label = 0;
  bool open = false;
  int c_o = 0;
  int c_a = 0;
  bool selected = false;
  SampleScores scores;
  double max_logit_hat = 0.0;
  double energy_hat = 0.0;  // log-sum-exp of adapted logits
};

struct StepRecord {
  std::size_t step = 0;
  int domain_id = 0;
  int round_id = 0;
  bool skipped = false;  // batch too small for batch statistics
  std::vector<SampleRecord> samples;
  double loss = 0.0;
  int num_selected = 0;
  bool updated = false;
  double update_norm = 0.0;
};

struct RunLog {
  std::vector<StepRecord> steps;
  bool aborted = false;
  std::size_t failed_step = 0;  // stream index of the failing batch when aborted
  std::string error;
};

struct AdaptState {
  AdaptState(const ModelPair& pair, const AdaptationConfig& config);
  Optimizer optimizer;
};

// One online step: record pre-update predictions, select, and apply one
// optimizer update to the in-scope parameters of the adapted model. Batches
// with nothing selected leave the model untouched. A non-finite loss throws
// before any parameter changes.
StepRecord tta_step(ModelPair& pair, AdaptState& state, const AdaptationConfig& config,
                    const LabeledBatch& batch);

using StepObserver = std::function<void(const StepRecord&, const ModelPair&)>;

// Runs every batch in order without ever resetting the adapted model. Batches
// with fewer than two samples are logged as skipped. A failing step aborts the
// run; the partial log is returned with `aborted` set.
RunLog run_scenario(ModelPair& pair, const AdaptationConfig& config, const BatchSource& stream,
                    const StepObserver& observer = {});

}  // namespace tta
