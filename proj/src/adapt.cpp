#include "tta/adapt.hpp"

#include <cmath>
#include <sstream>

#include "tta/error.hpp"

namespace tta {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

double log_sum_exp(const Matrix& logits, Eigen::Index row) {
  const double m = logits.row(row).maxCoeff();
  return m + std::log((logits.row(row).array() - m).exp().sum());
}

// Pull a per-row gradient on probabilities back through the softmax.
Matrix softmax_backward(const Matrix& probs, const Matrix& grad_probs) {
  const Vector inner = (probs.array() * grad_probs.array()).rowwise().sum();
  Matrix centered = grad_probs;
  centered.colwise() -= inner;
  return probs.array() * centered.array();
}

std::size_t count_selected(const Mask& mask) {
  std::size_t n = 0;
  for (bool m : mask) n += m;
  return n;
}

}  // namespace

ModelPair::ModelPair(SmallClassifier original)
    : original_(std::move(original)), adapted_(original_) {
  original_.validate();
  original_.set_stats_mode(StatsMode::kTestBatchStats);
  adapted_.set_stats_mode(StatsMode::kTestBatchStats);
}

EntropyThreshold EntropyThreshold::eata_default(int num_classes) {
  return EntropyThreshold{0.4 * std::log(static_cast<double>(num_classes))};
}

void validate(const SelectionStrategy& strategy) {
  std::visit(Overloaded{
                 [](const SelectAll&) {},
                 [](const ConfidenceThreshold& s) {
                   require(s.p > 0.0 && s.p < 1.0, ErrorCode::kInvalidArgument,
                           "confidence threshold must lie in (0, 1)");
                 },
                 [](const EntropyThreshold& s) {
                   require(s.e0 > 0.0 && std::isfinite(s.e0), ErrorCode::kInvalidArgument,
                           "entropy threshold must be positive");
                 },
                 [](const ConfidenceDifference& s) {
                   require(std::isfinite(s.margin), ErrorCode::kInvalidArgument,
                           "confidence-difference margin must be finite");
                 },
             },
             strategy);
}

std::string describe(const SelectionStrategy& strategy) {
  std::ostringstream out;
  std::visit(Overloaded{
                 [&](const SelectAll&) { out << "all"; },
                 [&](const ConfidenceThreshold& s) { out << "confidence_threshold(p=" << s.p << ")"; },
                 [&](const EntropyThreshold& s) { out << "entropy_threshold(e0=" << s.e0 << ")"; },
                 [&](const ConfidenceDifference& s) {
                   out << "confidence_difference(margin=" << s.margin << ", "
                       << (s.score_space == ScoreSpace::kSoftmax ? "softmax" : "logit") << ")";
                 },
             },
             strategy);
  return out.str();
}

void AdaptationConfig::validate() const {
  tta::validate(strategy);
  require(lambda_max >= 0.0 && std::isfinite(lambda_max), ErrorCode::kInvalidArgument,
          "lambda_max must be >= 0");
  require(learning_rate >= 0.0 && std::isfinite(learning_rate), ErrorCode::kInvalidArgument,
          "learning_rate must be >= 0");
  require(batch_size >= 1, ErrorCode::kInvalidArgument, "batch_size must be positive");
  if (const auto* gce = std::get_if<Gce>(&loss_kind))
    require(gce->q > 0.0 && gce->q <= 1.0, ErrorCode::kInvalidArgument, "GCE q must lie in (0, 1]");
  if (const auto* adam = std::get_if<Adam>(&optimizer))
    require(adam->beta1 >= 0.0 && adam->beta1 < 1.0 && adam->beta2 >= 0.0 && adam->beta2 < 1.0 &&
                adam->eps > 0.0,
            ErrorCode::kInvalidArgument, "invalid Adam hyperparameters");
}

bool selects(const SelectionStrategy& strategy, const SampleScores& s) {
  return std::visit(Overloaded{
                        [](const SelectAll&) { return true; },
                        [&](const ConfidenceThreshold& t) { return s.max_prob_hat >= t.p; },
                        [&](const EntropyThreshold& t) { return s.entropy_hat < t.e0; },
                        [&](const ConfidenceDifference& t) {
                          const double diff = t.score_space == ScoreSpace::kSoftmax
                                                  ? s.conf_hat - s.conf_tilde
                                                  : s.logit_hat - s.logit_tilde;
                          return diff >= t.margin;
                        },
                    },
                    strategy);
}

SampleScores PairPrediction::scores(std::size_t i) const {
  const auto r = static_cast<Eigen::Index>(i);
  const int c = c_o[i];
  SampleScores s;
  s.conf_tilde = y_tilde(r, c);
  s.conf_hat = y_hat(r, c);
  s.logit_tilde = logits_tilde(r, c);
  s.logit_hat = logits_hat(r, c);
  s.max_prob_hat = y_hat.row(r).maxCoeff();
  s.entropy_hat = entropy_row(y_hat, r);
  return s;
}

PairPrediction predict_pair(const ModelPair& pair, const Matrix& features) {
  PairPrediction p;
  auto original = forward(pair.original(), features);
  auto adapted = forward(pair.adapted(), features);
  p.logits_tilde = std::move(original.logits);
  p.logits_hat = std::move(adapted.logits);
  p.adapted_trace = std::move(adapted.trace);
  p.y_tilde = softmax(p.logits_tilde);
  p.y_hat = softmax(p.logits_hat);
  p.c_o = argmax_rows(p.y_tilde);
  p.c_a = argmax_rows(p.y_hat);
  return p;
}

Mask select(const SelectionStrategy& strategy, const PairPrediction& prediction) {
  Mask mask(prediction.size());
  for (std::size_t i = 0; i < prediction.size(); ++i) mask[i] = selects(strategy, prediction.scores(i));
  return mask;
}

double tta_loss(const Matrix& y_hat, const Mask& mask, double lambda_max) {
  require(mask.size() == static_cast<std::size_t>(y_hat.rows()), ErrorCode::kDimensionMismatch,
          "mask length does not match batch");
  require(y_hat.rows() >= 1, ErrorCode::kInvalidArgument, "loss of an empty batch");
  double selected_entropy = 0.0;
  const std::size_t count = count_selected(mask);
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) selected_entropy += entropy_row(y_hat, static_cast<Eigen::Index>(i));
  if (count > 0) selected_entropy /= static_cast<double>(count);
  const Matrix mean = y_hat.colwise().mean();
  return selected_entropy - lambda_max * entropy_row(mean, 0);
}

Matrix tta_loss_grad_logits(const Matrix& y_hat, const Mask& mask, double lambda_max) {
  require(mask.size() == static_cast<std::size_t>(y_hat.rows()), ErrorCode::kDimensionMismatch,
          "mask length does not match batch");
  const auto n = static_cast<double>(y_hat.rows());
  const std::size_t count = count_selected(mask);
  Matrix grad = Matrix::Zero(y_hat.rows(), y_hat.cols());
  if (count > 0) {
    const Matrix per_row = entropy_grad_logits(y_hat);
    for (std::size_t i = 0; i < mask.size(); ++i)
      if (mask[i]) grad.row(static_cast<Eigen::Index>(i)) = per_row.row(static_cast<Eigen::Index>(i)) / static_cast<double>(count);
  }
  if (lambda_max != 0.0) {
    // dH(mean)/dmean = -(log mean + 1); the constant vanishes through softmax.
    const RowVector mean = y_hat.colwise().mean();
    const RowVector g = -mean.array().max(kLogClamp).log();
    Matrix grad_probs(y_hat.rows(), y_hat.cols());
    grad_probs.rowwise() = g * (-lambda_max / n);
    grad += softmax_backward(y_hat, grad_probs);
  }
  return grad;
}

double gce_loss(const Matrix& y_hat, const std::vector<int>& c_o, const Mask& mask, double q) {
  require(q > 0.0 && q <= 1.0, ErrorCode::kInvalidArgument, "GCE q must lie in (0, 1]");
  require(mask.size() == c_o.size() && c_o.size() == static_cast<std::size_t>(y_hat.rows()),
          ErrorCode::kDimensionMismatch, "GCE inputs disagree in length");
  const std::size_t count = count_selected(mask);
  if (count == 0) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) total += (1.0 - std::pow(y_hat(static_cast<Eigen::Index>(i), c_o[i]), q)) / q;
  return total / static_cast<double>(count);
}

Matrix gce_loss_grad_logits(const Matrix& y_hat, const std::vector<int>& c_o, const Mask& mask,
                            double q) {
  require(mask.size() == c_o.size() && c_o.size() == static_cast<std::size_t>(y_hat.rows()),
          ErrorCode::kDimensionMismatch, "GCE inputs disagree in length");
  const std::size_t count = count_selected(mask);
  Matrix grad_probs = Matrix::Zero(y_hat.rows(), y_hat.cols());
  if (count == 0) return grad_probs;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    const auto r = static_cast<Eigen::Index>(i);
    grad_probs(r, c_o[i]) = -std::pow(y_hat(r, c_o[i]), q - 1.0) / static_cast<double>(count);
  }
  return softmax_backward(y_hat, grad_probs);
}

AdaptState::AdaptState(const ModelPair& pair, const AdaptationConfig& config)
    : optimizer(config.optimizer, static_cast<Eigen::Index>(pair.adapted().param_count(config.scope))) {}

StepRecord tta_step(ModelPair& pair, AdaptState& state, const AdaptationConfig& config,
                    const LabeledBatch& batch) {
  const int num_classes = pair.adapted().num_classes();
  batch.validate(num_classes);
  require(batch.size() >= 2, ErrorCode::kInvalidArgument, "adaptation step needs at least two samples");

  const PairPrediction pred = predict_pair(pair, batch.features);
  const Mask mask = select(config.strategy, pred);

  StepRecord rec;
  rec.domain_id = batch.domain_id;
  rec.round_id = batch.round_id;
  rec.samples.resize(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    auto& s = rec.samples[i];
    const auto r = static_cast<Eigen::Index>(i);
    s.label = batch.labels[i];
    s.open = batch.open_flags[i];
    s.c_o = pred.c_o[i];
    s.c_a = pred.c_a[i];
    s.selected = mask[i];
    s.scores = pred.scores(i);
    s.max_logit_hat = pred.logits_hat.row(r).maxCoeff();
    s.energy_hat = log_sum_exp(pred.logits_hat, r);
    rec.num_selected += mask[i];
  }

  Matrix grad_logits;
  if (const auto* gce = std::get_if<Gce>(&config.loss_kind)) {
    rec.loss = gce_loss(pred.y_hat, pred.c_o, mask, gce->q);
    grad_logits = gce_loss_grad_logits(pred.y_hat, pred.c_o, mask, gce->q);
  } else {
    rec.loss = tta_loss(pred.y_hat, mask, config.lambda_max);
    grad_logits = tta_loss_grad_logits(pred.y_hat, mask, config.lambda_max);
  }
  require(std::isfinite(rec.loss), ErrorCode::kNumerical, "non-finite adaptation loss");
  if (rec.num_selected == 0) return rec;

  auto& model = pair.adapted();
  auto gs = backward(model, pred.adapted_trace, grad_logits, config.scope);
  const Vector grad = gs.flatten();
  const Vector before = model.flat_params(config.scope);
  const Vector after = state.optimizer.step(before, grad, config.learning_rate);
  require(after.allFinite(), ErrorCode::kNumerical, "optimizer produced non-finite parameters");
  rec.update_norm = (after - before).norm();
  model.set_flat_params(config.scope, after);
  rec.updated = true;
  return rec;
}

RunLog run_scenario(ModelPair& pair, const AdaptationConfig& config, const BatchSource& stream,
                    const StepObserver& observer) {
  config.validate();
  AdaptState state(pair, config);
  RunLog log;
  for (std::size_t i = 0; i < stream.size(); ++i) {
    try {
      const LabeledBatch batch = stream.at(i);
      StepRecord rec;
      if (batch.size() < 2) {
        rec.domain_id = batch.domain_id;
        rec.round_id = batch.round_id;
        rec.skipped = true;
      } else {
        rec = tta_step(pair, state, config, batch);
      }
      rec.step = i;
      if (observer) observer(rec, pair);
      log.steps.push_back(std::move(rec));
    } catch (const Error& e) {
      log.aborted = true;
      log.failed_step = i;
      log.error = e.what();
      break;
    }
  }
  return log;
}

}  // namespace tta
