#include "tta/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "tta/error.hpp"

namespace tta {

namespace {

void check_binary(std::span<const double> scores, const std::vector<bool>& positive,
                  std::size_t& n_pos, std::size_t& n_neg) {
  require(scores.size() == positive.size(), ErrorCode::kDimensionMismatch,
          "scores and labels differ in length");
  n_pos = static_cast<std::size_t>(std::count(positive.begin(), positive.end(), true));
  n_neg = positive.size() - n_pos;
  require(n_pos > 0 && n_neg > 0, ErrorCode::kInvalidArgument,
          "separation metrics need at least one positive and one negative");
  for (double s : scores) require(std::isfinite(s), ErrorCode::kNumerical, "non-finite score");
}

// 1-based average ranks with ties sharing their midrank.
std::vector<double> midranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i + 1;
    while (j < order.size() && values[order[j]] == values[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = rank;
    i = j;
  }
  return ranks;
}

}  // namespace

double error_rate(std::span<const StepRecord> records, bool exclude_open) {
  std::size_t total = 0;
  std::size_t wrong = 0;
  for (const auto& step : records) {
    for (const auto& s : step.samples) {
      if (exclude_open && s.open) continue;
      ++total;
      wrong += s.open || s.c_a != s.label;
    }
  }
  require(total > 0, ErrorCode::kInvalidArgument, "error rate over an empty record set");
  return static_cast<double>(wrong) / static_cast<double>(total);
}

std::vector<double> error_per_round(std::span<const StepRecord> records) {
  std::map<int, std::pair<std::size_t, std::size_t>> per_round;  // round -> (wrong, total)
  for (const auto& step : records) {
    for (const auto& s : step.samples) {
      if (s.open) continue;
      auto& [wrong, total] = per_round[step.round_id];
      ++total;
      wrong += s.c_a != s.label;
    }
  }
  std::vector<double> out;
  if (per_round.empty()) return out;
  out.assign(static_cast<std::size_t>(per_round.rbegin()->first + 1),
             std::numeric_limits<double>::quiet_NaN());
  for (const auto& [round, wt] : per_round)
    out[static_cast<std::size_t>(round)] = static_cast<double>(wt.first) / static_cast<double>(wt.second);
  return out;
}

std::vector<StepRecord> records_for_round(std::span<const StepRecord> records, int round) {
  std::vector<StepRecord> out;
  for (const auto& step : records)
    if (step.round_id == round) out.push_back(step);
  return out;
}

SelectionStats selection_stats(std::span<const StepRecord> records) {
  SelectionStats st;
  for (const auto& step : records) {
    for (const auto& s : step.samples) {
      const bool relevant = is_correct(s);
      if (s.selected && relevant) ++st.tp;
      else if (s.selected) ++st.fp;
      else if (relevant) ++st.fn;
      else ++st.tn;
    }
  }
  if (st.tp + st.fp > 0) st.precision = static_cast<double>(st.tp) / static_cast<double>(st.tp + st.fp);
  if (st.tp + st.fn > 0) st.recall = static_cast<double>(st.tp) / static_cast<double>(st.tp + st.fn);
  return st;
}

const char* to_string(OodScoreKind kind) {
  switch (kind) {
    case OodScoreKind::kMsp: return "msp";
    case OodScoreKind::kMaxLogit: return "max_logit";
    case OodScoreKind::kEnergy: return "energy";
    case OodScoreKind::kConfDiff: return "conf_diff";
  }
  return "?";
}

double ood_score(OodScoreKind kind, const RowVector& logits, const RowVector& probs,
                 double conf_tilde, double conf_hat) {
  switch (kind) {
    case OodScoreKind::kMsp: return probs.maxCoeff();
    case OodScoreKind::kMaxLogit: return logits.maxCoeff();
    case OodScoreKind::kEnergy: {
      const double m = logits.maxCoeff();
      return m + std::log((logits.array() - m).exp().sum());
    }
    case OodScoreKind::kConfDiff: return conf_hat - conf_tilde;
  }
  return 0.0;
}

double ood_score(OodScoreKind kind, const SampleRecord& s) {
  switch (kind) {
    case OodScoreKind::kMsp: return s.scores.max_prob_hat;
    case OodScoreKind::kMaxLogit: return s.max_logit_hat;
    case OodScoreKind::kEnergy: return s.energy_hat;
    case OodScoreKind::kConfDiff: return s.scores.conf_hat - s.scores.conf_tilde;
  }
  return 0.0;
}

double auroc(std::span<const double> scores, const std::vector<bool>& positive) {
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
  check_binary(scores, positive, n_pos, n_neg);
  const auto ranks = midranks(scores);
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < ranks.size(); ++i)
    if (positive[i]) rank_sum += ranks[i];
  const double p = static_cast<double>(n_pos);
  const double u = rank_sum - p * (p + 1.0) / 2.0;
  return u / (p * static_cast<double>(n_neg));
}

double fpr_at_tpr(std::span<const double> scores, const std::vector<bool>& positive, double tpr_target) {
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
  check_binary(scores, positive, n_pos, n_neg);
  require(tpr_target > 0.0 && tpr_target <= 1.0, ErrorCode::kInvalidArgument,
          "TPR target must lie in (0, 1]");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    // Admit the whole tie group at this threshold.
    const double t = scores[order[i]];
    while (i < order.size() && scores[order[i]] == t) {
      positive[order[i]] ? ++tp : ++fp;
      ++i;
    }
    if (static_cast<double>(tp) / static_cast<double>(n_pos) >= tpr_target)
      return static_cast<double>(fp) / static_cast<double>(n_neg);
  }
  return 1.0;
}

OodResult ood_eval(std::span<const StepRecord> records, OodScoreKind kind, NegativesMode mode) {
  std::vector<double> scores;
  std::vector<bool> positive;
  for (const auto& step : records) {
    for (const auto& s : step.samples) {
      const bool correct = is_correct(s);
      if (!correct && !s.open && mode == NegativesMode::kExcludeClosedWrong) continue;
      scores.push_back(ood_score(kind, s));
      positive.push_back(correct);
    }
  }
  OodResult r;
  r.positives = static_cast<std::size_t>(std::count(positive.begin(), positive.end(), true));
  r.negatives = positive.size() - r.positives;
  r.auroc = auroc(scores, positive);
  r.fpr_at_tpr95 = fpr_at_tpr(scores, positive, 0.95);
  return r;
}

std::vector<ConfidenceDropRound> confidence_drop_stats(std::span<const StepRecord> records) {
  std::map<int, ConfidenceDropRound> rounds;
  std::map<int, std::size_t> wrong;
  for (const auto& step : records) {
    auto& r = rounds[step.round_id];
    r.round = step.round_id;
    for (const auto& s : step.samples) {
      ++r.samples;
      if (s.scores.conf_hat < s.scores.conf_tilde) {
        ++r.drops;
        wrong[step.round_id] += s.open || s.c_o != s.label;
      }
    }
  }
  std::vector<ConfidenceDropRound> out;
  for (auto& [round, r] : rounds) {
    if (r.drops > 0) r.wrong_fraction = static_cast<double>(wrong[round]) / static_cast<double>(r.drops);
    out.push_back(r);
  }
  return out;
}

std::optional<double> GradSimMatrix::diagonal_mean() const {
  double sum = 0.0;
  int n = 0;
  for (Eigen::Index k = 0; k < s.rows(); ++k)
    if (counts(k, k) > 0) {
      sum += s(k, k);
      ++n;
    }
  if (n == 0) return std::nullopt;
  return sum / n;
}

std::optional<double> GradSimMatrix::off_diagonal_mean() const {
  double sum = 0.0;
  int n = 0;
  for (Eigen::Index j = 0; j < s.rows(); ++j)
    for (Eigen::Index i = 0; i < s.cols(); ++i)
      if (i != j && counts(j, i) > 0) {
        sum += s(j, i);
        ++n;
      }
  if (n == 0) return std::nullopt;
  return sum / n;
}

GradSimMatrix grad_cos_sim(const std::vector<Vector>& grads, const std::vector<int>& truth,
                           const std::vector<int>& predicted, int num_classes) {
  require(grads.size() == truth.size() && truth.size() == predicted.size(),
          ErrorCode::kDimensionMismatch, "gradient and label lists differ in length");
  require(num_classes >= 1, ErrorCode::kInvalidArgument, "num_classes must be positive");
  const Eigen::Index dim = grads.empty() ? 0 : grads.front().size();
  GradSimMatrix out;
  out.s = Matrix::Constant(num_classes, num_classes, std::numeric_limits<double>::quiet_NaN());
  out.counts = Eigen::MatrixXi::Zero(num_classes, num_classes);

  // groups[j][i]: unit gradients of samples with truth j and prediction i.
  std::vector<std::vector<std::vector<Vector>>> groups(
      static_cast<std::size_t>(num_classes), std::vector<std::vector<Vector>>(static_cast<std::size_t>(num_classes)));
  for (std::size_t k = 0; k < grads.size(); ++k) {
    require(grads[k].size() == dim, ErrorCode::kDimensionMismatch, "gradient vectors differ in length");
    require(predicted[k] >= 0 && predicted[k] < num_classes, ErrorCode::kInvalidArgument,
            "predicted label out of range");
    if (truth[k] < 0 || truth[k] >= num_classes) continue;
    const double norm = grads[k].norm();
    if (!(norm > 0.0) || !std::isfinite(norm)) {
      ++out.zero_norm_excluded;
      continue;
    }
    groups[static_cast<std::size_t>(truth[k])][static_cast<std::size_t>(predicted[k])].push_back(grads[k] / norm);
  }

  for (int i = 0; i < num_classes; ++i) {
    const auto& correct = groups[static_cast<std::size_t>(i)][static_cast<std::size_t>(i)];
    if (correct.empty()) continue;
    Matrix anchor(static_cast<Eigen::Index>(correct.size()), dim);
    for (std::size_t l = 0; l < correct.size(); ++l) anchor.row(static_cast<Eigen::Index>(l)) = correct[l].transpose();
    for (int j = 0; j < num_classes; ++j) {
      const auto& group = groups[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)];
      double sum = 0.0;
      long pairs = 0;
      for (std::size_t k = 0; k < group.size(); ++k) {
        const Vector sims = anchor * group[k];
        for (Eigen::Index l = 0; l < sims.size(); ++l) {
          if (j == i && static_cast<std::size_t>(l) == k) continue;
          sum += sims(l);
          ++pairs;
        }
      }
      if (pairs > 0) {
        out.s(j, i) = std::clamp(sum / static_cast<double>(pairs), -1.0, 1.0);
        out.counts(j, i) = static_cast<int>(pairs);
      }
    }
  }
  return out;
}

std::optional<double> spearman(std::span<const double> x, std::span<const double> y) {
  require(x.size() == y.size(), ErrorCode::kDimensionMismatch, "spearman inputs differ in length");
  if (x.size() < 2) return std::nullopt;
  const auto rx = midranks(x);
  const auto ry = midranks(y);
  const double mx = mean(rx);
  const double my = mean(ry);
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return sxy / std::sqrt(sxx * syy);
}

double mean(std::span<const double> values) {
  require(!values.empty(), ErrorCode::kInvalidArgument, "mean of an empty set");
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

double stddev(std::span<const double> values) {
  const double m = mean(values);
  double acc = 0.0;
  for (double v : values) acc += (v - m) * (v - m);
  return std::sqrt(acc / static_cast<double>(values.size()));
}

}  // namespace tta
