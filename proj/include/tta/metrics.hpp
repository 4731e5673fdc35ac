#pragma once

// Evaluation and diagnostics over run logs: online error, selection quality,
// ROC separation of correct versus noisy samples, decreased-confidence
// statistics and the class-by-class gradient cosine-similarity matrix.
//
// Orientation convention: every score is "higher = more likely a positive",
// and positives are correctly predicted closed-set samples. A sample is
// correct when the adapted model's online prediction c_a equals its label;
// open-set samples are never correct.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tta/adapt.hpp"

namespace tta {

inline bool is_correct(const SampleRecord& s) { return !s.open && s.c_a == s.label; }

double error_rate(std::span<const StepRecord> records, bool exclude_open);

// Error per round_id over closed-set samples; index = round.
std::vector<double> error_per_round(std::span<const StepRecord> records);

std::vector<StepRecord> records_for_round(std::span<const StepRecord> records, int round);

struct SelectionStats {
  std::optional<double> precision;  // empty when nothing was selected
  std::optional<double> recall;     // empty when nothing was correct
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t tn = 0;
};

SelectionStats selection_stats(std::span<const StepRecord> records);

enum class OodScoreKind { kMsp, kMaxLogit, kEnergy, kConfDiff };

const char* to_string(OodScoreKind kind);

// Energy is reported as +log sum exp(logits) so that higher means more
// in-distribution, like the other kinds.
double ood_score(OodScoreKind kind, const RowVector& logits, const RowVector& probs,
                 double conf_tilde, double conf_hat);
double ood_score(OodScoreKind kind, const SampleRecord& sample);

// Mann-Whitney statistic P(pos > neg) + P(pos == neg) / 2 via midranks.
double auroc(std::span<const double> scores, const std::vector<bool>& positive);

// Thresholds are the observed scores; a sample is admitted when score >= t.
// Among thresholds reaching TPR >= target the largest one is used and its FPR
// returned, so tied scores are admitted together.
double fpr_at_tpr(std::span<const double> scores, const std::vector<bool>& positive,
                  double tpr_target = 0.95);

enum class NegativesMode { kIncludeClosedWrong, kExcludeClosedWrong };

struct OodResult {
  double auroc = 0.0;
  double fpr_at_tpr95 = 0.0;
  std::size_t positives = 0;
  std::size_t negatives = 0;
};

OodResult ood_eval(std::span<const StepRecord> records, OodScoreKind kind, NegativesMode mode);

struct ConfidenceDropRound {
  int round = 0;
  std::size_t samples = 0;
  std::size_t drops = 0;                 // conf_hat < conf_tilde
  std::optional<double> wrong_fraction;  // among drops, c_o != label
};

std::vector<ConfidenceDropRound> confidence_drop_stats(std::span<const StepRecord> records);

struct GradSimMatrix {
  // s(j, i): truth j, prediction i. NaN marks cells without any pair.
  Matrix s;
  Eigen::MatrixXi counts;
  std::size_t zero_norm_excluded = 0;

  bool defined(int j, int i) const { return counts(j, i) > 0; }
  std::optional<double> diagonal_mean() const;
  std::optional<double> off_diagonal_mean() const;
};

// Average cosine similarity between gradients of samples (truth j, pred i)
// and correct samples of class i, excluding self-pairs on the diagonal.
// Labels outside [0, num_classes) (open-set) are ignored.
GradSimMatrix grad_cos_sim(const std::vector<Vector>& grads, const std::vector<int>& truth,
                           const std::vector<int>& predicted, int num_classes);

// Average-rank Spearman correlation; empty when either side is constant.
std::optional<double> spearman(std::span<const double> x, std::span<const double> y);

double mean(std::span<const double> values);
double stddev(std::span<const double> values);  // population

}  // namespace tta
