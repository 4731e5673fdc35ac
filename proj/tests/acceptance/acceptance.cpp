// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "tta/harness.hpp"
#include "tta/metrics.hpp"

using namespace tta;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

struct Outcome {
  int id;
  std::string name;
  bool pass;
  std::string detail;
};

std::vector<Outcome> outcomes;

void report(int id, const std::string& name, bool pass, const std::string& detail) {
  outcomes.push_back({id, name, pass, detail});
  std::printf("%s %d %s: %s\n", pass ? "PASS" : "FAIL", id, name.c_str(), detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// ---------------------------------------------------------------------------
// 1: analytic gradients of the adaptation loss against central differences.

void criterion_gradients() {
  const auto start = Clock::now();
  std::mt19937_64 rng(20240601);
  int instances = 0;
  int resampled = 0;
  int checks = 0;
  double worst = 0;
  std::pair<double, double> worst_pair{0, 0};
  double worst_fine = 0;
  std::uint64_t seed = 0;
  while (instances < 100) {
    ++seed;
    std::vector<int> dims{3 + static_cast<int>(rng() % 4)};
    const int hidden_layers = 1 + static_cast<int>(rng() % 2);
    for (int h = 0; h < hidden_layers; ++h) dims.push_back(3 + static_cast<int>(rng() % 5));
    dims.push_back(2 + static_cast<int>(rng() % 4));
    auto model = oracle::random_model(dims, seed);
    model.set_stats_mode(StatsMode::kTestBatchStats);
    const Eigen::Index n = 8 + static_cast<Eigen::Index>(rng() % 9);
    const Matrix x = oracle::random_matrix(n, dims[0], rng, 1.5);
    Mask mask(static_cast<std::size_t>(n));
    for (auto&& m : mask) m = rng() % 3 != 0;
    const double lambda = 0.5;

    const auto fwd = forward(model, x);
    const Matrix upstream = tta_loss_grad_logits(softmax(fwd.logits), mask, lambda);
    const auto loss = [&](const SmallClassifier& m) { return oracle::tta_loss(oracle::forward(m, x), mask, lambda); };

    std::vector<oracle::FdResult> results;
    double fine = 0;
    bool kink = false;
    for (auto scope : {ParamScope::kAffineOnly, ParamScope::kAllParams}) {
      const Vector g = backward(model, fwd.trace, upstream, scope).flatten();
      results.push_back(oracle::check_gradient(model, x, scope, g, loss, 1e-4));
      kink = kink || results.back().kink;
      // Diagnostic only: a finer step separates truncation error from gradient error.
      fine = std::max(fine, oracle::check_gradient(model, x, scope, g, loss, 1e-5).max_rel_error);
    }
    if (kink) {
      ++resampled;
      continue;
    }
    ++instances;
    worst_fine = std::max(worst_fine, fine);
    for (const auto& r : results) {
      if (r.max_rel_error > worst) {
        worst_pair = {r.worst_analytic, r.worst_numeric};
      }
      worst = std::max(worst, r.max_rel_error);
      checks += static_cast<int>(r.entries);
    }
  }
  const double t = seconds_since(start);
  report(1, "gradient-correctness", worst < 1e-4 && t < 60.0,
         "100 instances x 2 scopes, " + std::to_string(checks) + " entries, max rel error " + fmt("%.3g", worst) +
             " (< 1e-4; analytic " + fmt("%.6g", worst_pair.first) + " vs numeric " + fmt("%.6g", worst_pair.second) + "), " + std::to_string(resampled) + " kink instances resampled, " + fmt("%.1f", t) +
             " s (< 60 s); diagnostic max rel error at step 1e-5: " + fmt("%.3g", worst_fine));
}

// ---------------------------------------------------------------------------
// 2: rank-based AUROC and threshold FPR against brute force.

void criterion_oracles() {
  const auto start = Clock::now();
  std::mt19937_64 rng(77);
  int mismatches = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng() % 49;
    const bool coarse = trial % 2 == 0;
    std::vector<double> s(n);
    std::vector<bool> pos(n);
    std::normal_distribution<double> nd;
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = coarse ? static_cast<double>(rng() % 7) * 0.125 : nd(rng);
      pos[i] = rng() % 2;
    }
    // Guarantee both classes at random positions.
    const std::size_t a = rng() % n;
    const std::size_t b = (a + 1 + rng() % (n - 1)) % n;
    pos[a] = true;
    pos[b] = false;
    mismatches += auroc(s, pos) != oracle::auroc(s, pos);
    mismatches += fpr_at_tpr(s, pos, 0.95) != oracle::fpr_at_tpr(s, pos, 0.95);
  }
  const double t = seconds_since(start);
  report(2, "oracle-equivalence", mismatches == 0 && t < 10.0,
         "200 instances (n <= 50, half with ties), " + std::to_string(mismatches) +
             " mismatches (exact equality required), " + fmt("%.2f", t) + " s (< 10 s)");
}

// ---------------------------------------------------------------------------
// 3 to 8: long-term runs on the default scenario.

struct RunSummary {
  double first_error = NAN;
  double final_error = NAN;
  double mean_batch_precision = NAN;
  double pooled_precision = NAN;
  double recall = NAN;
  double auroc_conf_diff = NAN;  // final model, rescoring the last round
  double auroc_msp = NAN;
  double online_auroc_conf_diff = NAN;  // online records of the last round
  double online_auroc_msp = NAN;
  double drop_spearman = NAN;
  bool aborted = false;
  std::optional<SmallClassifier> final_model;
};

ExperimentConfig config_for(std::uint64_t seed, const std::string& strategy, double lr) {
  json t = json::object();
  t["seed"] = seed;
  t["adapt"] = {{"strategy", strategy}, {"learning_rate", lr}};
  return resolve_config(t);
}

RunSummary run_one(const ExperimentConfig& cfg, const SmallClassifier& source, const ScenarioStream& stream,
                   bool keep_model) {
  ModelPair pair(source);
  const RunLog log = run_scenario(pair, cfg.adapt, stream);
  RunSummary r;
  r.aborted = log.aborted;
  const std::span<const StepRecord> steps(log.steps);
  const auto per_round = error_per_round(steps);
  if (!per_round.empty()) {
    r.first_error = per_round.front();
    r.final_error = per_round.back();
  }
  const auto sel = selection_stats(steps);
  if (sel.precision) r.pooled_precision = *sel.precision;
  if (sel.recall) r.recall = *sel.recall;
  std::vector<double> batch_precision;
  for (const auto& s : log.steps) {
    const auto st = selection_stats(std::span<const StepRecord>(&s, 1));
    if (st.precision) batch_precision.push_back(*st.precision);
  }
  if (!batch_precision.empty()) r.mean_batch_precision = mean(batch_precision);

  const int last_round = log.steps.back().round_id;
  const auto online = records_for_round(steps, last_round);
  r.online_auroc_conf_diff = ood_eval(online, OodScoreKind::kConfDiff, NegativesMode::kIncludeClosedWrong).auroc;
  r.online_auroc_msp = ood_eval(online, OodScoreKind::kMsp, NegativesMode::kIncludeClosedWrong).auroc;

  // Replay the last round through the frozen final pair: a zero learning rate keeps theta_a fixed.
  ModelPair frozen = pair;
  AdaptationConfig eval = cfg.adapt;
  eval.learning_rate = 0.0;
  const RunLog final_log = run_scenario(frozen, eval, VectorBatchSource(stream.round_batches(last_round)));
  const std::span<const StepRecord> final_steps(final_log.steps);
  r.auroc_conf_diff = ood_eval(final_steps, OodScoreKind::kConfDiff, NegativesMode::kIncludeClosedWrong).auroc;
  r.auroc_msp = ood_eval(final_steps, OodScoreKind::kMsp, NegativesMode::kIncludeClosedWrong).auroc;

  std::vector<double> rounds;
  std::vector<double> counts;
  for (const auto& d : confidence_drop_stats(steps)) {
    rounds.push_back(d.round);
    counts.push_back(static_cast<double>(d.drops));
  }
  if (const auto rho = spearman(rounds, counts)) r.drop_spearman = *rho;
  if (keep_model) r.final_model = pair.adapted();
  return r;
}

struct SeedResults {
  std::map<std::string, RunSummary> runs;
  GradSimMatrix grad_sim;
  double seconds = 0;
};

void long_term_criteria() {
  const std::vector<std::uint64_t> seeds{0, 1, 2};
  const std::vector<std::string> strategies{"all", "conf_diff", "confidence_threshold", "entropy_threshold"};
  const double default_lr = resolve_config(json::object()).adapt.learning_rate;
  std::map<std::uint64_t, SeedResults> results;
  std::map<double, std::pair<double, double>> sweep;  // lr -> (all final, conf_diff final), seed 0

  for (auto seed : seeds) {
    const auto start = Clock::now();
    auto& sr = results[seed];
    const auto base = config_for(seed, "all", default_lr);
    const auto source = pretrain_from_config(base);
    const ScenarioStream stream(base.scenario);
    for (const auto& s : strategies) {
      const auto cfg = config_for(seed, s, default_lr);
      sr.runs[s] = run_one(cfg, source.model, stream, s == "all");
      const auto& r = sr.runs[s];
      std::printf("  seed %llu %-21s first %.4f final %.4f batch-precision %.4f pooled-precision %.4f recall %.4f%s\n",
                  static_cast<unsigned long long>(seed), s.c_str(), r.first_error, r.final_error,
                  r.mean_batch_precision, r.pooled_precision, r.recall, r.aborted ? " ABORTED" : "");
      std::fflush(stdout);
    }
    sr.grad_sim = grad_sim_snapshot(*sr.runs["all"].final_model, base.adapt.scope, stream,
                                    base.metrics.grad_sim_batches, base.source.num_classes);
    sr.seconds = seconds_since(start);
    std::printf("  seed %llu: clean accuracy %.4f, %.0f s for four strategies\n",
                static_cast<unsigned long long>(seed), source.clean_accuracy, sr.seconds);

    if (seed == 0) {
      sweep[default_lr] = {sr.runs["all"].final_error, sr.runs["conf_diff"].final_error};
      for (double lr : {1e-3, 5e-4, 1e-4}) {
        const auto a = run_one(config_for(0, "all", lr), source.model, stream, false);
        const auto c = run_one(config_for(0, "conf_diff", lr), source.model, stream, false);
        sweep[lr] = {a.final_error, c.final_error};
        std::printf("  sweep lr %g: all final %.4f, conf_diff final %.4f\n", lr, a.final_error, c.final_error);
        std::fflush(stdout);
      }
    }
  }

  // 3
  {
    bool pass = true;
    std::string detail;
    for (auto seed : seeds) {
      const auto& all = results[seed].runs["all"];
      const auto& cd = results[seed].runs["conf_diff"];
      const double rise = all.final_error - all.first_error;
      const double drift = std::abs(cd.final_error - cd.first_error);
      const bool ok = rise >= 0.10 && cd.final_error < all.final_error && drift <= 0.05 &&
                      results[seed].seconds < 600 && !all.aborted && !cd.aborted;
      pass = pass && ok;
      char buf[256];
      std::snprintf(buf, sizeof buf, "%sseed %llu: all %.3f->%.3f (+%.1f pp, need >= 10), conf_diff %.3f->%.3f (drift %.1f pp, need <= 5)",
                    detail.empty() ? "" : "; ", static_cast<unsigned long long>(seed), all.first_error,
                    all.final_error, 100 * rise, cd.first_error, cd.final_error, 100 * drift);
      detail += buf;
    }
    report(3, "long-term-degradation-and-rescue", pass, detail);
  }
  // 4
  {
    bool pass = true;
    std::string detail;
    for (auto seed : seeds) {
      const auto& all = results[seed].runs["all"];
      pass = pass && all.auroc_conf_diff > all.auroc_msp;
      char buf[128];
      std::snprintf(buf, sizeof buf, "%sseed %llu: conf_diff %.4f vs msp %.4f (online last round %.4f vs %.4f)",
                    detail.empty() ? "" : "; ", static_cast<unsigned long long>(seed), all.auroc_conf_diff,
                    all.auroc_msp, all.online_auroc_conf_diff, all.online_auroc_msp);
      detail += buf;
    }
    report(4, "separation-ordering", pass, detail + " (final model of the unfiltered run on the last round's batches, closed-wrong negatives)");
  }
  // 5
  {
    bool pass = true;
    std::string detail;
    for (auto seed : seeds) {
      auto& runs = results[seed].runs;
      const double cd = runs["conf_diff"].mean_batch_precision;
      const double ct = runs["confidence_threshold"].mean_batch_precision;
      const double et = runs["entropy_threshold"].mean_batch_precision;
      const double rec = runs["conf_diff"].recall;
      pass = pass && cd > ct && cd > et && rec > 0.5;
      char buf[160];
      std::snprintf(buf, sizeof buf, "%sseed %llu: conf_diff %.4f vs conf0.9 %.4f / entropy %.4f, recall %.3f",
                    detail.empty() ? "" : "; ", static_cast<unsigned long long>(seed), cd, ct, et, rec);
      detail += buf;
    }
    report(5, "precision-dominance", pass, detail + " (mean per-batch precision)");
  }
  // 6
  {
    bool pass = true;
    std::string detail;
    for (auto seed : seeds) {
      const auto& g = results[seed].grad_sim;
      const auto d = g.diagonal_mean();
      const auto o = g.off_diagonal_mean();
      pass = pass && d && o && *d > *o;
      char buf[160];
      std::snprintf(buf, sizeof buf, "%sseed %llu: diagonal %.4f vs off-diagonal %.4f", detail.empty() ? "" : "; ",
                    static_cast<unsigned long long>(seed), d ? *d : NAN, o ? *o : NAN);
      detail += buf;
    }
    report(6, "gradient-similarity-structure", pass, detail);
  }
  // 7
  {
    bool pass = true;
    std::string detail;
    for (auto seed : seeds) {
      const double rho = results[seed].runs["all"].drop_spearman;
      pass = pass && rho > 0;
      char buf[96];
      std::snprintf(buf, sizeof buf, "%sseed %llu: spearman %.4f", detail.empty() ? "" : "; ",
                    static_cast<unsigned long long>(seed), rho);
      detail += buf;
    }
    report(7, "decreased-confidence-trend", pass, detail + " (unfiltered run, drop count vs round)");
  }
  // 8
  {
    std::vector<double> all;
    std::vector<double> cd;
    for (const auto& [lr, v] : sweep) {
      all.push_back(v.first);
      cd.push_back(v.second);
    }
    const double sa = stddev(all);
    const double sc = stddev(cd);
    report(8, "learning-rate-robustness", sc < sa,
           "std of final error over lr {5e-3, 1e-3, 5e-4, 1e-4}: conf_diff " + fmt("%.4f", sc) + " vs all " +
               fmt("%.4f", sa) + " (seed 0)");
  }
}

// ---------------------------------------------------------------------------
// 9: byte-identical metrics from repeated cmd_adapt.

void criterion_determinism() {
  json t = json::object();
  t["scenario"] = {{"rounds", 2}};
  const auto cfg = resolve_config(t);
  const auto root = std::filesystem::temp_directory_path() / "tta_acceptance_determinism";
  std::filesystem::remove_all(root);
  cmd_adapt(cfg, root / "a", "", std::nullopt);
  cmd_adapt(cfg, root / "b", "", std::nullopt);
  auto slurp = [](const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  const auto a = slurp(root / "a" / "metrics.json");
  const auto b = slurp(root / "b" / "metrics.json");
  report(9, "determinism", !a.empty() && a == b,
         "two cmd_adapt runs (default config, 2 rounds, in-process pretraining): metrics.json " +
             std::to_string(a.size()) + " bytes, " + (a == b ? "identical" : "different"));
  std::filesystem::remove_all(root);
}

// ---------------------------------------------------------------------------
// 10: open-set samples never change the closed-set error under exclude_open.

void criterion_open_set_contract() {
  json t = json::object();
  t["source"] = {{"num_classes", 4}, {"feature_dim", 8}, {"samples_per_class", 100}};
  t["model"] = {{"hidden", json::array({16})}};
  t["pretrain"] = {{"epochs", 4}};
  t["scenario"] = {{"rounds", 1}, {"batch_size", 40}};
  const auto cfg = resolve_config(t);
  const auto source = pretrain_from_config(cfg).model;
  const ScenarioStream full(cfg.scenario);
  std::vector<LabeledBatch> batches;
  for (std::size_t i = 0; i < 6; ++i) batches.push_back(full.at(i));
  const VectorBatchSource stream(batches);
  ModelPair pair(source);
  const auto log = run_scenario(pair, cfg.adapt, stream);

  std::size_t closed = 0;
  std::size_t closed_wrong = 0;
  std::size_t open = 0;
  std::size_t open_correct = 0;
  std::vector<StepRecord> without_open = log.steps;
  for (auto& step : without_open) {
    std::vector<SampleRecord> kept;
    for (const auto& s : step.samples) {
      if (s.open) {
        ++open;
        open_correct += is_correct(s);
        continue;
      }
      ++closed;
      closed_wrong += s.c_a != s.label;
      kept.push_back(s);
    }
    step.samples = std::move(kept);
  }
  const double hand = static_cast<double>(closed_wrong) / static_cast<double>(closed);
  const double with = error_rate(log.steps, true);
  const double without = error_rate(without_open, true);
  const double without_flag_off = error_rate(without_open, false);
  const bool pass = open > 0 && open_correct == 0 && with == hand && without == hand && without_flag_off == hand;
  report(10, "open-set-evaluation-contract", pass,
         std::to_string(open) + " open samples (all misclassified), " + std::to_string(closed_wrong) + "/" +
             std::to_string(closed) + " closed wrong by hand = " + fmt("%.6f", hand) + "; with open " +
             fmt("%.6f", with) + ", without " + fmt("%.6f", without));
}

}  // namespace

int main() {
  const auto start = Clock::now();
  try {
    criterion_gradients();
    criterion_oracles();
    long_term_criteria();
    criterion_determinism();
    criterion_open_set_contract();
  } catch (const std::exception& e) {
    std::printf("FAIL acceptance aborted: %s\n", e.what());
    return 1;
  }
  int failed = 0;
  for (const auto& o : outcomes) failed += !o.pass;
  std::printf("%zu criteria, %d failed, %.0f s\n", outcomes.size(), failed, seconds_since(start));
  return failed == 0 ? 0 : 1;
}
