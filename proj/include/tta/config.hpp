#pragma once

// Experiment configuration: a JSON key tree with dotted-path overrides.
//
// {
//   "seed": 0,
//   "source":   {"num_classes", "feature_dim", "class_radius", "class_cov_scale",
//                "samples_per_class", "test_fraction"},
//   "model":    {"hidden": [64, 64]},
//   "pretrain": {"epochs", "learning_rate", "batch_size", "bn_momentum"},
//   "scenario": {"rounds", "batch_size",
//                "corruptions": "default" | [{"family", "magnitude", "severity", "delta"?}],
//                "open_set": {"mode": "off" | "mixed", "mirror_scale", "cov_scale"}},
//   "adapt":    {"strategy": "all" | "confidence_threshold" | "entropy_threshold" | "conf_diff",
//                "confidence_p", "entropy_e0" (null = 0.4 ln C), "margin",
//                "score_space": "softmax" | "logit", "scope": "affine_only" | "all_params",
//                "learning_rate", "lambda_max", "optimizer": "adam" | "sgd",
//                "loss": "entropy" | "gce", "gce_q"},
//   "metrics":  {"ood", "confidence_drops", "grad_sim", "grad_sim_batches"},
//   "checkpoint": "" (empty = pretrain in process),
//   "output":   {"dir", "write_samples"},
//   "sweep":    {"axis": "strategy" | "learning_rate" | "batch_size", "values": [...],
//                "strategies": [...]}
// }
//
// Every key is optional; missing keys keep their defaults and unknown keys
// are rejected.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "tta/adapt.hpp"
#include "tta/streams.hpp"

namespace tta {

struct MetricSelection {
  bool ood = true;
  bool confidence_drops = true;
  bool grad_sim = true;
  int grad_sim_batches = 10;  // trailing stream batches used for the gradient snapshot
};

struct SweepSpec {
  std::string axis = "learning_rate";
  nlohmann::json values = nlohmann::json::array({5e-3, 1e-3, 5e-4, 1e-4});
  std::vector<std::string> strategies = {"all", "conf_diff"};
};

struct ExperimentConfig {
  nlohmann::json tree;  // fully resolved key tree

  std::uint64_t seed = 0;
  SyntheticSourceSpec source;
  std::vector<int> hidden;
  PretrainOptions pretrain;
  ScenarioSpec scenario;
  AdaptationConfig adapt;
  MetricSelection metrics;
  std::filesystem::path checkpoint;
  std::filesystem::path output_dir;
  bool write_samples = true;
  SweepSpec sweep;

  std::vector<int> layer_dims() const;  // input, hidden..., classes
};

nlohmann::json default_config_tree();

// Parses "a.b.c=value". The value is read as JSON when it parses, otherwise
// as a plain string.
void apply_override(nlohmann::json& tree, const std::string& assignment);

// Merges `tree` over the defaults, then builds and validates every nested
// spec. Throws Error(kInvalidArgument) on any problem.
ExperimentConfig resolve_config(const nlohmann::json& tree);

nlohmann::json parse_config_text(const std::string& text, const std::string& origin);

SelectionStrategy parse_strategy(const std::string& name, const nlohmann::json& adapt_tree,
                                 int num_classes);

}  // namespace tta
