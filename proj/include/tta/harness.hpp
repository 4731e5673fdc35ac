#pragma once

// Experiment drivers behind the command-line tool. Every command writes into
// an output directory; metrics documents are deterministic functions of the
// resolved configuration.
//
// Result bundle layout (cmd_adapt, and every sweep cell):
//   config.json            input config bytes, verbatim
//   effective_config.json  fully resolved key tree
//   runlog.jsonl           see runlog_io.hpp
//   samples.csv            per-sample records (output.write_samples)
//   metrics.json           {"schema":"tta.metrics","version":1,"metrics":{name: payload}}
//   series/<name>.csv      "round,value" for every series metric
//   bundle.json            paths, engine version, config hash, wall-clock duration
//
// Metric payloads: {"kind":"scalar","value":x}, {"kind":"series","values":[...]}
// (index = round) or {"kind":"matrix","values":[[...]]}; undefined values are null.

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tta/adapt.hpp"
#include "tta/config.hpp"
#include "tta/metrics.hpp"

namespace tta {

const char* engine_version();

inline constexpr int kMetricsVersion = 1;
inline constexpr int kBundleVersion = 1;

struct PretrainResult {
  SmallClassifier model;
  double clean_accuracy = 0.0;
  std::uint64_t hash = 0;
};

PretrainResult pretrain_from_config(const ExperimentConfig& cfg);

// Loads `cfg.checkpoint` and checks it against the configured architecture.
SmallClassifier load_checked_checkpoint(const ExperimentConfig& cfg);

// Writes checkpoint.bin and pretrain.json into out_dir.
PretrainResult cmd_pretrain(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);

nlohmann::json compute_metrics(const ExperimentConfig& cfg, const RunLog& log, const ModelPair& pair,
                               const BatchSource& stream);

// Snapshot gradient-similarity analysis on the adapted model over the last
// `trailing_batches` batches of the stream.
GradSimMatrix grad_sim_snapshot(const SmallClassifier& model, ParamScope scope,
                                const BatchSource& stream, int trailing_batches, int num_classes);

struct ResultBundle {
  std::filesystem::path dir;
  std::string engine_version;
  std::string config_hash;
  double duration_seconds = 0.0;
  bool aborted = false;
  std::string error;
  nlohmann::json metrics;
};

// `source_model` is the pretrained model; when empty it is loaded from
// cfg.checkpoint or, with no checkpoint configured, pretrained in process.
// `config_bytes` is the verbatim input config; empty means none was given and
// the resolved tree is stored instead.
ResultBundle cmd_adapt(const ExperimentConfig& cfg, const std::filesystem::path& out_dir,
                       const std::string& config_bytes,
                       const std::optional<SmallClassifier>& source_model = std::nullopt);

struct SweepCell {
  std::string method;
  nlohmann::json value;
  bool ok = false;
  std::string message;
  double final_error = 0.0;
  double overall_error = 0.0;
  std::filesystem::path dir;
};

struct SweepResult {
  std::vector<SweepCell> cells;
  std::size_t failures() const;
};

// Validates the sweep block; throws Error(kInvalidArgument) when the axis is
// unknown or empty.
void validate_sweep(const ExperimentConfig& cfg);

// One bundle per (method, axis value) under out_dir/cells, then cells.csv and
// aggregate.csv (final-round error per value plus mean and population std).
SweepResult cmd_sweep(const ExperimentConfig& cfg, const std::filesystem::path& out_dir,
                      const std::optional<SmallClassifier>& source_model = std::nullopt);

// Prints a summary of one or more bundles (deltas against the first) and
// writes error_curves.csv, ood.csv and selection.csv into out_dir.
void cmd_report(const std::vector<std::filesystem::path>& bundles, const std::filesystem::path& out_dir,
                std::ostream& out);

}  // namespace tta
