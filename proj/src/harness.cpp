#include "tta/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "tta/checkpoint.hpp"
#include "tta/error.hpp"
#include "tta/metrics.hpp"
#include "tta/runlog_io.hpp"

#ifndef TTA_ENGINE_VERSION
#define TTA_ENGINE_VERSION "0.0.0"
#endif

namespace tta {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kMetricsSchema = "tta.metrics";
constexpr const char* kBundleSchema = "tta.bundle";

json real_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json real_or_null(const std::optional<double>& v) { return v ? real_or_null(*v) : json(nullptr); }

json scalar(json value) { return {{"kind", "scalar"}, {"value", std::move(value)}}; }

json series(const std::vector<json>& values) { return {{"kind", "series"}, {"values", values}}; }

json series(const std::vector<double>& values) {
  std::vector<json> out;
  out.reserve(values.size());
  for (double v : values) out.push_back(real_or_null(v));
  return series(out);
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return hex64(h);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  out << text;
  require(static_cast<bool>(out), ErrorCode::kIo, "failed writing " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::kIo, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json read_json(const fs::path& path) {
  const auto text = read_text(path);
  json j = json::parse(text, nullptr, /*allow_exceptions=*/false);
  require(!j.is_discarded(), ErrorCode::kFormat, path.string() + ": not valid JSON");
  return j;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  require(!ec && fs::is_directory(dir), ErrorCode::kIo, "cannot create directory " + dir.string());
}

std::string format_real(double v) {
  if (!std::isfinite(v)) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string format_json_real(const json& v) { return v.is_number() ? format_real(v.get<double>()) : ""; }

const char* mode_name(NegativesMode m) {
  return m == NegativesMode::kIncludeClosedWrong ? "include_closed_wrong" : "exclude_closed_wrong";
}

void write_series_csvs(const json& metrics, const fs::path& dir) {
  ensure_dir(dir);
  for (auto it = metrics.begin(); it != metrics.end(); ++it) {
    if (it.value().at("kind") != "series") continue;
    std::string text = "round,value\n";
    const auto& values = it.value().at("values");
    for (std::size_t r = 0; r < values.size(); ++r)
      text += std::to_string(r) + "," + format_json_real(values[r]) + "\n";
    write_text(dir / (it.key() + ".csv"), text);
  }
}

SmallClassifier source_model_for(const ExperimentConfig& cfg, const std::optional<SmallClassifier>& given) {
  if (given) return *given;
  if (!cfg.checkpoint.empty()) return load_checked_checkpoint(cfg);
  return pretrain_from_config(cfg).model;
}

}  // namespace

const char* engine_version() { return TTA_ENGINE_VERSION; }

PretrainResult pretrain_from_config(const ExperimentConfig& cfg) {
  const auto split = generate_source(cfg.source);
  const auto dims = cfg.layer_dims();
  PretrainResult r;
  r.model = pretrain_source(SmallClassifier::random(dims, cfg.seed), split.train, cfg.pretrain);
  r.clean_accuracy = accuracy(r.model, split.test);
  r.hash = r.model.content_hash();
  return r;
}

SmallClassifier load_checked_checkpoint(const ExperimentConfig& cfg) {
  SmallClassifier model = load_checkpoint(cfg.checkpoint);
  const auto expected = SmallClassifier::random(cfg.layer_dims(), 0);
  require(model.same_architecture(expected), ErrorCode::kInvalidArgument,
          "checkpoint " + cfg.checkpoint.string() + " does not match the configured architecture");
  return model;
}

PretrainResult cmd_pretrain(const ExperimentConfig& cfg, const fs::path& out_dir) {
  auto r = pretrain_from_config(cfg);
  ensure_dir(out_dir);
  save_checkpoint(r.model, out_dir / "checkpoint.bin");
  const json summary = {{"schema", "tta.pretrain"},
                        {"version", 1},
                        {"engine_version", engine_version()},
                        {"clean_accuracy", r.clean_accuracy},
                        {"model_hash", hex64(r.hash)},
                        {"checkpoint", "checkpoint.bin"},
                        {"config", cfg.tree}};
  write_text(out_dir / "pretrain.json", summary.dump(2) + "\n");
  return r;
}

GradSimMatrix grad_sim_snapshot(const SmallClassifier& model, ParamScope scope, const BatchSource& stream,
                                int trailing_batches, int num_classes) {
  std::vector<Vector> grads;
  std::vector<int> truth;
  std::vector<int> predicted;
  const std::size_t n = stream.size();
  const std::size_t first = n > static_cast<std::size_t>(trailing_batches) ? n - trailing_batches : 0;
  for (std::size_t b = first; b < n; ++b) {
    const LabeledBatch batch = stream.at(b);
    if (batch.size() < 2) continue;
    auto g = per_sample_gradients(model, batch.features, scope);
    const auto pred = argmax_rows(forward(model, batch.features).logits);
    for (std::size_t i = 0; i < g.size(); ++i) {
      grads.push_back(std::move(g[i]));
      truth.push_back(batch.labels[i]);
      predicted.push_back(pred[i]);
    }
  }
  return grad_cos_sim(grads, truth, predicted, num_classes);
}

json compute_metrics(const ExperimentConfig& cfg, const RunLog& log, const ModelPair& pair,
                     const BatchSource& stream) {
  const std::span<const StepRecord> steps(log.steps);
  json m = json::object();

  std::size_t closed = 0;
  std::size_t updated = 0;
  std::size_t skipped = 0;
  for (const auto& s : log.steps) {
    updated += s.updated;
    skipped += s.skipped;
    for (const auto& r : s.samples) closed += !r.open;
  }
  m["run.steps"] = scalar(log.steps.size());
  m["run.updated_steps"] = scalar(updated);
  m["run.skipped_steps"] = scalar(skipped);
  m["run.aborted"] = scalar(log.aborted);

  const auto per_round = error_per_round(steps);
  m["error.overall"] = scalar(closed > 0 ? real_or_null(error_rate(steps, true)) : json(nullptr));
  m["error.per_round"] = series(per_round);
  m["error.first_round"] = scalar(per_round.empty() ? json(nullptr) : real_or_null(per_round.front()));
  m["error.final_round"] = scalar(per_round.empty() ? json(nullptr) : real_or_null(per_round.back()));

  const auto sel = selection_stats(steps);
  m["selection.precision"] = scalar(real_or_null(sel.precision));
  m["selection.recall"] = scalar(real_or_null(sel.recall));
  m["selection.tp"] = scalar(sel.tp);
  m["selection.fp"] = scalar(sel.fp);
  m["selection.fn"] = scalar(sel.fn);
  m["selection.tn"] = scalar(sel.tn);
  {
    std::vector<double> batch_precision;
    for (const auto& s : log.steps) {
      const auto st = selection_stats(std::span<const StepRecord>(&s, 1));
      if (st.precision) batch_precision.push_back(*st.precision);
    }
    m["selection.mean_batch_precision"] =
        scalar(batch_precision.empty() ? json(nullptr) : real_or_null(mean(batch_precision)));
    std::vector<json> prec_series;
    std::vector<json> rec_series;
    for (std::size_t r = 0; r < per_round.size(); ++r) {
      const auto recs = records_for_round(steps, static_cast<int>(r));
      const auto st = selection_stats(recs);
      prec_series.push_back(real_or_null(st.precision));
      rec_series.push_back(real_or_null(st.recall));
    }
    m["selection.precision_per_round"] = series(prec_series);
    m["selection.recall_per_round"] = series(rec_series);
  }

  if (cfg.metrics.confidence_drops) {
    const auto drops = confidence_drop_stats(steps);
    std::vector<json> counts;
    std::vector<json> fractions;
    std::vector<double> rounds;
    std::vector<double> values;
    for (const auto& d : drops) {
      counts.push_back(d.drops);
      fractions.push_back(real_or_null(d.wrong_fraction));
      rounds.push_back(d.round);
      values.push_back(static_cast<double>(d.drops));
    }
    m["confidence_drops.count"] = series(counts);
    m["confidence_drops.wrong_fraction"] = series(fractions);
    m["confidence_drops.spearman_vs_round"] = scalar(real_or_null(spearman(rounds, values)));
  }

  if (cfg.metrics.ood) {
    const int last_round = log.steps.empty() ? 0 : log.steps.back().round_id;
    const auto final_records = records_for_round(steps, last_round);
    for (auto kind : {OodScoreKind::kMsp, OodScoreKind::kMaxLogit, OodScoreKind::kEnergy, OodScoreKind::kConfDiff}) {
      for (auto mode : {NegativesMode::kIncludeClosedWrong, NegativesMode::kExcludeClosedWrong}) {
        for (int pooled = 0; pooled < 2; ++pooled) {
          const std::string key = std::string("ood.") + to_string(kind) + "." + mode_name(mode) + "." +
                                  (pooled ? "pooled" : "final_round");
          json auroc_v = nullptr;
          json fpr_v = nullptr;
          try {
            const auto r = pooled ? ood_eval(steps, kind, mode)
                                  : ood_eval(std::span<const StepRecord>(final_records), kind, mode);
            auroc_v = real_or_null(r.auroc);
            fpr_v = real_or_null(r.fpr_at_tpr95);
          } catch (const Error&) {
            // Undefined when one side of the split is empty.
          }
          m[key + ".auroc"] = scalar(auroc_v);
          m[key + ".fpr_at_tpr95"] = scalar(fpr_v);
        }
      }
    }
  }

  if (cfg.metrics.grad_sim) {
    const auto g = grad_sim_snapshot(pair.adapted(), cfg.adapt.scope, stream, cfg.metrics.grad_sim_batches,
                                     cfg.source.num_classes);
    json s = json::array();
    json counts = json::array();
    for (Eigen::Index j = 0; j < g.s.rows(); ++j) {
      json row = json::array();
      json crow = json::array();
      for (Eigen::Index i = 0; i < g.s.cols(); ++i) {
        row.push_back(g.defined(static_cast<int>(j), static_cast<int>(i)) ? real_or_null(g.s(j, i)) : json(nullptr));
        crow.push_back(g.counts(j, i));
      }
      s.push_back(std::move(row));
      counts.push_back(std::move(crow));
    }
    m["grad_sim.s"] = {{"kind", "matrix"}, {"values", s}};
    m["grad_sim.counts"] = {{"kind", "matrix"}, {"values", counts}};
    m["grad_sim.zero_norm_excluded"] = scalar(g.zero_norm_excluded);
    m["grad_sim.diagonal_mean"] = scalar(real_or_null(g.diagonal_mean()));
    m["grad_sim.off_diagonal_mean"] = scalar(real_or_null(g.off_diagonal_mean()));
  }

  return json{{"schema", kMetricsSchema}, {"version", kMetricsVersion}, {"metrics", m}};
}

ResultBundle cmd_adapt(const ExperimentConfig& cfg, const fs::path& out_dir, const std::string& config_bytes,
                       const std::optional<SmallClassifier>& source_model) {
  const auto started = std::chrono::steady_clock::now();
  ensure_dir(out_dir);
  const std::string effective = cfg.tree.dump(2) + "\n";
  write_text(out_dir / "config.json", config_bytes.empty() ? effective : config_bytes);
  write_text(out_dir / "effective_config.json", effective);

  ResultBundle bundle;
  bundle.dir = out_dir;
  bundle.engine_version = engine_version();
  bundle.config_hash = fnv1a_hex(cfg.tree.dump());

  ModelPair pair(source_model_for(cfg, source_model));
  const ScenarioStream stream(cfg.scenario);
  const RunLog log = run_scenario(pair, cfg.adapt, stream);
  bundle.aborted = log.aborted;
  bundle.error = log.error;

  save_runlog(log, out_dir / "runlog.jsonl", cfg.write_samples ? out_dir / "samples.csv" : fs::path{});
  bundle.metrics = compute_metrics(cfg, log, pair, stream);
  write_text(out_dir / "metrics.json", bundle.metrics.dump(2) + "\n");
  write_series_csvs(bundle.metrics.at("metrics"), out_dir / "series");

  bundle.duration_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  const json manifest = {{"schema", kBundleSchema},
                         {"version", kBundleVersion},
                         {"engine_version", bundle.engine_version},
                         {"config_hash", bundle.config_hash},
                         {"config", "config.json"},
                         {"effective_config", "effective_config.json"},
                         {"runlog", "runlog.jsonl"},
                         {"samples", cfg.write_samples ? json("samples.csv") : json(nullptr)},
                         {"metrics", "metrics.json"},
                         {"source_model", source_model      ? "provided"
                                          : cfg.checkpoint.empty() ? "pretrained in process"
                                                                   : cfg.checkpoint.string()},
                         {"duration_seconds", bundle.duration_seconds},
                         {"aborted", log.aborted},
                         {"error", log.error}};
  write_text(out_dir / "bundle.json", manifest.dump(2) + "\n");
  return bundle;
}

std::size_t SweepResult::failures() const {
  std::size_t n = 0;
  for (const auto& c : cells) n += !c.ok;
  return n;
}

void validate_sweep(const ExperimentConfig& cfg) {
  const auto& axis = cfg.sweep.axis;
  require(axis == "strategy" || axis == "learning_rate" || axis == "batch_size", ErrorCode::kInvalidArgument,
          "sweep.axis must be strategy, learning_rate or batch_size");
  require(cfg.sweep.values.is_array() && !cfg.sweep.values.empty(), ErrorCode::kInvalidArgument,
          "sweep.values must be a nonempty list");
  if (axis != "strategy")
    require(!cfg.sweep.strategies.empty(), ErrorCode::kInvalidArgument, "sweep.strategies must be nonempty");
  // Resolving every cell up front turns bad values into validation errors.
  for (const auto& v : cfg.sweep.values) {
    for (const auto& method : axis == "strategy" ? std::vector<std::string>{""} : cfg.sweep.strategies) {
      json tree = cfg.tree;
      if (axis == "strategy") {
        require(v.is_string(), ErrorCode::kInvalidArgument, "strategy sweep values must be strategy names");
        tree["adapt"]["strategy"] = v;
      } else {
        tree["adapt"]["strategy"] = method;
        tree[axis == "learning_rate" ? "adapt" : "scenario"][axis] = v;
      }
      (void)resolve_config(tree);
    }
  }
}

SweepResult cmd_sweep(const ExperimentConfig& cfg, const fs::path& out_dir,
                      const std::optional<SmallClassifier>& source_model) {
  validate_sweep(cfg);
  ensure_dir(out_dir);
  const SmallClassifier model = source_model_for(cfg, source_model);
  const auto& axis = cfg.sweep.axis;
  const std::vector<std::string> methods =
      axis == "strategy" ? std::vector<std::string>{} : cfg.sweep.strategies;

  SweepResult result;
  auto run_cell = [&](const std::string& method, const json& value) {
    SweepCell cell;
    cell.method = method;
    cell.value = value;
    const std::string value_text = value.is_string() ? value.get<std::string>() : value.dump();
    cell.dir = out_dir / "cells" / (method + "__" + axis + "=" + value_text);
    try {
      json tree = cfg.tree;
      tree["adapt"]["strategy"] = method;
      if (axis == "learning_rate") tree["adapt"]["learning_rate"] = value;
      if (axis == "batch_size") tree["scenario"]["batch_size"] = value;
      const auto cell_cfg = resolve_config(tree);
      const auto bundle = cmd_adapt(cell_cfg, cell.dir, "", model);
      const auto& metrics = bundle.metrics.at("metrics");
      const auto& fe = metrics.at("error.final_round").at("value");
      const auto& oe = metrics.at("error.overall").at("value");
      cell.final_error = fe.is_number() ? fe.get<double>() : std::nan("");
      cell.overall_error = oe.is_number() ? oe.get<double>() : std::nan("");
      cell.ok = !bundle.aborted && std::isfinite(cell.final_error);
      if (!cell.ok) cell.message = bundle.aborted ? bundle.error : "no closed-set samples";
    } catch (const std::exception& e) {
      cell.ok = false;
      cell.message = e.what();
    }
    result.cells.push_back(std::move(cell));
  };

  if (axis == "strategy") {
    for (const auto& v : cfg.sweep.values) run_cell(v.get<std::string>(), v);
  } else {
    for (const auto& method : methods)
      for (const auto& v : cfg.sweep.values) run_cell(method, v);
  }

  auto csv_field = [](std::string s) {
    for (char& c : s)
      if (c == ',' || c == '\n') c = ';';
    return s;
  };
  std::string cells_csv = "method,axis,value,status,final_error,overall_error,message\n";
  for (const auto& c : result.cells) {
    cells_csv += c.method + "," + axis + "," + csv_field(c.value.is_string() ? c.value.get<std::string>() : c.value.dump()) +
                 "," + (c.ok ? "ok" : "failed") + "," + (c.ok ? format_real(c.final_error) : "") + "," +
                 (c.ok ? format_real(c.overall_error) : "") + "," + csv_field(c.message) + "\n";
  }
  write_text(out_dir / "cells.csv", cells_csv);

  std::vector<std::string> row_names;
  for (const auto& c : result.cells)
    if (std::find(row_names.begin(), row_names.end(), c.method) == row_names.end()) row_names.push_back(c.method);
  std::string agg = "method";
  if (axis != "strategy")
    for (const auto& v : cfg.sweep.values) agg += "," + axis + "=" + v.dump();
  else
    agg += ",final_error";
  agg += ",mean,std\n";
  for (const auto& name : row_names) {
    std::vector<double> ok_values;
    agg += name;
    for (const auto& c : result.cells) {
      if (c.method != name) continue;
      agg += "," + (c.ok ? format_real(c.final_error) : std::string());
      if (c.ok) ok_values.push_back(c.final_error);
    }
    agg += "," + (ok_values.empty() ? std::string() : format_real(mean(ok_values)));
    agg += "," + (ok_values.empty() ? std::string() : format_real(stddev(ok_values)));
    agg += "\n";
  }
  write_text(out_dir / "aggregate.csv", agg);
  return result;
}

void cmd_report(const std::vector<fs::path>& bundles, const fs::path& out_dir, std::ostream& out) {
  require(!bundles.empty(), ErrorCode::kInvalidArgument, "report needs at least one bundle");
  struct Loaded {
    std::string name;
    json manifest;
    json metrics;
  };
  std::vector<Loaded> loaded;
  for (const auto& dir : bundles) {
    Loaded l;
    l.name = dir.filename().empty() ? dir.parent_path().filename().string() : dir.filename().string();
    const auto manifest_path = dir / "bundle.json";
    l.manifest = read_json(manifest_path);
    require(l.manifest.is_object() && l.manifest.value("schema", "") == kBundleSchema, ErrorCode::kFormat,
            manifest_path.string() + ": not a result bundle manifest");
    require(l.manifest.value("version", -1) == kBundleVersion, ErrorCode::kFormat,
            manifest_path.string() + ": unsupported bundle version");
    const auto metrics_path = dir / l.manifest.value("metrics", "metrics.json");
    const json doc = read_json(metrics_path);
    require(doc.is_object() && doc.value("schema", "") == kMetricsSchema, ErrorCode::kFormat,
            metrics_path.string() + ": not a metrics document");
    require(doc.value("version", -1) == kMetricsVersion, ErrorCode::kFormat,
            metrics_path.string() + ": unsupported metrics version " + doc.value("version", json(nullptr)).dump());
    require(doc.contains("metrics") && doc.at("metrics").is_object(), ErrorCode::kFormat,
            metrics_path.string() + ": missing metrics object");
    l.metrics = doc.at("metrics");
    loaded.push_back(std::move(l));
  }

  auto value_of = [](const json& metrics, const std::string& key) -> std::optional<double> {
    if (!metrics.contains(key)) return std::nullopt;
    const auto& v = metrics.at(key).at("value");
    if (!v.is_number()) return std::nullopt;
    return v.get<double>();
  };
  auto fmt = [](const std::optional<double>& v) { return v ? format_real(*v) : std::string("n/a"); };

  const std::vector<std::pair<std::string, std::string>> headline = {
      {"error.first_round", "first-round error"},
      {"error.final_round", "final-round error"},
      {"error.overall", "overall error"},
      {"selection.precision", "selection precision"},
      {"selection.recall", "selection recall"},
      {"ood.conf_diff.include_closed_wrong.final_round.auroc", "AUROC conf_diff"},
      {"ood.msp.include_closed_wrong.final_round.auroc", "AUROC msp"},
      {"confidence_drops.spearman_vs_round", "drop-count trend"},
      {"grad_sim.diagonal_mean", "grad-sim diagonal"},
      {"grad_sim.off_diagonal_mean", "grad-sim off-diagonal"},
  };

  out << "bundles:\n";
  for (const auto& l : loaded)
    out << "  " << l.name << "  config " << l.manifest.value("config_hash", "?") << "  engine "
        << l.manifest.value("engine_version", "?") << (l.manifest.value("aborted", false) ? "  ABORTED" : "")
        << "\n";
  out << "\n" << std::left << std::setw(24) << "metric";
  for (std::size_t b = 0; b < loaded.size(); ++b) {
    out << std::setw(14) << loaded[b].name.substr(0, 13);
    if (b > 0) out << std::setw(14) << ("d(" + std::to_string(b) + "-0)");
  }
  out << "\n";
  for (const auto& [key, label] : headline) {
    out << std::setw(24) << label;
    const auto base = value_of(loaded[0].metrics, key);
    for (std::size_t b = 0; b < loaded.size(); ++b) {
      const auto v = value_of(loaded[b].metrics, key);
      out << std::setw(14) << fmt(v);
      if (b > 0) out << std::setw(14) << ((v && base) ? format_real(*v - *base) : std::string("n/a"));
    }
    out << "\n";
  }

  ensure_dir(out_dir);
  std::size_t rounds = 0;
  for (const auto& l : loaded)
    if (l.metrics.contains("error.per_round")) rounds = std::max(rounds, l.metrics.at("error.per_round").at("values").size());
  std::string curves = "round";
  for (const auto& l : loaded) curves += "," + l.name;
  curves += "\n";
  for (std::size_t r = 0; r < rounds; ++r) {
    curves += std::to_string(r);
    for (const auto& l : loaded) {
      curves += ",";
      if (l.metrics.contains("error.per_round")) {
        const auto& vals = l.metrics.at("error.per_round").at("values");
        if (r < vals.size()) curves += format_json_real(vals[r]);
      }
    }
    curves += "\n";
  }
  write_text(out_dir / "error_curves.csv", curves);

  std::string ood = "bundle,score,negatives,scope,auroc,fpr_at_tpr95\n";
  for (const auto& l : loaded) {
    for (auto it = l.metrics.begin(); it != l.metrics.end(); ++it) {
      const std::string& key = it.key();
      const std::string suffix = ".auroc";
      if (key.rfind("ood.", 0) != 0 || key.size() < suffix.size() ||
          key.compare(key.size() - suffix.size(), suffix.size(), suffix) != 0)
        continue;
      const std::string stem = key.substr(4, key.size() - 4 - suffix.size());  // kind.mode.scope
      const auto d1 = stem.find('.');
      const auto d2 = stem.find('.', d1 + 1);
      ood += l.name + "," + stem.substr(0, d1) + "," + stem.substr(d1 + 1, d2 - d1 - 1) + "," +
             stem.substr(d2 + 1) + "," + fmt(value_of(l.metrics, key)) + "," +
             fmt(value_of(l.metrics, "ood." + stem + ".fpr_at_tpr95")) + "\n";
    }
  }
  write_text(out_dir / "ood.csv", ood);

  std::string sel = "bundle,precision,recall,mean_batch_precision,tp,fp,fn,tn\n";
  for (const auto& l : loaded) {
    sel += l.name;
    for (const char* k : {"selection.precision", "selection.recall", "selection.mean_batch_precision",
                          "selection.tp", "selection.fp", "selection.fn", "selection.tn"})
      sel += "," + fmt(value_of(l.metrics, k));
    sel += "\n";
  }
  write_text(out_dir / "selection.csv", sel);
  out << "\nwrote error_curves.csv, ood.csv, selection.csv to " << out_dir.string() << "\n";
}

}  // namespace tta
