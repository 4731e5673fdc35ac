// tta: pretrain | adapt | sweep | report
//
// Exit codes: 0 success, 1 runtime failure, 2 validation failure.

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tta/config.hpp"
#include "tta/error.hpp"
#include "tta/harness.hpp"

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitValidation = 2;

struct Options {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> bundles;
};

struct Loaded {
  tta::ExperimentConfig cfg;
  std::string config_bytes;
};

Loaded load(const Options& opt) {
  Loaded l;
  nlohmann::json tree = nlohmann::json::object();
  if (!opt.config_path.empty()) {
    std::ifstream in(opt.config_path, std::ios::binary);
    tta::require(static_cast<bool>(in), tta::ErrorCode::kInvalidArgument,
                 "cannot read config file " + opt.config_path);
    std::ostringstream ss;
    ss << in.rdbuf();
    l.config_bytes = ss.str();
    tree = tta::parse_config_text(l.config_bytes, opt.config_path);
  }
  for (const auto& o : opt.overrides) tta::apply_override(tree, o);
  if (opt.seed) tree["seed"] = *opt.seed;
  if (!opt.out.empty()) tree["output"]["dir"] = opt.out;
  l.cfg = tta::resolve_config(tree);
  return l;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Test-time adaptation with confidence-difference sample selection"};
  app.require_subcommand(1, 1);
  Options opt;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config_path, "JSON config file");
    sub->add_option("--set", opt.overrides, "Override a config key, e.g. adapt.learning_rate=1e-4")
        ->allow_extra_args(false);
    sub->add_option("--seed", opt.seed, "Seed for data, model and stream");
    sub->add_option("--out", opt.out, "Output directory");
  };
  auto* pretrain = app.add_subcommand("pretrain", "Train the source model and write a checkpoint");
  auto* adapt = app.add_subcommand("adapt", "Run one adaptation scenario and write a result bundle");
  auto* sweep = app.add_subcommand("sweep", "Run a strategy / learning-rate / batch-size sweep");
  auto* report = app.add_subcommand("report", "Summarize result bundles");
  for (auto* sub : {pretrain, adapt, sweep}) add_common(sub);
  report->add_option("bundles", opt.bundles, "Result bundle directories")->required();
  report->add_option("--out", opt.out, "Directory for the plot-ready CSVs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitValidation;
  }

  if (report->parsed()) {
    try {
      std::vector<std::filesystem::path> paths(opt.bundles.begin(), opt.bundles.end());
      tta::cmd_report(paths, opt.out.empty() ? std::filesystem::path("report") : std::filesystem::path(opt.out),
                      std::cout);
      return 0;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return kExitRuntime;
    }
  }

  Loaded loaded;
  std::optional<tta::SmallClassifier> source;
  try {
    loaded = load(opt);
    if (sweep->parsed()) tta::validate_sweep(loaded.cfg);
    if (!pretrain->parsed() && !loaded.cfg.checkpoint.empty()) source = tta::load_checked_checkpoint(loaded.cfg);
  } catch (const std::exception& e) {
    std::cerr << "invalid configuration: " << e.what() << "\n";
    return kExitValidation;
  }
  const auto& cfg = loaded.cfg;

  try {
    if (pretrain->parsed()) {
      const auto r = tta::cmd_pretrain(cfg, cfg.output_dir);
      std::cout << "clean accuracy " << r.clean_accuracy << "\n"
                << "checkpoint " << (cfg.output_dir / "checkpoint.bin").string() << "\n";
      return 0;
    }
    if (adapt->parsed()) {
      const auto b = tta::cmd_adapt(cfg, cfg.output_dir, loaded.config_bytes, source);
      const auto& m = b.metrics.at("metrics");
      std::cout << "bundle " << b.dir.string() << " (config " << b.config_hash << ", "
                << b.duration_seconds << " s)\n"
                << "first-round error " << m.at("error.first_round").at("value").dump() << "\n"
                << "final-round error " << m.at("error.final_round").at("value").dump() << "\n";
      if (b.aborted) {
        std::cerr << "run aborted: " << b.error << " (partial run log kept)\n";
        return kExitRuntime;
      }
      return 0;
    }
    const auto r = tta::cmd_sweep(cfg, cfg.output_dir, source);
    std::cout << "sweep: " << r.cells.size() << " cells, " << r.failures() << " failed; see "
              << (cfg.output_dir / "aggregate.csv").string() << "\n";
    for (const auto& c : r.cells)
      if (!c.ok) std::cerr << "cell " << c.dir.string() << " failed: " << c.message << "\n";
    return r.failures() == 0 ? 0 : kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}
