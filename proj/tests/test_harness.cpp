#include <gtest/gtest.h>

#include <sys/wait.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "tta/checkpoint.hpp"
#include "tta/error.hpp"
#include "tta/harness.hpp"

using namespace tta;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Small enough to run a full bundle in about a second.
json small_tree() {
  json t = json::object();
  t["source"] = {{"num_classes", 4}, {"feature_dim", 8}, {"samples_per_class", 100}};
  t["model"] = {{"hidden", json::array({16})}};
  t["pretrain"] = {{"epochs", 12}};
  t["scenario"] = {{"rounds", 2}, {"batch_size", 40}};
  t["metrics"] = {{"grad_sim_batches", 3}};
  return t;
}

fs::path fresh_dir(const std::string& name) {
  const auto d = fs::temp_directory_path() / ("tta_harness_" + name);
  fs::remove_all(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const SmallClassifier& small_source() {
  static const SmallClassifier m = pretrain_from_config(resolve_config(small_tree())).model;
  return m;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(TTA_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Config, DefaultsResolve) {
  const auto cfg = resolve_config(json::object());
  EXPECT_EQ(cfg.layer_dims(), (std::vector<int>{32, 64, 64, 10}));
  EXPECT_EQ(cfg.scenario.rounds, 50);
  EXPECT_EQ(cfg.scenario.batch_size, 200);
  EXPECT_EQ(cfg.scenario.corruption_sequence.size(), 15u);
  EXPECT_TRUE(cfg.scenario.mixed());
  EXPECT_TRUE(std::holds_alternative<ConfidenceDifference>(cfg.adapt.strategy));
  EXPECT_EQ(cfg.adapt.lambda_max, 0.5);
  EXPECT_TRUE(std::holds_alternative<Adam>(cfg.adapt.optimizer));
}

TEST(Config, OverridesAndValidation) {
  json t = json::object();
  apply_override(t, "adapt.learning_rate=1e-4");
  apply_override(t, "adapt.strategy=entropy_threshold");
  apply_override(t, "model.hidden=[8,8]");
  auto cfg = resolve_config(t);
  EXPECT_EQ(cfg.adapt.learning_rate, 1e-4);
  ASSERT_TRUE(std::holds_alternative<EntropyThreshold>(cfg.adapt.strategy));
  EXPECT_NEAR(std::get<EntropyThreshold>(cfg.adapt.strategy).e0, 0.4 * std::log(10.0), 1e-15);
  EXPECT_EQ(cfg.layer_dims(), (std::vector<int>{32, 8, 8, 10}));

  EXPECT_THROW(apply_override(t, "no_equals_sign"), Error);
  for (const char* bad : {"adapt.strategy=bogus", "scenario.rounds=0", "adapt.scope=everything",
                          "adapt.learnin_rate=1", "source.num_classes=1", "adapt.confidence_p=1.5",
                          "scenario.open_set.mode=sometimes", "checkpoint=/nonexistent/ckpt.bin"}) {
    json u = json::object();
    apply_override(u, bad);
    EXPECT_THROW(resolve_config(u), Error) << bad;
  }
}

TEST(Config, TextAllowsComments) {
  const auto t = parse_config_text("{\n // comment\n \"seed\": 7\n}", "inline");
  EXPECT_EQ(resolve_config(t).seed, 7u);
  EXPECT_THROW(parse_config_text("{\"seed\": }", "inline"), Error);
}

TEST(Pretrain, SameSeedSameCheckpoint) {
  const auto cfg = resolve_config(small_tree());
  const auto dir_a = fresh_dir("pre_a");
  const auto dir_b = fresh_dir("pre_b");
  const auto a = cmd_pretrain(cfg, dir_a);
  const auto b = cmd_pretrain(cfg, dir_b);
  EXPECT_EQ(a.hash, b.hash);
  EXPECT_EQ(slurp(dir_a / "checkpoint.bin"), slurp(dir_b / "checkpoint.bin"));
  EXPECT_GE(a.clean_accuracy, 0.9);
  const auto pj = json::parse(slurp(dir_a / "pretrain.json"));
  EXPECT_EQ(pj.at("clean_accuracy").get<double>(), a.clean_accuracy);

  json t = small_tree();
  t["checkpoint"] = (dir_a / "checkpoint.bin").string();
  EXPECT_EQ(load_checked_checkpoint(resolve_config(t)).content_hash(), a.hash);
  t["model"]["hidden"] = json::array({32});
  EXPECT_THROW(load_checked_checkpoint(resolve_config(t)), Error);
}

TEST(Adapt, BundleIsDeterministicAndAuditable) {
  const auto cfg = resolve_config(small_tree());
  const std::string input = "{\"scenario\": {\"rounds\": 2}}  \n";
  const auto a = cmd_adapt(cfg, fresh_dir("adapt_a"), input, small_source());
  const auto b = cmd_adapt(cfg, fresh_dir("adapt_b"), input, small_source());
  EXPECT_FALSE(a.aborted);
  EXPECT_EQ(slurp(a.dir / "metrics.json"), slurp(b.dir / "metrics.json"));
  EXPECT_EQ(slurp(a.dir / "runlog.jsonl"), slurp(b.dir / "runlog.jsonl"));
  EXPECT_EQ(slurp(a.dir / "config.json"), input);
  EXPECT_EQ(a.config_hash, b.config_hash);

  const auto eff = resolve_config(json::parse(slurp(a.dir / "effective_config.json")));
  EXPECT_EQ(eff.tree, cfg.tree);

  const auto manifest = json::parse(slurp(a.dir / "bundle.json"));
  EXPECT_EQ(manifest.at("schema"), "tta.bundle");
  EXPECT_EQ(manifest.at("engine_version"), engine_version());
  EXPECT_TRUE(fs::exists(a.dir / "samples.csv"));
  EXPECT_TRUE(fs::exists(a.dir / "series" / "error.per_round.csv"));

  const auto& m = a.metrics.at("metrics");
  EXPECT_EQ(m.at("error.per_round").at("values").size(), 2u);
  EXPECT_TRUE(m.at("error.final_round").at("value").is_number());
  EXPECT_TRUE(m.at("ood.conf_diff.include_closed_wrong.final_round.auroc").at("value").is_number());
  EXPECT_EQ(m.at("grad_sim.s").at("values").size(), 4u);
  EXPECT_EQ(m.at("run.steps").at("value").get<int>(), 2 * 15 * 4);
}

TEST(Adapt, ClosedSetSingleRound) {
  json t = small_tree();
  t["scenario"]["rounds"] = 1;
  t["scenario"]["open_set"] = {{"mode", "off"}};
  t["output"] = {{"write_samples", false}};
  const auto cfg = resolve_config(t);
  const auto b = cmd_adapt(cfg, fresh_dir("closed"), "", small_source());
  const auto& m = b.metrics.at("metrics");
  EXPECT_TRUE(m.at("error.first_round").at("value").is_number());
  EXPECT_EQ(m.at("error.first_round"), m.at("error.final_round"));
  // No open samples: exclude-mode separation is undefined, not zero.
  EXPECT_TRUE(m.at("ood.msp.exclude_closed_wrong.pooled.auroc").at("value").is_null());
  EXPECT_FALSE(fs::exists(b.dir / "samples.csv"));
  // Without an input file the effective tree is stored as the config snapshot.
  EXPECT_EQ(slurp(b.dir / "config.json"), slurp(b.dir / "effective_config.json"));
}

TEST(Sweep, SingleCellMatchesAdapt) {
  json t = small_tree();
  t["sweep"] = {{"axis", "learning_rate"}, {"values", json::array({5e-3})}, {"strategies", {"conf_diff"}}};
  const auto cfg = resolve_config(t);
  const auto dir = fresh_dir("sweep1");
  const auto r = cmd_sweep(cfg, dir, small_source());
  ASSERT_EQ(r.cells.size(), 1u);
  ASSERT_TRUE(r.cells[0].ok) << r.cells[0].message;
  const auto a = cmd_adapt(cfg, fresh_dir("sweep1_adapt"), "", small_source());
  EXPECT_EQ(slurp(r.cells[0].dir / "metrics.json"), slurp(a.dir / "metrics.json"));
  EXPECT_EQ(r.cells[0].final_error, a.metrics.at("metrics").at("error.final_round").at("value").get<double>());
}

TEST(Sweep, AggregateHasStdColumn) {
  json t = small_tree();
  t["scenario"]["rounds"] = 1;
  t["metrics"] = {{"grad_sim", false}, {"ood", false}};
  t["sweep"] = {{"axis", "learning_rate"}, {"values", {1e-3, 1e-4}}, {"strategies", {"all", "conf_diff"}}};
  const auto dir = fresh_dir("sweep2");
  const auto r = cmd_sweep(resolve_config(t), dir, small_source());
  EXPECT_EQ(r.cells.size(), 4u);
  EXPECT_EQ(r.failures(), 0u);
  std::istringstream agg(slurp(dir / "aggregate.csv"));
  std::string header;
  std::getline(agg, header);
  EXPECT_EQ(header, "method,learning_rate=0.001,learning_rate=0.0001,mean,std");
  std::string line;
  int rows = 0;
  while (std::getline(agg, line)) {
    ++rows;
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 4);
    EXPECT_NE(line.back(), ',');
  }
  EXPECT_EQ(rows, 2);
}

TEST(Sweep, EmptyOrUnknownAxisIsInvalid) {
  json t = small_tree();
  t["sweep"] = {{"axis", "learning_rate"}, {"values", json::array()}};
  const auto cfg = resolve_config(t);
  EXPECT_THROW(validate_sweep(cfg), Error);
  EXPECT_THROW(cmd_sweep(cfg, fresh_dir("sweep_empty"), small_source()), Error);
  t["sweep"] = {{"axis", "momentum"}, {"values", json::array({1})}};
  EXPECT_THROW(validate_sweep(resolve_config(t)), Error);
  t["sweep"] = {{"axis", "strategy"}, {"values", {"all", "bogus"}}};
  EXPECT_THROW(validate_sweep(resolve_config(t)), Error);
}

class Report : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    json t = small_tree();
    t["scenario"]["rounds"] = 1;
    t["metrics"] = {{"grad_sim", false}};
    cmd_adapt(resolve_config(t), fresh_dir("rep_a"), "", small_source());
    t["adapt"] = {{"strategy", "all"}};
    cmd_adapt(resolve_config(t), fresh_dir("rep_b"), "", small_source());
  }
  static fs::path bundle(const char* name) { return fs::temp_directory_path() / (std::string("tta_harness_") + name); }
};

TEST_F(Report, SummaryAndCsvs) {
  std::ostringstream one;
  cmd_report({bundle("rep_a")}, fresh_dir("rep_out1"), one);
  const auto manifest = json::parse(slurp(bundle("rep_a") / "bundle.json"));
  EXPECT_NE(one.str().find(manifest.at("config_hash").get<std::string>()), std::string::npos);
  EXPECT_NE(one.str().find("final-round error"), std::string::npos);

  std::ostringstream two;
  const auto out = fresh_dir("rep_out2");
  cmd_report({bundle("rep_a"), bundle("rep_b")}, out, two);
  EXPECT_NE(two.str().find("d(1-0)"), std::string::npos);
  std::string header;
  std::istringstream curves(slurp(out / "error_curves.csv"));
  std::getline(curves, header);
  EXPECT_EQ(header, "round,tta_harness_rep_a,tta_harness_rep_b");
  EXPECT_TRUE(fs::exists(out / "ood.csv"));
  EXPECT_TRUE(fs::exists(out / "selection.csv"));
}

TEST_F(Report, CorruptedJsonNamesTheFile) {
  const auto dir = fresh_dir("rep_bad");
  fs::copy(bundle("rep_a"), dir, fs::copy_options::recursive);
  std::ofstream(dir / "metrics.json") << "{\"schema\": \"tta.metrics\", ";
  std::ostringstream sink;
  try {
    cmd_report({dir}, fresh_dir("rep_out3"), sink);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find((dir / "metrics.json").string()), std::string::npos) << e.what();
  }
}

TEST_F(Report, SchemaVersionMismatch) {
  const auto dir = fresh_dir("rep_v2");
  fs::copy(bundle("rep_a"), dir, fs::copy_options::recursive);
  auto doc = json::parse(slurp(dir / "metrics.json"));
  doc["version"] = 2;
  std::ofstream(dir / "metrics.json") << doc.dump();
  std::ostringstream sink;
  EXPECT_THROW(cmd_report({dir}, fresh_dir("rep_out4"), sink), Error);
}

TEST(Cli, ExitCodes) {
  const auto cfg_path = fs::temp_directory_path() / "tta_harness_cli.json";
  std::ofstream(cfg_path) << small_tree().dump(2);
  const std::string cfg = "--config " + cfg_path.string();
  const auto pre = fresh_dir("cli_pre");
  const auto out = fresh_dir("cli_adapt");

  EXPECT_EQ(run_cli("pretrain " + cfg + " --seed 3 --out " + pre.string()), 0);
  EXPECT_TRUE(fs::exists(pre / "checkpoint.bin"));
  EXPECT_EQ(run_cli("adapt " + cfg + " --set scenario.rounds=1 --set checkpoint=" + (pre / "checkpoint.bin").string() +
                    " --out " + out.string()),
            0);
  EXPECT_EQ(json::parse(slurp(out / "effective_config.json")).at("scenario").at("rounds"), 1);
  EXPECT_EQ(run_cli("report " + out.string() + " --out " + fresh_dir("cli_report").string()), 0);

  EXPECT_EQ(run_cli("adapt " + cfg + " --set adapt.strategy=bogus"), 2);
  EXPECT_EQ(run_cli("adapt " + cfg + " --set scenario.rounds=0"), 2);
  EXPECT_EQ(run_cli("adapt " + cfg + " --set unknown.key=1"), 2);
  EXPECT_EQ(run_cli("adapt --config /nonexistent.json"), 2);
  EXPECT_EQ(run_cli("sweep " + cfg + " --set sweep.values=[]"), 2);
  EXPECT_EQ(run_cli("frobnicate"), 2);
  EXPECT_EQ(run_cli("adapt " + cfg + " --seed notanumber"), 2);
  EXPECT_EQ(run_cli("report " + fresh_dir("cli_missing").string()), 1);
}
