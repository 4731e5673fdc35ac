#include "tta/config.hpp"

#include <cmath>

#include "tta/error.hpp"

namespace tta {

using nlohmann::json;

namespace {

[[noreturn]] void invalid(const std::string& msg) { fail(ErrorCode::kInvalidArgument, msg); }

void merge_into(json& base, const json& patch, const std::string& path) {
  if (!patch.is_object()) invalid("config at '" + (path.empty() ? "<root>" : path) + "' must be an object");
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    const std::string key = path.empty() ? it.key() : path + "." + it.key();
    if (!base.contains(it.key())) invalid("unknown config key '" + key + "'");
    json& slot = base[it.key()];
    if (slot.is_object())
      merge_into(slot, it.value(), key);
    else
      slot = it.value();
  }
}

const json& at(const json& tree, const std::string& dotted) {
  const json* node = &tree;
  std::size_t start = 0;
  for (;;) {
    const auto dot = dotted.find('.', start);
    node = &node->at(dotted.substr(start, dot - start));
    if (dot == std::string::npos) return *node;
    start = dot + 1;
  }
}

template <typename T>
T get(const json& tree, const std::string& key) {
  try {
    return at(tree, key).get<T>();
  } catch (const json::exception&) {
    invalid("config key '" + key + "' has the wrong type");
  }
}

double get_real(const json& tree, const std::string& key) {
  const auto v = get<double>(tree, key);
  if (!std::isfinite(v)) invalid("config key '" + key + "' must be finite");
  return v;
}

int get_int(const json& tree, const std::string& key) {
  const json& v = at(tree, key);
  if (!v.is_number_integer()) invalid("config key '" + key + "' must be an integer");
  return v.get<int>();
}

ParamScope parse_scope(const std::string& s) {
  if (s == "affine_only") return ParamScope::kAffineOnly;
  if (s == "all_params") return ParamScope::kAllParams;
  invalid("adapt.scope must be 'affine_only' or 'all_params', got '" + s + "'");
}

std::vector<CorruptionOp> parse_corruptions(const json& node, int feature_dim, std::uint64_t seed) {
  if (node.is_string()) {
    if (node.get<std::string>() != "default") invalid("scenario.corruptions must be \"default\" or a list");
    return default_corruption_sequence(feature_dim, seed);
  }
  if (!node.is_array() || node.empty()) invalid("scenario.corruptions must be a nonempty list");
  std::vector<CorruptionOp> ops;
  for (const auto& item : node) {
    if (!item.is_object()) invalid("each corruption must be an object");
    for (auto it = item.begin(); it != item.end(); ++it)
      if (it.key() != "family" && it.key() != "magnitude" && it.key() != "severity" && it.key() != "delta")
        invalid("unknown corruption key '" + it.key() + "'");
    CorruptionOp op;
    op.family = parse_corruption_family(get<std::string>(item, "family"));
    op.magnitude = get_real(item, "magnitude");
    if (item.contains("severity")) op.severity = get_int(item, "severity");
    if (item.contains("delta")) {
      const auto d = get<std::vector<double>>(item, "delta");
      op.delta = Eigen::Map<const Vector>(d.data(), static_cast<Eigen::Index>(d.size()));
    }
    op.validate(feature_dim);
    ops.push_back(std::move(op));
  }
  return ops;
}

}  // namespace

json default_config_tree() {
  return json{
      {"seed", 0},
      {"source",
       {{"num_classes", 10},
        {"feature_dim", 32},
        {"class_radius", 4.0},
        {"class_cov_scale", 1.0},
        {"samples_per_class", 500},
        {"test_fraction", 0.2}}},
      {"model", {{"hidden", {64, 64}}}},
      {"pretrain", {{"epochs", 20}, {"learning_rate", 1e-2}, {"batch_size", 128}, {"bn_momentum", 0.1}}},
      {"scenario",
       {{"rounds", 50},
        {"batch_size", 200},
        {"corruptions", "default"},
        {"open_set", {{"mode", "mixed"}, {"mirror_scale", 2.5}, {"cov_scale", 0.0}}}}},
      {"adapt",
       {{"strategy", "conf_diff"},
        {"confidence_p", 0.9},
        {"entropy_e0", nullptr},
        {"margin", 0.0},
        {"score_space", "softmax"},
        {"scope", "all_params"},
        {"learning_rate", 5e-3},
        {"lambda_max", 0.5},
        {"optimizer", "adam"},
        {"loss", "entropy"},
        {"gce_q", 0.8}}},
      {"metrics", {{"ood", true}, {"confidence_drops", true}, {"grad_sim", true}, {"grad_sim_batches", 10}}},
      {"checkpoint", ""},
      {"output", {{"dir", "out"}, {"write_samples", true}}},
      {"sweep",
       {{"axis", "learning_rate"},
        {"values", {5e-3, 1e-3, 5e-4, 1e-4}},
        {"strategies", {"all", "conf_diff"}}}},
  };
}

void apply_override(json& tree, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) invalid("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, /*allow_exceptions=*/false);
  if (value.is_discarded()) value = text;

  json* node = &tree;
  std::size_t start = 0;
  for (;;) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot - start);
    if (part.empty()) invalid("override key '" + key + "' has an empty segment");
    if (!node->is_object()) invalid("override key '" + key + "' descends into a non-object");
    if (dot == std::string::npos) {
      (*node)[part] = std::move(value);
      return;
    }
    node = &(*node)[part];
    if (node->is_null()) *node = json::object();
    start = dot + 1;
  }
}

json parse_config_text(const std::string& text, const std::string& origin) {
  json tree = json::parse(text, nullptr, /*allow_exceptions=*/false, /*ignore_comments=*/true);
  if (tree.is_discarded()) invalid("config " + origin + " is not valid JSON");
  if (!tree.is_object()) invalid("config " + origin + " must hold a JSON object");
  return tree;
}

SelectionStrategy parse_strategy(const std::string& name, const json& adapt_tree, int num_classes) {
  if (name == "all") return SelectAll{};
  if (name == "confidence_threshold") return ConfidenceThreshold{get_real(adapt_tree, "confidence_p")};
  if (name == "entropy_threshold") {
    const json& e0 = adapt_tree.at("entropy_e0");
    if (e0.is_null()) return EntropyThreshold::eata_default(num_classes);
    return EntropyThreshold{get_real(adapt_tree, "entropy_e0")};
  }
  if (name == "conf_diff") {
    ConfidenceDifference cd;
    cd.margin = get_real(adapt_tree, "margin");
    const auto space = get<std::string>(adapt_tree, "score_space");
    if (space == "softmax")
      cd.score_space = ScoreSpace::kSoftmax;
    else if (space == "logit")
      cd.score_space = ScoreSpace::kLogit;
    else
      invalid("adapt.score_space must be 'softmax' or 'logit'");
    return cd;
  }
  invalid("unknown strategy '" + name +
          "' (expected all, confidence_threshold, entropy_threshold or conf_diff)");
}

std::vector<int> ExperimentConfig::layer_dims() const {
  std::vector<int> dims{source.feature_dim};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(source.num_classes);
  return dims;
}

ExperimentConfig resolve_config(const json& user) {
  ExperimentConfig cfg;
  cfg.tree = default_config_tree();
  merge_into(cfg.tree, user, "");
  const json& t = cfg.tree;

  const json& seed = t.at("seed");
  if (!seed.is_number_integer() || seed.get<long long>() < 0) invalid("seed must be a non-negative integer");
  cfg.seed = seed.get<std::uint64_t>();

  auto& src = cfg.source;
  src.num_classes = get_int(t, "source.num_classes");
  src.feature_dim = get_int(t, "source.feature_dim");
  const double radius = get_real(t, "source.class_radius");
  if (radius <= 0.0) invalid("source.class_radius must be positive");
  if (src.num_classes < 2) invalid("source.num_classes must be at least 2");
  if (src.feature_dim < 1) invalid("source.feature_dim must be positive");
  src.class_cov_scale = get_real(t, "source.class_cov_scale");
  src.samples_per_class = get_int(t, "source.samples_per_class");
  src.test_fraction = get_real(t, "source.test_fraction");
  src.seed = cfg.seed;
  src.class_means = random_class_means(src.num_classes, src.feature_dim, radius, cfg.seed);
  src.validate();

  cfg.hidden = get<std::vector<int>>(t, "model.hidden");
  for (int h : cfg.hidden)
    if (h < 1) invalid("model.hidden widths must be positive");

  cfg.pretrain.epochs = get_int(t, "pretrain.epochs");
  cfg.pretrain.learning_rate = get_real(t, "pretrain.learning_rate");
  cfg.pretrain.batch_size = get_int(t, "pretrain.batch_size");
  cfg.pretrain.bn_momentum = get_real(t, "pretrain.bn_momentum");
  cfg.pretrain.seed = cfg.seed;
  if (cfg.pretrain.epochs < 0) invalid("pretrain.epochs must be >= 0");
  if (cfg.pretrain.learning_rate <= 0.0) invalid("pretrain.learning_rate must be positive");
  if (cfg.pretrain.batch_size < 2) invalid("pretrain.batch_size must be at least 2");
  if (cfg.pretrain.bn_momentum <= 0.0 || cfg.pretrain.bn_momentum > 1.0)
    invalid("pretrain.bn_momentum must lie in (0, 1]");

  auto& sc = cfg.scenario;
  sc.source = src;
  sc.rounds = get_int(t, "scenario.rounds");
  sc.batch_size = get_int(t, "scenario.batch_size");
  sc.seed = cfg.seed;
  sc.corruption_sequence = parse_corruptions(t.at("scenario").at("corruptions"), src.feature_dim, cfg.seed);
  const auto mode = get<std::string>(t, "scenario.open_set.mode");
  if (mode == "off") {
    sc.open_set = OpenSetOff{};
  } else if (mode == "mixed") {
    const double scale = get_real(t, "scenario.open_set.mirror_scale");
    if (scale <= 1.0) invalid("scenario.open_set.mirror_scale must exceed 1 to leave the closed-class hull");
    sc.open_set = OpenSetMixed{mirrored_open_means(src.class_means, scale),
                               get_real(t, "scenario.open_set.cov_scale")};
  } else {
    invalid("scenario.open_set.mode must be 'off' or 'mixed'");
  }
  sc.validate();

  const json& a = t.at("adapt");
  auto& ad = cfg.adapt;
  // Every strategy's parameters are checked so that the sweep axes stay valid.
  for (const char* name : {"all", "confidence_threshold", "entropy_threshold", "conf_diff"})
    validate(parse_strategy(name, a, src.num_classes));
  ad.strategy = parse_strategy(get<std::string>(a, "strategy"), a, src.num_classes);
  ad.scope = parse_scope(get<std::string>(a, "scope"));
  ad.learning_rate = get_real(a, "learning_rate");
  ad.lambda_max = get_real(a, "lambda_max");
  const auto opt = get<std::string>(a, "optimizer");
  if (opt == "adam")
    ad.optimizer = Adam{};
  else if (opt == "sgd")
    ad.optimizer = Sgd{};
  else
    invalid("adapt.optimizer must be 'adam' or 'sgd'");
  const auto loss = get<std::string>(a, "loss");
  if (loss == "entropy")
    ad.loss_kind = SelectedEntropy{};
  else if (loss == "gce")
    ad.loss_kind = Gce{get_real(a, "gce_q")};
  else
    invalid("adapt.loss must be 'entropy' or 'gce'");
  ad.batch_size = sc.batch_size;
  ad.seed = cfg.seed;
  ad.validate();

  cfg.metrics.ood = get<bool>(t, "metrics.ood");
  cfg.metrics.confidence_drops = get<bool>(t, "metrics.confidence_drops");
  cfg.metrics.grad_sim = get<bool>(t, "metrics.grad_sim");
  cfg.metrics.grad_sim_batches = get_int(t, "metrics.grad_sim_batches");
  if (cfg.metrics.grad_sim_batches < 1) invalid("metrics.grad_sim_batches must be positive");

  cfg.checkpoint = get<std::string>(t, "checkpoint");
  if (!cfg.checkpoint.empty() && !std::filesystem::is_regular_file(cfg.checkpoint))
    invalid("checkpoint '" + cfg.checkpoint.string() + "' does not exist");
  cfg.output_dir = get<std::string>(t, "output.dir");
  if (cfg.output_dir.empty()) invalid("output.dir must not be empty");
  cfg.write_samples = get<bool>(t, "output.write_samples");

  cfg.sweep.axis = get<std::string>(t, "sweep.axis");
  cfg.sweep.values = t.at("sweep").at("values");
  cfg.sweep.strategies = get<std::vector<std::string>>(t, "sweep.strategies");
  return cfg;
}

}  // namespace tta
