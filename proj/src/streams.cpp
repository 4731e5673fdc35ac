#include "tta/streams.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "tta/binary_io.hpp"
#include "tta/error.hpp"
#include "tta/optim.hpp"

namespace tta {

namespace {

// Independent generator for each (seed, purpose, a, b) coordinate so that any
// stream position can be regenerated without replaying earlier ones.
std::mt19937_64 keyed_rng(std::uint64_t seed, std::uint32_t purpose, std::uint32_t a = 0,
                          std::uint32_t b = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    purpose, a, b};
  return std::mt19937_64(seq);
}

enum Purpose : std::uint32_t {
  kMeans = 1,
  kSource = 2,
  kClosedCorruption = 3,
  kOpenPool = 4,
  kOpenCorruption = 5,
  kClosedOrder = 6,
  kOpenOrder = 7,
  kBatchOrder = 8,
  kDefaultSequence = 9,
  kPretrainOrder = 10,
};

std::vector<std::size_t> permutation(std::size_t n, std::mt19937_64 rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::shuffle(idx.begin(), idx.end(), rng);
  return idx;
}

void sample_gaussian_rows(Matrix& out, Eigen::Index row, const Vector& mean, double sd,
                          std::mt19937_64& rng) {
  std::normal_distribution<double> noise(0.0, sd);
  for (Eigen::Index c = 0; c < mean.size(); ++c) out(row, c) = mean(c) + noise(rng);
}

}  // namespace

void LabeledBatch::validate(int num_classes) const {
  require(static_cast<std::size_t>(features.rows()) == labels.size() &&
              labels.size() == open_flags.size(),
          ErrorCode::kDimensionMismatch, "batch features, labels and open flags disagree in length");
  for (std::size_t i = 0; i < labels.size(); ++i) {
    require(labels[i] >= 0 && labels[i] <= num_classes, ErrorCode::kInvalidArgument,
            "batch label out of range");
    require(open_flags[i] == (labels[i] == num_classes), ErrorCode::kInvalidArgument,
            "open flag inconsistent with label");
  }
}

void SyntheticSourceSpec::validate() const {
  require(num_classes >= 2, ErrorCode::kInvalidArgument, "source needs at least two classes");
  require(feature_dim >= 1, ErrorCode::kInvalidArgument, "feature_dim must be positive");
  require(class_cov_scale > 0.0 && std::isfinite(class_cov_scale), ErrorCode::kInvalidArgument,
          "class_cov_scale must be positive");
  require(samples_per_class >= 0, ErrorCode::kInvalidArgument, "samples_per_class must be >= 0");
  require(test_fraction >= 0.0 && test_fraction <= 1.0, ErrorCode::kInvalidArgument,
          "test_fraction must lie in [0, 1]");
  require(class_means.size() == static_cast<std::size_t>(num_classes), ErrorCode::kInvalidArgument,
          "need one mean per class");
  for (std::size_t a = 0; a < class_means.size(); ++a) {
    require(class_means[a].size() == feature_dim && class_means[a].allFinite(),
            ErrorCode::kInvalidArgument, "class mean has the wrong dimension or is non-finite");
    for (std::size_t b = 0; b < a; ++b)
      require(class_means[a] != class_means[b], ErrorCode::kInvalidArgument,
              "class means must be pairwise distinct");
  }
}

std::vector<Vector> random_class_means(int num_classes, int feature_dim, double radius,
                                       std::uint64_t seed) {
  auto rng = keyed_rng(seed, kMeans);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Vector> means;
  for (int k = 0; k < num_classes; ++k) {
    Vector m(feature_dim);
    for (int d = 0; d < feature_dim; ++d) m(d) = normal(rng);
    means.push_back(m * (radius / m.norm()));
  }
  return means;
}

SourceSplit generate_source(const SyntheticSourceSpec& spec) {
  spec.validate();
  const int n_test = static_cast<int>(std::lround(spec.samples_per_class * spec.test_fraction));
  const int n_train = spec.samples_per_class - n_test;
  SourceSplit split;
  split.train.num_classes = split.test.num_classes = spec.num_classes;
  split.train.features.resize(static_cast<Eigen::Index>(n_train) * spec.num_classes, spec.feature_dim);
  split.test.features.resize(static_cast<Eigen::Index>(n_test) * spec.num_classes, spec.feature_dim);
  auto rng = keyed_rng(spec.seed, kSource);
  Eigen::Index tr = 0;
  Eigen::Index te = 0;
  for (int k = 0; k < spec.num_classes; ++k) {
    for (int i = 0; i < spec.samples_per_class; ++i) {
      if (i < n_train) {
        sample_gaussian_rows(split.train.features, tr++, spec.class_means[k], spec.class_cov_scale, rng);
        split.train.labels.push_back(k);
      } else {
        sample_gaussian_rows(split.test.features, te++, spec.class_means[k], spec.class_cov_scale, rng);
        split.test.labels.push_back(k);
      }
    }
  }
  return split;
}

SmallClassifier pretrain_source(SmallClassifier model, const LabeledPool& train,
                                const PretrainOptions& options) {
  require(train.size() > 0, ErrorCode::kInvalidArgument, "pretraining needs a nonempty train set");
  require(options.epochs >= 0 && options.batch_size >= 2 && options.learning_rate > 0.0,
          ErrorCode::kInvalidArgument, "invalid pretraining options");
  require(train.features.cols() == model.input_dim(), ErrorCode::kDimensionMismatch,
          "train features do not match model input dimension");
  for (int label : train.labels)
    require(label >= 0 && label < model.num_classes(), ErrorCode::kInvalidArgument,
            "pretraining labels must be closed-set classes");

  model.set_stats_mode(StatsMode::kTestBatchStats);
  const std::size_t n = train.size();
  const auto bs = static_cast<std::size_t>(options.batch_size);
  Optimizer optimizer(Adam{}, static_cast<Eigen::Index>(model.param_count(ParamScope::kAllParams)));

  auto batch_rows = [&](const std::vector<std::size_t>& order, std::size_t begin, std::size_t end) {
    Matrix x(static_cast<Eigen::Index>(end - begin), train.features.cols());
    for (std::size_t i = begin; i < end; ++i) x.row(static_cast<Eigen::Index>(i - begin)) = train.features.row(static_cast<Eigen::Index>(order[i]));
    return x;
  };
  auto update_running = [&](const ForwardTrace& trace) {
    const double m = options.bn_momentum;
    const double count = static_cast<double>(trace.batch_size);
    for (std::size_t k = 0; k < model.num_layers(); ++k) {
      auto& bn = model.layer(k).bn;
      const auto& cache = trace.layers[k];
      bn.running_mean = (1.0 - m) * bn.running_mean + m * cache.batch_mean;
      bn.running_var = (1.0 - m) * bn.running_var + m * cache.batch_var * (count / (count - 1.0));
    }
  };

  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    const auto order = permutation(n, keyed_rng(options.seed, kPretrainOrder, static_cast<std::uint32_t>(epoch)));
    for (std::size_t begin = 0; begin + 1 < n; begin += bs) {
      const std::size_t end = std::min(n, begin + bs);
      if (end - begin < 2) break;
      const Matrix x = batch_rows(order, begin, end);
      auto fwd = forward(model, x);
      Matrix grad = softmax(fwd.logits);
      double loss = 0.0;
      for (std::size_t i = begin; i < end; ++i) {
        const auto r = static_cast<Eigen::Index>(i - begin);
        const int y = train.labels[order[i]];
        loss -= std::log(std::max(grad(r, y), kLogClamp));
        grad(r, y) -= 1.0;
      }
      const double rows = static_cast<double>(end - begin);
      loss /= rows;
      grad /= rows;
      require(std::isfinite(loss), ErrorCode::kNumerical,
              "pretraining diverged (non-finite loss) in epoch " + std::to_string(epoch));
      update_running(fwd.trace);
      const Vector g = backward(model, fwd.trace, grad, ParamScope::kAllParams).flatten();
      model.set_flat_params(ParamScope::kAllParams,
                            optimizer.step(model.flat_params(ParamScope::kAllParams), g, options.learning_rate));
    }
  }
  if (options.epochs == 0) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t begin = 0; begin + 1 < n; begin += bs) {
      const std::size_t end = std::min(n, begin + bs);
      if (end - begin < 2) break;
      update_running(forward(model, batch_rows(order, begin, end)).trace);
    }
  }
  model.set_stats_mode(StatsMode::kSourceStats);
  model.validate();
  return model;
}

double accuracy(const SmallClassifier& model, const LabeledPool& pool) {
  require(pool.size() > 0, ErrorCode::kInvalidArgument, "accuracy of an empty pool");
  const auto pred = argmax_rows(forward(model, pool.features).logits);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pool.size(); ++i) hits += pred[i] == pool.labels[i];
  return static_cast<double>(hits) / static_cast<double>(pool.size());
}

const char* to_string(CorruptionFamily family) {
  switch (family) {
    case CorruptionFamily::kGaussianNoise: return "gaussian_noise";
    case CorruptionFamily::kFeatureScale: return "feature_scale";
    case CorruptionFamily::kRotation2DPairs: return "rotation_2d_pairs";
    case CorruptionFamily::kMeanShift: return "mean_shift";
  }
  return "?";
}

CorruptionFamily parse_corruption_family(const std::string& name) {
  for (auto f : {CorruptionFamily::kGaussianNoise, CorruptionFamily::kFeatureScale,
                 CorruptionFamily::kRotation2DPairs, CorruptionFamily::kMeanShift})
    if (name == to_string(f)) return f;
  fail(ErrorCode::kInvalidArgument, "unknown corruption family '" + name + "'");
}

void CorruptionOp::validate(int feature_dim) const {
  require(severity >= 1 && severity <= 5, ErrorCode::kInvalidArgument, "severity must be in 1..5");
  require(std::isfinite(magnitude), ErrorCode::kInvalidArgument, "corruption magnitude must be finite");
  switch (family) {
    case CorruptionFamily::kGaussianNoise:
      require(magnitude >= 0.0, ErrorCode::kInvalidArgument, "noise sigma must be >= 0");
      break;
    case CorruptionFamily::kFeatureScale:
      require(magnitude > 0.0, ErrorCode::kInvalidArgument, "scale factor must be positive");
      break;
    case CorruptionFamily::kRotation2DPairs:
      break;
    case CorruptionFamily::kMeanShift:
      require(delta.size() == feature_dim && delta.allFinite(), ErrorCode::kInvalidArgument,
              "mean-shift delta must match feature_dim");
      break;
  }
}

double CorruptionOp::effective() const {
  const double s = severity / 5.0;
  return family == CorruptionFamily::kFeatureScale ? std::pow(magnitude, s) : magnitude * s;
}

void CorruptionOp::apply(Matrix& features, std::mt19937_64& rng) const {
  const double e = effective();
  switch (family) {
    case CorruptionFamily::kGaussianNoise: {
      std::normal_distribution<double> noise(0.0, 1.0);
      for (Eigen::Index r = 0; r < features.rows(); ++r)
        for (Eigen::Index c = 0; c < features.cols(); ++c) features(r, c) += e * noise(rng);
      break;
    }
    case CorruptionFamily::kFeatureScale:
      features *= e;
      break;
    case CorruptionFamily::kRotation2DPairs: {
      const double cs = std::cos(e);
      const double sn = std::sin(e);
      for (Eigen::Index c = 0; c + 1 < features.cols(); c += 2) {
        const Vector a = features.col(c);
        const Vector b = features.col(c + 1);
        features.col(c) = cs * a - sn * b;
        features.col(c + 1) = sn * a + cs * b;
      }
      break;
    }
    case CorruptionFamily::kMeanShift:
      features.rowwise() += (e * delta).transpose();
      break;
  }
}

std::vector<CorruptionOp> default_corruption_sequence(int feature_dim, std::uint64_t seed) {
  // Strength levels per family; each of the 15 domains picks the next level
  // of its family so no two domains coincide.
  constexpr std::array<double, 4> kNoise = {1.6, 1.92, 2.24, 2.56};
  constexpr std::array<double, 4> kScale = {2.0, 0.5, 3.0, 0.35};
  constexpr std::array<double, 4> kAngle = {0.35, -0.45, 0.55, -0.3};
  constexpr std::array<double, 4> kShift = {2.0, 3.0, 2.5, 3.5};
  auto rng = keyed_rng(seed, kDefaultSequence);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<CorruptionOp> ops;
  for (int i = 0; i < 15; ++i) {
    CorruptionOp op;
    op.severity = 5;
    const int level = i / 4;
    switch (i % 4) {
      case 0:
        op.family = CorruptionFamily::kGaussianNoise;
        op.magnitude = kNoise[level];
        break;
      case 1:
        op.family = CorruptionFamily::kFeatureScale;
        op.magnitude = kScale[level];
        break;
      case 2:
        op.family = CorruptionFamily::kRotation2DPairs;
        op.magnitude = kAngle[level];
        break;
      default: {
        op.family = CorruptionFamily::kMeanShift;
        op.magnitude = kShift[level];
        Vector d(feature_dim);
        for (int k = 0; k < feature_dim; ++k) d(k) = normal(rng);
        op.delta = d / d.norm();
        break;
      }
    }
    ops.push_back(std::move(op));
  }
  return ops;
}

std::vector<Vector> mirrored_open_means(const std::vector<Vector>& class_means, double scale) {
  std::vector<Vector> out;
  out.reserve(class_means.size());
  for (const auto& m : class_means) out.push_back(-scale * m);
  return out;
}

void ScenarioSpec::validate() const {
  source.validate();
  require(rounds >= 1, ErrorCode::kInvalidArgument, "rounds must be >= 1");
  require(!corruption_sequence.empty(), ErrorCode::kInvalidArgument, "corruption sequence is empty");
  require(batch_size >= 2, ErrorCode::kInvalidArgument, "batch_size must be >= 2");
  for (const auto& op : corruption_sequence) op.validate(source.feature_dim);
  if (const auto* mixed = std::get_if<OpenSetMixed>(&open_set)) {
    require(!mixed->open_class_means.empty(), ErrorCode::kInvalidArgument,
            "mixed open-set mode needs at least one open-set mean");
    for (const auto& m : mixed->open_class_means)
      require(m.size() == source.feature_dim && m.allFinite(), ErrorCode::kInvalidArgument,
              "open-set mean has the wrong dimension");
    require(mixed->cov_scale >= 0.0 && std::isfinite(mixed->cov_scale), ErrorCode::kInvalidArgument,
            "open-set cov_scale must be >= 0");
  }
}

ScenarioStream::ScenarioStream(ScenarioSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  const auto split = generate_source(spec_.source);
  const Matrix& closed = split.test.features;
  closed_labels_ = split.test.labels;
  const auto pool = static_cast<std::size_t>(closed.rows());
  const int d = spec_.source.feature_dim;

  closed_per_batch_ = spec_.mixed() ? (spec_.batch_size + 1) / 2 : spec_.batch_size;
  open_per_batch_ = spec_.batch_size - closed_per_batch_;
  batches_per_domain_ = (pool + closed_per_batch_ - 1) / closed_per_batch_;

  Matrix open;
  if (const auto* mixed = std::get_if<OpenSetMixed>(&spec_.open_set)) {
    open.resize(static_cast<Eigen::Index>(pool), d);
    auto rng = keyed_rng(spec_.seed, kOpenPool);
    for (std::size_t i = 0; i < pool; ++i)
      sample_gaussian_rows(open, static_cast<Eigen::Index>(i),
                           mixed->open_class_means[i % mixed->open_class_means.size()],
                           mixed->cov_scale > 0.0 ? mixed->cov_scale : spec_.source.class_cov_scale, rng);
  }
  for (std::size_t k = 0; k < spec_.corruption_sequence.size(); ++k) {
    const auto& op = spec_.corruption_sequence[k];
    Matrix c = closed;
    auto rc = keyed_rng(spec_.seed, kClosedCorruption, static_cast<std::uint32_t>(k));
    op.apply(c, rc);
    closed_domains_.push_back(std::move(c));
    if (spec_.mixed()) {
      Matrix o = open;
      auto ro = keyed_rng(spec_.seed, kOpenCorruption, static_cast<std::uint32_t>(k));
      op.apply(o, ro);
      open_domains_.push_back(std::move(o));
    }
  }
}

std::size_t ScenarioStream::size() const {
  return static_cast<std::size_t>(spec_.rounds) * batches_per_round();
}

LabeledBatch ScenarioStream::at(std::size_t index) const {
  require(index < size(), ErrorCode::kInvalidArgument, "stream index out of range");
  const std::size_t per_round = batches_per_round();
  const auto round = static_cast<std::uint32_t>(index / per_round);
  const auto domain = static_cast<std::uint32_t>((index % per_round) / batches_per_domain_);
  const std::size_t b = index % batches_per_domain_;
  const int num_classes = spec_.source.num_classes;

  const Matrix& closed = closed_domains_[domain];
  const auto pool = static_cast<std::size_t>(closed.rows());
  const auto closed_order = permutation(pool, keyed_rng(spec_.seed, kClosedOrder, round, domain));
  const std::size_t c_begin = b * static_cast<std::size_t>(closed_per_batch_);
  const std::size_t c_end = std::min(pool, c_begin + static_cast<std::size_t>(closed_per_batch_));
  const std::size_t n_closed = c_end - c_begin;
  std::size_t n_open = 0;
  if (spec_.mixed()) n_open = std::min<std::size_t>(static_cast<std::size_t>(open_per_batch_), n_closed);

  // Rows: closed samples then open samples, then a seeded shuffle.
  std::vector<std::pair<bool, std::size_t>> rows;
  for (std::size_t i = c_begin; i < c_end; ++i) rows.emplace_back(false, closed_order[i]);
  if (n_open > 0) {
    const auto open_order = permutation(pool, keyed_rng(spec_.seed, kOpenOrder, round, domain));
    const std::size_t o_begin = b * static_cast<std::size_t>(open_per_batch_);
    for (std::size_t i = 0; i < n_open; ++i) rows.emplace_back(true, open_order[(o_begin + i) % pool]);
  }
  auto shuffle_rng = keyed_rng(spec_.seed, kBatchOrder, round, static_cast<std::uint32_t>(domain * 100000 + b));
  std::shuffle(rows.begin(), rows.end(), shuffle_rng);

  LabeledBatch batch;
  batch.domain_id = static_cast<int>(domain);
  batch.round_id = static_cast<int>(round);
  batch.features.resize(static_cast<Eigen::Index>(rows.size()), spec_.source.feature_dim);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto [is_open, src] = rows[i];
    const Matrix& from = is_open ? open_domains_[domain] : closed;
    batch.features.row(static_cast<Eigen::Index>(i)) = from.row(static_cast<Eigen::Index>(src));
    batch.labels.push_back(is_open ? num_classes : closed_labels_[src]);
    batch.open_flags.push_back(is_open);
  }
  batch.short_batch = rows.size() < static_cast<std::size_t>(spec_.batch_size);
  return batch;
}

std::vector<LabeledBatch> ScenarioStream::round_batches(int round) const {
  require(round >= 0 && round < spec_.rounds, ErrorCode::kInvalidArgument, "round out of range");
  std::vector<LabeledBatch> out;
  const std::size_t per_round = batches_per_round();
  for (std::size_t i = 0; i < per_round; ++i) out.push_back(at(static_cast<std::size_t>(round) * per_round + i));
  return out;
}

std::unique_ptr<ScenarioStream> make_stream(const ScenarioSpec& spec) {
  return std::make_unique<ScenarioStream>(spec);
}

namespace {

constexpr std::array<char, 8> kPoolMagic = {'T', 'T', 'A', 'P', 'O', 'O', 'L', '\0'};

void check_label(int label, const TabularFormat& format, const std::string& where) {
  const int upper = format.allow_open ? format.num_classes : format.num_classes - 1;
  require(label >= 0 && label <= upper, ErrorCode::kFormat,
          where + ": label " + std::to_string(label) + " outside [0, " + std::to_string(upper) + "]");
}

LabeledPool load_csv(const std::filesystem::path& path, const TabularFormat& format) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::kIo, "cannot open " + path.string());
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorCode::kFormat,
          path.string() + ": missing header row");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  require(header.size() >= 2 && header.back() == "label", ErrorCode::kFormat,
          path.string() + ":1: header must be d0,...,dK,label");
  const std::size_t dim = header.size() - 1;
  for (std::size_t k = 0; k < dim; ++k)
    require(header[k] == "d" + std::to_string(k), ErrorCode::kFormat,
            path.string() + ":1: expected column d" + std::to_string(k) + ", got '" + header[k] + "'");

  std::vector<double> values;
  LabeledPool pool;
  pool.num_classes = format.num_classes;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    require(cells.size() == dim + 1, ErrorCode::kFormat,
            where + ": expected " + std::to_string(dim + 1) + " fields, got " + std::to_string(cells.size()));
    for (std::size_t k = 0; k < dim; ++k) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(cells[k], &used);
      } catch (const std::exception&) {
        used = 0;
      }
      require(used == cells[k].size() && used > 0 && std::isfinite(v), ErrorCode::kFormat,
              where + ": bad number '" + cells[k] + "'");
      values.push_back(v);
    }
    std::size_t used = 0;
    int label = -1;
    try {
      label = std::stoi(cells[dim], &used);
    } catch (const std::exception&) {
      used = 0;
    }
    require(used == cells[dim].size() && used > 0, ErrorCode::kFormat,
            where + ": bad label '" + cells[dim] + "'");
    check_label(label, format, where);
    pool.labels.push_back(label);
  }
  pool.features = Eigen::Map<Matrix>(values.data(), static_cast<Eigen::Index>(pool.labels.size()),
                                     static_cast<Eigen::Index>(dim));
  return pool;
}

LabeledPool load_binary(const std::filesystem::path& path, const TabularFormat& format) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::kIo, "cannot open " + path.string());
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  require(static_cast<bool>(in) && magic == kPoolMagic, ErrorCode::kFormat,
          path.string() + ": not a pool file (bad magic)");
  const auto version = detail::get<std::uint8_t>(in, "pool version");
  require(version == kPoolVersion, ErrorCode::kFormat,
          path.string() + ": unsupported pool version " + std::to_string(version));
  const auto n = detail::get<std::uint64_t>(in, "n");
  const auto d = detail::get<std::uint32_t>(in, "D");
  const auto c = detail::get<std::uint32_t>(in, "C");
  require(static_cast<int>(c) == format.num_classes, ErrorCode::kFormat,
          path.string() + ": file declares C=" + std::to_string(c) + ", expected " +
              std::to_string(format.num_classes));
  require(d > 0 && n < (1ULL << 32), ErrorCode::kFormat, path.string() + ": implausible shape");
  LabeledPool pool;
  pool.num_classes = format.num_classes;
  pool.features.resize(static_cast<Eigen::Index>(n), d);
  detail::get_array(in, pool.features.data(), static_cast<std::size_t>(n) * d, "features");
  for (std::uint64_t i = 0; i < n; ++i) {
    const auto label = detail::get<std::int32_t>(in, "label");
    check_label(label, format, path.string() + ": record " + std::to_string(i));
    pool.labels.push_back(label);
  }
  require(pool.features.allFinite(), ErrorCode::kFormat, path.string() + ": non-finite feature");
  return pool;
}

}  // namespace

LabeledPool load_tabular(const std::filesystem::path& path, const TabularFormat& format) {
  require(format.num_classes >= 2, ErrorCode::kInvalidArgument, "format must declare C >= 2");
  return format.kind == TabularFormat::Kind::kCsv ? load_csv(path, format) : load_binary(path, format);
}

void save_pool_binary(const LabeledPool& pool, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  out.write(kPoolMagic.data(), kPoolMagic.size());
  detail::put<std::uint8_t>(out, kPoolVersion);
  detail::put<std::uint64_t>(out, pool.size());
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(pool.features.cols()));
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(pool.num_classes));
  detail::put_array(out, pool.features.data(), static_cast<std::size_t>(pool.features.size()));
  for (int label : pool.labels) detail::put<std::int32_t>(out, label);
  require(static_cast<bool>(out), ErrorCode::kIo, "failed writing " + path.string());
}

void save_pool_csv(const LabeledPool& pool, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  require(static_cast<bool>(out), ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  out.precision(17);
  for (Eigen::Index k = 0; k < pool.features.cols(); ++k) out << 'd' << k << ',';
  out << "label\n";
  for (std::size_t i = 0; i < pool.size(); ++i) {
    for (Eigen::Index k = 0; k < pool.features.cols(); ++k) out << pool.features(static_cast<Eigen::Index>(i), k) << ',';
    out << pool.labels[i] << '\n';
  }
}

}  // namespace tta
