#pragma once

// Synthetic source data, feature-space corruptions, and the deterministic
// continual test streams (optionally contaminated with open-set samples) that
// adaptation runs consume.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "tta/nn.hpp"

namespace tta {

// Labels in [0, C) are closed-set classes; label C marks an open-set sample.
struct LabeledPool {
  Matrix features;
  std::vector<int> labels;
  int num_classes = 0;

  std::size_t size() const { return labels.size(); }
};

struct LabeledBatch {
  Matrix features;
  std::vector<int> labels;
  std::vector<bool> open_flags;
  int domain_id = 0;
  int round_id = 0;
  bool short_batch = false;

  std::size_t size() const { return labels.size(); }
  // open_flags[i] <=> labels[i] == num_classes; closed labels in range.
  void validate(int num_classes) const;
};

struct SyntheticSourceSpec {
  int num_classes = 10;
  int feature_dim = 32;
  std::vector<Vector> class_means;
  double class_cov_scale = 1.0;  // isotropic standard deviation
  int samples_per_class = 300;
  double test_fraction = 0.2;    // trailing share of each class held out
  std::uint64_t seed = 0;

  void validate() const;
};

// Class means drawn as Gaussian directions rescaled to `radius`.
std::vector<Vector> random_class_means(int num_classes, int feature_dim, double radius,
                                       std::uint64_t seed);

struct SourceSplit {
  LabeledPool train;
  LabeledPool test;
};

SourceSplit generate_source(const SyntheticSourceSpec& spec);

struct PretrainOptions {
  int epochs = 20;
  double learning_rate = 1e-2;
  int batch_size = 128;
  std::uint64_t seed = 0;
  double bn_momentum = 0.1;
};

// Cross-entropy training of every parameter with batch statistics, followed by
// running statistics tracked as an exponential moving average. The returned
// model is in SourceStats mode. With zero epochs only the statistics pass
// runs.
SmallClassifier pretrain_source(SmallClassifier model, const LabeledPool& train,
                                const PretrainOptions& options);

double accuracy(const SmallClassifier& model, const LabeledPool& pool);

enum class CorruptionFamily { kGaussianNoise, kFeatureScale, kRotation2DPairs, kMeanShift };

const char* to_string(CorruptionFamily family);
CorruptionFamily parse_corruption_family(const std::string& name);

// `magnitude` is the severity-5 strength: noise sigma, scale factor, rotation
// angle in radians, or the multiplier of `delta`. Lower severities shrink it
// linearly by severity/5 (geometrically for the scale factor).
struct CorruptionOp {
  CorruptionFamily family = CorruptionFamily::kGaussianNoise;
  double magnitude = 1.0;
  Vector delta;  // MeanShift direction
  int severity = 5;

  void validate(int feature_dim) const;
  double effective() const;
  void apply(Matrix& features, std::mt19937_64& rng) const;
};

// A fixed 15-domain sequence cycling the four families at severity 5.
std::vector<CorruptionOp> default_corruption_sequence(int feature_dim, std::uint64_t seed);

struct OpenSetOff {};
struct OpenSetMixed {
  std::vector<Vector> open_class_means;
  double cov_scale = 0.0;  // isotropic sd of open clusters; 0 = source class_cov_scale
};
using OpenSetMode = std::variant<OpenSetOff, OpenSetMixed>;

// Open-set cluster centres reflected through the origin and pushed outward.
std::vector<Vector> mirrored_open_means(const std::vector<Vector>& class_means, double scale);

struct ScenarioSpec {
  SyntheticSourceSpec source;
  std::vector<CorruptionOp> corruption_sequence;
  int rounds = 50;
  OpenSetMode open_set = OpenSetOff{};
  int batch_size = 200;
  std::uint64_t seed = 0;

  void validate() const;
  bool mixed() const { return std::holds_alternative<OpenSetMixed>(open_set); }
};

class BatchSource {
 public:
  virtual ~BatchSource() = default;
  virtual std::size_t size() const = 0;
  virtual LabeledBatch at(std::size_t index) const = 0;
};

class VectorBatchSource final : public BatchSource {
 public:
  explicit VectorBatchSource(std::vector<LabeledBatch> batches) : batches_(std::move(batches)) {}
  std::size_t size() const override { return batches_.size(); }
  LabeledBatch at(std::size_t index) const override { return batches_.at(index); }

 private:
  std::vector<LabeledBatch> batches_;
};

// Batch i is a pure function of (spec, i). Each domain corrupts the held-out
// source test pool once (the corrupted pool is reused every round, only the
// visiting order is reshuffled). In Mixed mode every full batch carries
// ceil(n/2) closed and floor(n/2) open samples under the same corruption.
class ScenarioStream final : public BatchSource {
 public:
  explicit ScenarioStream(ScenarioSpec spec);

  std::size_t size() const override;
  LabeledBatch at(std::size_t index) const override;

  const ScenarioSpec& spec() const { return spec_; }
  std::size_t batches_per_round() const { return batches_per_domain_ * spec_.corruption_sequence.size(); }
  std::size_t batches_per_domain() const { return batches_per_domain_; }
  // Concatenation of every batch of one round; used for snapshot analyses.
  std::vector<LabeledBatch> round_batches(int round) const;

 private:
  ScenarioSpec spec_;
  int closed_per_batch_ = 0;
  int open_per_batch_ = 0;
  std::size_t batches_per_domain_ = 0;
  std::vector<Matrix> closed_domains_;
  std::vector<Matrix> open_domains_;
  std::vector<int> closed_labels_;
};

std::unique_ptr<ScenarioStream> make_stream(const ScenarioSpec& spec);

// CSV: header "d0,d1,...,d{D-1},label", one sample per row.
// Binary pool, little-endian:
//   "TTAPOOL\0", u8 version, u64 n, u32 D, u32 C,
//   f64[n*D] features (row-major), i32[n] labels
struct TabularFormat {
  enum class Kind { kCsv, kBinary } kind = Kind::kCsv;
  int num_classes = 0;
  bool allow_open = false;  // accept label == num_classes as open-set
};

inline constexpr std::uint8_t kPoolVersion = 1;

LabeledPool load_tabular(const std::filesystem::path& path, const TabularFormat& format);
void save_pool_binary(const LabeledPool& pool, const std::filesystem::path& path);
void save_pool_csv(const LabeledPool& pool, const std::filesystem::path& path);

}  // namespace tta
