#include "tta/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <random>
#include <string>

#include "tta/error.hpp"

namespace tta {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid argument";
    case ErrorCode::kDimensionMismatch: return "dimension mismatch";
    case ErrorCode::kNumerical: return "numerical error";
    case ErrorCode::kIo: return "i/o error";
    case ErrorCode::kFormat: return "format error";
  }
  return "error";
}

const char* to_string(ParamScope scope) {
  return scope == ParamScope::kAffineOnly ? "affine" : "all";
}

namespace {

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
  return m.allFinite();
}

template <typename Derived>
void hash_bytes(std::uint64_t& h, const Eigen::DenseBase<Derived>& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      const double v = m(r, c);
      unsigned char bytes[sizeof(double)];
      std::memcpy(bytes, &v, sizeof(double));
      for (unsigned char b : bytes) {
        h ^= b;
        h *= 1099511628211ULL;
      }
    }
  }
}

}  // namespace

SmallClassifier::SmallClassifier(std::vector<LayerBlock> layers) : layers_(std::move(layers)) {
  validate();
}

SmallClassifier SmallClassifier::random(std::span<const int> dims, std::uint64_t seed) {
  require(dims.size() >= 2, ErrorCode::kInvalidArgument,
          "classifier needs at least an input and an output dimension");
  std::mt19937_64 rng(seed);
  std::vector<LayerBlock> layers;
  for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
    const int in = dims[k];
    const int out = dims[k + 1];
    require(in > 0 && out > 0, ErrorCode::kInvalidArgument, "layer dimensions must be positive");
    std::normal_distribution<double> init(0.0, std::sqrt(2.0 / in));
    LayerBlock block;
    block.weight.resize(out, in);
    for (Eigen::Index r = 0; r < out; ++r)
      for (Eigen::Index c = 0; c < in; ++c) block.weight(r, c) = init(rng);
    block.bias = Vector::Zero(out);
    block.bn.running_mean = Vector::Zero(out);
    block.bn.running_var = Vector::Ones(out);
    block.bn.gamma = Vector::Ones(out);
    block.bn.beta = Vector::Zero(out);
    block.activation = (k + 2 == dims.size()) ? Activation::kIdentity : Activation::kReLU;
    layers.push_back(std::move(block));
  }
  SmallClassifier model(std::move(layers));
  require(model.num_classes() >= 2, ErrorCode::kInvalidArgument, "need at least two classes");
  return model;
}

int SmallClassifier::input_dim() const {
  return layers_.empty() ? 0 : layers_.front().in_dim();
}

int SmallClassifier::num_classes() const {
  return layers_.empty() ? 0 : layers_.back().out_dim();
}

void SmallClassifier::set_stats_mode(StatsMode mode) {
  for (auto& layer : layers_) layer.bn.stats_mode = mode;
}

bool SmallClassifier::uses_batch_stats() const {
  return std::any_of(layers_.begin(), layers_.end(), [](const LayerBlock& l) {
    return l.bn.stats_mode == StatsMode::kTestBatchStats;
  });
}

void SmallClassifier::validate() const {
  require(!layers_.empty(), ErrorCode::kInvalidArgument, "classifier has no layers");
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    const auto& l = layers_[k];
    const std::string where = "layer " + std::to_string(k) + ": ";
    require(l.out_dim() > 0 && l.in_dim() > 0, ErrorCode::kDimensionMismatch, where + "empty weight");
    require(l.bias.size() == l.out_dim() && l.bn.gamma.size() == l.out_dim() &&
                l.bn.beta.size() == l.out_dim() && l.bn.running_mean.size() == l.out_dim() &&
                l.bn.running_var.size() == l.out_dim(),
            ErrorCode::kDimensionMismatch, where + "bias/batch-norm sizes disagree with weight rows");
    if (k > 0) {
      require(layers_[k - 1].out_dim() == l.in_dim(), ErrorCode::kDimensionMismatch,
              where + "input dimension does not chain from previous layer");
    }
    require(all_finite(l.weight) && all_finite(l.bias) && all_finite(l.bn.gamma) &&
                all_finite(l.bn.beta) && all_finite(l.bn.running_mean) &&
                all_finite(l.bn.running_var),
            ErrorCode::kNumerical, where + "non-finite parameter");
    require((l.bn.running_var.array() > 0.0).all(), ErrorCode::kNumerical,
            where + "running variance must be strictly positive");
    require(l.bn.eps > 0.0, ErrorCode::kInvalidArgument, where + "eps must be positive");
  }
  require(layers_.back().activation == Activation::kIdentity, ErrorCode::kInvalidArgument,
          "final layer must use the identity activation");
}

bool SmallClassifier::same_architecture(const SmallClassifier& other) const {
  if (layers_.size() != other.layers_.size()) return false;
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    const auto& a = layers_[k];
    const auto& b = other.layers_[k];
    if (a.in_dim() != b.in_dim() || a.out_dim() != b.out_dim() || a.activation != b.activation)
      return false;
  }
  return true;
}

std::size_t SmallClassifier::param_count(ParamScope scope) const {
  std::size_t n = 0;
  for (const auto& l : layers_) {
    n += 2 * static_cast<std::size_t>(l.out_dim());
    if (scope == ParamScope::kAllParams)
      n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  }
  return n;
}

Vector SmallClassifier::flat_params(ParamScope scope) const {
  Vector flat(static_cast<Eigen::Index>(param_count(scope)));
  Eigen::Index pos = 0;
  auto put = [&](const double* data, Eigen::Index count) {
    std::copy(data, data + count, flat.data() + pos);
    pos += count;
  };
  for (const auto& l : layers_) {
    if (scope == ParamScope::kAllParams) {
      put(l.weight.data(), l.weight.size());
      put(l.bias.data(), l.bias.size());
    }
    put(l.bn.gamma.data(), l.bn.gamma.size());
    put(l.bn.beta.data(), l.bn.beta.size());
  }
  return flat;
}

void SmallClassifier::set_flat_params(ParamScope scope, const Vector& flat) {
  require(static_cast<std::size_t>(flat.size()) == param_count(scope),
          ErrorCode::kDimensionMismatch, "flat parameter vector has the wrong length");
  Eigen::Index pos = 0;
  auto take = [&](double* data, Eigen::Index count) {
    std::copy(flat.data() + pos, flat.data() + pos + count, data);
    pos += count;
  };
  for (auto& l : layers_) {
    if (scope == ParamScope::kAllParams) {
      take(l.weight.data(), l.weight.size());
      take(l.bias.data(), l.bias.size());
    }
    take(l.bn.gamma.data(), l.bn.gamma.size());
    take(l.bn.beta.data(), l.bn.beta.size());
  }
}

std::uint64_t SmallClassifier::content_hash() const {
  std::uint64_t h = 14695981039346656037ULL;
  for (const auto& l : layers_) {
    hash_bytes(h, l.weight);
    hash_bytes(h, l.bias);
    hash_bytes(h, l.bn.gamma);
    hash_bytes(h, l.bn.beta);
    hash_bytes(h, l.bn.running_mean);
    hash_bytes(h, l.bn.running_var);
    hash_bytes(h, Eigen::Matrix<double, 1, 1>::Constant(l.bn.eps));
  }
  return h;
}

ForwardResult forward(const SmallClassifier& model, const Matrix& features) {
  require(!model.layers().empty(), ErrorCode::kInvalidArgument, "forward on an empty model");
  require(features.cols() == model.input_dim(), ErrorCode::kDimensionMismatch,
          "features have " + std::to_string(features.cols()) + " columns, model expects " +
              std::to_string(model.input_dim()));
  const Eigen::Index n = features.rows();
  require(n >= 1, ErrorCode::kInvalidArgument, "forward needs at least one sample");
  require(!model.uses_batch_stats() || n >= 2, ErrorCode::kInvalidArgument,
          "batch statistics need at least two samples");
  require(features.allFinite(), ErrorCode::kNumerical, "non-finite input features");

  ForwardResult result;
  result.trace.batch_size = n;
  result.trace.layers.reserve(model.num_layers());
  Matrix current = features;
  for (const auto& layer : model.layers()) {
    LayerCache cache;
    cache.mode = layer.bn.stats_mode;
    Matrix z = current * layer.weight.transpose();
    z.rowwise() += layer.bias.transpose();
    if (cache.mode == StatsMode::kTestBatchStats) {
      cache.batch_mean = z.colwise().mean().transpose();
      z.rowwise() -= cache.batch_mean.transpose();
      cache.batch_var = z.array().square().colwise().mean().transpose();
      cache.inv_std = (cache.batch_var.array() + layer.bn.eps).rsqrt();
    } else {
      z.rowwise() -= layer.bn.running_mean.transpose();
      cache.inv_std = (layer.bn.running_var.array() + layer.bn.eps).rsqrt();
    }
    cache.normalized = z.array().rowwise() * cache.inv_std.transpose().array();
    cache.affine = cache.normalized.array().rowwise() * layer.bn.gamma.transpose().array();
    cache.affine.rowwise() += layer.bn.beta.transpose();
    cache.input = std::move(current);
    current = layer.activation == Activation::kReLU ? Matrix(cache.affine.cwiseMax(0.0))
                                                    : cache.affine;
    result.trace.layers.push_back(std::move(cache));
  }
  require(current.allFinite(), ErrorCode::kNumerical, "forward produced non-finite logits");
  result.logits = std::move(current);
  return result;
}

Vector GradientSet::flatten() const {
  Eigen::Index total = 0;
  for (const auto& l : layers) total += l.weight.size() + l.bias.size() + l.gamma.size() + l.beta.size();
  Vector flat(total);
  Eigen::Index pos = 0;
  auto put = [&](const double* data, Eigen::Index count) {
    std::copy(data, data + count, flat.data() + pos);
    pos += count;
  };
  for (const auto& l : layers) {
    if (scope == ParamScope::kAllParams) {
      put(l.weight.data(), l.weight.size());
      put(l.bias.data(), l.bias.size());
    }
    put(l.gamma.data(), l.gamma.size());
    put(l.beta.data(), l.beta.size());
  }
  return flat;
}

GradientSet backward(const SmallClassifier& model, const ForwardTrace& trace,
                     const Matrix& upstream, ParamScope scope) {
  const auto& layers = model.layers();
  require(trace.layers.size() == layers.size(), ErrorCode::kDimensionMismatch,
          "trace was recorded for a model with a different layer count");
  require(upstream.rows() == trace.batch_size && upstream.cols() == model.num_classes(),
          ErrorCode::kDimensionMismatch, "upstream gradient shape does not match the trace");
  require(upstream.allFinite(), ErrorCode::kNumerical, "non-finite upstream gradient");
  for (std::size_t k = 0; k < layers.size(); ++k) {
    require(trace.layers[k].input.cols() == layers[k].in_dim() &&
                trace.layers[k].affine.cols() == layers[k].out_dim() &&
                trace.layers[k].mode == layers[k].bn.stats_mode,
            ErrorCode::kDimensionMismatch, "trace does not match model at layer " + std::to_string(k));
  }

  GradientSet grads;
  grads.scope = scope;
  grads.layers.resize(layers.size());
  const double n = static_cast<double>(trace.batch_size);
  Matrix grad_out = upstream;
  for (std::size_t idx = layers.size(); idx-- > 0;) {
    const auto& layer = layers[idx];
    const auto& cache = trace.layers[idx];
    auto& g = grads.layers[idx];

    Matrix d_affine = grad_out;
    if (layer.activation == Activation::kReLU)
      d_affine = (cache.affine.array() > 0.0).select(d_affine, 0.0);

    g.gamma = (d_affine.array() * cache.normalized.array()).colwise().sum().transpose();
    g.beta = d_affine.colwise().sum().transpose();

    // Weights/biases of this layer and anything upstream need dL/dz.
    const bool need_dz = scope == ParamScope::kAllParams || idx > 0;
    if (!need_dz) break;

    Matrix d_norm = d_affine.array().rowwise() * layer.bn.gamma.transpose().array();
    Matrix d_z;
    if (cache.mode == StatsMode::kTestBatchStats) {
      const RowVector mean_dn = d_norm.colwise().sum() / n;
      const RowVector mean_dn_u = (d_norm.array() * cache.normalized.array()).colwise().sum() / n;
      d_z = d_norm;
      d_z.rowwise() -= mean_dn;
      d_z.array() -= cache.normalized.array().rowwise() * mean_dn_u.array();
      d_z.array().rowwise() *= cache.inv_std.transpose().array();
    } else {
      d_z = d_norm.array().rowwise() * cache.inv_std.transpose().array();
    }

    if (scope == ParamScope::kAllParams) {
      g.weight = d_z.transpose() * cache.input;
      g.bias = d_z.colwise().sum().transpose();
    }
    if (idx > 0) grad_out = d_z * layer.weight;
  }
  return grads;
}

Matrix softmax(const Matrix& logits) {
  require(logits.allFinite(), ErrorCode::kNumerical, "softmax of non-finite logits");
  Matrix probs = logits;
  const Vector row_max = logits.rowwise().maxCoeff();
  probs.colwise() -= row_max;
  probs = probs.array().exp();
  const Vector sums = probs.rowwise().sum();
  probs.array().colwise() /= sums.array();
  return probs;
}

double entropy(std::span<const double> probs) {
  double sum = 0.0;
  double h = 0.0;
  for (double p : probs) {
    require(p >= 0.0, ErrorCode::kInvalidArgument, "entropy of a negative probability");
    sum += p;
    if (p > 0.0) h -= p * std::log(std::max(p, kLogClamp));
  }
  require(std::abs(sum - 1.0) <= 1e-6, ErrorCode::kInvalidArgument,
          "entropy input does not sum to one");
  return h;
}

double entropy_row(const Matrix& probs, Eigen::Index row) {
  return entropy(std::span<const double>(probs.row(row).data(), static_cast<std::size_t>(probs.cols())));
}

Matrix entropy_grad_logits(const Matrix& probs) {
  // H = -sum p log p; dH/dz_j = -p_j (log p_j - sum_k p_k log p_k).
  const Matrix logp = probs.array().max(kLogClamp).log();
  const Vector plogp = (probs.array() * logp.array()).rowwise().sum();
  Matrix centered = logp;
  centered.colwise() -= plogp;
  return -(probs.array() * centered.array()).matrix();
}

std::vector<Vector> per_sample_gradients(const SmallClassifier& model, const Matrix& features,
                                         ParamScope scope) {
  const auto fwd = forward(model, features);
  const Matrix probs = softmax(fwd.logits);
  const Matrix grad_logits = entropy_grad_logits(probs);
  std::vector<Vector> out;
  out.reserve(static_cast<std::size_t>(features.rows()));
  Matrix upstream = Matrix::Zero(grad_logits.rows(), grad_logits.cols());
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    upstream.row(i) = grad_logits.row(i);
    out.push_back(backward(model, fwd.trace, upstream, scope).flatten());
    upstream.row(i).setZero();
  }
  return out;
}

std::vector<int> argmax_rows(const Matrix& m) {
  std::vector<int> out(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    // First maximum wins, so ties go to the lowest class index.
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < m.cols(); ++c)
      if (m(i, c) > m(i, best)) best = c;
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

}  // namespace tta
