#include "chartsample/learner.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>

#include <fmt/format.h>

#include "chartsample/errors.hpp"
#include "chartsample/random.hpp"
#include "chartsample/simd/kernels.hpp"

namespace chartsample::learner {

static_assert(std::endian::native == std::endian::little, "model files are little-endian");

// ---------------------------------------------------------------------------
// Config

void LearnerConfig::validate() const {
  if (hidden_units == 0) throw ArgumentError("hidden_units must be positive");
  if (batch_size == 0) throw ArgumentError("batch_size must be positive");
  if (max_epochs == 0) throw ArgumentError("max_epochs must be positive");
  if (early_stop_patience == 0) throw ArgumentError("early_stop_patience must be positive");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ArgumentError("learning_rate must be >= 0");
  if (!(nesterov_momentum >= 0.0 && nesterov_momentum < 1.0)) throw ArgumentError("momentum must be in [0, 1)");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ArgumentError("dropout_rate must be in [0, 1)");
}

nlohmann::json to_json(const LearnerConfig& c) {
  return {{"hidden_units", c.hidden_units},
          {"activation", c.activation == Activation::Relu ? "relu" : "linear"},
          {"dropout_rate", c.dropout_rate},
          {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"nesterov_momentum", c.nesterov_momentum},
          {"max_epochs", c.max_epochs},
          {"early_stop_patience", c.early_stop_patience},
          {"restore_best_weights", c.restore_best_weights},
          {"backend", c.backend == Backend::Dense ? "dense" : "sparse-complement"},
          {"loss", "mse"},
          {"seed", c.seed}};
}

LearnerConfig learner_config_from_json(const nlohmann::json& doc) {
  LearnerConfig c;
  c.hidden_units = doc.value("hidden_units", c.hidden_units);
  c.activation = doc.value("activation", std::string("relu")) == "linear" ? Activation::Linear : Activation::Relu;
  c.dropout_rate = doc.value("dropout_rate", c.dropout_rate);
  c.batch_size = doc.value("batch_size", c.batch_size);
  c.learning_rate = doc.value("learning_rate", c.learning_rate);
  c.nesterov_momentum = doc.value("nesterov_momentum", c.nesterov_momentum);
  c.max_epochs = doc.value("max_epochs", c.max_epochs);
  c.early_stop_patience = doc.value("early_stop_patience", c.early_stop_patience);
  c.restore_best_weights = doc.value("restore_best_weights", c.restore_best_weights);
  c.backend = doc.value("backend", std::string("sparse-complement")) == "dense" ? Backend::Dense : Backend::SparseComplement;
  c.seed = doc.value("seed", c.seed);
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Parameters

template <typename Real>
Parameters<Real> Parameters<Real>::zeros(std::size_t inputs, std::size_t hidden) {
  Parameters p;
  p.inputs = inputs;
  p.hidden = hidden;
  p.w1.assign(inputs * hidden, Real(0));
  p.b1.assign(hidden, Real(0));
  p.w2.assign(hidden, Real(0));
  p.b2 = Real(0);
  return p;
}

template <typename Real>
Real& Parameters<Real>::flat(std::size_t k) {
  if (k < w1.size()) return w1[k];
  k -= w1.size();
  if (k < b1.size()) return b1[k];
  k -= b1.size();
  if (k < w2.size()) return w2[k];
  return b2;
}

template <typename Real>
Real Parameters<Real>::flat(std::size_t k) const {
  return const_cast<Parameters*>(this)->flat(k);
}

template <typename Real>
std::string Parameters<Real>::name_of(std::size_t k) const {
  if (k < w1.size()) return fmt::format("w1[input={}, hidden={}]", k / hidden, k % hidden);
  k -= w1.size();
  if (k < b1.size()) return fmt::format("b1[{}]", k);
  k -= b1.size();
  if (k < w2.size()) return fmt::format("w2[{}]", k);
  return "b2";
}

template <typename Real>
Parameters<Real> initialize(std::size_t inputs, std::size_t hidden, std::uint64_t seed) {
  auto p = Parameters<Real>::zeros(inputs, hidden);
  Rng rng(seed);
  const double limit1 = 1.0 / std::sqrt(static_cast<double>(inputs));
  const double limit2 = 1.0 / std::sqrt(static_cast<double>(hidden));
  for (auto& w : p.w1) w = static_cast<Real>((2.0 * rng.unit() - 1.0) * limit1);
  for (auto& w : p.w2) w = static_cast<Real>((2.0 * rng.unit() - 1.0) * limit2);
  return p;
}

template struct Parameters<float>;
template struct Parameters<double>;
template Parameters<float> initialize<float>(std::size_t, std::size_t, std::uint64_t);
template Parameters<double> initialize<double>(std::size_t, std::size_t, std::uint64_t);

std::vector<float> featurize(const GrayImage& image) {
  if (image.width != kImageSide || image.height != kImageSide ||
      image.pixels.size() != kInputSize) {
    throw ArgumentError(fmt::format("expected a {}x{} grayscale image, got {}x{}", kImageSide, kImageSide, image.width,
                                    image.height));
  }
  std::vector<float> x(kInputSize);
  simd::kernels<float>().unit_scale_u8(image.pixels.data(), x.data(), kInputSize);
  return x;
}

// ---------------------------------------------------------------------------
// Shared layer math. The hidden pre-activations z (batch x hidden) are
// produced by a backend; everything after them is common.

namespace {

template <typename Real>
Real activate(Activation a, Real z) {
  return a == Activation::Relu ? std::max(z, Real(0)) : z;
}

template <typename Real>
Real activation_slope(Activation a, Real z) {
  return a == Activation::Relu ? (z > Real(0) ? Real(1) : Real(0)) : Real(1);
}

/// Dense first layer: z[n] = b1 + sum_i x[n][i] * w1[i].
template <typename Real>
void dense_preactivations(const Parameters<Real>& p, std::span<const Real* const> inputs, Real* z) {
  const auto& k = simd::kernels<Real>();
  const std::size_t H = p.hidden;
  for (std::size_t n = 0; n < inputs.size(); ++n) std::copy(p.b1.begin(), p.b1.end(), z + n * H);
  for (std::size_t i = 0; i < p.inputs; ++i) {
    const Real* row = p.w1.data() + i * H;
    for (std::size_t n = 0; n < inputs.size(); ++n) {
      const Real xi = inputs[n][i];
      if (xi != Real(0)) k.axpy(xi, row, z + n * H, H);
    }
  }
}

/// Head forward/backward given z. Fills gradient of w2/b2/b1 and dz.
template <typename Real>
Real head_pass(const Parameters<Real>& p, Activation act, std::size_t batch, const Real* z, std::span<const Real> labels,
               std::span<const Real> masks, Real* a, Real* dz, Parameters<Real>* grad) {
  const auto& k = simd::kernels<Real>();
  const std::size_t H = p.hidden;
  Real loss = 0;
  const Real scale = Real(2) / static_cast<Real>(batch);
  if (grad) {
    std::fill(grad->b1.begin(), grad->b1.end(), Real(0));
    std::fill(grad->w2.begin(), grad->w2.end(), Real(0));
    grad->b2 = 0;
  }
  for (std::size_t n = 0; n < batch; ++n) {
    const Real* zn = z + n * H;
    Real* an = a + n * H;
    const Real* mn = masks.empty() ? nullptr : masks.data() + n * H;
    for (std::size_t j = 0; j < H; ++j) an[j] = activate(act, zn[j]) * (mn ? mn[j] : Real(1));
    const Real out = p.b2 + k.dot(p.w2.data(), an, H);
    const Real residual = out - labels[n];
    loss += residual * residual;
    if (!grad) continue;
    const Real dout = scale * residual;
    grad->b2 += dout;
    k.axpy(dout, an, grad->w2.data(), H);
    Real* dzn = dz + n * H;
    for (std::size_t j = 0; j < H; ++j) {
      dzn[j] = dout * p.w2[j] * (mn ? mn[j] : Real(1)) * activation_slope(act, zn[j]);
    }
    k.axpy(Real(1), dzn, grad->b1.data(), H);
  }
  return loss / static_cast<Real>(batch);
}

/// g = sum_n x[n][i] * dz[n] for one input row i.
template <typename Real>
void dense_row_gradient(std::size_t i, std::span<const Real* const> inputs, const Real* dz, std::size_t H, Real* g) {
  const auto& k = simd::kernels<Real>();
  std::fill(g, g + H, Real(0));
  std::size_t n = 0;
  for (; n + 4 <= inputs.size(); n += 4) {
    const Real alpha[4] = {inputs[n][i], inputs[n + 1][i], inputs[n + 2][i], inputs[n + 3][i]};
    const Real* rows[4] = {dz + n * H, dz + (n + 1) * H, dz + (n + 2) * H, dz + (n + 3) * H};
    k.axpy4(alpha, rows, g, H);
  }
  for (; n < inputs.size(); ++n) k.axpy(inputs[n][i], dz + n * H, g, H);
}

}  // namespace

template <typename Real>
Real forward(const Parameters<Real>& params, Activation activation, std::span<const Real> x) {
  if (x.size() != params.inputs) throw ArgumentError("input length does not match the network");
  std::vector<Real> z(params.hidden);
  const Real* ptr = x.data();
  dense_preactivations(params, std::span<const Real* const>(&ptr, 1), z.data());
  Real out = params.b2;
  for (std::size_t j = 0; j < params.hidden; ++j) out += params.w2[j] * activate(activation, z[j]);
  return out;
}

template <typename Real>
Real batch_gradient(const Parameters<Real>& params, Activation activation, std::span<const Real* const> inputs,
                    std::span<const Real> labels, std::span<const Real> masks, Parameters<Real>& gradient) {
  const std::size_t B = inputs.size();
  const std::size_t H = params.hidden;
  if (B == 0 || labels.size() != B) throw ArgumentError("batch inputs and labels must be non-empty and aligned");
  if (!masks.empty() && masks.size() != B * H) throw ArgumentError("dropout masks must be batch x hidden");
  gradient = Parameters<Real>::zeros(params.inputs, H);
  std::vector<Real> z(B * H), a(B * H), dz(B * H);
  dense_preactivations(params, inputs, z.data());
  const Real loss = head_pass(params, activation, B, z.data(), labels, masks, a.data(), dz.data(), &gradient);
  for (std::size_t i = 0; i < params.inputs; ++i) {
    dense_row_gradient(i, inputs, dz.data(), H, gradient.w1.data() + i * H);
  }
  return loss;
}

template <typename Real>
Real batch_loss(const Parameters<Real>& params, Activation activation, std::span<const Real* const> inputs,
                std::span<const Real> labels) {
  const std::size_t B = inputs.size();
  const std::size_t H = params.hidden;
  std::vector<Real> z(B * H), a(B * H);
  dense_preactivations(params, inputs, z.data());
  return head_pass<Real>(params, activation, B, z.data(), labels, {}, a.data(), nullptr, nullptr);
}

template float forward<float>(const Parameters<float>&, Activation, std::span<const float>);
template double forward<double>(const Parameters<double>&, Activation, std::span<const double>);
template float batch_gradient<float>(const Parameters<float>&, Activation, std::span<const float* const>,
                                     std::span<const float>, std::span<const float>, Parameters<float>&);
template double batch_gradient<double>(const Parameters<double>&, Activation, std::span<const double* const>,
                                       std::span<const double>, std::span<const double>, Parameters<double>&);
template float batch_loss<float>(const Parameters<float>&, Activation, std::span<const float* const>,
                                 std::span<const float>);
template double batch_loss<double>(const Parameters<double>&, Activation, std::span<const double* const>,
                                   std::span<const double>);

GradientCheckResult gradient_check(const LearnerConfig& config, std::span<const std::vector<double>> inputs,
                                   std::span<const double> labels, double tolerance) {
  if (inputs.empty() || inputs.size() != labels.size()) throw ArgumentError("gradient check needs aligned samples");
  const std::size_t dim = inputs.front().size();
  auto params = initialize<double>(dim, config.hidden_units, config.seed);
  // Non-zero biases so every parameter group is exercised.
  Rng rng(derive_seed(config.seed, "gradient-check-bias"));
  for (auto& b : params.b1) b = 0.1 * (2.0 * rng.unit() - 1.0);
  params.b2 = 0.05;

  std::vector<const double*> ptrs;
  for (const auto& x : inputs) ptrs.push_back(x.data());
  Parameters<double> analytic;
  batch_gradient<double>(params, config.activation, ptrs, labels, {}, analytic);

  GradientCheckResult result;
  const double step = 1e-6;
  for (std::size_t k = 0; k < params.size(); ++k) {
    const double saved = params.flat(k);
    params.flat(k) = saved + step;
    const double up = batch_loss<double>(params, config.activation, ptrs, labels);
    params.flat(k) = saved - step;
    const double down = batch_loss<double>(params, config.activation, ptrs, labels);
    params.flat(k) = saved;
    const double numeric = (up - down) / (2.0 * step);
    const double a = analytic.flat(k);
    const double deviation = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-6});
    if (deviation >= result.max_relative_deviation) {
      result.max_relative_deviation = deviation;
      result.worst_index = k;
      result.worst_parameter = params.name_of(k);
      result.analytic = a;
      result.numeric = numeric;
    }
  }
  if (result.max_relative_deviation > tolerance) {
    throw TrainingError(fmt::format("gradient check failed: {} analytic {} vs numeric {} (relative deviation {:.3e})",
                                    result.worst_parameter, result.analytic, result.numeric,
                                    result.max_relative_deviation));
  }
  return result;
}

// ---------------------------------------------------------------------------
// Float training / inference engine

namespace {

/// Non-background pixels of d = 1 - x for one image.
struct SparseComplement {
  std::vector<std::uint32_t> index;
  std::vector<float> value;
};

SparseComplement complement_of(const GrayImage& image) {
  SparseComplement s;
  for (std::size_t i = 0; i < image.pixels.size(); ++i) {
    const auto p = image.pixels[i];
    if (p != 255) {
      s.index.push_back(static_cast<std::uint32_t>(i));
      s.value.push_back(1.0f - static_cast<float>(p) / 255.0f);
    }
  }
  return s;
}

void check_image(const GrayImage& image) {
  if (image.width != kImageSide || image.height != kImageSide || image.pixels.size() != kInputSize) {
    throw ArgumentError(fmt::format("expected a {}x{} grayscale image, got {}x{}", kImageSide, kImageSide, image.width,
                                    image.height));
  }
}

/// Sum of the w1 rows, accumulated in double through float blocks.
std::vector<float> column_sums(const Parameters<float>& p) {
  const auto& k = simd::kernels<float>();
  std::vector<double> total(p.hidden, 0.0);
  std::vector<float> block(p.hidden, 0.0f);
  for (std::size_t i = 0; i < p.inputs; ++i) {
    k.axpy(1.0f, p.w1.data() + i * p.hidden, block.data(), p.hidden);
    if ((i + 1) % 64 == 0 || i + 1 == p.inputs) {
      for (std::size_t j = 0; j < p.hidden; ++j) total[j] += block[j];
      std::fill(block.begin(), block.end(), 0.0f);
    }
  }
  return {total.begin(), total.end()};
}

class Engine {
 public:
  Engine(Backend backend, std::size_t hidden) : backend_(backend), hidden_(hidden) {}

  /// Caches per-image representations for the chosen backend.
  void prepare(const std::vector<GrayImage>& images) {
    for (const auto& img : images) check_image(img);
    if (backend_ == Backend::SparseComplement) {
      sparse_.clear();
      sparse_.reserve(images.size());
      for (const auto& img : images) sparse_.push_back(complement_of(img));
    }
    images_ = &images;
  }

  /// z = first-layer pre-activations for the listed images.
  void preactivations(const Parameters<float>& p, const std::vector<float>& colsum, std::span<const std::size_t> ids,
                      float* z) {
    const std::size_t H = hidden_;
    const auto& k = simd::kernels<float>();
    if (backend_ == Backend::SparseComplement) {
      for (std::size_t n = 0; n < ids.size(); ++n) {
        float* zn = z + n * H;
        for (std::size_t j = 0; j < H; ++j) zn[j] = p.b1[j] + colsum[j];
        const auto& s = sparse_[ids[n]];
        for (std::size_t e = 0; e < s.index.size(); ++e) {
          k.axpy(-s.value[e], p.w1.data() + static_cast<std::size_t>(s.index[e]) * H, zn, H);
        }
      }
      return;
    }
    load_dense(ids);
    dense_preactivations<float>(p, dense_ptrs_, z);
  }

  /// Fills dense feature rows for a batch (dense backend only).
  void load_dense(std::span<const std::size_t> ids) {
    const auto& k = simd::kernels<float>();
    dense_.resize(ids.size() * kInputSize);
    dense_ptrs_.resize(ids.size());
    for (std::size_t n = 0; n < ids.size(); ++n) {
      float* row = dense_.data() + n * kInputSize;
      k.unit_scale_u8((*images_)[ids[n]].pixels.data(), row, kInputSize);
      dense_ptrs_[n] = row;
    }
  }

  Backend backend() const { return backend_; }
  const SparseComplement& sparse(std::size_t id) const { return sparse_[id]; }
  std::span<const float* const> dense_ptrs() const { return dense_ptrs_; }

 private:
  Backend backend_;
  std::size_t hidden_;
  const std::vector<GrayImage>* images_ = nullptr;
  std::vector<SparseComplement> sparse_;
  std::vector<float> dense_;
  std::vector<const float*> dense_ptrs_;
};

std::vector<double> raw_outputs(const Parameters<float>& p, Activation act, Backend backend,
                                const std::vector<GrayImage>& images) {
  Engine engine(backend, p.hidden);
  engine.prepare(images);
  const auto colsum = backend == Backend::SparseComplement ? column_sums(p) : std::vector<float>{};
  const auto& k = simd::kernels<float>();
  constexpr std::size_t chunk = 32;
  std::vector<float> z(chunk * p.hidden);
  std::vector<double> out(images.size());
  std::vector<std::size_t> ids;
  for (std::size_t start = 0; start < images.size(); start += chunk) {
    ids.clear();
    for (std::size_t n = start; n < std::min(images.size(), start + chunk); ++n) ids.push_back(n);
    engine.preactivations(p, colsum, ids, z.data());
    for (std::size_t n = 0; n < ids.size(); ++n) {
      float* zn = z.data() + n * p.hidden;
      for (std::size_t j = 0; j < p.hidden; ++j) zn[j] = activate(act, zn[j]);
      out[start + n] = static_cast<double>(p.b2 + k.dot(p.w2.data(), zn, p.hidden));
    }
  }
  return out;
}

double mse_of(const std::vector<double>& outputs, const std::vector<double>& labels) {
  double total = 0.0;
  for (std::size_t n = 0; n < outputs.size(); ++n) total += (outputs[n] - labels[n]) * (outputs[n] - labels[n]);
  return total / static_cast<double>(outputs.size());
}

}  // namespace

TrainedModel train(const LearnerConfig& config, const LabeledImages& train_set, const LabeledImages& validation_set,
                   const EpochCallback& on_epoch) {
  config.validate();
  if (train_set.size() == 0 || validation_set.size() == 0) throw ArgumentError("training and validation sets must be non-empty");
  if (train_set.images.size() != train_set.size() || validation_set.images.size() != validation_set.size()) {
    throw ArgumentError("images and labels must be aligned");
  }
  for (double y : train_set.labels) {
    if (!(y > 0.0 && y < 1.0)) throw ArgumentError(fmt::format("training label {} outside (0, 1)", y));
  }

  const std::size_t H = config.hidden_units;
  const auto& k = simd::kernels<float>();
  TrainedModel model;
  model.config = config;
  model.params = initialize<float>(kInputSize, H, derive_seed(config.seed, "init"));
  auto velocity = Parameters<float>::zeros(kInputSize, H);

  Engine engine(config.backend, H);
  engine.prepare(train_set.images);
  Rng shuffle_rng(derive_seed(config.seed, "shuffle"));
  Rng dropout_rng(derive_seed(config.seed, "dropout"));
  const float lr = static_cast<float>(config.learning_rate);
  const float mu = static_cast<float>(config.nesterov_momentum);
  const float keep_scale = static_cast<float>(1.0 / (1.0 - config.dropout_rate));
  const bool use_dropout = config.dropout_rate > 0.0;

  const std::size_t B = config.batch_size;
  std::vector<float> z(B * H), a(B * H), dz(B * H), masks(use_dropout ? B * H : 0), labels(B), g(H);
  std::vector<float> colsum = config.backend == Backend::SparseComplement ? column_sums(model.params) : std::vector<float>{};
  std::vector<double> colsum_next(H);
  std::vector<float> colsum_block(H);
  auto gradient = Parameters<float>::zeros(0, H);
  gradient.b1.assign(H, 0.0f);
  gradient.w2.assign(H, 0.0f);

  // Bucketed sparse entries of the current batch, keyed by input index.
  std::vector<std::uint32_t> bucket_start(kInputSize + 1);
  struct Entry {
    std::uint32_t sample;
    float value;
  };
  std::vector<Entry> entries;

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  Parameters<float> best = model.params;
  double best_loss = std::numeric_limits<double>::infinity();
  std::size_t best_epoch = 0;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    shuffle_rng.shuffle(std::span(order));
    double epoch_loss = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += B, ++batch_index) {
      const std::size_t count = std::min(B, order.size() - start);
      const std::span<const std::size_t> ids(order.data() + start, count);
      for (std::size_t n = 0; n < count; ++n) labels[n] = static_cast<float>(train_set.labels[ids[n]]);
      if (use_dropout) {
        for (std::size_t e = 0; e < count * H; ++e) masks[e] = dropout_rng.unit() < config.dropout_rate ? 0.0f : keep_scale;
      }

      engine.preactivations(model.params, colsum, ids, z.data());
      const float loss = head_pass<float>(model.params, config.activation, count, z.data(),
                                          std::span<const float>(labels.data(), count),
                                          use_dropout ? std::span<const float>(masks.data(), count * H) : std::span<const float>{},
                                          a.data(), dz.data(), &gradient);
      if (!std::isfinite(loss)) {
        throw TrainingError(fmt::format("non-finite training loss at epoch {} batch {}", epoch, batch_index));
      }
      epoch_loss += static_cast<double>(loss) * static_cast<double>(count);

      // First layer: gradient row by row, immediately followed by the update.
      if (config.backend == Backend::SparseComplement) {
        std::fill(bucket_start.begin(), bucket_start.end(), 0u);
        for (std::size_t n = 0; n < count; ++n)
          for (auto i : engine.sparse(ids[n]).index) ++bucket_start[i + 1];
        std::partial_sum(bucket_start.begin(), bucket_start.end(), bucket_start.begin());
        entries.resize(bucket_start.back());
        std::vector<std::uint32_t> fill(bucket_start.begin(), bucket_start.end() - 1);
        for (std::size_t n = 0; n < count; ++n) {
          const auto& s = engine.sparse(ids[n]);
          for (std::size_t e = 0; e < s.index.size(); ++e) {
            entries[fill[s.index[e]]++] = {static_cast<std::uint32_t>(n), s.value[e]};
          }
        }
        std::fill(colsum_next.begin(), colsum_next.end(), 0.0);
        std::fill(colsum_block.begin(), colsum_block.end(), 0.0f);
        for (std::size_t i = 0; i < kInputSize; ++i) {
          // d/dw1[i] of sum_n dz[n] * (1 - d[n][i]) = b1-gradient minus the sparse part.
          std::copy(gradient.b1.begin(), gradient.b1.end(), g.begin());
          for (auto e = bucket_start[i]; e < bucket_start[i + 1]; ++e) {
            k.axpy(-entries[e].value, dz.data() + entries[e].sample * H, g.data(), H);
          }
          float* row = model.params.w1.data() + i * H;
          k.nesterov(row, velocity.w1.data() + i * H, g.data(), lr, mu, H);
          k.axpy(1.0f, row, colsum_block.data(), H);
          if ((i + 1) % 64 == 0 || i + 1 == kInputSize) {
            for (std::size_t j = 0; j < H; ++j) colsum_next[j] += colsum_block[j];
            std::fill(colsum_block.begin(), colsum_block.end(), 0.0f);
          }
        }
        for (std::size_t j = 0; j < H; ++j) colsum[j] = static_cast<float>(colsum_next[j]);
      } else {
        const auto inputs = engine.dense_ptrs();
        for (std::size_t i = 0; i < kInputSize; ++i) {
          dense_row_gradient<float>(i, inputs, dz.data(), H, g.data());
          k.nesterov(model.params.w1.data() + i * H, velocity.w1.data() + i * H, g.data(), lr, mu, H);
        }
      }
      k.nesterov(model.params.b1.data(), velocity.b1.data(), gradient.b1.data(), lr, mu, H);
      k.nesterov(model.params.w2.data(), velocity.w2.data(), gradient.w2.data(), lr, mu, H);
      {
        const float step = lr * gradient.b2;
        velocity.b2 = mu * velocity.b2 - step;
        model.params.b2 += mu * velocity.b2 - step;
      }
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = epoch_loss / static_cast<double>(train_set.size());
    stats.validation_loss = mse_of(raw_outputs(model.params, config.activation, config.backend, validation_set.images),
                                   validation_set.labels);
    if (!std::isfinite(stats.validation_loss)) {
      throw TrainingError(fmt::format("non-finite validation loss at epoch {}", epoch));
    }
    model.history.push_back(stats);
    if (on_epoch) on_epoch(stats);
    if (stats.validation_loss < best_loss) {
      best_loss = stats.validation_loss;
      best_epoch = epoch;
      if (config.restore_best_weights) best = model.params;
    }
    if (epoch - best_epoch >= config.early_stop_patience) break;
  }

  model.stopped_epoch = model.history.size();
  model.best_epoch = best_epoch;
  model.best_validation_loss = best_loss;
  if (config.restore_best_weights) model.params = std::move(best);
  return model;
}

std::vector<double> predict_batch(const TrainedModel& model, std::span<const GrayImage> images) {
  const std::vector<GrayImage> copy(images.begin(), images.end());
  auto out = raw_outputs(model.params, model.config.activation, model.config.backend, copy);
  for (auto& y : out) y = std::clamp(y, 0.0, 1.0);
  return out;
}

double predict(const TrainedModel& model, const GrayImage& image) {
  return predict_batch(model, std::span<const GrayImage>(&image, 1)).front();
}

double evaluate_mse(const TrainedModel& model, const LabeledImages& data) {
  return mse_of(raw_outputs(model.params, model.config.activation, model.config.backend, data.images), data.labels);
}

// ---------------------------------------------------------------------------
// Serialization: magic, version, dimensions, JSON metadata, raw float32 weights.

namespace {

constexpr char kMagic[8] = {'C', 'S', 'M', 'L', 'P', 'B', 'I', 'N'};
constexpr std::uint32_t kModelVersion = 1;

template <typename T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw IoError("model file truncated");
  return v;
}

void put_floats(std::ostream& out, const std::vector<float>& v) {
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(float)));
}

void get_floats(std::istream& in, std::vector<float>& v) {
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(float)));
  if (!in) throw IoError("model file truncated");
}

}  // namespace

void save_model(const TrainedModel& model, const std::filesystem::path& path) {
  nlohmann::json history = nlohmann::json::array();
  for (const auto& h : model.history) history.push_back({h.epoch, h.train_loss, h.validation_loss});
  const nlohmann::json meta = {{"config", to_json(model.config)},
                               {"stopped_epoch", model.stopped_epoch},
                               {"best_epoch", model.best_epoch},
                               {"best_validation_loss", model.best_validation_loss},
                               {"history", history}};
  const std::string meta_text = meta.dump();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(fmt::format("cannot create model file {}", path.string()));
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kModelVersion);
  put<std::uint64_t>(out, model.params.inputs);
  put<std::uint64_t>(out, model.params.hidden);
  put<std::uint64_t>(out, meta_text.size());
  out.write(meta_text.data(), static_cast<std::streamsize>(meta_text.size()));
  put_floats(out, model.params.w1);
  put_floats(out, model.params.b1);
  put_floats(out, model.params.w2);
  put<float>(out, model.params.b2);
  if (!out) throw IoError(fmt::format("failed writing model file {}", path.string()));
}

TrainedModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot open model file {}", path.string()));
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw IoError("not a chartsample model file");
  if (const auto version = get<std::uint32_t>(in); version != kModelVersion) {
    throw IoError(fmt::format("unsupported model version {}", version));
  }
  const auto inputs = get<std::uint64_t>(in);
  const auto hidden = get<std::uint64_t>(in);
  const auto meta_size = get<std::uint64_t>(in);
  std::string meta_text(meta_size, '\0');
  in.read(meta_text.data(), static_cast<std::streamsize>(meta_size));
  if (!in) throw IoError("model file truncated");
  const auto meta = nlohmann::json::parse(meta_text);
  TrainedModel model;
  model.config = learner_config_from_json(meta.at("config"));
  model.stopped_epoch = meta.at("stopped_epoch");
  model.best_epoch = meta.at("best_epoch");
  model.best_validation_loss = meta.at("best_validation_loss");
  for (const auto& h : meta.at("history")) model.history.push_back({h[0], h[1], h[2]});
  model.params = Parameters<float>::zeros(inputs, hidden);
  get_floats(in, model.params.w1);
  get_floats(in, model.params.b1);
  get_floats(in, model.params.w2);
  model.params.b2 = get<float>(in);
  return model;
}

}  // namespace chartsample::learner
