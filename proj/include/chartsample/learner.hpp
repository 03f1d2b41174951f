#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "chartsample/image.hpp"

namespace chartsample::learner {

inline constexpr int kImageSide = 100;
inline constexpr std::size_t kInputSize = static_cast<std::size_t>(kImageSide) * kImageSide;

enum class Activation { Relu, Linear };

/// How the first dense layer is evaluated during training and inference.
/// Dense is the reference; SparseComplement rewrites x = 1 - d and touches
/// only the non-background pixels of d. Both compute the same function.
enum class Backend { Dense, SparseComplement };

struct LearnerConfig {
  std::size_t hidden_units = 256;
  Activation activation = Activation::Relu;
  double dropout_rate = 0.5;
  std::size_t batch_size = 32;
  double learning_rate = 1e-4;
  double nesterov_momentum = 0.9;
  std::size_t max_epochs = 100;
  std::size_t early_stop_patience = 10;
  bool restore_best_weights = true;
  Backend backend = Backend::SparseComplement;
  std::uint64_t seed = 0;

  /// Throws ArgumentError on non-positive sizes/rates or dropout outside [0,1).
  void validate() const;
};

nlohmann::json to_json(const LearnerConfig& config);
LearnerConfig learner_config_from_json(const nlohmann::json& doc);

/// Two dense layers. w1 is input-major: w1[i * hidden + j] connects input i
/// to hidden unit j.
template <typename Real>
struct Parameters {
  std::size_t inputs = 0;
  std::size_t hidden = 0;
  std::vector<Real> w1;
  std::vector<Real> b1;
  std::vector<Real> w2;
  Real b2 = 0;

  static Parameters zeros(std::size_t inputs, std::size_t hidden);

  std::size_t size() const { return w1.size() + b1.size() + w2.size() + 1; }
  /// Flat view over all parameters (w1, b1, w2, b2) for finite differences.
  Real& flat(std::size_t k);
  Real flat(std::size_t k) const;
  std::string name_of(std::size_t k) const;

  bool operator==(const Parameters&) const = default;
};

/// Seeded symmetric uniform initialization, limit 1/sqrt(fan_in); biases zero.
template <typename Real>
Parameters<Real> initialize(std::size_t inputs, std::size_t hidden, std::uint64_t seed);

/// Row-major flatten scaled to [0, 1]. Throws ArgumentError unless 100x100.
std::vector<float> featurize(const GrayImage& image);

/// Raw network output for one input (no dropout, no clamping).
template <typename Real>
Real forward(const Parameters<Real>& params, Activation activation, std::span<const Real> x);

/// Mean squared error of a batch and its gradient with respect to every
/// parameter. masks, when non-empty, holds batch x hidden dropout multipliers.
template <typename Real>
Real batch_gradient(const Parameters<Real>& params, Activation activation, std::span<const Real* const> inputs,
                    std::span<const Real> labels, std::span<const Real> masks, Parameters<Real>& gradient);

template <typename Real>
Real batch_loss(const Parameters<Real>& params, Activation activation, std::span<const Real* const> inputs,
                std::span<const Real> labels);

struct GradientCheckResult {
  double max_relative_deviation = 0.0;
  std::size_t worst_index = 0;
  std::string worst_parameter;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// Compares analytic gradients against central finite differences over all
/// parameters of a small network built from config (dropout off). Throws
/// TrainingError when the deviation exceeds tolerance.
GradientCheckResult gradient_check(const LearnerConfig& config, std::span<const std::vector<double>> inputs,
                                   std::span<const double> labels, double tolerance = 1e-4);

/// Images with ratio labels; pixels stay 8-bit until a batch is assembled.
struct LabeledImages {
  std::vector<GrayImage> images;
  std::vector<double> labels;

  std::size_t size() const { return labels.size(); }
};

struct EpochStats {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double validation_loss = 0.0;
};

struct TrainedModel {
  Parameters<float> params;
  LearnerConfig config;
  std::vector<EpochStats> history;
  std::size_t stopped_epoch = 0;
  std::size_t best_epoch = 0;
  double best_validation_loss = 0.0;
};

using EpochCallback = std::function<void(const EpochStats&)>;

/// Mini-batch SGD with Nesterov momentum on MSE, dropout after the hidden
/// activation, early stopping on validation loss. Deterministic given the
/// config seed.
TrainedModel train(const LearnerConfig& config, const LabeledImages& train_set, const LabeledImages& validation_set,
                   const EpochCallback& on_epoch = {});

/// Prediction clamped to [0, 1].
double predict(const TrainedModel& model, const GrayImage& image);
std::vector<double> predict_batch(const TrainedModel& model, std::span<const GrayImage> images);

/// Mean squared error of raw (unclamped) outputs.
double evaluate_mse(const TrainedModel& model, const LabeledImages& data);

void save_model(const TrainedModel& model, const std::filesystem::path& path);
TrainedModel load_model(const std::filesystem::path& path);

}  // namespace chartsample::learner
