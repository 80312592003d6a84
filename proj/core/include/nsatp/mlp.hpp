#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nsatp/dataset.hpp"
#include "nsatp/metrics.hpp"

namespace nsatp {

/// Fully connected network: ReLU hidden layers, softmax output.
/// layer_sizes = {inputs, hidden..., classes}.
struct MlpConfig {
  std::vector<std::size_t> layer_sizes;

  void validate() const;
};

struct TrainingConfig {
  double learning_rate = 0.1;
  std::size_t batch_size = 512;
  std::size_t epochs = 20;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Named hyperparameter presets: "mnist", "fmnist", "cifar10", "cifar100".
TrainingConfig training_preset(std::string_view name);

/// weights is outputs x inputs, row-major.
struct DenseLayer {
  std::size_t inputs = 0;
  std::size_t outputs = 0;
  std::vector<double> weights;
  std::vector<double> bias;
};

struct ModelWeights {
  MlpConfig config;
  std::vector<DenseLayer> layers;
  std::uint64_t seed = 0;
  double final_loss = 0.0;

  std::size_t input_size() const { return config.layer_sizes.front(); }
  std::size_t n_classes() const { return config.layer_sizes.back(); }
};

/// Weights uniform in +-1/sqrt(fan_in), biases zero.
ModelWeights init_weights(const MlpConfig& config, std::uint64_t seed);

std::vector<double> forward_logits(const ModelWeights& w, std::span<const double> input);

/// Numerically stable softmax (max-subtracted).
std::vector<double> softmax(std::span<const double> logits);

ProbabilityVector predict(const ModelWeights& w, std::span<const double> pixels);
std::vector<ProbabilityVector> predict_batch(const ModelWeights& w,
                                             std::span<const Example> examples);

/// Mean cross-entropy over `batch`, computed from log-softmax.
double cross_entropy(const ModelWeights& w, std::span<const Example> batch);

/// Gradient of cross_entropy with the same layout as the weights.
struct Gradients {
  std::vector<DenseLayer> layers;
  double loss = 0.0;
};

Gradients compute_gradients(const ModelWeights& w, std::span<const Example> batch);

struct TrainingLog {
  std::vector<double> epoch_losses;
};

/// Mini-batch SGD on cross-entropy. Deterministic for a given seed.
/// Throws ShapeMismatch or DivergedLoss.
ModelWeights train_builtin(const Dataset& train, const MlpConfig& mlp, const TrainingConfig& tc,
                           TrainingLog* log = nullptr);

double accuracy(const ModelWeights& w, const Dataset& ds);

void save_weights(const ModelWeights& w, const std::filesystem::path& path);
ModelWeights load_weights(const std::filesystem::path& path);

}  // namespace nsatp
