#include "nsatp/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <numeric>

#include "nsatp/error.hpp"
#include "nsatp/random.hpp"

namespace nsatp {

namespace {

constexpr std::string_view kWeightsFormat = "nsatp-mlp/1";

void check_input(const ModelWeights& w, std::size_t size) {
  if (size != w.input_size()) {
    throw Error(ErrorCode::ShapeMismatch, "model expects " + std::to_string(w.input_size()) +
                                              " inputs, got " + std::to_string(size));
  }
}

// Activations of every layer: acts[0] is the input, acts.back() the logits.
// Hidden activations are post-ReLU.
std::vector<std::vector<double>> forward_all(const ModelWeights& w, std::span<const double> input) {
  std::vector<std::vector<double>> acts;
  acts.reserve(w.layers.size() + 1);
  acts.emplace_back(input.begin(), input.end());
  for (std::size_t l = 0; l < w.layers.size(); ++l) {
    const auto& layer = w.layers[l];
    const auto& x = acts.back();
    std::vector<double> z(layer.outputs);
    for (std::size_t o = 0; o < layer.outputs; ++o) {
      const double* row = layer.weights.data() + o * layer.inputs;
      double sum = layer.bias[o];
      for (std::size_t i = 0; i < layer.inputs; ++i) sum += row[i] * x[i];
      z[o] = sum;
    }
    if (l + 1 < w.layers.size()) {
      for (auto& v : z) v = std::max(v, 0.0);
    }
    acts.push_back(std::move(z));
  }
  return acts;
}

double log_sum_exp(std::span<const double> logits) {
  const double m = *std::max_element(logits.begin(), logits.end());
  double s = 0.0;
  for (double v : logits) s += std::exp(v - m);
  return m + std::log(s);
}

void check_label(const ModelWeights& w, int label) {
  if (label < 0 || static_cast<std::size_t>(label) >= w.n_classes()) {
    throw Error(ErrorCode::LabelOutOfRange, "label " + std::to_string(label));
  }
}

}  // namespace

void MlpConfig::validate() const {
  if (layer_sizes.size() < 2) {
    throw Error(ErrorCode::InvalidParameter, "an MLP needs at least input and output sizes");
  }
  for (auto s : layer_sizes) {
    if (s == 0) throw Error(ErrorCode::InvalidParameter, "layer sizes must be positive");
  }
  if (layer_sizes.back() < 2) throw Error(ErrorCode::InvalidParameter, "need at least 2 classes");
}

void TrainingConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw Error(ErrorCode::InvalidParameter, "learning rate must be positive");
  }
  if (batch_size == 0) throw Error(ErrorCode::InvalidParameter, "batch size must be positive");
}

TrainingConfig training_preset(std::string_view name) {
  if (name == "mnist" || name == "fmnist" || name == "f-mnist") return {0.1, 512, 20, 0};
  if (name == "cifar10" || name == "cifar100") return {0.01, 512, 60, 0};
  throw Error(ErrorCode::Config, "unknown training preset '" + std::string(name) + "'");
}

ModelWeights init_weights(const MlpConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(derive_seed(seed, "init"));
  ModelWeights w;
  w.config = config;
  w.seed = seed;
  for (std::size_t l = 0; l + 1 < config.layer_sizes.size(); ++l) {
    DenseLayer layer;
    layer.inputs = config.layer_sizes[l];
    layer.outputs = config.layer_sizes[l + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(layer.inputs));
    layer.weights.resize(layer.inputs * layer.outputs);
    for (auto& v : layer.weights) v = rng.uniform(-bound, bound);
    layer.bias.assign(layer.outputs, 0.0);
    w.layers.push_back(std::move(layer));
  }
  return w;
}

std::vector<double> forward_logits(const ModelWeights& w, std::span<const double> input) {
  check_input(w, input.size());
  return std::move(forward_all(w, input).back());
}

std::vector<double> softmax(std::span<const double> logits) {
  const double m = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double s = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - m);
    s += p[i];
  }
  for (auto& v : p) v /= s;
  return p;
}

ProbabilityVector predict(const ModelWeights& w, std::span<const double> pixels) {
  const auto logits = forward_logits(w, pixels);
  return ProbabilityVector(softmax(logits));
}

std::vector<ProbabilityVector> predict_batch(const ModelWeights& w,
                                             std::span<const Example> examples) {
  std::vector<ProbabilityVector> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) out.push_back(predict(w, ex.pixels));
  return out;
}

double cross_entropy(const ModelWeights& w, std::span<const Example> batch) {
  if (batch.empty()) return 0.0;
  double total = 0.0;
  for (const auto& ex : batch) {
    check_label(w, ex.true_label);
    const auto logits = forward_logits(w, ex.pixels);
    total += log_sum_exp(logits) - logits[static_cast<std::size_t>(ex.true_label)];
  }
  return total / static_cast<double>(batch.size());
}

Gradients compute_gradients(const ModelWeights& w, std::span<const Example> batch) {
  Gradients g;
  for (const auto& layer : w.layers) {
    g.layers.push_back({layer.inputs, layer.outputs,
                        std::vector<double>(layer.weights.size(), 0.0),
                        std::vector<double>(layer.bias.size(), 0.0)});
  }
  if (batch.empty()) return g;

  const double scale = 1.0 / static_cast<double>(batch.size());
  for (const auto& ex : batch) {
    check_input(w, ex.pixels.size());
    check_label(w, ex.true_label);
    const auto acts = forward_all(w, ex.pixels);
    const auto& logits = acts.back();
    g.loss += (log_sum_exp(logits) - logits[static_cast<std::size_t>(ex.true_label)]) * scale;

    // dL/dlogits = softmax - onehot
    std::vector<double> delta = softmax(logits);
    delta[static_cast<std::size_t>(ex.true_label)] -= 1.0;

    for (std::size_t l = w.layers.size(); l-- > 0;) {
      const auto& layer = w.layers[l];
      auto& gl = g.layers[l];
      const auto& x = acts[l];
      for (std::size_t o = 0; o < layer.outputs; ++o) {
        const double d = delta[o] * scale;
        if (d == 0.0) continue;
        double* row = gl.weights.data() + o * layer.inputs;
        for (std::size_t i = 0; i < layer.inputs; ++i) row[i] += d * x[i];
        gl.bias[o] += d;
      }
      if (l == 0) break;
      std::vector<double> prev(layer.inputs, 0.0);
      for (std::size_t o = 0; o < layer.outputs; ++o) {
        const double d = delta[o];
        if (d == 0.0) continue;
        const double* row = layer.weights.data() + o * layer.inputs;
        for (std::size_t i = 0; i < layer.inputs; ++i) prev[i] += row[i] * d;
      }
      // ReLU gate: acts[l] is post-activation, zero exactly where the unit was off.
      for (std::size_t i = 0; i < layer.inputs; ++i) {
        if (x[i] <= 0.0) prev[i] = 0.0;
      }
      delta = std::move(prev);
    }
  }
  return g;
}

ModelWeights train_builtin(const Dataset& train, const MlpConfig& mlp, const TrainingConfig& tc,
                           TrainingLog* log) {
  mlp.validate();
  tc.validate();
  if (train.empty()) throw Error(ErrorCode::EmptyInput, "training set is empty");
  if (mlp.layer_sizes.front() != train.shape().size()) {
    throw Error(ErrorCode::ShapeMismatch,
                "input layer has " + std::to_string(mlp.layer_sizes.front()) +
                    " units but images have " + std::to_string(train.shape().size()) + " values");
  }
  if (mlp.layer_sizes.back() != static_cast<std::size_t>(train.n_classes())) {
    throw Error(ErrorCode::ShapeMismatch,
                "output layer has " + std::to_string(mlp.layer_sizes.back()) +
                    " units but the dataset has " + std::to_string(train.n_classes()) + " classes");
  }

  ModelWeights w = init_weights(mlp, tc.seed);
  Rng shuffle_rng(derive_seed(tc.seed, "shuffle"));
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<Example> batch;
  batch.reserve(tc.batch_size);

  if (tc.epochs == 0) {
    w.final_loss = cross_entropy(w, train.examples());
    if (log) log->epoch_losses.clear();
    return w;
  }

  for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
    shuffle_rng.shuffle(std::span(order));
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += tc.batch_size) {
      const std::size_t end = std::min(order.size(), start + tc.batch_size);
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(train[order[i]]);
      const Gradients g = compute_gradients(w, batch);
      if (!std::isfinite(g.loss)) {
        throw Error(ErrorCode::DivergedLoss, "non-finite loss in epoch " + std::to_string(epoch));
      }
      epoch_loss += g.loss * static_cast<double>(batch.size());
      for (std::size_t l = 0; l < w.layers.size(); ++l) {
        auto& layer = w.layers[l];
        const auto& gl = g.layers[l];
        for (std::size_t i = 0; i < layer.weights.size(); ++i) {
          layer.weights[i] -= tc.learning_rate * gl.weights[i];
        }
        for (std::size_t i = 0; i < layer.bias.size(); ++i) {
          layer.bias[i] -= tc.learning_rate * gl.bias[i];
        }
      }
    }
    epoch_loss /= static_cast<double>(order.size());
    if (log) log->epoch_losses.push_back(epoch_loss);
    w.final_loss = epoch_loss;
  }
  return w;
}

double accuracy(const ModelWeights& w, const Dataset& ds) {
  if (ds.empty()) return 0.0;
  std::size_t correct = 0;
  for (const auto& ex : ds.examples()) {
    if (predict(w, ex.pixels).argmax() == static_cast<std::size_t>(ex.true_label)) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(ds.size());
}

void save_weights(const ModelWeights& w, const std::filesystem::path& path) {
  nlohmann::json doc;
  doc["format"] = kWeightsFormat;
  doc["layer_sizes"] = w.config.layer_sizes;
  doc["seed"] = w.seed;
  doc["final_loss"] = w.final_loss;
  doc["layers"] = nlohmann::json::array();
  for (const auto& layer : w.layers) {
    doc["layers"].push_back({{"inputs", layer.inputs},
                             {"outputs", layer.outputs},
                             {"weights", layer.weights},
                             {"bias", layer.bias}});
  }
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << doc.dump() << '\n';
}

ModelWeights load_weights(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  ModelWeights w;
  try {
    const auto doc = nlohmann::json::parse(in);
    if (doc.at("format").get<std::string>() != kWeightsFormat) {
      throw Error(ErrorCode::CorruptFile, path.string() + " is not an nsatp weights file");
    }
    w.config.layer_sizes = doc.at("layer_sizes").get<std::vector<std::size_t>>();
    w.seed = doc.at("seed").get<std::uint64_t>();
    w.final_loss = doc.at("final_loss").get<double>();
    for (const auto& jl : doc.at("layers")) {
      DenseLayer layer;
      layer.inputs = jl.at("inputs").get<std::size_t>();
      layer.outputs = jl.at("outputs").get<std::size_t>();
      layer.weights = jl.at("weights").get<std::vector<double>>();
      layer.bias = jl.at("bias").get<std::vector<double>>();
      w.layers.push_back(std::move(layer));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::CorruptFile, path.string() + ": " + e.what());
  }

  try {
    w.config.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::ShapeMismatch, path.string() + ": " + e.what());
  }
  if (w.layers.size() + 1 != w.config.layer_sizes.size()) {
    throw Error(ErrorCode::ShapeMismatch, path.string() + ": layer count disagrees with sizes");
  }
  for (std::size_t l = 0; l < w.layers.size(); ++l) {
    const auto& layer = w.layers[l];
    if (layer.inputs != w.config.layer_sizes[l] || layer.outputs != w.config.layer_sizes[l + 1] ||
        layer.weights.size() != layer.inputs * layer.outputs ||
        layer.bias.size() != layer.outputs) {
      throw Error(ErrorCode::ShapeMismatch, path.string() + ": layer " + std::to_string(l) +
                                                " has inconsistent dimensions");
    }
    for (double v : layer.weights) {
      if (!std::isfinite(v)) throw Error(ErrorCode::CorruptFile, path.string() + ": non-finite weight");
    }
    for (double v : layer.bias) {
      if (!std::isfinite(v)) throw Error(ErrorCode::CorruptFile, path.string() + ": non-finite bias");
    }
  }
  return w;
}

}  // namespace nsatp
