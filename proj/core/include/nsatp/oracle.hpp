#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nsatp/dataset.hpp"
#include "nsatp/metrics.hpp"
#include "nsatp/mlp.hpp"

namespace nsatp {

/// Any source of probability vectors for images.
///
/// predict() is non-const: an external oracle owns a child process whose
/// state advances with every request. One instance must not be shared across
/// threads; build one per worker through an OracleFactory.
class Oracle {
 public:
  virtual ~Oracle() = default;

  virtual ProbabilityVector predict(std::span<const double> pixels, const ImageShape& shape) = 0;

  /// Prediction for an unperturbed dataset example. Table oracles answer
  /// by id; the others forward the pixels.
  virtual ProbabilityVector predict_example(const Example& ex, const ImageShape& shape) {
    return predict(ex.pixels, shape);
  }

  virtual std::string_view kind() const noexcept = 0;
};

using OracleFactory = std::function<std::unique_ptr<Oracle>()>;

std::vector<ProbabilityVector> predict_batch(Oracle& oracle, std::span<const Example> examples,
                                             const ImageShape& shape);

class BuiltinOracle final : public Oracle {
 public:
  explicit BuiltinOracle(std::shared_ptr<const ModelWeights> weights);

  ProbabilityVector predict(std::span<const double> pixels, const ImageShape& shape) override;
  std::string_view kind() const noexcept override { return "builtin"; }
  const ModelWeights& weights() const noexcept { return *weights_; }

 private:
  std::shared_ptr<const ModelWeights> weights_;
};

/// Precomputed vectors keyed by example id, read from CSV rows
/// `example_id,p_0,...,p_{n-1}` (an optional header row starting with
/// "example_id" is skipped). Pixel queries throw Unsupported.
class TableOracle final : public Oracle {
 public:
  explicit TableOracle(const std::filesystem::path& path);

  ProbabilityVector predict(std::span<const double> pixels, const ImageShape& shape) override;
  ProbabilityVector predict_example(const Example& ex, const ImageShape& shape) override;
  std::string_view kind() const noexcept override { return "table"; }

  /// Throws MissingId for unknown ids.
  const ProbabilityVector& predict_id(ExampleId id) const;
  std::vector<ExampleId> ids() const;

 private:
  std::map<ExampleId, ProbabilityVector> rows_;
};

/// Child process speaking one JSON object per line over its stdin/stdout:
///
///   request  {"id": <int>, "shape": [h,w,c], "pixels": [...]}
///   response {"id": <int>, "probs": [...]}
///
/// Ids start at 0 and increase by one per request; a response must echo the
/// id of the request it answers. The child exits when its input closes.
class ExternalOracle final : public Oracle {
 public:
  explicit ExternalOracle(std::string command,
                          std::chrono::milliseconds timeout = std::chrono::seconds(30));
  ~ExternalOracle() override;

  ExternalOracle(const ExternalOracle&) = delete;
  ExternalOracle& operator=(const ExternalOracle&) = delete;

  ProbabilityVector predict(std::span<const double> pixels, const ImageShape& shape) override;
  std::string_view kind() const noexcept override { return "external"; }

  std::int64_t requests_sent() const noexcept { return next_id_; }

 private:
  std::string read_line();
  void shutdown() noexcept;

  std::string command_;
  std::chrono::milliseconds timeout_;
  int pid_ = -1;
  int fd_ = -1;
  std::int64_t next_id_ = 0;
  bool answered_ = false;
  bool broken_ = false;
  std::string buffer_;
};

enum class OracleKind { Builtin, Table, External };

std::string_view to_string(OracleKind kind) noexcept;
OracleKind parse_oracle_kind(std::string_view name);

struct OracleSpec {
  OracleKind kind = OracleKind::Builtin;
  std::filesystem::path weights_path;
  std::filesystem::path table_path;
  std::string command;
  std::chrono::milliseconds timeout{std::chrono::seconds(30)};
};

/// Factory for `spec`. Builtin weights (or the table) are loaded once and
/// shared; every call of the factory for an external spec starts a new child.
OracleFactory make_oracle_factory(const OracleSpec& spec);

/// Factory over weights already in memory.
OracleFactory make_builtin_factory(std::shared_ptr<const ModelWeights> weights);

}  // namespace nsatp
