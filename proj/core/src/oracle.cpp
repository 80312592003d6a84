#include "nsatp/oracle.hpp"

#include <fstream>
#include <string>

#include "nsatp/csv.hpp"
#include "nsatp/error.hpp"

namespace nsatp {

std::vector<ProbabilityVector> predict_batch(Oracle& oracle, std::span<const Example> examples,
                                             const ImageShape& shape) {
  std::vector<ProbabilityVector> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) out.push_back(oracle.predict_example(ex, shape));
  return out;
}

BuiltinOracle::BuiltinOracle(std::shared_ptr<const ModelWeights> weights)
    : weights_(std::move(weights)) {
  if (!weights_) throw Error(ErrorCode::InvalidParameter, "builtin oracle needs weights");
}

ProbabilityVector BuiltinOracle::predict(std::span<const double> pixels, const ImageShape& shape) {
  if (shape.size() != pixels.size()) {
    throw Error(ErrorCode::ShapeMismatch, "pixel count does not match the declared shape");
  }
  return nsatp::predict(*weights_, pixels);
}

TableOracle::TableOracle(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = csv::split(line);
    if (line_no == 1 && cells[0] == "example_id") continue;
    const auto where = path.string() + ":" + std::to_string(line_no);
    if (cells.size() < 3) throw Error(ErrorCode::InvalidVector, where + " has too few columns");
    const auto id = csv::parse_int(cells[0]);
    if (id < 0) throw Error(ErrorCode::InvalidVector, where + " has a negative id");
    std::vector<double> probs;
    for (std::size_t i = 1; i < cells.size(); ++i) probs.push_back(csv::parse_double(cells[i]));
    try {
      auto [it, inserted] =
          rows_.emplace(static_cast<ExampleId>(id), ProbabilityVector(std::move(probs)));
      if (!inserted) throw Error(ErrorCode::DuplicateId, where + " repeats id " + std::to_string(id));
    } catch (const Error& e) {
      if (e.code() == ErrorCode::DuplicateId) throw;
      throw Error(ErrorCode::InvalidVector, where + ": " + e.what());
    }
  }
}

ProbabilityVector TableOracle::predict(std::span<const double>, const ImageShape&) {
  throw Error(ErrorCode::Unsupported, "a table oracle cannot score perturbed pixels");
}

ProbabilityVector TableOracle::predict_example(const Example& ex, const ImageShape&) {
  return predict_id(ex.id);
}

const ProbabilityVector& TableOracle::predict_id(ExampleId id) const {
  const auto it = rows_.find(id);
  if (it == rows_.end()) throw Error(ErrorCode::MissingId, "no table row for id " + std::to_string(id));
  return it->second;
}

std::vector<ExampleId> TableOracle::ids() const {
  std::vector<ExampleId> out;
  out.reserve(rows_.size());
  for (const auto& [id, _] : rows_) out.push_back(id);
  return out;
}

std::string_view to_string(OracleKind kind) noexcept {
  switch (kind) {
    case OracleKind::Builtin: return "builtin";
    case OracleKind::Table: return "table";
    case OracleKind::External: return "external";
  }
  return "?";
}

OracleKind parse_oracle_kind(std::string_view name) {
  if (name == "builtin") return OracleKind::Builtin;
  if (name == "table") return OracleKind::Table;
  if (name == "external") return OracleKind::External;
  throw Error(ErrorCode::Config, "unknown oracle kind '" + std::string(name) + "'");
}

OracleFactory make_builtin_factory(std::shared_ptr<const ModelWeights> weights) {
  return [weights = std::move(weights)]() -> std::unique_ptr<Oracle> {
    return std::make_unique<BuiltinOracle>(weights);
  };
}

namespace {

// Lets several workers share one loaded table.
class SharedTableOracle final : public Oracle {
 public:
  explicit SharedTableOracle(std::shared_ptr<TableOracle> table) : table_(std::move(table)) {}
  ProbabilityVector predict(std::span<const double> pixels, const ImageShape& shape) override {
    return table_->predict(pixels, shape);
  }
  ProbabilityVector predict_example(const Example& ex, const ImageShape&) override {
    return table_->predict_id(ex.id);
  }
  std::string_view kind() const noexcept override { return "table"; }

 private:
  std::shared_ptr<TableOracle> table_;
};

}  // namespace

OracleFactory make_oracle_factory(const OracleSpec& spec) {
  switch (spec.kind) {
    case OracleKind::Builtin:
      return make_builtin_factory(
          std::make_shared<const ModelWeights>(load_weights(spec.weights_path)));
    case OracleKind::Table: {
      auto table = std::make_shared<TableOracle>(spec.table_path);
      return [table]() -> std::unique_ptr<Oracle> {
        return std::make_unique<SharedTableOracle>(table);
      };
    }
    case OracleKind::External:
      return [command = spec.command, timeout = spec.timeout]() -> std::unique_ptr<Oracle> {
        return std::make_unique<ExternalOracle>(command, timeout);
      };
  }
  throw Error(ErrorCode::Config, "unknown oracle kind");
}

}  // namespace nsatp
