#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "nsatp/attack.hpp"
#include "nsatp/dataset.hpp"
#include "nsatp/evaluation.hpp"
#include "nsatp/mlp.hpp"
#include "nsatp/oracle.hpp"
#include "nsatp/prioritizer.hpp"

// The experiment harness behind the `nsatp` tool: train -> score -> rank ->
// attack -> evaluate -> compare, every stage writing plain CSV/JSON into one
// output directory. All randomness derives from RunConfig::seed through
// derive_seed(), so outputs are byte-identical for a given config and seed
// regardless of the worker count.
namespace nsatp {

struct DataSource {
  enum class Format { Idx, Csv };
  Format format = Format::Idx;
  std::filesystem::path images;  // idx
  std::filesystem::path labels;  // idx
  std::filesystem::path csv;     // csv
  ImageShape shape{28, 28, 1};   // csv only; idx reads it from the header
  int n_classes = 10;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::filesystem::path out;
  std::size_t workers = 0;  // 0: one per processor
  std::size_t repeats = 1;

  std::optional<DataSource> data;
  /// When set, holdout and pool come from here and only training data from `data`.
  std::optional<DataSource> test_data;
  std::size_t train_size = 2000;
  std::size_t holdout_size = 500;
  std::size_t pool_size = 0;  // 0: everything left after train and holdout

  OracleSpec oracle;
  std::vector<std::size_t> hidden_layers{128};
  std::string preset = "mnist";
  TrainingConfig training = training_preset("mnist");

  std::vector<MetricKind> metrics{MetricKind::PD, MetricKind::PE, MetricKind::PV};
  std::map<MetricKind, RankDirection> directions{{MetricKind::PD, RankDirection::Ascending},
                                                 {MetricKind::PE, RankDirection::Ascending},
                                                 {MetricKind::PV, RankDirection::Ascending}};

  AttackKind attack = AttackKind::Random;
  std::size_t attack_trials = 50;   // m, random attack only
  std::size_t attack_count = 300;   // examples attacked when no explicit ids
  bool attack_only_correct = true;  // skip examples the oracle already gets wrong
  std::vector<ExampleId> attack_ids;
  DeParams de;

  double gate_threshold = 0.95;

  std::size_t select_k = 100;
  std::size_t cap = 200;
  AttackKind compare_generator = AttackKind::Random;

  void validate() const;
};

/// Reads a JSON config; relative paths resolve against the file's directory.
/// Throws Error(Config) naming the offending key or path.
RunConfig load_run_config(const std::filesystem::path& path);
RunConfig parse_run_config(std::string_view json_text, const std::filesystem::path& base_dir);

/// Effective config as canonical JSON (sorted keys, absolute paths).
std::string run_config_json(const RunConfig& config);

/// Stable digest of everything that influences outputs (not `out` or `workers`).
std::string config_hash(const RunConfig& config);

struct PreparedData {
  std::optional<Dataset> train;
  std::optional<Dataset> holdout;
  /// The example set S that gets scored, ranked and attacked.
  std::optional<Dataset> pool;
};

PreparedData prepare_data(const RunConfig& config);

/// One scored example. Labels are -1 when unknown (a table oracle without
/// a dataset).
struct ScoreRow {
  ExampleId id = 0;
  double pd = 0.0;
  double pe = 0.0;
  double pv = 0.0;
  int true_label = -1;
  int predicted_label = -1;

  double value(MetricKind metric) const;
  bool correct() const { return true_label >= 0 && true_label == predicted_label; }
};

struct TrainOutput {
  ModelWeights weights;
  TrainingLog log;
  double holdout_accuracy = 0.0;
};

/// Trains the builtin model and writes weights.json and train_log.json.
TrainOutput run_train(const RunConfig& config, const PreparedData& data,
                      const std::filesystem::path& out_dir);

/// Scores every pool example (every table id when there is no pool) and
/// writes scores.csv and predictions.csv. Nothing is left behind on failure.
std::vector<ScoreRow> run_score(const RunConfig& config, const PreparedData& data,
                                const OracleFactory& factory, const std::filesystem::path& out_dir);

std::vector<ScoreRow> read_scores(const std::filesystem::path& scores_csv);

/// Writes ranked_<metric>.csv per metric.
std::map<MetricKind, RankedList> run_rank(const std::vector<ScoreRow>& scores,
                                          const std::vector<MetricKind>& metrics,
                                          const std::map<MetricKind, RankDirection>& directions,
                                          const std::filesystem::path& out_dir);

/// Explicit ids when configured, else the first attack_count pool examples in
/// id order (only correctly classified ones when attack_only_correct).
std::vector<ExampleId> select_attack_ids(const RunConfig& config,
                                         const std::vector<ScoreRow>& scores);

/// Runs the configured attack on each id and writes attacks.csv.
std::vector<AttackOutcome> run_attack(const RunConfig& config, const Dataset& pool,
                                      const OracleFactory& factory,
                                      const std::vector<ExampleId>& ids,
                                      const std::filesystem::path& out_dir);

std::vector<AttackOutcome> read_attacks(const std::filesystem::path& attacks_csv);

struct MetricEvaluation {
  std::vector<EffTuple> tuples;
  std::optional<ExpFit> fit;
  std::optional<LinearForm> linear;
  std::optional<double> spearman;
  bool gate_passed = false;
  std::string error;  // set when the fit could not be made
};

struct EvaluationResult {
  std::map<MetricKind, MetricEvaluation> metrics;
  std::optional<EffDComparison> eff_d;
  double threshold = 0.95;
};

/// Joins scores with per-example Eff, fits each metric and writes
/// fits.csv, evaluation.json and plot_<metric>.csv.
EvaluationResult run_evaluate(const std::vector<ScoreRow>& scores,
                              const std::vector<AttackOutcome>& outcomes,
                              const std::vector<MetricKind>& metrics, double threshold,
                              const std::filesystem::path& out_dir);

struct CompareResult {
  std::map<MetricKind, FMeasureReport> prioritized;
  FMeasureReport random;
  std::vector<ExampleId> random_ids;
  std::map<MetricKind, std::vector<ExampleId>> top_ids;
};

/// Top-k per metric against a seeded random k over all scored pool
/// examples; writes compare.csv (NSATP / Random / Inc. rows) and compare.json.
CompareResult run_compare(const RunConfig& config, const Dataset& pool,
                          const std::vector<ScoreRow>& scores, const OracleFactory& factory,
                          const std::filesystem::path& out_dir);

inline constexpr std::string_view kStageNames[] = {"train",    "score",    "rank",
                                                   "attack",   "evaluate", "compare"};

struct PipelineOptions {
  bool force = false;
  /// Receives one plain progress line per stage event.
  std::function<void(std::string_view)> log;
};

struct RepeatResult {
  std::uint64_t seed = 0;
  std::optional<TrainOutput> train;
  std::vector<ScoreRow> scores;
  std::vector<AttackOutcome> attacks;
  EvaluationResult evaluation;
  std::optional<CompareResult> compare;
};

struct PipelineResult {
  std::vector<RepeatResult> repeats;
};

/// Runs all six stages (per repeat) and maintains manifest.json. Stages whose
/// outputs already exist for the same config hash are reused unless `force`.
PipelineResult run_pipeline(const RunConfig& config, const PipelineOptions& options = {});

/// Oracle factory for `config`; a builtin oracle without weights on disk
/// uses `trained` when given.
OracleFactory oracle_factory_for(const RunConfig& config,
                                 const std::optional<ModelWeights>& trained = std::nullopt);

}  // namespace nsatp
