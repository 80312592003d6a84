#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "nsatp/error.hpp"
#include "nsatp/pipeline.hpp"
#include "nsatp/version.hpp"

namespace fs = std::filesystem;
using namespace nsatp;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<std::size_t> workers;
  std::string oracle;
  std::string weights;
  std::string table;
  std::string command;
  std::optional<std::int64_t> timeout_ms;
  std::string metric;
  std::string images;
  std::string labels;
  std::string data_csv;
  std::vector<std::size_t> shape;

  std::string preset;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> batch_size;
  std::optional<double> learning_rate;

  std::string scores;
  std::string attacks;
  std::string direction;
  std::string attack;
  std::optional<std::size_t> m;
  std::vector<ExampleId> ids;
  std::optional<std::size_t> k;
  std::optional<std::size_t> cap;
  std::string generator;
  std::optional<double> threshold;
  std::optional<std::size_t> repeats;
  bool force = false;
};

void add_common(CLI::App* app, Flags& f) {
  app->add_option("--config", f.config, "JSON run configuration");
  app->add_option("--seed", f.seed, "Master seed");
  app->add_option("--out", f.out, "Output directory");
  app->add_option("--workers", f.workers, "Worker threads (0: one per processor)");
  app->add_option("--oracle", f.oracle, "Oracle kind")
      ->check(CLI::IsMember({"builtin", "table", "external"}));
  app->add_option("--weights", f.weights, "Builtin model weights file");
  app->add_option("--table", f.table, "Probability table CSV for the table oracle");
  app->add_option("--command", f.command, "Command line of an external oracle");
  app->add_option("--timeout-ms", f.timeout_ms, "External oracle reply timeout");
  app->add_option("--metric", f.metric, "pd, pe, pv or all")
      ->check(CLI::IsMember({"pd", "pe", "pv", "all"}, CLI::ignore_case));
  app->add_option("--images", f.images, "IDX image file");
  app->add_option("--labels", f.labels, "IDX label file");
  app->add_option("--data-csv", f.data_csv, "CSV dataset (label,pixels...)");
  app->add_option("--shape", f.shape, "Image shape for --data-csv: H W C")->expected(3);
}

void add_training(CLI::App* app, Flags& f) {
  app->add_option("--preset", f.preset, "Hyperparameter preset (mnist, fmnist, cifar10, cifar100)");
  app->add_option("--epochs", f.epochs, "Training epochs");
  app->add_option("--batch-size", f.batch_size, "Mini-batch size");
  app->add_option("--lr", f.learning_rate, "Learning rate");
}

void add_attack(CLI::App* app, Flags& f) {
  app->add_option("--attack", f.attack, "Attack kind")->check(CLI::IsMember({"random", "de"}));
  app->add_option("--m", f.m, "Random block flips per example");
  app->add_option("--ids", f.ids, "Example ids to attack")->delimiter(',');
}

void add_compare(CLI::App* app, Flags& f) {
  app->add_option("--k", f.k, "Examples selected per method");
  app->add_option("--cap", f.cap, "Sample cap per example");
  app->add_option("--generator", f.generator, "Sample generator")
      ->check(CLI::IsMember({"random", "de"}));
}

fs::path default_out_root() {
  if (const char* env = std::getenv("NSATP_OUT_ROOT"); env != nullptr && *env != '\0') return env;
  return "nsatp-out";
}

RunConfig build_config(const Flags& f) {
  RunConfig c = f.config.empty() ? RunConfig{} : load_run_config(f.config);
  const fs::path cwd = fs::current_path();
  auto abs = [&](const std::string& p) { return (cwd / p).lexically_normal(); };

  if (f.seed) c.seed = *f.seed;
  if (f.workers) c.workers = *f.workers;
  if (!f.images.empty() || !f.labels.empty()) {
    DataSource src;
    src.format = DataSource::Format::Idx;
    src.images = abs(f.images);
    src.labels = abs(f.labels);
    if (c.data) src.n_classes = c.data->n_classes;
    c.data = src;
  }
  if (!f.data_csv.empty()) {
    DataSource src;
    src.format = DataSource::Format::Csv;
    src.csv = abs(f.data_csv);
    if (f.shape.size() == 3) src.shape = {f.shape[0], f.shape[1], f.shape[2]};
    if (c.data) src.n_classes = c.data->n_classes;
    c.data = src;
  }
  if (!f.oracle.empty()) c.oracle.kind = parse_oracle_kind(f.oracle);
  if (!f.weights.empty()) c.oracle.weights_path = abs(f.weights);
  if (!f.table.empty()) c.oracle.table_path = abs(f.table);
  if (!f.command.empty()) c.oracle.command = f.command;
  if (f.timeout_ms) c.oracle.timeout = std::chrono::milliseconds(*f.timeout_ms);
  if (!f.metric.empty()) {
    c.metrics = f.metric == "all" ? std::vector<MetricKind>(std::begin(kAllMetrics), std::end(kAllMetrics))
                                  : std::vector<MetricKind>{parse_metric(f.metric)};
  }
  if (!f.preset.empty()) {
    c.preset = f.preset;
    c.training = training_preset(f.preset);
  }
  if (f.epochs) c.training.epochs = *f.epochs;
  if (f.batch_size) c.training.batch_size = *f.batch_size;
  if (f.learning_rate) c.training.learning_rate = *f.learning_rate;
  if (!f.direction.empty()) {
    for (auto m : c.metrics) c.directions[m] = parse_direction(f.direction);
  }
  if (!f.attack.empty()) c.attack = parse_attack_kind(f.attack);
  if (f.m) c.attack_trials = *f.m;
  if (!f.ids.empty()) c.attack_ids = f.ids;
  if (f.k) c.select_k = *f.k;
  if (f.cap) c.cap = *f.cap;
  if (!f.generator.empty()) c.compare_generator = parse_attack_kind(f.generator);
  if (f.threshold) c.gate_threshold = *f.threshold;
  if (f.repeats) c.repeats = *f.repeats;

  if (!f.out.empty()) {
    c.out = abs(f.out);
  } else if (c.out.empty()) {
    c.out = fs::absolute(default_out_root() / config_hash(c)).lexically_normal();
  }
  return c;
}

// A builtin oracle with no weights given falls back to the train output.
void use_trained_weights(RunConfig& c) {
  if (c.oracle.kind != OracleKind::Builtin || !c.oracle.weights_path.empty()) return;
  const fs::path trained = c.out / "weights.json";
  if (!fs::exists(trained)) {
    throw Error(ErrorCode::Config, "builtin oracle needs --weights (or run `nsatp train` into " +
                                       c.out.string() + " first)");
  }
  c.oracle.weights_path = trained;
}

fs::path input_or(const std::string& flag, const fs::path& fallback) {
  const fs::path p = flag.empty() ? fallback : fs::path(flag);
  if (!fs::exists(p)) throw Error(ErrorCode::Config, "input not found: " + p.string());
  return p;
}

void print_compare(const RunConfig& c, const CompareResult& r) {
  std::printf("%-8s", "method");
  for (auto m : c.metrics) std::printf(" %10s", std::string(to_string(m)).c_str());
  std::printf("\n%-8s", "NSATP");
  for (auto m : c.metrics) std::printf(" %10.2f", r.prioritized.at(m).mean_count);
  std::printf("\n%-8s", "Random");
  for (std::size_t i = 0; i < c.metrics.size(); ++i) std::printf(" %10.2f", r.random.mean_count);
  std::printf("\n%-8s", "Inc.");
  for (auto m : c.metrics) {
    const auto& inc = r.prioritized.at(m).inc;
    if (inc) {
      std::printf(" %9.2f%%", *inc);
    } else {
      std::printf(" %10s", "-");
    }
  }
  std::printf("\n");
}

void print_evaluation(const EvaluationResult& ev) {
  for (const auto& [m, e] : ev.metrics) {
    const std::string name(to_string(m));
    if (!e.fit) {
      std::printf("%s: %s\n", name.c_str(), e.error.c_str());
      continue;
    }
    std::printf("%s: a=%.4g b=%.4g r=%.4f points=%zu gate(%.2f)=%s", name.c_str(), e.fit->a,
                e.fit->b, e.fit->r, e.fit->n_points, ev.threshold, e.gate_passed ? "pass" : "fail");
    if (ev.eff_d) std::printf(" mark=%s", std::string(to_string(ev.eff_d->marks.at(m))).c_str());
    std::printf("\n");
  }
}

int run_command(const std::string& name, const Flags& f) {
  RunConfig c = build_config(f);
  fs::create_directories(c.out);

  if (name == "pipeline") {
    PipelineOptions opts;
    opts.force = f.force;
    opts.log = [](std::string_view line) { std::cerr << line << '\n'; };
    const auto result = run_pipeline(c, opts);
    for (std::size_t r = 0; r < result.repeats.size(); ++r) {
      const auto& rep = result.repeats[r];
      if (result.repeats.size() > 1) std::printf("repeat %zu (seed %llu)\n", r,
                                                  static_cast<unsigned long long>(rep.seed));
      if (rep.train) std::printf("holdout accuracy: %.4f\n", rep.train->holdout_accuracy);
      print_evaluation(rep.evaluation);
      if (rep.compare) print_compare(c, *rep.compare);
    }
    std::printf("output: %s\n", c.out.string().c_str());
    return 0;
  }

  if (name == "train") {
    c.validate();
    const auto data = prepare_data(c);
    const auto t = run_train(c, data, c.out);
    std::printf("final loss %.6f, holdout accuracy %.4f\nweights: %s\n", t.weights.final_loss,
                t.holdout_accuracy, (c.out / "weights.json").string().c_str());
    return 0;
  }

  if (name == "score") {
    if (c.data) use_trained_weights(c);
    c.validate();
    const auto data = prepare_data(c);
    const auto rows = run_score(c, data, oracle_factory_for(c), c.out);
    std::printf("scored %zu examples: %s\n", rows.size(), (c.out / "scores.csv").string().c_str());
    return 0;
  }

  if (name == "rank") {
    const auto scores = read_scores(input_or(f.scores, c.out / "scores.csv"));
    run_rank(scores, c.metrics, c.directions, c.out);
    for (auto m : c.metrics) {
      std::printf("%s\n", (c.out / ("ranked_" + std::string(to_string(m)) + ".csv")).string().c_str());
    }
    return 0;
  }

  if (name == "attack") {
    use_trained_weights(c);
    c.validate();
    if (!c.data) throw Error(ErrorCode::Config, "attack needs a dataset");
    const auto data = prepare_data(c);
    std::vector<ExampleId> ids = c.attack_ids;
    if (ids.empty()) ids = select_attack_ids(c, read_scores(input_or(f.scores, c.out / "scores.csv")));
    const auto outcomes = run_attack(c, *data.pool, oracle_factory_for(c), ids, c.out);
    std::printf("%zu attack rows over %zu examples: %s\n", outcomes.size(), ids.size(),
                (c.out / "attacks.csv").string().c_str());
    return 0;
  }

  if (name == "evaluate") {
    const auto scores = read_scores(input_or(f.scores, c.out / "scores.csv"));
    const auto attacks = read_attacks(input_or(f.attacks, c.out / "attacks.csv"));
    print_evaluation(run_evaluate(scores, attacks, c.metrics, c.gate_threshold, c.out));
    return 0;
  }

  if (name == "compare") {
    use_trained_weights(c);
    c.validate();
    if (!c.data) throw Error(ErrorCode::Config, "compare needs a dataset");
    const auto data = prepare_data(c);
    const auto scores = read_scores(input_or(f.scores, c.out / "scores.csv"));
    print_compare(c, run_compare(c, *data.pool, scores, oracle_factory_for(c), c.out));
    return 0;
  }
  return kExitConfig;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sensitivity-prioritized adversarial testing toolkit"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  Flags f;
  struct Sub {
    const char* name;
    const char* help;
  };
  const Sub subs[] = {
      {"train", "Train the builtin classifier"},
      {"score", "Compute PD/PE/PV for every pool example"},
      {"rank", "Rank scored examples by metric"},
      {"attack", "Run block-flip or DE attacks"},
      {"evaluate", "Fit E = a*exp(-b*v) per metric and compare"},
      {"compare", "F-measure of top-k against random-k"},
      {"pipeline", "Run every stage and write a manifest"},
  };
  for (const auto& s : subs) {
    auto* sub = app.add_subcommand(s.name, s.help);
    add_common(sub, f);
    const std::string n = s.name;
    if (n == "train" || n == "pipeline") add_training(sub, f);
    if (n == "rank") sub->add_option("--direction", f.direction, "asc or desc");
    if (n == "rank" || n == "attack" || n == "evaluate" || n == "compare") {
      sub->add_option("--scores", f.scores, "scores.csv (default: <out>/scores.csv)");
    }
    if (n == "evaluate") {
      sub->add_option("--attacks", f.attacks, "attacks.csv (default: <out>/attacks.csv)");
    }
    if (n == "attack" || n == "pipeline") add_attack(sub, f);
    if (n == "compare" || n == "pipeline") add_compare(sub, f);
    if (n == "evaluate" || n == "pipeline") {
      sub->add_option("--threshold", f.threshold, "Correlation gate threshold");
    }
    if (n == "pipeline") {
      sub->add_option("--repeats", f.repeats, "Independent repeats");
      sub->add_flag("--force", f.force, "Rerun stages even when outputs exist");
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  const std::string name = app.get_subcommands().front()->get_name();
  try {
    return run_command(name, f);
  } catch (const Error& e) {
    std::cerr << "nsatp " << name << ": " << e.what() << '\n';
    return e.code() == ErrorCode::Config ? kExitConfig : kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "nsatp " << name << ": " << e.what() << '\n';
    return kExitRuntime;
  }
}
