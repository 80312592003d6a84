#include "nsatp/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "nsatp/csv.hpp"
#include "nsatp/error.hpp"
#include "nsatp/parallel.hpp"
#include "nsatp/random.hpp"
#include "nsatp/version.hpp"

namespace nsatp {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Writes next to the target and renames, so a reader never sees half a file.
void write_atomic(const fs::path& path, const std::string& content) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw Error(ErrorCode::Io, "write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw Error(ErrorCode::Io, "cannot rename into " + path.string());
  }
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string metric_file(std::string_view prefix, MetricKind m) {
  return std::string(prefix) + lower(to_string(m)) + ".csv";
}

// ---------------------------------------------------------------- config

[[noreturn]] void config_error(const std::string& msg) { throw Error(ErrorCode::Config, msg); }

void check_keys(const json& obj, const std::string& where, std::initializer_list<std::string_view> allowed) {
  if (!obj.is_object()) config_error(where + " must be an object");
  for (const auto& [key, _] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      config_error("unknown key '" + where + (where.empty() ? "" : ".") + key + "'");
    }
  }
}

template <typename T>
void read_opt(const json& obj, std::string_view key, const std::string& where, T& target) {
  const auto it = obj.find(std::string(key));
  if (it == obj.end() || it->is_null()) return;
  try {
    target = it->get<T>();
  } catch (const json::exception&) {
    config_error("bad value for '" + where + (where.empty() ? "" : ".") + std::string(key) + "'");
  }
}

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  if (path.is_relative()) path = base / path;
  return path.lexically_normal();
}

DataSource parse_source(const json& j, const std::string& where, const fs::path& base) {
  check_keys(j, where, {"format", "images", "labels", "path", "shape", "n_classes"});
  DataSource src;
  std::string format = "idx";
  read_opt(j, "format", where, format);
  read_opt(j, "n_classes", where, src.n_classes);
  if (format == "idx") {
    src.format = DataSource::Format::Idx;
    std::string images, labels;
    read_opt(j, "images", where, images);
    read_opt(j, "labels", where, labels);
    if (images.empty() || labels.empty()) config_error(where + " needs 'images' and 'labels'");
    src.images = resolve(base, images);
    src.labels = resolve(base, labels);
  } else if (format == "csv") {
    src.format = DataSource::Format::Csv;
    std::string path;
    read_opt(j, "path", where, path);
    if (path.empty()) config_error(where + " needs 'path'");
    src.csv = resolve(base, path);
    std::vector<std::size_t> shape{28, 28, 1};
    read_opt(j, "shape", where, shape);
    if (shape.size() != 3) config_error(where + ".shape must be [height, width, channels]");
    src.shape = {shape[0], shape[1], shape[2]};
  } else {
    config_error(where + ".format must be 'idx' or 'csv'");
  }
  return src;
}

json source_json(const DataSource& src) {
  json j;
  j["n_classes"] = src.n_classes;
  if (src.format == DataSource::Format::Idx) {
    j["format"] = "idx";
    j["images"] = src.images.string();
    j["labels"] = src.labels.string();
  } else {
    j["format"] = "csv";
    j["path"] = src.csv.string();
    j["shape"] = {src.shape.height, src.shape.width, src.shape.channels};
  }
  return j;
}

void require_file(const fs::path& path, const std::string& what) {
  if (path.empty()) config_error(what + " is not set");
  std::error_code ec;
  if (!fs::is_regular_file(path, ec)) config_error(what + " not found: " + path.string());
}

void validate_source(const DataSource& src, const std::string& what) {
  if (src.n_classes < 2) config_error(what + ".n_classes must be at least 2");
  if (src.format == DataSource::Format::Idx) {
    require_file(src.images, what + ".images");
    require_file(src.labels, what + ".labels");
  } else {
    if (src.shape.size() == 0) config_error(what + ".shape must be positive");
    require_file(src.csv, what + ".path");
  }
}

Dataset load_source(const DataSource& src) {
  if (src.format == DataSource::Format::Idx) return load_idx(src.images, src.labels, src.n_classes);
  return load_csv(src.csv, src.shape, src.n_classes);
}

// ---------------------------------------------------------------- scores

void write_scores(const fs::path& dir, const std::vector<ScoreRow>& rows) {
  std::ostringstream scores, preds;
  scores << "example_id,pd,pe,pv\n";
  preds << "example_id,true_label,pred_label\n";
  for (const auto& r : rows) {
    scores << r.id << ',' << csv::format_double(r.pd) << ',' << csv::format_double(r.pe) << ','
           << csv::format_double(r.pv) << '\n';
    preds << r.id << ',' << r.true_label << ',' << r.predicted_label << '\n';
  }
  write_atomic(dir / "scores.csv", scores.str());
  write_atomic(dir / "predictions.csv", preds.str());
}

// ---------------------------------------------------------------- evaluation

json fit_json(const MetricEvaluation& ev) {
  json j;
  j["tuples"] = ev.tuples.size();
  j["gate_passed"] = ev.gate_passed;
  if (ev.spearman) j["spearman"] = *ev.spearman;
  if (ev.fit) {
    j["a"] = ev.fit->a;
    j["b"] = ev.fit->b;
    j["r"] = ev.fit->r;
    j["n_points"] = ev.fit->n_points;
    j["excluded"] = ev.fit->excluded;
  }
  if (ev.linear) {
    j["slope"] = ev.linear->slope;
    j["intercept"] = ev.linear->intercept;
    j["abs_derivative"] = ev.linear->abs_derivative;
  }
  if (!ev.error.empty()) j["error"] = ev.error;
  return j;
}

std::string opt_cell(const std::optional<double>& v) {
  return v ? csv::format_double(*v) : std::string();
}

// ---------------------------------------------------------------- compare

json report_json(const FMeasureReport& r) {
  json j;
  j["method"] = r.method;
  j["mean_count"] = r.mean_count;
  j["exhausted_fraction"] = r.exhausted_fraction;
  j["n"] = r.n;
  j["cap"] = r.cap;
  j["policy"] = r.policy;
  if (r.inc) j["inc"] = *r.inc;
  return j;
}

FMeasureReport report_from_json(const json& j) {
  FMeasureReport r;
  r.method = j.at("method").get<std::string>();
  r.mean_count = j.at("mean_count").get<double>();
  r.exhausted_fraction = j.at("exhausted_fraction").get<double>();
  r.n = j.at("n").get<std::size_t>();
  r.cap = j.at("cap").get<std::size_t>();
  r.policy = j.at("policy").get<std::string>();
  if (j.contains("inc")) r.inc = j.at("inc").get<double>();
  return r;
}

CompareResult read_compare(const fs::path& path) {
  try {
    const auto j = json::parse(read_file(path));
    CompareResult c;
    c.random = report_from_json(j.at("random"));
    c.random_ids = j.at("random_ids").get<std::vector<ExampleId>>();
    for (const auto& [name, rep] : j.at("prioritized").items()) {
      const auto m = parse_metric(name);
      c.prioritized[m] = report_from_json(rep);
      c.top_ids[m] = j.at("top_ids").at(name).get<std::vector<ExampleId>>();
    }
    return c;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::CorruptFile, path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------- manifest

std::string now_utc() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

class Manifest {
 public:
  Manifest(const RunConfig& config, const fs::path& out, const std::string& hash)
      : path_(out / "manifest.json") {
    doc_["tool"] = "nsatp";
    doc_["version"] = kVersion;
    doc_["prng"] = kPrngName;
    doc_["seed_derivation"] = "child = master ^ fnv1a64(stage) ^ example_id";
    doc_["master_seed"] = config.seed;
    doc_["config_hash"] = hash;
    // out and workers live under "run"; they never change an output byte
    doc_["config"] = json::parse(run_config_json(config));
    doc_["config"].erase("out");
    doc_["config"].erase("workers");
    doc_["aggregation"] = "arithmetic mean";
    doc_["complete"] = false;
    doc_["repeats"] = json::array();
    doc_["run"] = {{"out", out.string()},
                   {"workers", config.workers == 0 ? default_workers() : config.workers},
                   {"started_at", now_utc()},
                   {"timings", json::object()}};
  }

  // Stage entries of a previous run with the same hash, for reuse.
  void adopt_previous(const fs::path& out, const std::string& hash) {
    std::error_code ec;
    if (!fs::exists(path_, ec)) return;
    try {
      const auto old = json::parse(read_file(path_));
      if (old.value("config_hash", "") == hash && old.contains("repeats")) previous_ = old["repeats"];
    } catch (...) {
      // an unreadable manifest only means nothing is reused
    }
    (void)out;
  }

  bool reusable(std::size_t repeat, std::string_view stage, const fs::path& dir) const {
    if (!previous_.is_array() || repeat >= previous_.size()) return false;
    const auto& stages = previous_[repeat].value("stages", json::object());
    const auto it = stages.find(std::string(stage));
    if (it == stages.end() || it->value("status", "") != "completed") return false;
    for (const auto& f : it->value("outputs", json::array())) {
      std::error_code ec;
      if (!fs::exists(dir / f.get<std::string>(), ec)) return false;
    }
    return true;
  }

  void add_repeat(std::size_t index, std::uint64_t seed, const std::string& dir) {
    json stages = json::object();
    for (auto name : kStageNames) stages[std::string(name)] = {{"status", "pending"}};
    doc_["repeats"].push_back({{"index", index}, {"seed", seed}, {"dir", dir}, {"stages", stages}});
  }

  void set(std::size_t repeat, std::string_view stage, std::string_view status,
           const std::vector<std::string>& outputs = {}, const std::string& note = {}) {
    auto& entry = doc_["repeats"][repeat]["stages"][std::string(stage)];
    entry = {{"status", status}};
    if (!outputs.empty()) entry["outputs"] = outputs;
    if (!note.empty()) entry["note"] = note;
    write();
  }

  void timing(const std::string& key, double seconds) { doc_["run"]["timings"][key] = seconds; }

  void set_means(const std::vector<std::string>& files) { doc_["means"] = files; }

  void finish() {
    doc_["complete"] = true;
    doc_["run"]["finished_at"] = now_utc();
    write();
  }

  void write() const { write_atomic(path_, doc_.dump(2) + "\n"); }

 private:
  fs::path path_;
  json doc_;
  json previous_;
};

std::vector<std::string> metric_files(std::string_view prefix, const std::vector<MetricKind>& ms) {
  std::vector<std::string> out;
  for (auto m : ms) out.push_back(metric_file(prefix, m));
  return out;
}

}  // namespace

// ---------------------------------------------------------------- RunConfig

void RunConfig::validate() const {
  if (repeats == 0) config_error("repeats must be at least 1");
  if (data) validate_source(*data, "data");
  if (test_data) {
    if (!data) config_error("test_data needs data");
    validate_source(*test_data, "test_data");
  }
  switch (oracle.kind) {
    case OracleKind::Builtin:
      if (!oracle.weights_path.empty()) {
        require_file(oracle.weights_path, "oracle.weights");
      } else if (!data) {
        config_error("a builtin oracle without weights needs data to train on");
      } else if (train_size == 0) {
        config_error("split.train must be positive to train the builtin oracle");
      }
      break;
    case OracleKind::Table:
      require_file(oracle.table_path, "oracle.table");
      break;
    case OracleKind::External:
      if (oracle.command.empty()) config_error("oracle.command is not set");
      if (oracle.timeout.count() <= 0) config_error("oracle.timeout_ms must be positive");
      break;
  }
  for (auto h : hidden_layers) {
    if (h == 0) config_error("model.hidden sizes must be positive");
  }
  try {
    training.validate();
    de.validate();
  } catch (const Error& e) {
    config_error(e.what());
  }
  if (metrics.empty()) config_error("metrics must not be empty");
  std::set<MetricKind> seen(metrics.begin(), metrics.end());
  if (seen.size() != metrics.size()) config_error("metrics must not repeat");
  if (attack_trials == 0) config_error("attack.m must be at least 1");
  if (!(gate_threshold > 0.0 && gate_threshold <= 1.0)) {
    config_error("evaluate.threshold must be in (0, 1]");
  }
  if (select_k == 0) config_error("compare.k must be at least 1");
  if (cap == 0) config_error("compare.cap must be at least 1");
}

RunConfig parse_run_config(std::string_view json_text, const fs::path& base_dir) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    config_error(std::string("config is not valid JSON: ") + e.what());
  }
  check_keys(j, "", {"seed", "out", "workers", "repeats", "data", "test_data", "split", "oracle",
                     "model", "training", "metrics", "directions", "attack", "de", "evaluate",
                     "compare"});
  const fs::path base = fs::absolute(base_dir);
  RunConfig c;
  read_opt(j, "seed", "", c.seed);
  read_opt(j, "workers", "", c.workers);
  read_opt(j, "repeats", "", c.repeats);
  if (j.contains("out")) c.out = resolve(base, j["out"].get<std::string>());
  if (j.contains("data")) c.data = parse_source(j["data"], "data", base);
  if (j.contains("test_data")) c.test_data = parse_source(j["test_data"], "test_data", base);

  if (j.contains("split")) {
    const auto& s = j["split"];
    check_keys(s, "split", {"train", "holdout", "pool"});
    read_opt(s, "train", "split", c.train_size);
    read_opt(s, "holdout", "split", c.holdout_size);
    read_opt(s, "pool", "split", c.pool_size);
  }

  if (j.contains("oracle")) {
    const auto& o = j["oracle"];
    check_keys(o, "oracle", {"kind", "weights", "table", "command", "timeout_ms"});
    std::string kind = "builtin", weights, table;
    read_opt(o, "kind", "oracle", kind);
    c.oracle.kind = parse_oracle_kind(kind);
    read_opt(o, "weights", "oracle", weights);
    read_opt(o, "table", "oracle", table);
    read_opt(o, "command", "oracle", c.oracle.command);
    if (!weights.empty()) c.oracle.weights_path = resolve(base, weights);
    if (!table.empty()) c.oracle.table_path = resolve(base, table);
    std::int64_t timeout_ms = c.oracle.timeout.count();
    read_opt(o, "timeout_ms", "oracle", timeout_ms);
    c.oracle.timeout = std::chrono::milliseconds(timeout_ms);
  }

  if (j.contains("model")) {
    check_keys(j["model"], "model", {"hidden"});
    read_opt(j["model"], "hidden", "model", c.hidden_layers);
  }

  if (j.contains("training")) {
    const auto& t = j["training"];
    check_keys(t, "training", {"preset", "learning_rate", "batch_size", "epochs"});
    read_opt(t, "preset", "training", c.preset);
    c.training = training_preset(c.preset);
    read_opt(t, "learning_rate", "training", c.training.learning_rate);
    read_opt(t, "batch_size", "training", c.training.batch_size);
    read_opt(t, "epochs", "training", c.training.epochs);
  }

  if (j.contains("metrics")) {
    std::vector<std::string> names;
    read_opt(j, "metrics", "", names);
    c.metrics.clear();
    for (const auto& n : names) {
      if (lower(n) == "all") {
        c.metrics.assign(std::begin(kAllMetrics), std::end(kAllMetrics));
      } else {
        c.metrics.push_back(parse_metric(n));
      }
    }
  }

  if (j.contains("directions")) {
    const auto& d = j["directions"];
    if (!d.is_object()) config_error("directions must be an object");
    for (const auto& [name, dir] : d.items()) {
      if (!dir.is_string()) config_error("bad value for 'directions." + name + "'");
      c.directions[parse_metric(name)] = parse_direction(dir.get<std::string>());
    }
  }

  if (j.contains("attack")) {
    const auto& a = j["attack"];
    check_keys(a, "attack", {"kind", "m", "count", "only_correct", "ids"});
    std::string kind = "random";
    read_opt(a, "kind", "attack", kind);
    c.attack = parse_attack_kind(kind);
    read_opt(a, "m", "attack", c.attack_trials);
    read_opt(a, "count", "attack", c.attack_count);
    read_opt(a, "only_correct", "attack", c.attack_only_correct);
    read_opt(a, "ids", "attack", c.attack_ids);
  }

  if (j.contains("de")) {
    const auto& d = j["de"];
    check_keys(d, "de", {"population", "f", "cr", "generations"});
    read_opt(d, "population", "de", c.de.population_size);
    read_opt(d, "f", "de", c.de.differential_weight);
    read_opt(d, "cr", "de", c.de.crossover_rate);
    read_opt(d, "generations", "de", c.de.max_generations);
  }

  if (j.contains("evaluate")) {
    check_keys(j["evaluate"], "evaluate", {"threshold"});
    read_opt(j["evaluate"], "threshold", "evaluate", c.gate_threshold);
  }

  if (j.contains("compare")) {
    const auto& p = j["compare"];
    check_keys(p, "compare", {"k", "cap", "generator"});
    read_opt(p, "k", "compare", c.select_k);
    read_opt(p, "cap", "compare", c.cap);
    std::string gen = "random";
    read_opt(p, "generator", "compare", gen);
    c.compare_generator = parse_attack_kind(gen);
  }
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  std::error_code ec;
  if (!fs::is_regular_file(path, ec)) config_error("config file not found: " + path.string());
  return parse_run_config(read_file(path), fs::absolute(path).parent_path());
}

namespace {

// Everything that can change an output byte.
json hashed_config_json(const RunConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["repeats"] = c.repeats;
  j["data"] = c.data ? source_json(*c.data) : json(nullptr);
  j["test_data"] = c.test_data ? source_json(*c.test_data) : json(nullptr);
  j["split"] = {{"train", c.train_size}, {"holdout", c.holdout_size}, {"pool", c.pool_size}};
  json o;
  o["kind"] = to_string(c.oracle.kind);
  if (!c.oracle.weights_path.empty()) o["weights"] = c.oracle.weights_path.string();
  if (!c.oracle.table_path.empty()) o["table"] = c.oracle.table_path.string();
  if (!c.oracle.command.empty()) o["command"] = c.oracle.command;
  o["timeout_ms"] = c.oracle.timeout.count();
  j["oracle"] = o;
  j["model"] = {{"hidden", c.hidden_layers}};
  j["training"] = {{"preset", c.preset},
                   {"learning_rate", c.training.learning_rate},
                   {"batch_size", c.training.batch_size},
                   {"epochs", c.training.epochs}};
  std::vector<std::string> metrics;
  for (auto m : c.metrics) metrics.emplace_back(to_string(m));
  j["metrics"] = metrics;
  json dirs = json::object();
  for (const auto& [m, d] : c.directions) dirs[std::string(to_string(m))] = to_string(d);
  j["directions"] = dirs;
  j["attack"] = {{"kind", to_string(c.attack)},
                 {"m", c.attack_trials},
                 {"count", c.attack_count},
                 {"only_correct", c.attack_only_correct},
                 {"ids", c.attack_ids}};
  j["de"] = {{"population", c.de.population_size},
             {"f", c.de.differential_weight},
             {"cr", c.de.crossover_rate},
             {"generations", c.de.max_generations}};
  j["evaluate"] = {{"threshold", c.gate_threshold}};
  j["compare"] = {{"k", c.select_k}, {"cap", c.cap}, {"generator", to_string(c.compare_generator)}};
  return j;
}

}  // namespace

std::string run_config_json(const RunConfig& config) {
  auto j = hashed_config_json(config);
  j["out"] = config.out.string();
  j["workers"] = config.workers;
  return j.dump(2);
}

std::string config_hash(const RunConfig& config) {
  const std::string canonical = hashed_config_json(config).dump();
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(stable_hash(canonical)));
  return buf;
}

// ---------------------------------------------------------------- data

PreparedData prepare_data(const RunConfig& config) {
  PreparedData out;
  if (!config.data) return out;
  const Dataset all = load_source(*config.data);
  const Dataset shuffled = subset(all, all.size(), derive_seed(config.seed, "split"));

  auto take = [](const Dataset& ds, std::size_t first, std::size_t count, const char* what) {
    if (first + count > ds.size()) {
      config_error(std::string("split.") + what + " asks for " + std::to_string(count) +
                   " examples but only " + std::to_string(ds.size() - std::min(first, ds.size())) +
                   " remain");
    }
    return slice(ds, first, count);
  };

  if (config.test_data) {
    const Dataset test_all = load_source(*config.test_data);
    if (test_all.shape() != all.shape()) {
      throw Error(ErrorCode::ShapeMismatch, "test_data shape differs from data");
    }
    const Dataset test = subset(test_all, test_all.size(), derive_seed(config.seed, "split-test"));
    out.train = take(shuffled, 0, config.train_size, "train");
    out.holdout = take(test, 0, config.holdout_size, "holdout");
    const std::size_t rest = test.size() - config.holdout_size;
    out.pool = take(test, config.holdout_size, config.pool_size ? config.pool_size : rest, "pool");
  } else {
    out.train = take(shuffled, 0, config.train_size, "train");
    out.holdout = take(shuffled, config.train_size, config.holdout_size, "holdout");
    const std::size_t used = config.train_size + config.holdout_size;
    const std::size_t rest = shuffled.size() - used;
    out.pool = take(shuffled, used, config.pool_size ? config.pool_size : rest, "pool");
  }
  return out;
}

// ---------------------------------------------------------------- train

TrainOutput run_train(const RunConfig& config, const PreparedData& data, const fs::path& out_dir) {
  if (!data.train) config_error("training needs data");
  MlpConfig mlp;
  mlp.layer_sizes.push_back(data.train->shape().size());
  for (auto h : config.hidden_layers) mlp.layer_sizes.push_back(h);
  mlp.layer_sizes.push_back(static_cast<std::size_t>(data.train->n_classes()));

  TrainingConfig tc = config.training;
  tc.seed = derive_seed(config.seed, "train");
  TrainOutput out;
  out.weights = train_builtin(*data.train, mlp, tc, &out.log);
  out.holdout_accuracy = data.holdout ? accuracy(out.weights, *data.holdout) : 0.0;

  fs::create_directories(out_dir);
  const fs::path weights = out_dir / "weights.json";
  fs::path tmp = weights;
  tmp += ".tmp";
  save_weights(out.weights, tmp);
  fs::rename(tmp, weights);

  json log;
  log["preset"] = config.preset;
  log["learning_rate"] = tc.learning_rate;
  log["batch_size"] = tc.batch_size;
  log["epochs"] = tc.epochs;
  log["seed"] = tc.seed;
  log["layer_sizes"] = mlp.layer_sizes;
  log["train_size"] = data.train->size();
  log["holdout_size"] = data.holdout ? data.holdout->size() : 0;
  log["epoch_losses"] = out.log.epoch_losses;
  log["final_loss"] = out.weights.final_loss;
  log["holdout_accuracy"] = out.holdout_accuracy;
  write_atomic(out_dir / "train_log.json", log.dump(2) + "\n");
  return out;
}

// ---------------------------------------------------------------- score

double ScoreRow::value(MetricKind metric) const {
  switch (metric) {
    case MetricKind::PD: return pd;
    case MetricKind::PE: return pe;
    case MetricKind::PV: return pv;
  }
  return 0.0;
}

std::vector<ScoreRow> run_score(const RunConfig& config, const PreparedData& data,
                                const OracleFactory& factory, const fs::path& out_dir) {
  std::vector<ScoreRow> rows;
  auto fill = [](ScoreRow& row, const ProbabilityVector& p) {
    row.pd = probability_difference(p).value;
    row.pe = probability_entropy(p).value;
    row.pv = probability_variance(p).value;
    row.predicted_label = static_cast<int>(p.argmax());
  };

  if (data.pool) {
    const Dataset& pool = *data.pool;
    rows.resize(pool.size());
    parallel_for_each_oracle(pool.size(), config.workers, factory,
                             [&](std::size_t i, Oracle& oracle) {
                               const auto& ex = pool[i];
                               rows[i].id = ex.id;
                               rows[i].true_label = ex.true_label;
                               fill(rows[i], oracle.predict_example(ex, pool.shape()));
                             });
  } else {
    if (config.oracle.kind != OracleKind::Table) {
      config_error("scoring without data needs a table oracle");
    }
    const TableOracle table(config.oracle.table_path);
    for (auto id : table.ids()) {
      ScoreRow row;
      row.id = id;
      fill(row, table.predict_id(id));
      rows.push_back(row);
    }
  }

  fs::create_directories(out_dir);
  write_scores(out_dir, rows);
  if (data.pool) {
    std::ostringstream ids;
    ids << "example_id,source_id\n";
    for (std::size_t i = 0; i < data.pool->size(); ++i) {
      ids << i << ',' << data.pool->source_id(i) << '\n';
    }
    write_atomic(out_dir / "pool_ids.csv", ids.str());
  }
  return rows;
}

std::vector<ScoreRow> read_scores(const fs::path& scores_csv) {
  const auto table = csv::read_table(scores_csv);
  const auto c_id = table.column("example_id");
  const auto c_pd = table.column("pd");
  const auto c_pe = table.column("pe");
  const auto c_pv = table.column("pv");
  std::vector<ScoreRow> rows;
  std::map<ExampleId, std::size_t> index;
  for (const auto& r : table.rows) {
    if (r.size() != table.header.size()) {
      throw Error(ErrorCode::RowLengthMismatch, scores_csv.string() + ": ragged row");
    }
    ScoreRow row;
    row.id = static_cast<ExampleId>(csv::parse_int(r[c_id]));
    row.pd = csv::parse_double(r[c_pd]);
    row.pe = csv::parse_double(r[c_pe]);
    row.pv = csv::parse_double(r[c_pv]);
    if (!index.emplace(row.id, rows.size()).second) {
      throw Error(ErrorCode::DuplicateId, scores_csv.string() + ": id " + std::to_string(row.id));
    }
    rows.push_back(row);
  }
  const fs::path preds = scores_csv.parent_path() / "predictions.csv";
  std::error_code ec;
  if (fs::exists(preds, ec)) {
    const auto p = csv::read_table(preds);
    const auto p_id = p.column("example_id");
    const auto p_true = p.column("true_label");
    const auto p_pred = p.column("pred_label");
    for (const auto& r : p.rows) {
      const auto it = index.find(static_cast<ExampleId>(csv::parse_int(r.at(p_id))));
      if (it == index.end()) continue;
      rows[it->second].true_label = static_cast<int>(csv::parse_int(r.at(p_true)));
      rows[it->second].predicted_label = static_cast<int>(csv::parse_int(r.at(p_pred)));
    }
  }
  return rows;
}

// ---------------------------------------------------------------- rank

namespace {

RankedList rank_metric(const std::vector<ScoreRow>& scores, MetricKind m,
                       const std::map<MetricKind, RankDirection>& directions) {
  std::vector<ScoredExample> scored;
  scored.reserve(scores.size());
  for (const auto& row : scores) scored.push_back({row.id, {m, row.value(m)}});
  const auto it = directions.find(m);
  return rank(scored, it == directions.end() ? default_direction(m) : it->second);
}

}  // namespace

std::map<MetricKind, RankedList> run_rank(const std::vector<ScoreRow>& scores,
                                          const std::vector<MetricKind>& metrics,
                                          const std::map<MetricKind, RankDirection>& directions,
                                          const fs::path& out_dir) {
  std::map<MetricKind, RankedList> out;
  fs::create_directories(out_dir);
  for (auto m : metrics) {
    auto ranked = rank_metric(scores, m, directions);
    std::ostringstream ss;
    write_ranked_csv(ss, ranked);
    write_atomic(out_dir / metric_file("ranked_", m), ss.str());
    out.emplace(m, std::move(ranked));
  }
  return out;
}

// ---------------------------------------------------------------- attack

std::vector<ExampleId> select_attack_ids(const RunConfig& config,
                                         const std::vector<ScoreRow>& scores) {
  if (!config.attack_ids.empty()) return config.attack_ids;
  std::vector<const ScoreRow*> sorted;
  for (const auto& r : scores) sorted.push_back(&r);
  std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->id < b->id; });
  std::vector<ExampleId> ids;
  for (const auto* r : sorted) {
    if (ids.size() == config.attack_count) break;
    if (config.attack_only_correct && !r->correct()) continue;
    ids.push_back(r->id);
  }
  return ids;
}

std::vector<AttackOutcome> run_attack(const RunConfig& config, const Dataset& pool,
                                      const OracleFactory& factory,
                                      const std::vector<ExampleId>& ids, const fs::path& out_dir) {
  for (auto id : ids) (void)pool.at(id);
  std::vector<std::vector<AttackOutcome>> per(ids.size());
  parallel_for_each_oracle(ids.size(), config.workers, factory, [&](std::size_t i, Oracle& oracle) {
    const auto& ex = pool.at(ids[i]);
    const auto seed = derive_seed(config.seed, "attack", ex.id);
    if (config.attack == AttackKind::Random) {
      per[i] = random_attack(ex, pool.shape(), oracle, config.attack_trials, seed);
    } else {
      DeParams p = config.de;
      p.seed = seed;
      per[i] = {de_attack(ex, pool.shape(), oracle, p)};
    }
  });
  std::vector<AttackOutcome> all;
  for (auto& v : per) all.insert(all.end(), v.begin(), v.end());
  fs::create_directories(out_dir);
  std::ostringstream ss;
  write_attack_header(ss);
  write_attack_rows(ss, all);
  write_atomic(out_dir / "attacks.csv", ss.str());
  return all;
}

std::vector<AttackOutcome> read_attacks(const fs::path& attacks_csv) {
  const auto t = csv::read_table(attacks_csv);
  const auto c_id = t.column("example_id");
  const auto c_trial = t.column("trial");
  const auto c_ok = t.column("success");
  const auto c_pred = t.column("pred_label");
  const auto c_prob = t.column("true_prob_after");
  const auto c_q = t.column("queries");
  const auto c_x = t.column("x");
  const auto c_y = t.column("y");
  std::vector<AttackOutcome> out;
  for (const auto& r : t.rows) {
    if (r.size() != t.header.size()) {
      throw Error(ErrorCode::RowLengthMismatch, attacks_csv.string() + ": ragged row");
    }
    AttackOutcome o;
    o.example_id = static_cast<ExampleId>(csv::parse_int(r[c_id]));
    o.trial_index = static_cast<std::size_t>(csv::parse_int(r[c_trial]));
    o.success = csv::parse_int(r[c_ok]) != 0;
    o.predicted_label = static_cast<int>(csv::parse_int(r[c_pred]));
    o.true_label_prob_after = csv::parse_double(r[c_prob]);
    o.oracle_queries = static_cast<std::size_t>(csv::parse_int(r[c_q]));
    o.perturbation.x = static_cast<std::size_t>(csv::parse_int(r[c_x]));
    o.perturbation.y = static_cast<std::size_t>(csv::parse_int(r[c_y]));
    out.push_back(std::move(o));
  }
  return out;
}

// ---------------------------------------------------------------- evaluate

EvaluationResult run_evaluate(const std::vector<ScoreRow>& scores,
                              const std::vector<AttackOutcome>& outcomes,
                              const std::vector<MetricKind>& metrics, double threshold,
                              const fs::path& out_dir) {
  std::map<ExampleId, std::vector<AttackOutcome>> by_id;
  for (const auto& o : outcomes) by_id[o.example_id].push_back(o);
  std::map<ExampleId, const ScoreRow*> score_of;
  for (const auto& r : scores) score_of[r.id] = &r;

  std::vector<std::pair<const ScoreRow*, double>> joined;
  for (const auto& [id, outs] : by_id) {
    const auto it = score_of.find(id);
    if (it == score_of.end()) {
      throw Error(ErrorCode::MissingId, "attacked example " + std::to_string(id) + " has no score");
    }
    joined.emplace_back(it->second, compute_eff(outs));
  }

  EvaluationResult result;
  result.threshold = threshold;
  for (auto m : metrics) {
    MetricEvaluation ev;
    std::vector<double> vs, es;
    for (const auto& [row, e] : joined) {
      ev.tuples.push_back({row->value(m), e});
      vs.push_back(row->value(m));
      es.push_back(e);
    }
    try {
      ev.spearman = spearman(vs, es);
    } catch (const Error&) {
      // too few tuples; the fit below reports it
    }
    try {
      ev.fit = fit_exponential(ev.tuples);
      ev.linear = linearize(*ev.fit);
      ev.gate_passed = correlation_gate(*ev.fit, threshold);
    } catch (const Error& e) {
      ev.error = e.what();
    }
    result.metrics.emplace(m, std::move(ev));
  }

  std::map<MetricKind, ExpFit> fits;
  for (const auto& [m, ev] : result.metrics) {
    if (ev.fit) fits.emplace(m, *ev.fit);
  }
  if (fits.size() == 3) result.eff_d = eff_d_compare(fits);

  fs::create_directories(out_dir);
  std::ostringstream fcsv;
  fcsv << "metric,a,b,r,n_points,excluded,abs_derivative,spearman,gate,mark\n";
  json doc;
  doc["threshold"] = threshold;
  doc["tuples"] = joined.size();
  doc["metrics"] = json::object();
  for (auto m : metrics) {
    const auto& ev = result.metrics.at(m);
    const std::string name(to_string(m));
    std::string mark;
    if (result.eff_d) mark = std::string(to_string(result.eff_d->marks.at(m)));
    fcsv << name << ',';
    if (ev.fit) {
      fcsv << csv::format_double(ev.fit->a) << ',' << csv::format_double(ev.fit->b) << ','
           << csv::format_double(ev.fit->r) << ',' << ev.fit->n_points << ',' << ev.fit->excluded
           << ',' << csv::format_double(ev.linear->abs_derivative) << ',';
    } else {
      fcsv << ",,,,,,";
    }
    fcsv << opt_cell(ev.spearman) << ',' << (ev.gate_passed ? 1 : 0) << ',' << mark << '\n';
    doc["metrics"][name] = fit_json(ev);

    std::ostringstream plot;
    plot << "kind,v,e\n";
    double lo = 0.0, hi = 0.0;
    for (std::size_t i = 0; i < ev.tuples.size(); ++i) {
      const auto& t = ev.tuples[i];
      plot << "tuple," << csv::format_double(t.v) << ',' << csv::format_double(t.e) << '\n';
      lo = i == 0 ? t.v : std::min(lo, t.v);
      hi = i == 0 ? t.v : std::max(hi, t.v);
    }
    if (ev.fit && hi > lo) {
      for (const auto& [v, e] : sample_curve(*ev.fit, lo, hi)) {
        plot << "curve," << csv::format_double(v) << ',' << csv::format_double(e) << '\n';
      }
    }
    write_atomic(out_dir / metric_file("plot_", m), plot.str());
  }
  if (result.eff_d) {
    json marks = json::object();
    for (const auto& [m, mark] : result.eff_d->marks) {
      marks[std::string(to_string(m))] = to_string(mark);
    }
    doc["eff_d"] = {{"marks", marks}, {"tie", result.eff_d->tie}};
  } else {
    doc["eff_d"] = nullptr;
  }
  write_atomic(out_dir / "fits.csv", fcsv.str());
  write_atomic(out_dir / "evaluation.json", doc.dump(2) + "\n");
  return result;
}

// ---------------------------------------------------------------- compare

CompareResult run_compare(const RunConfig& config, const Dataset& pool,
                          const std::vector<ScoreRow>& scores, const OracleFactory& factory,
                          const fs::path& out_dir) {
  CompareResult result;
  std::vector<ExampleId> all_ids;
  for (const auto& r : scores) all_ids.push_back(r.id);
  std::sort(all_ids.begin(), all_ids.end());
  result.random_ids =
      random_select(all_ids, config.select_k, derive_seed(config.seed, "compare-select"));

  std::set<ExampleId> needed(result.random_ids.begin(), result.random_ids.end());
  for (auto m : config.metrics) {
    result.top_ids[m] = select_top(rank_metric(scores, m, config.directions), config.select_k);
    needed.insert(result.top_ids[m].begin(), result.top_ids[m].end());
  }

  // One count per distinct example, shared by every list that contains it.
  const std::vector<ExampleId> ids(needed.begin(), needed.end());
  std::vector<FirstSuccess> counts(ids.size());
  parallel_for_each_oracle(ids.size(), config.workers, factory, [&](std::size_t i, Oracle& oracle) {
    counts[i] = first_success_count(pool.at(ids[i]), pool.shape(), oracle, config.compare_generator,
                                    config.cap, derive_seed(config.seed, "compare", ids[i]),
                                    config.de);
  });
  auto gather = [&](const std::vector<ExampleId>& list) {
    std::vector<FirstSuccess> out;
    for (auto id : list) {
      out.push_back(counts[std::lower_bound(ids.begin(), ids.end(), id) - ids.begin()]);
    }
    return out;
  };

  result.random = f_measure(gather(result.random_ids), config.cap, "Random");
  for (auto m : config.metrics) {
    auto rep = f_measure(gather(result.top_ids[m]), config.cap, "NSATP");
    if (result.random.mean_count > 0.0) {
      rep.inc = improvement(result.random.mean_count, rep.mean_count);
    }
    result.prioritized[m] = rep;
  }

  std::ostringstream table;
  table << "method";
  for (auto m : config.metrics) table << ',' << to_string(m);
  table << "\nNSATP";
  for (auto m : config.metrics) table << ',' << csv::format_double(result.prioritized[m].mean_count);
  table << "\nRandom";
  for (std::size_t i = 0; i < config.metrics.size(); ++i) {
    table << ',' << csv::format_double(result.random.mean_count);
  }
  table << "\nInc.";
  for (auto m : config.metrics) table << ',' << opt_cell(result.prioritized[m].inc);
  table << '\n';

  json doc;
  doc["k"] = config.select_k;
  doc["cap"] = config.cap;
  doc["generator"] = to_string(config.compare_generator);
  doc["population"] = all_ids.size();
  doc["random"] = report_json(result.random);
  doc["random_ids"] = result.random_ids;
  doc["prioritized"] = json::object();
  doc["top_ids"] = json::object();
  for (auto m : config.metrics) {
    const std::string name(to_string(m));
    doc["prioritized"][name] = report_json(result.prioritized[m]);
    doc["top_ids"][name] = result.top_ids[m];
  }
  fs::create_directories(out_dir);
  write_atomic(out_dir / "compare.csv", table.str());
  write_atomic(out_dir / "compare.json", doc.dump(2) + "\n");
  return result;
}

// ---------------------------------------------------------------- pipeline

OracleFactory oracle_factory_for(const RunConfig& config, const std::optional<ModelWeights>& trained) {
  if (config.oracle.kind == OracleKind::Builtin && config.oracle.weights_path.empty()) {
    if (!trained) config_error("builtin oracle has neither weights on disk nor a trained model");
    return make_builtin_factory(std::make_shared<const ModelWeights>(*trained));
  }
  return make_oracle_factory(config.oracle);
}

namespace {

void write_means(const RunConfig& config, const PipelineResult& result, const fs::path& out) {
  std::ostringstream fits;
  fits << "metric,repeats,a,b,r,abs_derivative\n";
  for (auto m : config.metrics) {
    double a = 0, b = 0, r = 0, d = 0;
    std::size_t n = 0;
    for (const auto& rep : result.repeats) {
      const auto it = rep.evaluation.metrics.find(m);
      if (it == rep.evaluation.metrics.end() || !it->second.fit) continue;
      a += it->second.fit->a;
      b += it->second.fit->b;
      r += it->second.fit->r;
      d += it->second.linear->abs_derivative;
      ++n;
    }
    fits << to_string(m) << ',' << n;
    if (n > 0) {
      const double k = static_cast<double>(n);
      fits << ',' << csv::format_double(a / k) << ',' << csv::format_double(b / k) << ','
           << csv::format_double(r / k) << ',' << csv::format_double(d / k) << '\n';
    } else {
      fits << ",,,,\n";
    }
  }
  write_atomic(out / "mean_fits.csv", fits.str());

  std::ostringstream cmp;
  cmp << "method";
  for (auto m : config.metrics) cmp << ',' << to_string(m);
  auto row = [&](const char* name, auto value) {
    cmp << '\n' << name;
    for (auto m : config.metrics) {
      double sum = 0.0;
      std::size_t n = 0;
      for (const auto& rep : result.repeats) {
        if (!rep.compare) continue;
        if (const auto v = value(*rep.compare, m)) {
          sum += *v;
          ++n;
        }
      }
      cmp << ',' << (n ? csv::format_double(sum / static_cast<double>(n)) : std::string());
    }
  };
  row("NSATP", [](const CompareResult& c, MetricKind m) -> std::optional<double> {
    return c.prioritized.at(m).mean_count;
  });
  row("Random", [](const CompareResult& c, MetricKind) -> std::optional<double> {
    return c.random.mean_count;
  });
  row("Inc.", [](const CompareResult& c, MetricKind m) { return c.prioritized.at(m).inc; });
  cmp << '\n';
  write_atomic(out / "mean_compare.csv", cmp.str());
}

}  // namespace

PipelineResult run_pipeline(const RunConfig& config, const PipelineOptions& options) {
  config.validate();
  if (config.out.empty()) config_error("no output directory given");
  const fs::path out = fs::absolute(config.out);
  fs::create_directories(out);

  const std::string hash = config_hash(config);
  Manifest manifest(config, out, hash);
  if (!options.force) manifest.adopt_previous(out, hash);
  auto log = [&](const std::string& line) {
    if (options.log) options.log(line);
  };

  PipelineResult result;
  for (std::size_t r = 0; r < config.repeats; ++r) {
    RunConfig rc = config;
    rc.seed = config.repeats == 1 ? config.seed : derive_seed(config.seed, "repeat", r);
    const std::string sub = config.repeats == 1 ? "." : "repeat-" + std::to_string(r);
    const fs::path dir = config.repeats == 1 ? out : out / sub;
    fs::create_directories(dir);
    manifest.add_repeat(r, rc.seed, sub);
  }
  manifest.write();

  for (std::size_t r = 0; r < config.repeats; ++r) {
    RunConfig rc = config;
    rc.seed = config.repeats == 1 ? config.seed : derive_seed(config.seed, "repeat", r);
    const fs::path dir = config.repeats == 1 ? out : out / ("repeat-" + std::to_string(r));
    const std::string tag = config.repeats == 1 ? "" : "repeat-" + std::to_string(r) + "/";
    RepeatResult rep;
    rep.seed = rc.seed;

    std::optional<PreparedData> data;
    auto need_data = [&]() -> const PreparedData& {
      if (!data) data = prepare_data(rc);
      return *data;
    };

    // Once a stage reruns, everything downstream reruns too.
    bool upstream_ran = false;
    // Runs one stage: reuse, skip, or execute with manifest bookkeeping.
    auto stage = [&](std::string_view name, const std::vector<std::string>& outputs, bool cacheable,
                     auto&& reuse, auto&& run) {
      const std::string key = tag + std::string(name);
      if (cacheable && !upstream_ran && manifest.reusable(r, name, dir)) {
        reuse();
        manifest.set(r, name, "completed", outputs, "reused");
        log(key + ": reused");
        return;
      }
      // rank and evaluate are pure functions of cached inputs
      if (cacheable) upstream_ran = true;
      manifest.set(r, name, "running");
      log(key + ": running");
      const auto t0 = std::chrono::steady_clock::now();
      try {
        run();
      } catch (...) {
        manifest.set(r, name, "failed");
        log(key + ": failed");
        throw;
      }
      const double secs =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      manifest.timing(key, secs);
      manifest.set(r, name, "completed", outputs);
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.2fs", secs);
      log(key + ": completed in " + buf);
    };

    const bool trains =
        rc.oracle.kind == OracleKind::Builtin && rc.oracle.weights_path.empty();
    if (trains) {
      stage("train", {"weights.json", "train_log.json"}, true,
            [&] {
              TrainOutput t;
              t.weights = load_weights(dir / "weights.json");
              const auto j = json::parse(read_file(dir / "train_log.json"));
              t.log.epoch_losses = j.at("epoch_losses").get<std::vector<double>>();
              t.holdout_accuracy = j.at("holdout_accuracy").get<double>();
              rep.train = std::move(t);
            },
            [&] { rep.train = run_train(rc, need_data(), dir); });
    } else {
      manifest.set(r, "train", "skipped", {}, "oracle needs no training");
    }

    std::optional<ModelWeights> trained;
    if (rep.train) trained = rep.train->weights;
    const OracleFactory factory = oracle_factory_for(rc, trained);

    std::vector<std::string> score_outputs{"scores.csv", "predictions.csv"};
    if (rc.data) score_outputs.push_back("pool_ids.csv");
    stage("score", score_outputs, true, [&] { rep.scores = read_scores(dir / "scores.csv"); },
          [&] { rep.scores = run_score(rc, need_data(), factory, dir); });

    stage("rank", metric_files("ranked_", rc.metrics), false, [] {},
          [&] { run_rank(rep.scores, rc.metrics, rc.directions, dir); });

    if (!rc.data) {
      for (auto name : {"attack", "evaluate", "compare"}) {
        manifest.set(r, name, "skipped", {}, "no dataset to perturb");
      }
      result.repeats.push_back(std::move(rep));
      continue;
    }

    stage("attack", {"attacks.csv"}, true, [&] { rep.attacks = read_attacks(dir / "attacks.csv"); },
          [&] {
            rep.attacks = run_attack(rc, *need_data().pool, factory,
                                     select_attack_ids(rc, rep.scores), dir);
          });

    auto eval_outputs = metric_files("plot_", rc.metrics);
    eval_outputs.insert(eval_outputs.begin(), {"fits.csv", "evaluation.json"});
    stage("evaluate", eval_outputs, false, [] {}, [&] {
      rep.evaluation = run_evaluate(rep.scores, rep.attacks, rc.metrics, rc.gate_threshold, dir);
    });

    stage("compare", {"compare.csv", "compare.json"}, true,
          [&] { rep.compare = read_compare(dir / "compare.json"); },
          [&] { rep.compare = run_compare(rc, *need_data().pool, rep.scores, factory, dir); });

    result.repeats.push_back(std::move(rep));
  }

  if (config.repeats > 1) {
    write_means(config, result, out);
    manifest.set_means({"mean_fits.csv", "mean_compare.csv"});
  }
  manifest.finish();
  return result;
}

}  // namespace nsatp
