#include "stddp/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "stddp/baselines.hpp"
#include "stddp/error.hpp"
#include "stddp/synthetic.hpp"

namespace stddp {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

std::uint64_t parse_unsigned(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(value, &used);
    if (used != value.size() || v < 0) throw InvalidInput("");
    return static_cast<std::uint64_t>(v);
  } catch (const std::exception&) {
    throw InvalidInput("'" + key + "' expects a non-negative integer, got '" + value + "'");
  }
}

double parse_real(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size() || !std::isfinite(v)) throw InvalidInput("");
    return v;
  } catch (const std::exception&) {
    throw InvalidInput("'" + key + "' expects a number, got '" + value + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "1" || value == "true" || value == "yes") return true;
  if (value == "0" || value == "false" || value == "no") return false;
  throw InvalidInput("'" + key + "' expects true|false, got '" + value + "'");
}

std::string join(const std::vector<std::size_t>& values) {
  std::string s;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(values[i]);
  }
  return s;
}

std::string variant_key(const VariantConfig& v) {
  std::string name = v.name();
  std::transform(name.begin(), name.end(), name.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return name;
}

std::ofstream open_output(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("cannot write " + path.string());
  return out;
}

void write_config_comment(std::ostream& out, const ExperimentConfig& config) {
  std::istringstream lines(config.to_text());
  std::string line;
  while (std::getline(lines, line)) out << "# " << line << '\n';
}

void write_config_file(const ExperimentConfig& config, const std::string& name) {
  auto out = open_output(config.out / name);
  out << config.to_text();
}

std::size_t raw_user_count(const RawCorpus& raw) {
  std::set<std::string_view> users;
  for (const auto& c : raw.checkins) users.insert(c.user_id);
  return users.size();
}

HyperParams hyper_with(const HyperParams& base, const std::string& param, std::size_t value) {
  HyperParams hp = base;
  if (param == "d") {
    hp.embedding_dim = value;
  } else if (param == "h") {
    hp.hidden_units = value;
  } else if (param == "w") {
    hp.window = value;
  } else {
    throw InvalidInput("sweep parameter must be d, h or w, got '" + param + "'");
  }
  return hp;
}

}  // namespace

const std::vector<std::string>& ExperimentConfig::keys() {
  static const std::vector<std::string> k = {
      "data",   "format",  "out",     "seed",     "d",             "h",       "w",
      "batch",  "lr",      "epochs",  "patience", "k",             "variant", "metric",
      "threads", "split",  "checkpoint", "min_user", "min_poi_users", "fixpoint", "cache",
      "sweep",  "values"};
  return k;
}

void ExperimentConfig::set(const std::string& raw_key, const std::string& raw_value) {
  const std::string key = trim(raw_key);
  const std::string value = trim(raw_value);
  if (key == "data") {
    data = value;
  } else if (key == "format") {
    format = parse_dataset_format(value);
  } else if (key == "out") {
    out = value;
  } else if (key == "seed") {
    seed = parse_unsigned(key, value);
  } else if (key == "d") {
    hyper.embedding_dim = parse_unsigned(key, value);
  } else if (key == "h") {
    hyper.hidden_units = parse_unsigned(key, value);
  } else if (key == "w") {
    hyper.window = parse_unsigned(key, value);
  } else if (key == "batch") {
    train.batch_size = parse_unsigned(key, value);
  } else if (key == "lr") {
    train.learning_rate = parse_real(key, value);
  } else if (key == "epochs") {
    train.max_epochs = parse_unsigned(key, value);
  } else if (key == "patience") {
    train.patience = parse_unsigned(key, value);
  } else if (key == "k") {
    train.ks = parse_ks(value);
  } else if (key == "variant") {
    variant = VariantConfig::parse(value);
  } else if (key == "metric") {
    train.metric = parse_early_stop_metric(value);
  } else if (key == "threads") {
    train.threads = parse_unsigned(key, value);
  } else if (key == "split") {
    split = parse_split_tag(value);
  } else if (key == "checkpoint") {
    checkpoint = value;
  } else if (key == "min_user") {
    filter.min_user_checkins = parse_unsigned(key, value);
  } else if (key == "min_poi_users") {
    filter.min_poi_users = parse_unsigned(key, value);
  } else if (key == "fixpoint") {
    filter.fixpoint = parse_bool(key, value);
  } else if (key == "cache") {
    cache_rows = parse_unsigned(key, value);
  } else if (key == "sweep") {
    sweep_param = value;
  } else if (key == "values") {
    sweep_values = parse_ks(value);
  } else {
    throw InvalidInput("unknown config key '" + key + "'");
  }
}

void ExperimentConfig::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open config " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string body = trim(line.substr(0, line.find('#')));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw InvalidInput(path.string() + ":" + std::to_string(line_no) + ": expected key=value");
    }
    set(body.substr(0, eq), body.substr(eq + 1));
  }
}

void ExperimentConfig::validate() const {
  hyper.validate();
  train.validate();
  variant.validate();
  if (cache_rows == 0) throw InvalidInput("cache must hold at least one row");
  if (std::find(train.ks.begin(), train.ks.end(), 5) == train.ks.end() &&
      (train.metric == EarlyStopMetric::recall_at_5)) {
    throw InvalidInput("early-stop metric recall@5 needs 5 in k");
  }
  for (std::size_t k : {1, 5, 10}) {
    const bool needs = (k == 1 && train.metric == EarlyStopMetric::recall_at_1) ||
                       (k == 10 && train.metric == EarlyStopMetric::recall_at_10);
    if (needs && std::find(train.ks.begin(), train.ks.end(), k) == train.ks.end()) {
      throw InvalidInput("early-stop metric " + std::string(to_string(train.metric)) +
                         " needs " + std::to_string(k) + " in k");
    }
  }
}

std::map<std::string, std::string> ExperimentConfig::to_map() const {
  std::ostringstream lr;
  lr << std::setprecision(17) << train.learning_rate;
  return {
      {"data", data},
      {"format", to_string(format)},
      {"out", out.string()},
      {"seed", std::to_string(seed)},
      {"d", std::to_string(hyper.embedding_dim)},
      {"h", std::to_string(hyper.hidden_units)},
      {"w", std::to_string(hyper.window)},
      {"batch", std::to_string(train.batch_size)},
      {"lr", lr.str()},
      {"epochs", std::to_string(train.max_epochs)},
      {"patience", std::to_string(train.patience)},
      {"k", join(train.ks)},
      {"variant", variant_key(variant)},
      {"metric", to_string(train.metric)},
      {"threads", std::to_string(train.threads)},
      {"split", to_string(split)},
      {"checkpoint", checkpoint},
      {"min_user", std::to_string(filter.min_user_checkins)},
      {"min_poi_users", std::to_string(filter.min_poi_users)},
      {"fixpoint", filter.fixpoint ? "true" : "false"},
      {"cache", std::to_string(cache_rows)},
      {"sweep", sweep_param},
      {"values", join(sweep_values)},
  };
}

std::string ExperimentConfig::to_text() const {
  const auto map = to_map();
  std::string text;
  for (const auto& key : keys()) text += key + "=" + map.at(key) + "\n";
  return text;
}

void CorpusStats::write_table(std::ostream& out) const {
  std::ostringstream s;
  s << std::left << std::setw(10) << "" << std::right << std::setw(10) << "#user"
    << std::setw(10) << "#POI" << std::setw(12) << "#check_in" << std::setw(12) << "sparsity"
    << '\n';
  if (raw_checkins > 0) {
    const double raw_sparsity =
        1.0 - static_cast<double>(raw_checkins) /
                  (static_cast<double>(raw_users) * static_cast<double>(raw_pois));
    s << std::left << std::setw(10) << "raw" << std::right << std::setw(10) << raw_users
      << std::setw(10) << raw_pois << std::setw(12) << raw_checkins << std::setw(11)
      << std::fixed << std::setprecision(3) << 100.0 * raw_sparsity << "%\n";
  }
  s << std::left << std::setw(10) << "filtered" << std::right << std::setw(10) << users
    << std::setw(10) << pois << std::setw(12) << checkins << std::setw(11) << std::fixed
    << std::setprecision(3) << 100.0 * sparsity << "%\n";
  s << "malformed lines: " << malformed_lines << '\n';
  s << "samples: train " << train_samples << ", val " << validation_samples << ", test "
    << test_samples << '\n';
  out << s.str();
}

CorpusStats corpus_stats(const PreparedCorpus& prepared) {
  CorpusStats stats;
  stats.users = prepared.corpus.num_users();
  stats.pois = prepared.corpus.num_pois();
  stats.checkins = prepared.corpus.num_checkins();
  stats.sparsity = prepared.corpus.sparsity();
  for (const auto& s : prepared.samples) {
    switch (s.split) {
      case SplitTag::train:
        ++stats.train_samples;
        break;
      case SplitTag::validation:
        ++stats.validation_samples;
        break;
      case SplitTag::test:
        ++stats.test_samples;
        break;
    }
  }
  return stats;
}

PreparedCorpus load_corpus(const ExperimentConfig& config, CorpusStats* stats) {
  if (config.data.empty()) throw InvalidInput("no input data given (--data)");
  const std::filesystem::path path = config.data;
  if (!std::filesystem::exists(path)) throw InvalidInput("no such file: " + path.string());
  PreparedCorpus prepared;
  RawCorpus raw;
  bool from_raw = false;
  if (is_prepared_file(path)) {
    prepared = read_prepared(path);
    if (prepared.window != config.hyper.window) {
      prepared.samples = build_samples(prepared.corpus, prepared.split, config.hyper.window);
      prepared.window = config.hyper.window;
    }
  } else {
    raw = parse_dataset(path, config.format);
    from_raw = true;
    prepared = prepare_corpus(filter_min_activity(raw, config.filter), config.hyper.window);
  }
  if (stats) {
    *stats = corpus_stats(prepared);
    if (from_raw) {
      stats->raw_users = raw_user_count(raw);
      stats->raw_pois = raw.pois.size();
      stats->raw_checkins = raw.checkins.size();
      stats->malformed_lines = raw.malformed();
    }
  }
  return prepared;
}

void write_comparison_csv(std::ostream& out, const std::vector<NamedReport>& rows,
                          const std::string& first_column) {
  out << first_column;
  if (!rows.empty()) {
    for (std::size_t k : rows.front().report.ks) out << ",recall@" << k;
    for (std::size_t k : rows.front().report.ks) out << ",f1@" << k;
  }
  out << ",map,instances\n" << std::setprecision(17);
  for (const auto& row : rows) {
    out << row.name;
    for (double v : row.report.recall) out << ',' << v;
    for (double v : row.report.f1) out << ',' << v;
    out << ',' << row.report.map << ',' << row.report.count << '\n';
  }
}

void write_comparison_table(std::ostream& out, const std::vector<NamedReport>& rows) {
  std::ostringstream s;
  s << std::left << std::setw(12) << "method" << std::right;
  if (!rows.empty()) {
    for (std::size_t k : rows.front().report.ks) s << std::setw(11) << ("Recall@" + std::to_string(k));
    for (std::size_t k : rows.front().report.ks) s << std::setw(8) << ("F1@" + std::to_string(k));
  }
  s << std::setw(9) << "MAP" << '\n' << std::fixed << std::setprecision(4);
  for (const auto& row : rows) {
    s << std::left << std::setw(12) << row.name << std::right;
    for (double v : row.report.recall) s << std::setw(11) << v;
    for (double v : row.report.f1) s << std::setw(8) << v;
    s << std::setw(9) << row.report.map << '\n';
  }
  out << s.str();
}

FitResult train_on(const PreparedCorpus& prepared, const SpatialRowCache& spatial,
                   const ExperimentConfig& config, std::ostream* log) {
  const auto train = select_split(prepared.samples, SplitTag::train);
  const auto validation = select_split(prepared.samples, SplitTag::validation);
  const std::size_t users = prepared.corpus.num_users();
  const std::size_t pois = prepared.corpus.num_pois();

  ModelParams init;
  if (!config.checkpoint.empty()) {
    init = load_checkpoint(std::filesystem::path(config.checkpoint));
    check_compatible(init, users, pois, config.hyper);
  } else {
    Rng init_rng = Rng(config.seed).child(1);
    init = ModelParams::glorot(users, pois, config.hyper, init_rng);
  }
  TrainConfig tc = config.train;
  tc.seed = config.seed;
  FitHooks hooks;
  if (log) {
    hooks.on_epoch = [log](const EpochLog& e) {
      *log << "epoch " << e.epoch << "  loss " << std::fixed << std::setprecision(5)
           << e.train_loss << "  val MAP " << std::setprecision(4) << e.validation.map << '\n';
      log->unsetf(std::ios::fixed);
    };
  }
  return fit(train, validation, std::move(init), spatial, config.variant, tc, hooks);
}

CorpusStats cmd_prepare(const ExperimentConfig& config, std::ostream& log) {
  config.validate();
  CorpusStats stats;
  const PreparedCorpus prepared = load_corpus(config, &stats);
  std::filesystem::create_directories(config.out);
  write_prepared(config.out / "corpus.stddp", prepared);
  {
    auto out = open_output(config.out / "stats.txt");
    stats.write_table(out);
  }
  write_config_file(config, "prepare.config");
  stats.write_table(log);
  log << "wrote " << (config.out / "corpus.stddp").string() << '\n';
  return stats;
}

TrainOutcome cmd_train(const ExperimentConfig& config, std::ostream& log) {
  config.validate();
  const PreparedCorpus prepared = load_corpus(config);
  const SpatialRowCache spatial(prepared.corpus.pois, config.cache_rows);
  TrainOutcome outcome;
  outcome.fit = train_on(prepared, spatial, config, &log);
  std::filesystem::create_directories(config.out);
  outcome.checkpoint = config.out / "checkpoint.bin";
  save_checkpoint(outcome.checkpoint, outcome.fit.best);
  {
    auto out = open_output(config.out / "train_log.csv");
    write_config_comment(out, config);
    write_log_csv(out, outcome.fit.log);
  }
  {
    auto out = open_output(config.out / "train_log.txt");
    write_log_table(out, outcome.fit.log);
  }
  write_config_file(config, "train.config");
  write_log_table(log, outcome.fit.log);
  log << "best epoch " << outcome.fit.best_epoch << " (" << to_string(config.train.metric) << " "
      << outcome.fit.best_metric << "); checkpoint " << outcome.checkpoint.string() << '\n';
  return outcome;
}

MetricsReport cmd_evaluate(const ExperimentConfig& config, std::ostream& log) {
  config.validate();
  const PreparedCorpus prepared = load_corpus(config);
  const std::filesystem::path ckpt =
      config.checkpoint.empty() ? config.out / "checkpoint.bin" : std::filesystem::path(config.checkpoint);
  const ModelParams params = load_checkpoint(ckpt);
  check_compatible(params, prepared.corpus.num_users(), prepared.corpus.num_pois(), config.hyper);
  const SpatialRowCache spatial(prepared.corpus.pois, config.cache_rows);
  const auto samples = select_split(prepared.samples, config.split);
  const MetricsReport report =
      evaluate_model(params, spatial, config.variant, samples, config.train.ks, config.train.threads);
  const std::string stem = std::string("report_") + to_string(config.split);
  {
    auto out = open_output(config.out / (stem + ".csv"));
    write_config_comment(out, config);
    report.write_csv(out);
  }
  {
    auto out = open_output(config.out / (stem + ".txt"));
    report.write_table(out);
  }
  log << config.variant.name() << " on " << to_string(config.split) << " split\n";
  report.write_table(log);
  return report;
}

std::vector<NamedReport> cmd_baselines(const ExperimentConfig& config, std::ostream& log) {
  config.validate();
  const PreparedCorpus prepared = load_corpus(config);
  const CountingBaselines baselines(prepared.corpus, prepared.split);
  const auto samples = select_split(prepared.samples, config.split);
  const auto& ks = config.train.ks;
  std::vector<NamedReport> rows;
  rows.push_back({"Forward", evaluate([&](const Sample& s) { return baselines.rank_forward(s); },
                                      samples, ks)});
  rows.push_back({"Backward", evaluate([&](const Sample& s) { return baselines.rank_backward(s); },
                                       samples, ks)});
  rows.push_back({"TOP1", evaluate([&](const Sample&) { return baselines.rank_top1(); }, samples, ks)});
  rows.push_back({"TOP2", evaluate([&](const Sample& s) { return baselines.rank_top2(s.user); },
                                   samples, ks)});
  std::size_t forward_fallbacks = 0, backward_fallbacks = 0, top2_fallbacks = 0;
  for (const auto& s : samples) {
    forward_fallbacks += !baselines.has_successors(s.forward.front());
    backward_fallbacks += !baselines.has_predecessors(s.backward.front());
    top2_fallbacks += !baselines.knows_user(s.user);
  }
  const std::string stem = std::string("baselines_") + to_string(config.split);
  {
    auto out = open_output(config.out / (stem + ".csv"));
    write_config_comment(out, config);
    write_comparison_csv(out, rows);
  }
  {
    auto out = open_output(config.out / (stem + ".txt"));
    write_comparison_table(out, rows);
  }
  write_comparison_table(log, rows);
  log << "popularity fallbacks: forward " << forward_fallbacks << ", backward "
      << backward_fallbacks << ", top2 (unknown user) " << top2_fallbacks << " of "
      << samples.size() << '\n';
  return rows;
}

std::vector<NamedReport> cmd_ablate(const ExperimentConfig& config, std::ostream& log) {
  config.validate();
  const PreparedCorpus prepared = load_corpus(config);
  const SpatialRowCache spatial(prepared.corpus.pois, config.cache_rows);
  const auto samples = select_split(prepared.samples, config.split);
  std::vector<NamedReport> rows;
  for (const auto& variant : named_variants()) {
    ExperimentConfig point = config;
    point.variant = variant;
    log << "training " << variant.name() << '\n';
    const FitResult result = train_on(prepared, spatial, point, nullptr);
    rows.push_back({variant.name(), evaluate_model(result.best, spatial, variant, samples,
                                                   config.train.ks, config.train.threads)});
  }
  {
    auto out = open_output(config.out / "ablation.csv");
    write_config_comment(out, config);
    write_comparison_csv(out, rows, "variant");
  }
  {
    auto out = open_output(config.out / "ablation.txt");
    write_comparison_table(out, rows);
  }
  write_comparison_table(log, rows);
  return rows;
}

std::vector<SweepRow> cmd_sweep(const ExperimentConfig& config, std::ostream& log) {
  config.validate();
  if (config.sweep_values.empty()) throw InvalidInput("sweep needs values (--values 16,32,64)");
  hyper_with(config.hyper, config.sweep_param, 1);
  std::vector<SweepRow> rows;
  for (std::size_t value : config.sweep_values) {
    SweepRow row;
    row.value = value;
    try {
      ExperimentConfig point = config;
      point.hyper = hyper_with(config.hyper, config.sweep_param, value);
      point.checkpoint.clear();
      const PreparedCorpus prepared = load_corpus(point);
      const SpatialRowCache spatial(prepared.corpus.pois, point.cache_rows);
      const FitResult result = train_on(prepared, spatial, point, nullptr);
      row.report = evaluate_model(result.best, spatial, point.variant,
                                  select_split(prepared.samples, point.split), point.train.ks,
                                  point.train.threads);
      row.ok = true;
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    log << config.sweep_param << "=" << value << ": "
        << (row.ok ? "MAP " + std::to_string(row.report.map) : "failed: " + row.error) << '\n';
    rows.push_back(std::move(row));
  }
  auto out = open_output(config.out / ("sweep_" + config.sweep_param + ".csv"));
  write_config_comment(out, config);
  out << config.sweep_param << ",status";
  for (std::size_t k : config.train.ks) out << ",recall@" << k;
  for (std::size_t k : config.train.ks) out << ",f1@" << k;
  out << ",map,error\n" << std::setprecision(17);
  for (const auto& row : rows) {
    out << row.value << ',' << (row.ok ? "ok" : "failed");
    for (std::size_t i = 0; i < config.train.ks.size(); ++i) {
      out << ',' << (row.ok ? row.report.recall[i] : 0.0);
    }
    for (std::size_t i = 0; i < config.train.ks.size(); ++i) {
      out << ',' << (row.ok ? row.report.f1[i] : 0.0);
    }
    std::string error = row.error;
    std::replace(error.begin(), error.end(), ',', ';');
    out << ',' << (row.ok ? row.report.map : 0.0) << ',' << error << '\n';
  }
  return rows;
}

bool cmd_selfcheck(const ExperimentConfig& config, std::ostream& log) {
  bool all_ok = true;
  auto report = [&](const std::string& what, bool ok, const std::string& detail) {
    log << (ok ? "PASS  " : "FAIL  ") << what << "  " << detail << '\n';
    all_ok = all_ok && ok;
  };

  // Gradient oracle.
  double worst = 0.0;
  std::size_t instances = 0;
  for (std::size_t window : {1, 2}) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const HyperParams hp{5, 7, window};
      const auto inst = synthetic::tiny_instance(config.seed * 1000 + seed, 30, 6, hp);
      const SpatialRowCache spatial(inst.pois, 64);
      for (const auto& variant : named_variants()) {
        const auto fd = finite_difference_check(inst.params, inst.sample, spatial, variant);
        worst = std::max(worst, fd.max_relative_error());
        ++instances;
      }
    }
  }
  {
    std::ostringstream detail;
    detail << instances << " instances, max relative error " << std::scientific
           << std::setprecision(3) << worst;
    report("gradient oracle", worst < 1e-4, detail.str());
  }

  // Uniform output at zero parameters.
  {
    const HyperParams hp{5, 7, 1};
    auto inst = synthetic::tiny_instance(config.seed, 30, 6, hp);
    inst.params.set_zero();
    const SpatialRowCache spatial(inst.pois, 8);
    const auto trace = forward(inst.sample, inst.params, spatial, VariantConfig::full());
    double dev = 0.0;
    for (double p : trace.probabilities) dev = std::max(dev, std::abs(p - 1.0 / 30.0));
    const double loss_err = std::abs(cross_entropy(trace, inst.sample.target) - std::log(30.0));
    std::ostringstream detail;
    detail << "loss error " << std::scientific << std::setprecision(3) << loss_err
           << ", max deviation " << dev;
    report("uniform output", loss_err < 1e-9 && dev < 1e-12, detail.str());
  }

  // Metric identities.
  {
    MetricsAccumulator acc({1, 5, 10});
    Rng rng(config.seed);
    for (int i = 0; i < 1000; ++i) acc.add(1 + rng.below(50));
    const auto r = acc.report();
    bool exact = true;
    for (std::size_t i = 0; i < r.ks.size(); ++i) {
      exact = exact && r.f1[i] == 2.0 * r.recall[i] / static_cast<double>(r.ks[i] + 1);
    }
    const bool table5 = std::abs(0.3476 / 3.0 - 0.1159) < 5e-5;
    const bool table10 = std::abs(0.4176 * 2.0 / 11.0 - 0.0759) < 5e-5;
    report("metric identities", exact && table5 && table10,
           "F1@K = 2 Recall@K / (K + 1) on 1000 random ranks");
  }
  return all_ok;
}

}  // namespace stddp
