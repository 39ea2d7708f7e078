#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "stddp/eval.hpp"
#include "stddp/ingest.hpp"
#include "stddp/model.hpp"
#include "stddp/train.hpp"

namespace stddp {

// Flat key=value experiment description. Command-line flags override keys
// read from a file; unknown keys are rejected.
struct ExperimentConfig {
  std::string data;
  DatasetFormat format = DatasetFormat::foursquare;
  std::filesystem::path out = "out";
  std::uint64_t seed = 1;
  HyperParams hyper;
  TrainConfig train;
  VariantConfig variant;
  FilterOptions filter;
  std::size_t cache_rows = 2048;
  SplitTag split = SplitTag::test;
  std::string checkpoint;
  std::string sweep_param = "d";
  std::vector<std::size_t> sweep_values;

  static const std::vector<std::string>& keys();

  void set(const std::string& key, const std::string& value);
  // Reads "key = value" lines; blank lines and '#' comments are skipped.
  void load_file(const std::filesystem::path& path);
  void validate() const;
  // Canonical key=value listing of every setting.
  std::string to_text() const;
  std::map<std::string, std::string> to_map() const;
};

struct CorpusStats {
  std::size_t raw_users = 0;
  std::size_t raw_pois = 0;
  std::size_t raw_checkins = 0;
  std::size_t malformed_lines = 0;
  std::size_t users = 0;
  std::size_t pois = 0;
  std::size_t checkins = 0;
  double sparsity = 0.0;
  std::size_t train_samples = 0;
  std::size_t validation_samples = 0;
  std::size_t test_samples = 0;

  void write_table(std::ostream& out) const;
};

CorpusStats corpus_stats(const PreparedCorpus& prepared);

// Prepared corpus for `config.data`: read directly when it is an STDDP1 file
// (re-windowed if its window differs from config.hyper.window), otherwise
// parsed, filtered, split and windowed. `stats`, when given, also receives
// the raw-file counts.
PreparedCorpus load_corpus(const ExperimentConfig& config, CorpusStats* stats = nullptr);

struct NamedReport {
  std::string name;
  MetricsReport report;
};

void write_comparison_csv(std::ostream& out, const std::vector<NamedReport>& rows,
                          const std::string& first_column = "method");
void write_comparison_table(std::ostream& out, const std::vector<NamedReport>& rows);

struct TrainOutcome {
  FitResult fit;
  std::filesystem::path checkpoint;
};

struct SweepRow {
  std::size_t value = 0;
  bool ok = false;
  std::string error;
  MetricsReport report;
};

// Each command writes its artifacts under config.out and a human-readable
// summary to `log`.
CorpusStats cmd_prepare(const ExperimentConfig& config, std::ostream& log);
TrainOutcome cmd_train(const ExperimentConfig& config, std::ostream& log);
MetricsReport cmd_evaluate(const ExperimentConfig& config, std::ostream& log);
std::vector<NamedReport> cmd_baselines(const ExperimentConfig& config, std::ostream& log);
std::vector<NamedReport> cmd_ablate(const ExperimentConfig& config, std::ostream& log);
std::vector<SweepRow> cmd_sweep(const ExperimentConfig& config, std::ostream& log);
// Finite-difference gradient check on seeded tiny instances for every named
// variant, plus uniform-output and metric identities. Returns true on pass.
bool cmd_selfcheck(const ExperimentConfig& config, std::ostream& log);

// Train on the train split of an already loaded corpus; shared by the
// train, ablate and sweep commands.
FitResult train_on(const PreparedCorpus& prepared, const SpatialRowCache& spatial,
                   const ExperimentConfig& config, std::ostream* log = nullptr);

}  // namespace stddp
