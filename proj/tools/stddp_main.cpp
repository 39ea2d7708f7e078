#include <CLI11.hpp>

#include <exception>
#include <iostream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "stddp/error.hpp"
#include "stddp/experiment.hpp"

namespace {

// Flag name, config key, help text.
struct FlagSpec {
  const char* flag;
  const char* key;
  const char* help;
};

const std::vector<FlagSpec> kFlags = {
    {"--data", "data", "raw check-in file or prepared STDDP1 corpus"},
    {"--format", "format", "raw file format: foursquare|gowalla"},
    {"--out", "out", "output directory"},
    {"--seed", "seed", "random seed"},
    {"--d", "d", "embedding dimension"},
    {"--h", "h", "hidden units"},
    {"--w", "w", "context window"},
    {"--batch", "batch", "mini-batch size"},
    {"--lr", "lr", "Adam learning rate"},
    {"--epochs", "epochs", "maximum epochs"},
    {"--patience", "patience", "early-stopping patience"},
    {"--k", "k", "cut-offs, comma separated (e.g. 1,5,10)"},
    {"--variant", "variant", "bi-stddp|f-stddp|b-stddp|bi-a|bi-b"},
    {"--metric", "metric", "early-stopping metric: map|recall@1|recall@5|recall@10"},
    {"--threads", "threads", "worker threads"},
    {"--split", "split", "evaluation split: train|val|test"},
    {"--checkpoint", "checkpoint", "checkpoint to load"},
    {"--cache", "cache", "spatial rows kept in memory"},
    {"--min-user", "min_user", "minimum check-ins per user"},
    {"--min-poi-users", "min_poi_users", "minimum distinct visitors per POI"},
    {"--fixpoint", "fixpoint", "repeat filtering until stable: true|false"},
    {"--param", "sweep", "swept hyper-parameter: d|h|w"},
    {"--values", "values", "swept values, comma separated"},
};

struct Invocation {
  std::string config_file;
  std::map<std::string, std::string> overrides;
  std::vector<std::string> assignments;
};

void add_flags(CLI::App& cmd, Invocation& inv) {
  cmd.set_help_flag("--help", "print this help and exit");
  cmd.add_option("--config", inv.config_file, "key=value configuration file");
  for (const auto& spec : kFlags) {
    cmd.add_option_function<std::string>(
        spec.flag, [&inv, key = std::string(spec.key)](const std::string& v) { inv.overrides[key] = v; },
        spec.help);
  }
  cmd.add_option("--set", inv.assignments, "extra key=value settings");
}

stddp::ExperimentConfig build_config(const Invocation& inv) {
  stddp::ExperimentConfig config;
  if (!inv.config_file.empty()) config.load_file(inv.config_file);
  for (const auto& a : inv.assignments) {
    const auto eq = a.find('=');
    if (eq == std::string::npos) throw stddp::InvalidInput("--set expects key=value, got '" + a + "'");
    config.set(a.substr(0, eq), a.substr(eq + 1));
  }
  for (const auto& [key, value] : inv.overrides) config.set(key, value);
  config.validate();
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bi-STDDP: identify missing POI check-ins"};
  app.set_help_flag("--help", "print this help and exit");
  app.require_subcommand(1);

  Invocation inv;
  std::string command;
  const std::vector<std::pair<std::string, std::string>> commands = {
      {"prepare", "parse, filter, split and window a dataset into an STDDP1 corpus"},
      {"train", "train a model and write a checkpoint"},
      {"evaluate", "score a checkpoint on a split"},
      {"baselines", "evaluate the counting baselines"},
      {"ablate", "train and evaluate every named variant"},
      {"sweep", "train and evaluate over values of d, h or w"},
      {"selfcheck", "gradient and metric self-checks"},
  };
  for (const auto& [name, help] : commands) {
    CLI::App* cmd = app.add_subcommand(name, help);
    add_flags(*cmd, inv);
    cmd->callback([&command, name = name] { command = name; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    const stddp::ExperimentConfig config = build_config(inv);
    auto& log = std::cout;
    if (command == "prepare") {
      stddp::cmd_prepare(config, log);
    } else if (command == "train") {
      stddp::cmd_train(config, log);
    } else if (command == "evaluate") {
      stddp::cmd_evaluate(config, log);
    } else if (command == "baselines") {
      stddp::cmd_baselines(config, log);
    } else if (command == "ablate") {
      stddp::cmd_ablate(config, log);
    } else if (command == "sweep") {
      stddp::cmd_sweep(config, log);
    } else if (command == "selfcheck") {
      return stddp::cmd_selfcheck(config, log) ? 0 : 1;
    }
  } catch (const stddp::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.is_input_error() ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
