// hidamatern command-line front end.
//
//   hidamatern <fit|predict|sample|approx|bench|condition>
//              [--config cfg.json] [--data t_y.csv] [--out dir] [--seed N] [--no-opt]
//
// Exit status: 0 on success, 2 on usage errors, 1 on any other failure.

#include <functional>
#include <iostream>
#include <map>
#include <string>

#include "CLI11.hpp"
#include "hidamatern/commands.hpp"

namespace hm = hidamatern;

int main(int argc, char** argv) {
  CLI::App app{"Hida-Matern state-space GP toolkit"};
  app.require_subcommand(1);

  std::string config_path, data_path;
  std::uint64_t seed = 0;
  hm::RunOptions run;

  using Command = std::function<int(const hm::ExperimentConfig&, const hm::RunOptions&, std::ostream&)>;
  const std::map<std::string, std::pair<std::string, Command>> commands = {
      {"fit", {"fit kernel hyperparameters by maximum likelihood", hm::cmd_fit}},
      {"predict", {"posterior mean and variance over the query grid", hm::cmd_predict}},
      {"sample", {"draw prior sample paths", hm::cmd_sample}},
      {"approx", {"fit a Hida-Matern mixture to a reference kernel", hm::cmd_approx}},
      {"bench", {"timing and accuracy on the spectral-mixture toy data", hm::cmd_bench}},
      {"condition", {"condition numbers with and without the correlation transform",
                     hm::cmd_condition}},
  };
  for (const auto& [name, entry] : commands) {
    auto* sub = app.add_subcommand(name, entry.first);
    sub->add_option("--config", config_path, "experiment config (JSON)");
    sub->add_option("--data", data_path, "t,y CSV; overrides config \"data\"");
    sub->add_option("--out", run.out_dir, "output directory")->capture_default_str();
    sub->add_option("--seed", seed, "random seed; overrides config \"seed\"");
    sub->add_flag("--no-opt", run.no_opt, "skip hyperparameter optimisation");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    hm::ExperimentConfig cfg;
    if (!config_path.empty()) cfg = hm::config_from_json(hm::read_json_file(config_path));
    if (!data_path.empty()) cfg.data = data_path;
    for (auto* sub : app.get_subcommands()) {
      if (sub->count("--seed") > 0) cfg.seed = seed;
      return commands.at(sub->get_name()).second(cfg, run, std::cerr);
    }
  } catch (const hm::UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
