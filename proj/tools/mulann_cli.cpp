// mulann: train / evaluate / sweep-p / asymmetry / bounds / divergence.
//
// Every subcommand prints its CSV to stdout and writes a copy to
// $MULANN_OUTPUT_ROOT/<experiment.output_dir>/<subcommand>.csv.
// Exit codes: 0 ok, 1 other failure, 2 config error, 3 non-finite loss,
// 4 bound violation.

#include <CLI11.hpp>
#include <iostream>
#include <optional>
#include <string>

#include "mulann/experiments.hpp"

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string checkpoint;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "INI config file (defaults apply when omitted)");
  sub->add_option("--seed", c.seed, "base seed, overrides experiment.seed");
}

mulann::ExperimentConfig load(const Common& c) {
  mulann::ExperimentConfig cfg = c.config.empty() ? mulann::config_from_string("") : mulann::load_config(c.config);
  if (c.seed) cfg.experiment.seed = *c.seed;
  return cfg;
}

int emit(const std::string& name, const mulann::ExperimentConfig& cfg, const mulann::CommandOutput& out) {
  const std::string text = out.table.str();
  std::cout << text;
  mulann::write_text(mulann::OutputPaths::from_env(cfg).file(name + ".csv"), text);
  return out.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semi-supervised multi-domain adversarial learning lab"};
  app.require_subcommand(1);
  Common c;
  auto* train = app.add_subcommand("train", "train per seed; accuracy CSV, checkpoints and loss traces");
  auto* evaluate = app.add_subcommand("evaluate", "score a checkpoint on the configured data");
  auto* sweep = app.add_subcommand("sweep-p", "MuLANN accuracy over the (p*, p) grid");
  auto* asym = app.add_subcommand("asymmetry", "class-asymmetry cases per method");
  auto* bnd = app.add_subcommand("bounds", "fuzz the generalization bounds on random discrete instances");
  auto* div = app.add_subcommand("divergence", "proxy divergence per domain pair, raw vs features");
  for (auto* s : {train, evaluate, sweep, asym, bnd, div}) add_common(s, c);
  evaluate->add_option("--checkpoint", c.checkpoint, "checkpoint file")->required();
  div->add_option("--checkpoint", c.checkpoint, "checkpoint file (otherwise trains per seed)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : mulann::kExitConfig;
  }

  try {
    const mulann::ExperimentConfig cfg = load(c);
    if (*train) return emit("train", cfg, mulann::cmd_train(cfg, mulann::OutputPaths::from_env(cfg)));
    if (*evaluate) return emit("evaluate", cfg, mulann::cmd_evaluate(cfg, c.checkpoint));
    if (*sweep) return emit("sweep_p", cfg, mulann::cmd_sweep_p(cfg));
    if (*asym) return emit("asymmetry", cfg, mulann::cmd_asymmetry(cfg));
    if (*bnd) return emit("bounds", cfg, mulann::cmd_bounds(cfg));
    if (*div)
      return emit("divergence", cfg,
                  mulann::cmd_divergence(cfg, c.checkpoint.empty() ? std::nullopt : std::optional(c.checkpoint)));
  } catch (const mulann::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return mulann::kExitConfig;
  } catch (const mulann::NumericalAbort& e) {
    std::cerr << "numerical abort: " << e.what() << "\n";
    return mulann::kExitNumerical;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return mulann::kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return mulann::kExitFailure;
  }
  return mulann::kExitFailure;
}
