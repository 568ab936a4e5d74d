#include <iostream>

#include "CLI11.hpp"
#include "commands.hpp"

using namespace hylb::cli;

namespace {

void add_common(CLI::App* cmd, Options& opt, bool needs_scenario) {
  auto* sc = cmd->add_option("--scenario", opt.scenario, "scenario YAML file");
  if (needs_scenario) sc->required();
  cmd->add_option("--out", opt.out, "output directory")->capture_default_str();
  cmd->add_option("--seed", opt.seed, "seed for every random draw");
  cmd->add_option("--override", opt.overrides, "dotted.key=value, repeatable")->allow_extra_args(false);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hybrid-system simulation, checking and certificate falsification"};
  app.require_subcommand(1);
  Options opt;
  std::string example;

  auto* sim = app.add_subcommand("simulate", "integrate the scenario's hybrid system from each x0");
  add_common(sim, opt, true);
  auto* check = app.add_subcommand("check", "check a property; exit 0 PASS, 1 FAIL, 3 INCONCLUSIVE");
  add_common(check, opt, true);
  check->add_option("--mode", opt.mode, "ras | stability-safety | single-v | pair-vb | invariance");
  auto* fals = app.add_subcommand("falsify", "search for a certificate counterexample; exit 1 when found");
  add_common(fals, opt, true);
  fals->add_option("--mode", opt.mode, "condition id, e.g. pair.i.flow");
  auto* ex = app.add_subcommand("example", "run a shipped case study");
  add_common(ex, opt, false);
  ex->add_option("name", example, "bouncing-ball | moore-greitzer")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << error_json("UsageError", e.what()) << '\n';
    return kExitError;
  }

  try {
    Outcome out;
    if (*sim) {
      out = run_simulate(opt);
    } else if (*check) {
      out = run_check(opt);
    } else if (*fals) {
      out = run_falsify(opt);
    } else {
      out = run_example(example, opt);
    }
    std::cout << out.summary << '\n';
    return out.exit_code;
  } catch (const hylb::Error& e) {
    std::cerr << error_json(std::string(hylb::to_string(e.code())), e.message()) << '\n';
    return exit_code_for(e.code());
  } catch (const YAML::Exception& e) {
    std::cerr << error_json("ConfigError", e.what()) << '\n';
    return kExitError;
  } catch (const std::exception& e) {
    std::cerr << error_json("InternalError", e.what()) << '\n';
    return kExitError;
  }
}
