#pragma once

#include "commands.hpp"

#include <CLI11.hpp>

#include <functional>
#include <map>

namespace pairbounds::cli {

namespace detail {

// Attaches the shared flags to a subcommand.
inline void add_common(CLI::App& sub, FlagValues& f) {
  sub.add_option("--config", f.config, "TOML run configuration; its values win over flags")->check(CLI::ExistingFile);
  sub.add_option("--estimand", f.estimand, "ade | ase | theta:AB[-CD] | gamma:F@zz[-F@zz]");
  sub.add_option("--member", f.member, "member (1 or 2) the estimand refers to");
  sub.add_option("--restriction", f.restrictions, "kind[:eps][:scope], repeatable")->take_all();
  sub.add_option("--class-filter", f.class_filter, "enumerate only one response class");
  sub.add_option("--seed", f.seed, "random seed");
  sub.add_option("--threads", f.threads, "worker threads (0: all cores)");
  sub.add_option("--out", f.out, "write the JSON report here instead of stdout");
}

inline void add_data(CLI::App& sub, FlagValues& f) {
  sub.add_option("--data", f.data, "household CSV");
  sub.add_option("--layout", f.layout, "CSV layout: wide or long");
}

}  // namespace detail

inline int run(int argc, const char* const* argv, Streams io) {
  CLI::App app{"Sharp bounds on treatment and spillover effects in two-member households"};
  app.require_subcommand(1);
  FlagValues f;

  auto* bounds_cmd = app.add_subcommand("bounds", "identified interval of an estimand");
  detail::add_common(*bounds_cmd, f);
  detail::add_data(*bounds_cmd, f);
  bounds_cmd->add_option("--population", f.population, "use exact population cells of a preset instead of data");

  auto* ci_cmd = app.add_subcommand("ci", "confidence interval for the identified set");
  detail::add_common(*ci_cmd, f);
  detail::add_data(*ci_cmd, f);
  ci_cmd->add_option("--alpha", f.alpha, "one minus the coverage level");
  ci_cmd->add_option("--reps", f.reps, "bootstrap replications");
  ci_cmd->add_option("--method", f.method, "relaxed_box | basis_bootstrap | numerical_delta");

  auto* sim_cmd = app.add_subcommand("simulate", "draw a household dataset from a preset or configured DGP");
  detail::add_common(*sim_cmd, f);
  sim_cmd->add_option("--preset", f.preset, "preset name")->check(CLI::IsMember(preset_names()));
  sim_cmd->add_option("--n", f.n, "number of households");
  sim_cmd->add_option("--csv", f.csv, "dataset output path");
  sim_cmd->add_option("--layout", f.layout, "CSV layout: wide or long");

  auto* verify_cmd = app.add_subcommand("verify", "run the identification checks");
  detail::add_common(*verify_cmd, f);
  verify_cmd->add_option("--check", f.checks, "check name or 'all', repeatable")->take_all();
  verify_cmd->add_option("--scale", f.scale, "reduced or full instrument support");
  verify_cmd->add_option("--trials", f.trials, "trials per randomized check");

  auto* stats_cmd = app.add_subcommand("stats", "type-space sizes, deduplication and rank diagnostics");
  detail::add_common(*stats_cmd, f);
  stats_cmd->add_option("--profiles", f.profiles, "observed offer profiles, e.g. 00,11");

  const std::map<CLI::App*, std::function<int(RunConfig, Streams)>> commands{
      {bounds_cmd, cmd_bounds}, {ci_cmd, cmd_ci}, {sim_cmd, cmd_simulate}, {verify_cmd, cmd_verify}, {stats_cmd, cmd_stats}};

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    io.out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    io.err << "usage error: " << e.what() << "\n";
    if (e.get_exit_code() == 0) return kOk;
    return kUsage;
  }

  CLI::App* chosen = app.get_subcommands().front();
  try {
    RunConfig rc = resolve(f);
    return commands.at(chosen)(std::move(rc), io);
  } catch (const ConfigError& e) {
    io.err << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const ParseError& e) {
    io.err << "data error: " << e.what() << "\n";
    return kFailure;
  } catch (const std::exception& e) {
    io.err << "error: " << e.what() << "\n";
    return kFailure;
  }
}

}  // namespace pairbounds::cli
