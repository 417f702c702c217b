#pragma once

#include "run_config.hpp"

#include <pairbounds/data.hpp>
#include <pairbounds/inference.hpp>
#include <pairbounds/program.hpp>
#include <pairbounds/simulate.hpp>
#include <pairbounds/verify.hpp>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <chrono>
#include <fstream>
#include <iostream>
#include <string>

namespace pairbounds::cli {

inline constexpr const char* kSchemaVersion = "pairbounds.report.v1";

using Json = nlohmann::ordered_json;

enum ExitCode { kOk = 0, kFailure = 1, kUsage = 2 };

struct Streams {
  std::ostream& out;
  std::ostream& err;
};

namespace detail {

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

// JSON has no infinity; unbounded or undefined values become null.
inline Json number(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

inline Json header(const std::string& command, const RunConfig& rc) {
  Json j;
  j["schema_version"] = kSchemaVersion;
  j["command"] = command;
  j["status"] = "ok";
  j["seed"] = rc.seed;
  j["warnings"] = rc.warnings;
  return j;
}

inline Json estimand_json(const RunConfig& rc) {
  Json j;
  j["kind"] = std::holds_alternative<FixedAllocation>(rc.estimand) ? "theta" : "gamma";
  j["label"] = rc.estimand_label;
  j["member"] = std::visit([](const auto& e) { return e.member; }, rc.estimand);
  j["description"] = describe(rc.estimand);
  return j;
}

inline Json restrictions_json(const std::vector<Restriction>& rs) {
  Json a = Json::array();
  for (const Restriction& r : rs) {
    Json j;
    j["kind"] = std::string(kind_name(r.kind));
    j["scope"] = std::string(scope_name(r.scope));
    if (is_eps_kind(r.kind)) j["eps"] = r.eps;
    a.push_back(j);
  }
  return a;
}

inline Json type_space_json(const LinearProgramSpec& spec) {
  Json j;
  j["active_profiles"] = to_string(spec.config.active_profiles);
  j["counterfactual_profiles"] = to_string(spec.config.counterfactual_profiles);
  j["class_filter"] = to_string(spec.config.class_filter);
  j["raw_pair_types"] = spec.raw_pair_types;
  j["admissible_pairs"] = spec.admissible_pairs;
  j["columns"] = spec.column_count();
  j["mass_rows"] = spec.mass_rows.size();
  j["compiled"] = spec.restrictions;
  return j;
}

inline Json observed_json(const ObservedDistribution& obs, const std::string& source) {
  Json j;
  j["source"] = source;
  j["households"] = obs.households();
  j["active_blocks"] = to_string(obs.active_blocks);
  Json nz = Json::object();
  for (int p = 0; p < kProfileCount; ++p) nz[to_string(ProfileMask::only(p)).substr(1, 2)] = obs.n_z[std::size_t(p)];
  j["n_z"] = nz;
  return j;
}

// Largest witness masses; the full support can run to hundreds of columns.
inline Json witness_json(const std::vector<WitnessEntry>& witness, std::size_t limit = 10) {
  std::vector<WitnessEntry> w = witness;
  std::sort(w.begin(), w.end(), [](const WitnessEntry& a, const WitnessEntry& b) { return a.mass > b.mass; });
  Json top = Json::array();
  for (std::size_t i = 0; i < std::min(limit, w.size()); ++i) {
    Json e;
    e["mass"] = w[i].mass;
    e["multiplicity"] = w[i].multiplicity;
    e["representative"] = w[i].representative ? Json(w[i].representative->id()) : Json(nullptr);
    top.push_back(e);
  }
  Json j;
  j["support_size"] = witness.size();
  j["top"] = top;
  return j;
}

inline Json diagnostics_json(const EndpointDiagnostics& d) {
  Json j;
  j["iterations"] = d.iterations;
  j["degenerate"] = d.degenerate;
  j["min_reduced_cost"] = number(d.min_reduced_cost);
  j["max_residual"] = number(d.max_residual);
  return j;
}

inline Json interval_json(const IdentifiedInterval& iv) {
  if (iv.empty()) return nullptr;
  Json j;
  j["lower"] = iv.lower;
  j["upper"] = iv.upper;
  j["width"] = iv.width();
  return j;
}

inline void emit(const Json& report, const RunConfig& rc, Streams& io) {
  for (const auto& w : report["warnings"]) io.err << "warning: " << w.get<std::string>() << "\n";
  if (rc.out) {
    std::ofstream f(*rc.out);
    if (!f) throw std::runtime_error("cannot write report to " + *rc.out);
    f << report.dump(2) << "\n";
  } else {
    io.out << report.dump(2) << "\n";
  }
}

inline std::vector<HouseholdRecord> load_records(const RunConfig& rc) {
  if (!rc.data_path) throw ConfigError("a data file is required (--data or data.path)");
  return ingest(*rc.data_path, rc.schema);
}

// Observed cells from a CSV file or exact population cells of a preset.
inline std::pair<ObservedDistribution, std::string> load_observed(const RunConfig& rc) {
  if (rc.population) {
    Dgp dgp;
    try {
      dgp = preset(*rc.population, rc.seed);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    return {population_cells(dgp), "population:" + *rc.population};
  }
  return {empirical_cells(load_records(rc)), *rc.data_path};
}

inline TypeSpaceConfig space_for(const RunConfig& rc, ProfileMask observed_blocks) {
  TypeSpaceConfig config;
  config.class_filter = rc.class_filter;
  config.active_profiles = observed_blocks;
  return config;
}

// Builds the program; nullopt when the restrictions exclude every pair type.
inline std::optional<LinearProgramSpec> build(const RunConfig& rc, const TypeSpaceConfig& config) {
  try {
    return build_structure(config, rc.restrictions, rc.estimand, BuildOptions{true, rc.threads});
  } catch (const EmptyTypeSpace&) {
    return std::nullopt;
  } catch (const UnsupportedNonlinear& e) {
    throw ConfigError(e.what());
  }
}

inline void note_profiles(RunConfig& rc, ProfileMask observed) {
  if (rc.profiles && *rc.profiles != observed)
    rc.warnings.push_back("requested offer profiles " + to_string(*rc.profiles) +
                          " ignored; the program uses the observed blocks " + to_string(observed));
}

}  // namespace detail

inline int cmd_bounds(RunConfig rc, Streams io) {
  detail::Stopwatch total;
  auto [observed, source] = detail::load_observed(rc);
  detail::note_profiles(rc, observed.active_blocks);
  detail::Stopwatch build_time;
  auto spec = detail::build(rc, detail::space_for(rc, observed.active_blocks));
  const double build_seconds = build_time.seconds();

  IdentifiedInterval iv;
  if (spec) iv = bounds(*spec, observed);
  Json j = detail::header("bounds", rc);
  if (spec)
    for (const std::string& w : spec->warnings) j["warnings"].push_back(w);
  if (!spec) j["warnings"].push_back("the restrictions exclude every pair type");
  j["status"] = iv.empty() ? "empty" : "interval";
  j["estimand"] = detail::estimand_json(rc);
  j["restrictions"] = detail::restrictions_json(rc.restrictions);
  j["data"] = detail::observed_json(observed, source);
  if (spec) j["type_space"] = detail::type_space_json(*spec);
  j["interval"] = detail::interval_json(iv);
  if (!iv.empty()) {
    j["witness"] = {{"lower", detail::witness_json(iv.lower_witness)}, {"upper", detail::witness_json(iv.upper_witness)}};
    j["diagnostics"] = {{"lp_rows", iv.lp_rows},
                        {"lp_columns", iv.lp_columns},
                        {"lower", detail::diagnostics_json(iv.lower_diag)},
                        {"upper", detail::diagnostics_json(iv.upper_diag)}};
  }
  j["timings"] = {{"build_seconds", build_seconds}, {"solve_seconds", iv.solve_seconds}, {"total_seconds", total.seconds()}};
  detail::emit(j, rc, io);
  return kOk;
}

inline int cmd_ci(RunConfig rc, Streams io) {
  detail::Stopwatch total;
  try {
    rc.inference.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (rc.population) throw ConfigError("confidence intervals need sampled data, not a population preset");
  auto records = detail::load_records(rc);
  auto observed = empirical_cells(records);
  detail::note_profiles(rc, observed.active_blocks);
  auto spec = detail::build(rc, detail::space_for(rc, observed.active_blocks));

  Json j = detail::header("ci", rc);
  j["estimand"] = detail::estimand_json(rc);
  j["restrictions"] = detail::restrictions_json(rc.restrictions);
  j["data"] = detail::observed_json(observed, *rc.data_path);
  Json inf;
  inf["method"] = to_string(rc.inference.method);
  inf["alpha"] = rc.inference.alpha;
  inf["reps"] = rc.inference.reps;
  j["inference"] = inf;
  if (!spec) {
    j["warnings"].push_back("the restrictions exclude every pair type");
    j["status"] = "empty";
    j["interval"] = nullptr;
    j["ci"] = nullptr;
  } else {
    for (const std::string& w : spec->warnings) j["warnings"].push_back(w);
    j["type_space"] = detail::type_space_json(*spec);
    ConfidenceReport rep = confidence_interval(*spec, records, rc.inference);
    j["status"] = rep.empty() ? "empty" : "interval";
    j["interval"] = detail::interval_json(rep.point_bounds);
    j["ci"] = rep.empty() ? Json(nullptr) : Json{{"lower", rep.lower_ci}, {"upper", rep.upper_ci}};
    Json r;
    r["infeasible_replicates"] = rep.infeasible_replicates;
    r["projected_replicates"] = rep.projected_replicates;
    r["degenerate_basis"] = rep.degenerate_basis;
    r["lower_bases"] = rep.lower_bases;
    r["upper_bases"] = rep.upper_bases;
    if (rc.inference.method == CiMethod::relaxed_box) {
      Json kappa = Json::array(), radius = Json::array();
      for (int p = 0; p < kProfileCount; ++p) {
        kappa.push_back(detail::number(rep.kappa[std::size_t(p)]));
        radius.push_back(detail::number(rep.radius[std::size_t(p)]));
      }
      r["kappa"] = kappa;
      r["radius"] = radius;
    }
    j["replicates"] = r;
  }
  j["timings"] = {{"total_seconds", total.seconds()}};
  detail::emit(j, rc, io);
  return kOk;
}

inline int cmd_simulate(RunConfig rc, Streams io) {
  detail::Stopwatch total;
  if (rc.n < 1) throw ConfigError("simulate needs a sample size n >= 1");
  if (!rc.csv) throw ConfigError("simulate needs an output path for the dataset (--csv or simulate.csv)");
  Dgp dgp;
  std::string name;
  if (rc.dgp) {
    dgp = *rc.dgp;
    name = "config";
  } else {
    if (!rc.preset) throw ConfigError("simulate needs a preset (--preset) or a [simulate.dgp] table");
    try {
      dgp = preset(*rc.preset, rc.seed);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    name = *rc.preset;
  }
  auto records = sample_dataset(dgp, std::size_t(rc.n), rc.seed, rc.threads ? rc.threads : 1);
  {
    std::ofstream f(*rc.csv);
    if (!f) throw std::runtime_error("cannot write dataset to " + *rc.csv);
    write_csv(records, f, rc.csv_layout);
  }
  auto observed = empirical_cells(records);
  Json j = detail::header("simulate", rc);
  j["dgp"] = name;
  j["n"] = rc.n;
  j["csv"] = *rc.csv;
  j["layout"] = rc.csv_layout == CsvLayout::wide ? "wide" : "long";
  j["data"] = detail::observed_json(observed, *rc.csv);
  Json takeup = Json::object();
  for (int p = 0; p < kProfileCount; ++p) {
    std::array<double, 2> rate{};
    for (int w = 0; w < 16; ++w) {
      CellIndex c{p, w};
      rate[0] += observed.cell(p, w) * c.d();
      rate[1] += observed.cell(p, w) * c.d_other();
    }
    if (observed.active_blocks.contains(p))
      takeup[to_string(ProfileMask::only(p)).substr(1, 2)] = {rate[0], rate[1]};
  }
  j["takeup_rates"] = takeup;
  j["population"] = {{"ade", {true_estimand(dgp, ade(1)), true_estimand(dgp, ade(2))}},
                     {"ase", {true_estimand(dgp, ase(1)), true_estimand(dgp, ase(2))}}};
  j["timings"] = {{"total_seconds", total.seconds()}};
  detail::emit(j, rc, io);
  return kOk;
}

inline int cmd_verify(RunConfig rc, Streams io) {
  detail::Stopwatch total;
  const bool full = rc.scale == CheckScale::full;
  const int equivalence_trials = rc.trials.value_or(full ? 5 : 50);
  std::vector<TheoremCheckResult> results;
  for (const std::string& c : rc.checks) {
    if (c == "counterexample") results.push_back(check_counterexample());
    else if (c == "dominance") results.push_back(check_dominance_equivalence(equivalence_trials, rc.scale, rc.seed));
    else if (c == "symmetry") results.push_back(check_symmetry_equivalence(equivalence_trials, rc.scale, rc.seed));
    else if (c == "sandwich") results.push_back(check_sandwich(rc.trials.value_or(20), rc.seed));
    else if (c == "closure") results.push_back(check_deterministic_closure(rc.trials.value_or(20), rc.seed));
    else if (c == "emptiness") results.push_back(check_emptiness());
  }
  bool all = true;
  Json checks = Json::array();
  for (const TheoremCheckResult& r : results) {
    all = all && r.passed;
    Json cj;
    cj["name"] = r.name;
    cj["passed"] = r.passed;
    cj["max_discrepancy"] = detail::number(r.max_discrepancy);
    cj["tolerance"] = r.tolerance;
    cj["seconds"] = r.seconds;
    Json trials = Json::array();
    for (const TrialRecord& t : r.details) {
      Json tj;
      tj["label"] = t.label;
      tj["discrepancy"] = detail::number(t.discrepancy);
      Json ivs = Json::array();
      for (const NamedInterval& n : t.intervals)
        ivs.push_back({{"name", n.name}, {"empty", n.empty}, {"lower", n.empty ? Json(nullptr) : Json(n.lower)},
                       {"upper", n.empty ? Json(nullptr) : Json(n.upper)}});
      tj["intervals"] = ivs;
      if (!t.note.empty()) tj["note"] = t.note;
      trials.push_back(tj);
    }
    cj["trials"] = trials;
    checks.push_back(cj);
    io.err << (r.passed ? "PASS " : "FAIL ") << r.name << " (max discrepancy " << r.max_discrepancy << ")\n";
  }
  Json j = detail::header("verify", rc);
  j["status"] = all ? "pass" : "fail";
  j["scale"] = to_string(rc.scale);
  j["checks"] = checks;
  j["timings"] = {{"total_seconds", total.seconds()}};
  detail::emit(j, rc, io);
  return all ? kOk : kFailure;
}

// Rank of the cell rows of the deduplicated constraint matrix.
inline int cell_matrix_rank(const LinearProgramSpec& spec) {
  const ProfileMask active = spec.blocks();
  const int rows = 16 * active.count();
  std::array<int, kProfileCount> offset{};
  for (int p = 0, r = 0; p < kProfileCount; ++p)
    if (active.contains(p)) offset[std::size_t(p)] = 16 * r++;
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(rows, Eigen::Index(spec.columns.size()));
  for (std::size_t j = 0; j < spec.columns.size(); ++j) {
    auto within = unpack_signature(spec.columns[j].key.signature, active);
    for (int p = 0; p < kProfileCount; ++p)
      if (within[std::size_t(p)] >= 0) a(offset[std::size_t(p)] + within[std::size_t(p)], Eigen::Index(j)) = 1;
  }
  Eigen::MatrixXd gram = a * a.transpose();
  return int(Eigen::FullPivLU<Eigen::MatrixXd>(gram).rank());
}

inline int cmd_stats(RunConfig rc, Streams io) {
  detail::Stopwatch total;
  const ProfileMask profiles = rc.profiles.value_or(ProfileMask::all());
  auto spec = detail::build(rc, detail::space_for(rc, profiles));
  Json j = detail::header("stats", rc);
  j["estimand"] = detail::estimand_json(rc);
  j["restrictions"] = detail::restrictions_json(rc.restrictions);
  if (!spec) {
    j["status"] = "empty";
    j["warnings"].push_back("the restrictions exclude every pair type");
  } else {
    for (const std::string& w : spec->warnings) j["warnings"].push_back(w);
    j["type_space"] = detail::type_space_json(*spec);
    Json counts;
    counts["member1_types"] = individual_types(spec->config, 1).size();
    counts["member2_types"] = individual_types(spec->config, 2).size();
    counts["raw_pair_types"] = spec->raw_pair_types;
    counts["admissible_pairs"] = spec->admissible_pairs;
    counts["columns"] = spec->columns.size();
    counts["dedup_ratio"] = double(spec->raw_pair_types) / double(spec->columns.size());
    j["counts"] = counts;
    const int rows = 16 * profiles.count();
    const int rank = cell_matrix_rank(*spec);
    // Each active block's cells sum to the same total, so at most one row per
    // block beyond the first is redundant.
    j["rank"] = {{"cell_rows", rows},
                 {"rank", rank},
                 {"max_rank", rows - profiles.count() + 1},
                 {"deficiency", rows - profiles.count() + 1 - rank}};
  }
  j["timings"] = {{"total_seconds", total.seconds()}};
  detail::emit(j, rc, io);
  return kOk;
}

}  // namespace pairbounds::cli
