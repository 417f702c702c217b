#pragma once

#include <pairbounds/program.hpp>
#include <pairbounds/restrictions.hpp>
#include <pairbounds/simulate.hpp>
#include <pairbounds/typespace.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace pairbounds {

struct NamedInterval {
  std::string name;
  bool empty = false;
  double lower = 0;
  double upper = 0;
};

struct TrialRecord {
  std::string label;
  double discrepancy = 0;
  std::vector<NamedInterval> intervals;
  std::string note;
};

struct TheoremCheckResult {
  std::string name;
  bool passed = false;
  double max_discrepancy = 0;
  double tolerance = 0;
  double seconds = 0;
  std::vector<TrialRecord> details;
};

enum class CheckScale { reduced, full };

inline const char* to_string(CheckScale s) { return s == CheckScale::reduced ? "reduced" : "full"; }

namespace detail {

inline NamedInterval named(std::string name, const IdentifiedInterval& iv) {
  return {std::move(name), iv.empty(), iv.lower, iv.upper};
}

// Endpoint distance between two intervals; infinite when exactly one is empty.
inline double endpoint_gap(const IdentifiedInterval& a, const IdentifiedInterval& b) {
  if (a.empty() != b.empty()) return std::numeric_limits<double>::infinity();
  if (a.empty()) return 0;
  return std::max(std::abs(a.lower - b.lower), std::abs(a.upper - b.upper));
}

inline Estimand random_theta(std::mt19937_64& rng) {
  const int member = 1 + int(rng() % 2);
  switch (rng() % 4) {
    case 0: return ade(member);
    case 1: return ase(member);
    case 2: return FixedAllocation{member, {1, 1}, TakeUp{0, 0}};
    default: return FixedAllocation{member, {1, 1}, std::nullopt};
  }
}

inline TypeSpaceConfig trial_config(std::mt19937_64& rng, CheckScale scale) {
  TypeSpaceConfig config;
  if (scale == CheckScale::reduced) config.active_profiles = ProfileMask::only(int(rng() % kProfileCount));
  return config;
}

// Random mu over the unrestricted space, p = A mu; feasible for the full
// space by construction.
inline ObservedDistribution random_feasible_cells(std::mt19937_64& rng, const TypeSpaceConfig& config, std::size_t k = 12) {
  TypeDgp dgp = random_type_dgp(rng, config, k);
  return cells_of(dgp.support, dgp.masses, config.active_profiles);
}

inline std::string describe_trial(int index, const Estimand& est, const TypeSpaceConfig& config) {
  return "trial " + std::to_string(index) + ": " + describe(est) + ", profiles " + to_string(config.active_profiles);
}

template <class Body>
TheoremCheckResult timed_check(std::string name, double tolerance, Body body) {
  auto start = std::chrono::steady_clock::now();
  TheoremCheckResult r;
  r.name = std::move(name);
  r.tolerance = tolerance;
  r.passed = body(r);
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

// Pair types of the two-pair counterexample space: both members stay out at
// (0,0) unless the partner is a complier there, and follow their own offer
// elsewhere; Y = 1 only under joint take-up.
inline PairType counterexample_pair(bool supermodular_partner) {
  IndividualType s = IndividualType::from_parts(0b1000, 0);
  IndividualType so = IndividualType::from_parts(0b1000, 0);
  for (int p = 1; p < kProfileCount; ++p) {
    const int own = p >> 1;
    s = s.with_response(p, {own, own});
    so = so.with_response(p, {own, own});
  }
  if (supermodular_partner) so = so.with_best_response(0, 1, 1);
  EquilibriumSelection e;
  for (int p = 0; p < kProfileCount; ++p) e = e.with(p, TakeUp::from_index(p));
  return {s, so, e};
}

inline PolicyTarget counterexample_target() { return {1, {1, 0, 0}, std::nullopt}; }

inline IdentifiedInterval counterexample_bounds(const std::vector<Restriction>& restrictions,
                                                ProfileMask active = ProfileMask::all()) {
  std::vector<PairType> space = {counterexample_pair(false), counterexample_pair(true)};
  TypeSpaceConfig config;
  config.active_profiles = active;
  // Keep the pairs the restrictions admit, so the explicit space obeys them.
  auto filters = compile_all(restrictions, config).pair_filters();
  std::erase_if(space, [&](const PairType& t) {
    for (const auto& f : filters)
      if (!f.accepts(t.s, t.s_other)) return true;
    return false;
  });
  auto spec = build_structure_from(space, config, restrictions, counterexample_target());
  return bounds(spec, cells_of({counterexample_pair(false)}, {1.0}, active));
}

// Compares the full-space interval with a class-filtered subspace.
inline TheoremCheckResult subspace_equivalence(std::string name, ClassFilter filter, int trials, CheckScale scale,
                                               std::uint64_t seed, double tolerance) {
  return timed_check(std::move(name), tolerance, [&](TheoremCheckResult& r) {
    std::mt19937_64 rng(seed);
    for (int t = 0; t < trials; ++t) {
      TypeSpaceConfig config = trial_config(rng, scale);
      Estimand est = random_theta(rng);
      ObservedDistribution obs = random_feasible_cells(rng, config);
      TypeSpaceConfig sub = config;
      sub.class_filter = filter;
      auto full = bounds(build_structure(config, {}, est), obs);
      auto restricted = bounds(build_structure(sub, {}, est), obs);
      TrialRecord rec{describe_trial(t, est, config), endpoint_gap(full, restricted),
                      {named("full", full), named(to_string(filter), restricted)}, ""};
      r.max_discrepancy = std::max(r.max_discrepancy, rec.discrepancy);
      r.details.push_back(std::move(rec));
    }
    return r.max_discrepancy <= tolerance;
  });
}

// Searches the sorted type columns for a key.
inline std::optional<std::size_t> find_column(const LinearProgramSpec& spec, const ColumnKey& key) {
  auto it = std::lower_bound(spec.columns.begin(), spec.columns.end(), key,
                             [](const ProgramColumn& c, const ColumnKey& k) { return c.key < k; });
  if (it == spec.columns.end() || it->key != key) return std::nullopt;
  return std::size_t(it - spec.columns.begin());
}

}  // namespace detail

// Every interval is reproduced with deterministic selections only: adding
// columns for stochastic selection rules (mixtures of the columns of one
// (s, s') over its selections) moves no endpoint.
inline TheoremCheckResult check_deterministic_closure(int trials = 20, std::uint64_t seed = 1, double tolerance = 1e-9) {
  return detail::timed_check("deterministic_closure", tolerance, [&](TheoremCheckResult& r) {
    std::mt19937_64 rng(seed);
    for (int t = 0; t < trials; ++t) {
      TypeSpaceConfig config;
      config.active_profiles = ProfileMask(std::uint8_t(1 + rng() % 15));
      if (config.active_profiles.count() > 2) config.active_profiles = ProfileMask::only(int(rng() % 4)) | ProfileMask::only(3);
      std::vector<Restriction> restrictions;
      if (t % 2) restrictions.push_back({RestrictionKind::eps_strategic_neutrality, Scope::both, 0.4});
      Estimand est = detail::random_theta(rng);
      auto spec = build_structure(config, restrictions, est);
      auto obs = detail::random_feasible_cells(rng, spec.config);
      auto before = bounds(spec, obs);

      const auto compiled = compile_all(restrictions, spec.config);
      const ProfileMask active = spec.config.active_profiles;
      int added = 0;
      for (int attempt = 0; attempt < 200 && added < 25; ++attempt) {
        PairType base = random_pair_type(rng, spec.config, compiled.pair_filters());
        PairGames games;
        for (int p = 0; p < kProfileCount; ++p) games.nash[std::size_t(p)] = nash_set(base.s, base.s_other, p);
        if (games.selection_count(active) < 2) continue;
        std::vector<std::size_t> cols;
        for_each_selection(games, active, [&](EquilibriumSelection e) {
          PairType pt{base.s, base.s_other, e};
          ColumnKey key{pack_signature(column_of(pt, active), active), std::int8_t(objective(pt, est)),
                        detail::pair_weights(compiled.bounds, pt.s, pt.s_other)};
          if (auto idx = detail::find_column(spec, key)) cols.push_back(*idx);
        });
        if (cols.size() != games.selection_count(active)) throw std::logic_error("selection column missing from the program");
        auto w = dirichlet(rng, cols.size());
        std::vector<std::pair<std::size_t, double>> parts;
        for (std::size_t i = 0; i < cols.size(); ++i) parts.push_back({cols[i], w[i]});
        append_mixture(spec, parts);
        ++added;
      }
      auto after = bounds(spec, obs);
      TrialRecord rec{detail::describe_trial(t, est, config), detail::endpoint_gap(before, after),
                      {detail::named("deterministic", before), detail::named("with mixtures", after)},
                      std::to_string(added) + " mixture columns"};
      r.max_discrepancy = std::max(r.max_discrepancy, rec.discrepancy);
      r.details.push_back(std::move(rec));
    }
    return r.max_discrepancy <= tolerance;
  });
}

// The policy-targeting contrast on the counterexample space: restricting to
// dominant (or submodular) take-up collapses the interval to [0,0] while the
// unrestricted and supermodular spaces give [0,1].
inline TheoremCheckResult check_counterexample(double tolerance = 1e-12) {
  return detail::timed_check("counterexample", tolerance, [&](TheoremCheckResult& r) {
    struct Case {
      std::string name;
      std::vector<Restriction> restrictions;
      double lower, upper;
    };
    const std::vector<Case> cases = {{"none", {}, 0, 1},
                                     {"dominance", {{RestrictionKind::dominance}}, 0, 0},
                                     {"supermodular", {{RestrictionKind::supermodular}}, 0, 1},
                                     {"submodular", {{RestrictionKind::submodular}}, 0, 0}};
    bool ok = true;
    for (const Case& c : cases) {
      auto iv = detail::counterexample_bounds(c.restrictions);
      double gap = iv.empty() ? std::numeric_limits<double>::infinity()
                              : std::max(std::abs(iv.lower - c.lower), std::abs(iv.upper - c.upper));
      ok = ok && gap <= tolerance;
      r.max_discrepancy = std::max(r.max_discrepancy, gap);
      r.details.push_back({c.name, gap, {detail::named(c.name, iv)},
                           "expected [" + std::to_string(int(c.lower)) + "," + std::to_string(int(c.upper)) + "]"});
    }
    return ok;
  });
}

inline TheoremCheckResult check_dominance_equivalence(int trials, CheckScale scale, std::uint64_t seed = 1,
                                                      double tolerance = 1e-7) {
  auto r = detail::subspace_equivalence(std::string("dominance_equivalence_") + to_string(scale), ClassFilter::dominant_only,
                                        trials, scale, seed, tolerance);
  // Policy targets are the exception: dominance shrinks the counterexample.
  auto full = detail::counterexample_bounds({});
  auto dom = detail::counterexample_bounds({{RestrictionKind::dominance}});
  bool contrast = !full.empty() && !dom.empty() && full.upper == 1.0 && dom.upper == 0.0;
  r.details.push_back({"policy-target contrast", 0, {detail::named("full", full), detail::named("dominant", dom)},
                       contrast ? "differs as expected" : "unexpectedly equal"});
  r.passed = r.passed && contrast;
  return r;
}

inline TheoremCheckResult check_symmetry_equivalence(int trials, CheckScale scale, std::uint64_t seed = 1,
                                                     double tolerance = 1e-7) {
  auto r = detail::subspace_equivalence(std::string("symmetry_equivalence_") + to_string(scale), ClassFilter::symmetric_only,
                                        trials, scale, seed, tolerance);
  // Off (0,0) the counterexample pairs respond to their own offer, which is
  // asymmetric at the mixed offers; the contrast lives on the (0,0) game.
  const ProfileMask game = ProfileMask::only(0);
  auto full = detail::counterexample_bounds({}, game);
  auto sym = detail::counterexample_bounds({{RestrictionKind::symmetry}}, game);
  bool contrast = !full.empty() && !sym.empty() && full.upper == 1.0 && sym.lower == 0.0 && sym.upper == 0.0;
  r.details.push_back({"policy-target contrast", 0, {detail::named("full", full), detail::named("symmetric", sym)},
                       contrast ? "differs as expected" : "unexpectedly equal"});
  r.passed = r.passed && contrast;
  return r;
}

// Full, supermodular-only and submodular-only spaces give the same
// fixed-allocation interval.
inline TheoremCheckResult check_sandwich(int trials = 20, std::uint64_t seed = 1, double tolerance = 1e-7) {
  return detail::timed_check("sandwich", tolerance, [&](TheoremCheckResult& r) {
    std::mt19937_64 rng(seed);
    for (int t = 0; t < trials; ++t) {
      TypeSpaceConfig config = detail::trial_config(rng, CheckScale::reduced);
      Estimand est = detail::random_theta(rng);
      auto obs = detail::random_feasible_cells(rng, config);
      TypeSpaceConfig super = config, sub = config;
      super.class_filter = ClassFilter::supermodular_only;
      sub.class_filter = ClassFilter::submodular_only;
      auto full = bounds(build_structure(config, {}, est), obs);
      auto a = bounds(build_structure(super, {}, est), obs);
      auto b = bounds(build_structure(sub, {}, est), obs);
      double gap = std::max({detail::endpoint_gap(full, a), detail::endpoint_gap(full, b), detail::endpoint_gap(a, b)});
      r.max_discrepancy = std::max(r.max_discrepancy, gap);
      r.details.push_back({detail::describe_trial(t, est, config), gap,
                           {detail::named("full", full), detail::named("supermodular", a), detail::named("submodular", b)},
                           ""});
    }
    return r.max_discrepancy <= tolerance;
  });
}

// Dominance plus symmetry cannot produce different take-up at equal offers,
// so data with such households falsify the combination.
inline TheoremCheckResult check_emptiness() {
  return detail::timed_check("emptiness", 0.0, [&](TheoremCheckResult& r) {
    // Member 1 never takes up, member 2 always does.
    IndividualType never = IndividualType::from_parts(0b0011, 0x00);
    IndividualType always = IndividualType::from_parts(0b0110, 0xFF);
    PairType asymmetric{never, always, select_equilibria(never, always, SelectionRule::lowest)};
    PairType same{always, always, select_equilibria(always, always, SelectionRule::lowest)};
    const auto asym_cells = cells_of({asymmetric, same}, {0.6, 0.4}, ProfileMask::all());
    const auto sym_cells = cells_of({same}, {1.0}, ProfileMask::all());

    const Restriction dom{RestrictionKind::dominance}, sym{RestrictionKind::symmetry};
    struct Case {
      std::string name;
      std::vector<Restriction> restrictions;
      const ObservedDistribution* cells;
      bool expect_empty;
    };
    const std::vector<Case> cases = {{"asymmetric take-up, dominance+symmetry", {dom, sym}, &asym_cells, true},
                                     {"asymmetric take-up, dominance", {dom}, &asym_cells, false},
                                     {"asymmetric take-up, symmetry", {sym}, &asym_cells, false},
                                     {"symmetric take-up, dominance+symmetry", {dom, sym}, &sym_cells, false}};
    const std::vector<std::pair<std::string, Estimand>> estimands = {{"theta", ade(1)}, {"gamma", detail::counterexample_target()}};
    bool ok = true;
    for (const Case& c : cases)
      for (const auto& [label, est] : estimands) {
        auto iv = bounds(build_structure(TypeSpaceConfig{}, c.restrictions, est), *c.cells);
        bool match = iv.empty() == c.expect_empty;
        ok = ok && match;
        r.details.push_back({c.name + " (" + label + ")", match ? 0.0 : 1.0, {detail::named(label, iv)},
                             c.expect_empty ? "expected empty" : "expected interval"});
      }
    r.max_discrepancy = ok ? 0.0 : 1.0;
    return ok;
  });
}

}  // namespace pairbounds
