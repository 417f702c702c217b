#pragma once

#include <pairbounds/data.hpp>
#include <pairbounds/lpsolve.hpp>
#include <pairbounds/program.hpp>

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace pairbounds {

enum class CiMethod { relaxed_box, basis_bootstrap, numerical_delta };
enum class KappaRule { analytic, bootstrap };

inline const char* to_string(CiMethod m) {
  switch (m) {
    case CiMethod::relaxed_box: return "relaxed_box";
    case CiMethod::basis_bootstrap: return "basis_bootstrap";
    case CiMethod::numerical_delta: return "numerical_delta";
  }
  return "?";
}

inline std::optional<CiMethod> parse_ci_method(const std::string& s) {
  for (CiMethod m : {CiMethod::relaxed_box, CiMethod::basis_bootstrap, CiMethod::numerical_delta})
    if (s == to_string(m)) return m;
  return std::nullopt;
}

struct InferenceConfig {
  CiMethod method = CiMethod::basis_bootstrap;
  double alpha = 0.05;
  int reps = 500;
  std::uint64_t seed = 1;
  double step_exponent = 1.0 / 3;       // e_n = n^-step_exponent
  double tolerance_exponent = 1.0 / 3;  // c_n = n^-tolerance_exponent
  KappaRule kappa_rule = KappaRule::analytic;
  double kappa_entries = 15;            // free cells per block in the analytic kappa
  std::optional<double> kappa_override;
  unsigned threads = 0;

  void validate() const {
    if (!(alpha > 0 && alpha < 1)) throw std::invalid_argument("alpha must lie in (0, 1)");
    bool resampling = method != CiMethod::relaxed_box || kappa_rule == KappaRule::bootstrap;
    if (resampling && reps < 100) throw std::invalid_argument("bootstrap methods need at least 100 replications");
    if (!(step_exponent > 0) || !(tolerance_exponent > 0)) throw std::invalid_argument("rate exponents must be positive");
    if (!(kappa_entries > 0)) throw std::invalid_argument("kappa_entries must be positive");
    if (kappa_override && !(*kappa_override >= 0)) throw std::invalid_argument("kappa override must be nonnegative");
  }
};

struct ConfidenceReport {
  CiMethod method = CiMethod::basis_bootstrap;
  double alpha = 0.05;
  IntervalStatus status = IntervalStatus::interval;
  double lower_ci = 0;
  double upper_ci = 0;
  IdentifiedInterval point_bounds;
  int reps = 0;
  int infeasible_replicates = 0;
  int projected_replicates = 0;
  bool degenerate_basis = false;
  int lower_bases = 0;  // size of the near-optimal basis sets
  int upper_bases = 0;
  std::array<double, kProfileCount> kappa{};
  std::array<double, kProfileCount> radius{};
  // Scaled replicate statistics behind the endpoints.
  std::vector<double> lower_draws;
  std::vector<double> upper_draws;

  bool empty() const { return status == IntervalStatus::empty; }
};

namespace detail {

// Runs body(i) for i in [0, count) on a few threads; results must be written
// to per-index slots so the outcome does not depend on scheduling.
template <class Body>
void parallel_for(int count, unsigned threads, Body body) {
  unsigned workers = threads ? threads : std::max(1u, std::thread::hardware_concurrency());
  workers = std::max(1u, std::min<unsigned>(workers, unsigned(std::max(count, 1))));
  if (workers == 1) {
    for (int i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (int i = next++; i < count; i = next++) body(i);
    });
  for (auto& t : pool) t.join();
}

inline std::mt19937_64 replicate_rng(std::uint64_t seed, int rep) {
  std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32), std::uint32_t(rep)};
  return std::mt19937_64(seq);
}

// Cell counts of a household bootstrap sample.
inline std::array<std::uint64_t, kCellCount> resample_counts(const std::vector<int>& rows, std::mt19937_64& rng) {
  std::array<std::uint64_t, kCellCount> counts{};
  std::uniform_int_distribution<std::size_t> pick(0, rows.size() - 1);
  for (std::size_t i = 0; i < rows.size(); ++i) ++counts[std::size_t(rows[pick(rng)])];
  return counts;
}

inline std::vector<int> household_rows(const std::vector<HouseholdRecord>& records) {
  std::vector<int> rows;
  rows.reserve(records.size());
  for (const auto& r : records) rows.push_back(16 * r.block() + r.within());
  return rows;
}

// Order statistic at level q (smallest x with empirical CDF >= q).
inline double quantile(std::vector<double> v, double q) {
  if (v.empty()) throw std::runtime_error("no usable bootstrap replicates");
  std::sort(v.begin(), v.end());
  std::size_t k = std::size_t(std::ceil(q * double(v.size())));
  k = std::clamp<std::size_t>(k, 1, v.size());
  return v[k - 1];
}

// Euclidean projection onto the probability simplex.
inline void project_simplex(double* v, int n) {
  std::vector<double> u(v, v + n);
  std::sort(u.begin(), u.end(), std::greater<>());
  double cum = 0, tau = 0;
  for (int i = 0; i < n; ++i) {
    cum += u[std::size_t(i)];
    double t = (cum - 1) / (i + 1);
    if (u[std::size_t(i)] - t > 0) tau = t;
  }
  for (int i = 0; i < n; ++i) v[i] = std::max(0.0, v[i] - tau);
}

inline lp::SolverOptions sample_solver(const BoundsOptions& options) {
  lp::SolverOptions so = options.solver;
  so.feasibility_tol = options.feasibility_tol.value_or(1e-7);
  return so;
}

// Relaxed program: cells p free inside [lo, hi] per entry and on the simplex
// per block, with A mu = p. Cells are shifted as p = lo + q so every
// variable is nonnegative; the upper bounds become rows with slacks.
struct RelaxedLayout {
  lp::StandardLP problem;
  int type_columns = 0;
};

inline RelaxedLayout relaxed_program(const LinearProgramSpec& spec, const std::array<double, kCellCount>& lo,
                                     const std::array<double, kCellCount>& hi) {
  const ProfileMask blocks = spec.blocks();
  std::vector<int> cells;
  for (int p = 0; p < kProfileCount; ++p)
    if (blocks.contains(p))
      for (int w = 0; w < 16; ++w) cells.push_back(16 * p + w);
  std::array<int, kCellCount> cell_row{};
  cell_row.fill(-1);
  for (std::size_t i = 0; i < cells.size(); ++i) cell_row[std::size_t(cells[i])] = int(i);
  std::array<int, kProfileCount> block_row{};
  int rows = int(cells.size());
  for (int p = 0; p < kProfileCount; ++p)
    if (blocks.contains(p)) block_row[std::size_t(p)] = rows++;
  const int upper_start = rows;
  rows += int(cells.size());
  const int mass_start = rows;
  const int mass_rows = int(spec.mass_rows.size());
  rows += mass_rows;

  RelaxedLayout out;
  lp::SparseMatrix& E = out.problem.E;
  E.rows = rows;
  std::vector<double>& c = out.problem.c;
  for (const ProgramColumn& col : spec.columns) {
    auto within = unpack_signature(col.key.signature, blocks);
    for (int p = 0; p < kProfileCount; ++p)
      if (within[std::size_t(p)] >= 0) E.add_entry(cell_row[std::size_t(16 * p + within[std::size_t(p)])], 1.0);
    for (int k = 0; k < mass_rows; ++k)
      if (col.key.weights[std::size_t(k)]) E.add_entry(mass_start + k, col.key.weights[std::size_t(k)]);
    E.finish_column();
    c.push_back(col.key.objective);
  }
  for (const GeneralColumn& g : spec.extra_columns) {
    auto entries = g.cells;
    std::sort(entries.begin(), entries.end());
    for (const auto& [r, v] : entries)
      if (v != 0) E.add_entry(cell_row[std::size_t(r)], v);
    for (int k = 0; k < mass_rows; ++k)
      if (g.weights[std::size_t(k)] != 0) E.add_entry(mass_start + k, g.weights[std::size_t(k)]);
    E.finish_column();
    c.push_back(g.objective);
  }
  out.type_columns = E.cols();
  for (std::size_t i = 0; i < cells.size(); ++i) {
    E.add_entry(int(i), -1.0);
    E.add_entry(block_row[std::size_t(cells[i] / 16)], 1.0);
    E.add_entry(upper_start + int(i), 1.0);
    E.finish_column();
    c.push_back(0);
  }
  for (std::size_t i = 0; i < cells.size(); ++i) {
    E.add_entry(upper_start + int(i), 1.0);
    E.finish_column();
    c.push_back(0);
  }
  for (int k = 0; k < mass_rows; ++k) {
    E.add_entry(mass_start + k, 1.0);
    E.finish_column();
    c.push_back(0);
  }

  std::vector<double>& b = out.problem.b;
  b.assign(std::size_t(rows), 0.0);
  std::array<double, kProfileCount> lo_sum{};
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const std::size_t r = std::size_t(cells[i]);
    b[i] = lo[r];
    lo_sum[r / 16] += lo[r];
    b[std::size_t(upper_start) + i] = hi[r] - lo[r];
  }
  for (int p = 0; p < kProfileCount; ++p)
    if (blocks.contains(p)) b[std::size_t(block_row[std::size_t(p)])] = 1.0 - lo_sum[std::size_t(p)];
  for (int k = 0; k < mass_rows; ++k) b[std::size_t(mass_start + k)] = spec.mass_rows[std::size_t(k)].bound;
  return out;
}

inline double analytic_kappa(const ObservedDistribution& obs, int block, double alpha, double entries) {
  double sigma2 = 0;
  for (int w = 0; w < 16; ++w) {
    double p = obs.cell(block, w);
    sigma2 = std::max(sigma2, p * (1 - p));
  }
  return sigma2 * 2 * entries * std::log(2 * entries / alpha);
}

}  // namespace detail

// Box-region relaxation: each active block's cells may move by at most
// sqrt(kappa_z / n_z) per entry around the estimate.
inline ConfidenceReport relaxed_box_ci(const LinearProgramSpec& spec, const std::vector<HouseholdRecord>& records,
                                       const ObservedDistribution& observed, const InferenceConfig& config,
                                       const BoundsOptions& options = {}) {
  config.validate();
  ConfidenceReport rep;
  rep.method = CiMethod::relaxed_box;
  rep.alpha = config.alpha;
  for (int p = 0; p < kProfileCount; ++p)
    if (observed.active_blocks.contains(p) && observed.n_z[std::size_t(p)] == 0)
      throw std::invalid_argument("relaxed_box_ci needs household counts for every active block");
  rep.point_bounds = bounds(spec, observed, options);

  const ProfileMask blocks = observed.active_blocks;
  if (config.kappa_override) {
    rep.kappa.fill(*config.kappa_override);
  } else if (config.kappa_rule == KappaRule::analytic) {
    for (int p = 0; p < kProfileCount; ++p)
      if (blocks.contains(p)) rep.kappa[std::size_t(p)] = detail::analytic_kappa(observed, p, config.alpha, config.kappa_entries);
  } else {
    if (records.empty()) throw std::invalid_argument("bootstrap kappa needs household records");
    // Quantile of n_z |p*_z - p_z|^2 per block at a Sidak-adjusted level so
    // the blocks jointly hold with probability 1 - alpha.
    const auto rows = detail::household_rows(records);
    const double level = std::pow(1 - config.alpha, 1.0 / blocks.count());
    std::vector<std::array<double, kProfileCount>> forms(std::size_t(config.reps));
    detail::parallel_for(config.reps, config.threads, [&](int r) {
      auto rng = detail::replicate_rng(config.seed, r);
      auto star = ObservedDistribution::from_counts(detail::resample_counts(rows, rng));
      std::array<double, kProfileCount> f{};
      for (int p = 0; p < kProfileCount; ++p) {
        if (!blocks.contains(p)) continue;
        double q = 0;
        for (int w = 0; w < 16; ++w) {
          double d = star.cell(p, w) - observed.cell(p, w);
          q += d * d;
        }
        f[std::size_t(p)] = double(observed.n_z[std::size_t(p)]) * q;
      }
      forms[std::size_t(r)] = f;
    });
    for (int p = 0; p < kProfileCount; ++p) {
      if (!blocks.contains(p)) continue;
      std::vector<double> v;
      for (const auto& f : forms) v.push_back(f[std::size_t(p)]);
      rep.kappa[std::size_t(p)] = detail::quantile(v, level);
    }
    rep.reps = config.reps;
  }

  std::array<double, kCellCount> lo{}, hi{};
  for (int r = 0; r < kCellCount; ++r) {
    const int p = r / 16;
    if (!blocks.contains(p)) continue;
    double rad = std::sqrt(rep.kappa[std::size_t(p)] / double(observed.n_z[std::size_t(p)]));
    rep.radius[std::size_t(p)] = rad;
    lo[std::size_t(r)] = std::max(0.0, observed.cells[std::size_t(r)] - rad);
    hi[std::size_t(r)] = std::min(1.0, observed.cells[std::size_t(r)] + rad);
  }
  auto relaxed = detail::relaxed_program(spec, lo, hi);
  lp::SolverOptions so = options.solver;
  so.feasibility_tol = options.feasibility_tol.value_or(default_feasibility_tol(observed));
  auto low = lp::solve(relaxed.problem, so);
  for (double& c : relaxed.problem.c) c = -c;
  auto high = lp::solve(relaxed.problem, so);
  auto failed = [](const lp::SolveOutcome& o) { return !o.optimal() && o.status != lp::SolveStatus::infeasible; };
  if (failed(low) || failed(high)) throw SolverFailure("relaxed program: " + low.message + high.message);
  if (!low.optimal() || !high.optimal()) {
    rep.status = IntervalStatus::empty;
    return rep;
  }
  rep.lower_ci = low.solution->value;
  rep.upper_ci = -high.solution->value;
  rep.degenerate_basis = low.solution->is_degenerate() || high.solution->is_degenerate();
  return rep;
}

inline ConfidenceReport relaxed_box_ci(const LinearProgramSpec& spec, const ObservedDistribution& observed,
                                       const InferenceConfig& config, const BoundsOptions& options = {}) {
  return relaxed_box_ci(spec, {}, observed, config, options);
}

inline ConfidenceReport relaxed_box_ci(const LinearProgramSpec& spec, const std::vector<HouseholdRecord>& records,
                                       const InferenceConfig& config, const BoundsOptions& options = {}) {
  return relaxed_box_ci(spec, records, empirical_cells(records), config, options);
}

namespace detail {

// Shared setup for the resampling methods: the estimate, a layout presolved
// on its zero cells (bootstrap zeros contain them), and the two optimal
// endpoint solutions.
struct EndpointProblem {
  ObservedDistribution observed;
  ProgramLayout layout;
  lp::StandardLP min_lp, max_lp;
  std::optional<lp::BasicSolution> lower, upper;
  lp::SolverOptions solver;
};

inline EndpointProblem endpoint_problem(const LinearProgramSpec& spec, const std::vector<HouseholdRecord>& records,
                                        ConfidenceReport& rep, const BoundsOptions& options) {
  if (records.empty()) throw AllBlocksEmpty();
  EndpointProblem ep;
  ep.observed = empirical_cells(records);
  rep.point_bounds = bounds(spec, ep.observed, options);
  if (rep.point_bounds.empty()) {
    rep.status = IntervalStatus::empty;
    return ep;
  }
  ep.layout = make_layout(spec, ep.observed.cells, options.presolve);
  ep.solver = sample_solver(options);
  ep.min_lp = ep.layout.lp(ep.observed.cells, spec.mass_rows, Sense::minimize);
  ep.max_lp = ep.layout.lp(ep.observed.cells, spec.mass_rows, Sense::maximize);
  auto lo = lp::solve(ep.min_lp, ep.solver);
  auto hi = lp::solve(ep.max_lp, ep.solver);
  if (!lo.optimal() || !hi.optimal()) throw SolverFailure("endpoint solve failed on the estimate");
  ep.lower = std::move(lo.solution);
  ep.upper = std::move(hi.solution);
  rep.degenerate_basis = ep.lower->is_degenerate() || ep.upper->is_degenerate();
  return ep;
}

}  // namespace detail

// Bootstrap over optimal bases. Each replicate's optimal basis joins the
// near-optimal set when its value is within c_n of the estimate; the
// endpoint statistic is the extreme linearized change over that set.
inline ConfidenceReport basis_bootstrap_ci(const LinearProgramSpec& spec, const std::vector<HouseholdRecord>& records,
                                           const InferenceConfig& config, const BoundsOptions& options = {}) {
  config.validate();
  ConfidenceReport rep;
  rep.method = CiMethod::basis_bootstrap;
  rep.alpha = config.alpha;
  rep.reps = config.reps;
  auto ep = detail::endpoint_problem(spec, records, rep, options);
  if (rep.empty()) return rep;

  const double n = double(records.size());
  const double root_n = std::sqrt(n);
  const double c_n = std::pow(n, -config.tolerance_exponent);
  const auto rows = detail::household_rows(records);

  struct Replicate {
    bool feasible = false;
    std::vector<double> rhs;
    std::optional<lp::BasicSolution> lower, upper;
  };
  std::vector<Replicate> reps(std::size_t(config.reps));
  detail::parallel_for(config.reps, config.threads, [&](int r) {
    auto rng = detail::replicate_rng(config.seed, r);
    auto star = ObservedDistribution::from_counts(detail::resample_counts(rows, rng));
    Replicate& out = reps[std::size_t(r)];
    if (star.active_blocks != ep.observed.active_blocks) return;
    out.rhs = ep.layout.rhs(star.cells, spec.mass_rows);
    lp::StandardLP lo_lp = ep.min_lp, hi_lp = ep.max_lp;
    lo_lp.b = out.rhs;
    hi_lp.b = out.rhs;
    auto lo = lp::solve_from(lo_lp, ep.lower->basis, ep.solver);
    auto hi = lp::solve_from(hi_lp, ep.upper->basis, ep.solver);
    if (!lo.optimal() || !hi.optimal()) return;
    out.feasible = true;
    out.lower = std::move(lo.solution);
    out.upper = std::move(hi.solution);
  });

  const std::vector<double> base_rhs = ep.min_lp.b;
  auto near_optimal = [&](bool upper) {
    const lp::BasicSolution& original = upper ? *ep.upper : *ep.lower;
    std::map<std::vector<int>, const lp::BasicSolution*> set{{original.basis, &original}};
    for (const auto& r : reps) {
      if (!r.feasible) continue;
      const lp::BasicSolution& s = upper ? *r.upper : *r.lower;
      if (std::abs(s.value - original.value) <= c_n) set.emplace(s.basis, &s);
    }
    return set;
  };
  auto lower_set = near_optimal(false);
  auto upper_set = near_optimal(true);
  rep.lower_bases = int(lower_set.size());
  rep.upper_bases = int(upper_set.size());

  // The lower endpoint is convex in the cells, so its change is the largest
  // basis-wise linear change; the upper endpoint is concave (smallest).
  // Solutions are in minimize sense, so the upper one negates.
  for (const auto& r : reps) {
    if (!r.feasible) {
      ++rep.infeasible_replicates;
      continue;
    }
    double lo_stat = -std::numeric_limits<double>::infinity();
    for (const auto& [basis, sol] : lower_set)
      lo_stat = std::max(lo_stat, root_n * (lp::revalue_basis(*sol, r.rhs) - lp::revalue_basis(*sol, base_rhs)));
    double hi_stat = std::numeric_limits<double>::infinity();
    for (const auto& [basis, sol] : upper_set)
      hi_stat = std::min(hi_stat, -root_n * (lp::revalue_basis(*sol, r.rhs) - lp::revalue_basis(*sol, base_rhs)));
    rep.lower_draws.push_back(lo_stat);
    rep.upper_draws.push_back(hi_stat);
  }
  rep.lower_ci = rep.point_bounds.lower - detail::quantile(rep.lower_draws, 1 - config.alpha) / root_n;
  rep.upper_ci = rep.point_bounds.upper - detail::quantile(rep.upper_draws, config.alpha) / root_n;
  return rep;
}

// Numerical directional derivative of each endpoint along bootstrap
// directions W = sqrt(n)(p* - p), with step e_n.
inline ConfidenceReport numerical_delta_ci(const LinearProgramSpec& spec, const std::vector<HouseholdRecord>& records,
                                           const InferenceConfig& config, const BoundsOptions& options = {}) {
  config.validate();
  ConfidenceReport rep;
  rep.method = CiMethod::numerical_delta;
  rep.alpha = config.alpha;
  rep.reps = config.reps;
  auto ep = detail::endpoint_problem(spec, records, rep, options);
  if (rep.empty()) return rep;

  const double n = double(records.size());
  const double root_n = std::sqrt(n);
  const double step = std::pow(n, -config.step_exponent);
  const auto rows = detail::household_rows(records);
  const ProfileMask blocks = ep.observed.active_blocks;

  struct Replicate {
    bool feasible = false;
    bool projected = false;
    double lower = 0, upper = 0;
  };
  std::vector<Replicate> reps(std::size_t(config.reps));
  detail::parallel_for(config.reps, config.threads, [&](int r) {
    auto rng = detail::replicate_rng(config.seed, r);
    auto star = ObservedDistribution::from_counts(detail::resample_counts(rows, rng));
    Replicate& out = reps[std::size_t(r)];
    if (star.active_blocks != blocks) return;
    std::array<double, kCellCount> moved{};
    for (int c = 0; c < kCellCount; ++c) {
      double w = root_n * (star.cells[std::size_t(c)] - ep.observed.cells[std::size_t(c)]);
      moved[std::size_t(c)] = ep.observed.cells[std::size_t(c)] + step * w;
    }
    for (int p = 0; p < kProfileCount; ++p) {
      if (!blocks.contains(p)) continue;
      double* v = moved.data() + 16 * p;
      if (std::any_of(v, v + 16, [](double x) { return x < 0; })) {
        detail::project_simplex(v, 16);
        out.projected = true;
      }
    }
    lp::StandardLP lo_lp = ep.min_lp, hi_lp = ep.max_lp;
    lo_lp.b = ep.layout.rhs(moved, spec.mass_rows);
    hi_lp.b = lo_lp.b;
    auto lo = lp::solve_from(lo_lp, ep.lower->basis, ep.solver);
    auto hi = lp::solve_from(hi_lp, ep.upper->basis, ep.solver);
    if (!lo.optimal() || !hi.optimal()) return;
    out.feasible = true;
    out.lower = (lo.solution->value - ep.lower->value) / step;
    out.upper = (-hi.solution->value + ep.upper->value) / step;
  });

  std::vector<double> abs_lo, abs_hi;
  for (const auto& r : reps) {
    rep.projected_replicates += r.projected;
    if (!r.feasible) {
      ++rep.infeasible_replicates;
      continue;
    }
    rep.lower_draws.push_back(r.lower);
    rep.upper_draws.push_back(r.upper);
    abs_lo.push_back(std::abs(r.lower));
    abs_hi.push_back(std::abs(r.upper));
  }
  rep.lower_ci = rep.point_bounds.lower - detail::quantile(abs_lo, 1 - config.alpha) / root_n;
  rep.upper_ci = rep.point_bounds.upper + detail::quantile(abs_hi, 1 - config.alpha) / root_n;
  return rep;
}

inline ConfidenceReport confidence_interval(const LinearProgramSpec& spec, const std::vector<HouseholdRecord>& records,
                                            const InferenceConfig& config, const BoundsOptions& options = {}) {
  switch (config.method) {
    case CiMethod::relaxed_box: return relaxed_box_ci(spec, records, config, options);
    case CiMethod::basis_bootstrap: return basis_bootstrap_ci(spec, records, config, options);
    case CiMethod::numerical_delta: return numerical_delta_ci(spec, records, config, options);
  }
  throw std::invalid_argument("unknown inference method");
}

}  // namespace pairbounds
