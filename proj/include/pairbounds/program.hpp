#pragma once

#include <pairbounds/data.hpp>
#include <pairbounds/lpsolve.hpp>
#include <pairbounds/restrictions.hpp>
#include <pairbounds/typespace.hpp>

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <thread>
#include <variant>
#include <vector>

namespace pairbounds {

// ---------------------------------------------------------------- estimands

// E[Y_m(alloc1)] - E[Y_m(alloc2)] for member m, allocations own-first.
struct FixedAllocation {
  int member = 1;
  TakeUp alloc1{1, 0};
  std::optional<TakeUp> alloc2 = TakeUp{0, 0};
};

// Member forced to `forced`, offers (own_offer, partner_offer); the partner
// best-responds to the forced treatment.
struct PolicyArm {
  int forced = 1;
  int own_offer = 0;
  int partner_offer = 0;
};

struct PolicyTarget {
  int member = 1;
  PolicyArm arm;
  std::optional<PolicyArm> contrast;
};

using Estimand = std::variant<FixedAllocation, PolicyTarget>;

inline FixedAllocation ade(int member = 1) { return {member, {1, 0}, TakeUp{0, 0}}; }
inline FixedAllocation ase(int member = 1) { return {member, {0, 1}, TakeUp{0, 0}}; }

inline void validate(const Estimand& est) {
  auto binary = [](int v) { return v == 0 || v == 1; };
  auto check_member = [](int m) {
    if (m != 1 && m != 2) throw std::invalid_argument("estimand member must be 1 or 2");
  };
  if (const auto* fa = std::get_if<FixedAllocation>(&est)) {
    check_member(fa->member);
    auto ok = [&](TakeUp t) { return binary(t.d) && binary(t.d_other); };
    if (!ok(fa->alloc1) || (fa->alloc2 && !ok(*fa->alloc2)))
      throw std::invalid_argument("allocations must be binary pairs");
    return;
  }
  const auto& pt = std::get<PolicyTarget>(est);
  check_member(pt.member);
  auto ok = [&](const PolicyArm& a) { return binary(a.forced) && binary(a.own_offer) && binary(a.partner_offer); };
  if (!ok(pt.arm) || (pt.contrast && !ok(*pt.contrast)))
    throw std::invalid_argument("policy target treatment and offers must be binary");
}

inline int objective_theta(IndividualType s, IndividualType s_other, const FixedAllocation& est) {
  IndividualType own = est.member == 1 ? s : s_other;
  int v = own.potential_outcome(est.alloc1.d, est.alloc1.d_other);
  if (est.alloc2) v -= own.potential_outcome(est.alloc2->d, est.alloc2->d_other);
  return v;
}

namespace detail {

inline int policy_outcome(IndividualType own, IndividualType partner, const PolicyArm& a) {
  // Partner's own-first profile is (partner_offer, own_offer).
  int partner_take_up = partner.best_response(2 * a.partner_offer + a.own_offer, a.forced);
  return own.potential_outcome(a.forced, partner_take_up);
}

// Pair-profile index (member-1 offer, member-2 offer) of a policy arm.
inline int arm_profile(int member, const PolicyArm& a) {
  return member == 1 ? 2 * a.own_offer + a.partner_offer : 2 * a.partner_offer + a.own_offer;
}

}  // namespace detail

inline int objective_gamma(IndividualType s, IndividualType s_other, const PolicyTarget& est) {
  IndividualType own = est.member == 1 ? s : s_other;
  IndividualType partner = est.member == 1 ? s_other : s;
  int v = detail::policy_outcome(own, partner, est.arm);
  if (est.contrast) v -= detail::policy_outcome(own, partner, *est.contrast);
  return v;
}

// Objective coefficient; constant in the equilibrium selection.
inline int objective(IndividualType s, IndividualType s_other, const Estimand& est) {
  if (const auto* fa = std::get_if<FixedAllocation>(&est)) return objective_theta(s, s_other, *fa);
  return objective_gamma(s, s_other, std::get<PolicyTarget>(est));
}
inline int objective(const PairType& t, const Estimand& est) { return objective(t.s, t.s_other, est); }

// Games whose best responses the estimand reads (beyond the observed ones).
inline ProfileMask required_profiles(const Estimand& est) {
  ProfileMask m;
  if (const auto* pt = std::get_if<PolicyTarget>(&est)) {
    m = m.with(detail::arm_profile(pt->member, pt->arm));
    if (pt->contrast) m = m.with(detail::arm_profile(pt->member, *pt->contrast));
  }
  return m;
}

inline std::string describe(const Estimand& est) {
  auto pair = [](TakeUp t) { return "(" + std::to_string(t.d) + "," + std::to_string(t.d_other) + ")"; };
  if (const auto* fa = std::get_if<FixedAllocation>(&est)) {
    std::string s = "theta member " + std::to_string(fa->member) + ": Y" + pair(fa->alloc1);
    if (fa->alloc2) s += " - Y" + pair(*fa->alloc2);
    return s;
  }
  const auto& pt = std::get<PolicyTarget>(est);
  auto arm = [](const PolicyArm& a) {
    return "d=" + std::to_string(a.forced) + " offers (" + std::to_string(a.own_offer) + "," +
           std::to_string(a.partner_offer) + ")";
  };
  std::string s = "gamma member " + std::to_string(pt.member) + ": " + arm(pt.arm);
  if (pt.contrast) s += " minus " + arm(*pt.contrast);
  return s;
}

// ------------------------------------------------------------------ columns

// Observed cell (within index) of each block, -1 for inactive blocks.
inline std::array<int, kProfileCount> column_of(const PairType& t, ProfileMask active) {
  std::array<int, kProfileCount> out{-1, -1, -1, -1};
  for (int p = 0; p < kProfileCount; ++p) {
    if (!active.contains(p)) continue;
    TakeUp e = t.e.chosen(p);
    int y = t.s.potential_outcome(e.d, e.d_other);
    int y_other = t.s_other.potential_outcome(e.d_other, e.d);
    out[std::size_t(p)] = CellIndex::within_of(y, y_other, e.d, e.d_other);
  }
  return out;
}

// Packs one within index per active block, lowest active block in the low bits.
inline std::uint16_t pack_signature(const std::array<int, kProfileCount>& cells, ProfileMask active) {
  std::uint16_t sig = 0;
  int k = 0;
  for (int p = 0; p < kProfileCount; ++p)
    if (active.contains(p)) sig |= std::uint16_t(cells[std::size_t(p)] << (4 * k++));
  return sig;
}

inline std::array<int, kProfileCount> unpack_signature(std::uint16_t sig, ProfileMask active) {
  std::array<int, kProfileCount> out{-1, -1, -1, -1};
  int k = 0;
  for (int p = 0; p < kProfileCount; ++p)
    if (active.contains(p)) out[std::size_t(p)] = (sig >> (4 * k++)) & 0xF;
  return out;
}

inline constexpr int kMaxMassBounds = 8;

struct ColumnKey {
  std::uint16_t signature = 0;
  std::int8_t objective = 0;
  std::array<std::uint8_t, kMaxMassBounds> weights{};

  friend bool operator==(const ColumnKey&, const ColumnKey&) = default;
  friend auto operator<=>(const ColumnKey&, const ColumnKey&) = default;
};

struct ProgramColumn {
  ColumnKey key;
  std::uint64_t multiplicity = 0;
  std::uint32_t representative = 0;  // smallest PairType id merged into the column
};

// Column not tied to a single pair type, e.g. a convex mixture of columns.
struct GeneralColumn {
  std::vector<std::pair<int, double>> cells;  // (global cell row, value)
  double objective = 0;
  std::vector<double> weights;                // one per mass bound
};

struct MassBoundRow {
  std::string canonical;
  double bound = 0;
};

class EmptyTypeSpace : public std::runtime_error {
 public:
  EmptyTypeSpace() : std::runtime_error("every pair type was excluded by the restrictions") {}
};

struct LinearProgramSpec {
  TypeSpaceConfig config;
  Estimand estimand;
  std::vector<ProgramColumn> columns;
  std::vector<GeneralColumn> extra_columns;
  std::vector<MassBoundRow> mass_rows;
  std::vector<std::string> restrictions;  // canonical forms of the compiled constraints
  std::vector<std::string> warnings;
  ObservedDistribution observed;
  std::uint64_t raw_pair_types = 0;
  std::uint64_t admissible_pairs = 0;
  double build_seconds = 0;

  ProfileMask blocks() const { return config.active_profiles; }
  std::size_t column_count() const { return columns.size() + extra_columns.size(); }
};

struct BuildOptions {
  bool dedup = true;
  unsigned threads = 0;  // 0: hardware concurrency
};

namespace detail {

struct DedupEntry {
  std::uint64_t multiplicity = 0;
  std::uint32_t representative = UINT32_MAX;
};

// Per-worker accumulator: one dense signature table per (objective, weights) prefix.
class ColumnAccumulator {
 public:
  ColumnAccumulator(ProfileMask active, bool dedup)
      : active_(active), table_size_(std::size_t(1) << (4 * active.count())), dedup_(dedup) {}

  void add_pair(IndividualType s, IndividualType so, const PairGames& games, int objective,
                const std::array<std::uint8_t, kMaxMassBounds>& weights) {
    ColumnKey prefix;
    prefix.objective = std::int8_t(objective);
    prefix.weights = weights;
    std::vector<DedupEntry>* table = nullptr;
    if (dedup_) {
      auto it = tables_.find(prefix);
      if (it == tables_.end()) it = tables_.emplace(prefix, std::vector<DedupEntry>(table_size_)).first;
      table = &it->second;
    }
    // Within index of each (block, take-up) combination for this pair.
    std::array<std::array<std::uint16_t, 4>, kProfileCount> within{};
    for (int p = 0; p < kProfileCount; ++p)
      for (int t = 0; t < 4; ++t) {
        TakeUp e = TakeUp::from_index(t);
        within[p][t] = std::uint16_t(CellIndex::within_of(s.potential_outcome(e.d, e.d_other),
                                                          so.potential_outcome(e.d_other, e.d), e.d, e.d_other));
      }
    const std::uint32_t base = (std::uint32_t(s.code()) << 20) | (std::uint32_t(so.code()) << 8);
    for_each_selection(games, active_, [&](EquilibriumSelection e) {
      std::uint16_t sig = 0;
      int k = 0;
      for (int p = 0; p < kProfileCount; ++p)
        if (active_.contains(p)) sig |= std::uint16_t(within[p][e.chosen(p).index()] << (4 * k++));
      ++raw_;
      const std::uint32_t id = base | e.code();
      if (!dedup_) {
        ColumnKey key = prefix;
        key.signature = sig;
        raw_columns_.push_back({key, 1, id});
        return;
      }
      DedupEntry& entry = (*table)[sig];
      ++entry.multiplicity;
      entry.representative = std::min(entry.representative, id);
    });
    ++pairs_;
  }

  void merge(ColumnAccumulator&& other) {
    raw_ += other.raw_;
    pairs_ += other.pairs_;
    for (auto& [prefix, table] : other.tables_) {
      auto it = tables_.find(prefix);
      if (it == tables_.end()) {
        tables_.emplace(prefix, std::move(table));
        continue;
      }
      for (std::size_t i = 0; i < table.size(); ++i) {
        it->second[i].multiplicity += table[i].multiplicity;
        it->second[i].representative = std::min(it->second[i].representative, table[i].representative);
      }
    }
    raw_columns_.insert(raw_columns_.end(), other.raw_columns_.begin(), other.raw_columns_.end());
  }

  std::vector<ProgramColumn> columns() const {
    std::vector<ProgramColumn> out;
    if (!dedup_) {
      out = raw_columns_;
      std::sort(out.begin(), out.end(), [](const ProgramColumn& a, const ProgramColumn& b) {
        return a.representative < b.representative;
      });
      return out;
    }
    for (const auto& [prefix, table] : tables_)
      for (std::size_t sig = 0; sig < table.size(); ++sig) {
        if (table[sig].multiplicity == 0) continue;
        ColumnKey key = prefix;
        key.signature = std::uint16_t(sig);
        out.push_back({key, table[sig].multiplicity, table[sig].representative});
      }
    std::sort(out.begin(), out.end(), [](const ProgramColumn& a, const ProgramColumn& b) { return a.key < b.key; });
    return out;
  }

  std::uint64_t raw() const { return raw_; }
  std::uint64_t pairs() const { return pairs_; }

 private:
  ProfileMask active_;
  std::size_t table_size_;
  bool dedup_;
  std::map<ColumnKey, std::vector<DedupEntry>> tables_;
  std::vector<ProgramColumn> raw_columns_;
  std::uint64_t raw_ = 0;
  std::uint64_t pairs_ = 0;
};

inline std::array<std::uint8_t, kMaxMassBounds> pair_weights(const std::vector<MassBound>& bounds, IndividualType s,
                                                             IndividualType so) {
  std::array<std::uint8_t, kMaxMassBounds> w{};
  for (std::size_t k = 0; k < bounds.size(); ++k) w[k] = std::uint8_t(bounds[k].weight(s, so));
  return w;
}

inline unsigned worker_count(unsigned requested) {
  unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  return requested == 0 ? hw : requested;
}

}  // namespace detail

// Type-space config actually enumerated for an estimand: adds the games a
// policy target reads as counterfactual profiles.
inline TypeSpaceConfig effective_config(TypeSpaceConfig config, const Estimand& est) {
  ProfileMask extra = required_profiles(est);
  for (int p = 0; p < kProfileCount; ++p)
    if (extra.contains(p) && !config.active_profiles.contains(p))
      config.counterfactual_profiles = config.counterfactual_profiles.with(p);
  return config;
}

// Enumerates the admissible pair types of `config` under the restrictions and
// accumulates deduplicated columns. The observed distribution is attached
// separately (see with_observed) so one structure can serve many rhs vectors.
inline LinearProgramSpec build_structure(const TypeSpaceConfig& base_config, const std::vector<Restriction>& restrictions,
                                         const Estimand& estimand, const BuildOptions& options = {}) {
  auto start = std::chrono::steady_clock::now();
  validate(estimand);
  TypeSpaceConfig config = effective_config(base_config, estimand);
  config.validate();
  CompiledSet compiled = compile_all(restrictions, config);
  if (compiled.bounds.size() > std::size_t(kMaxMassBounds))
    throw std::invalid_argument("at most 8 eps-restrictions are supported");

  std::vector<PairFilter> filters = compiled.pair_filters();
  const std::size_t n_first = individual_types(config, 1).size();
  const unsigned workers = std::min<unsigned>(detail::worker_count(options.threads), unsigned(std::max<std::size_t>(1, n_first)));
  std::vector<detail::ColumnAccumulator> acc(workers, detail::ColumnAccumulator(config.active_profiles, options.dedup));
  auto work = [&](unsigned w) {
    IndexRange range{n_first * w / workers, n_first * (w + 1) / workers};
    for_each_admissible_pair(
        config, filters,
        [&](IndividualType s, IndividualType so, const PairGames& games) {
          acc[w].add_pair(s, so, games, objective(s, so, estimand), detail::pair_weights(compiled.bounds, s, so));
        },
        range);
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work, w);
    for (auto& t : pool) t.join();
  }
  for (unsigned w = 1; w < workers; ++w) acc[0].merge(std::move(acc[w]));

  LinearProgramSpec spec;
  spec.config = config;
  spec.estimand = estimand;
  spec.columns = acc[0].columns();
  spec.raw_pair_types = acc[0].raw();
  spec.admissible_pairs = acc[0].pairs();
  for (const MassBound& m : compiled.bounds) spec.mass_rows.push_back({m.canonical, m.bound});
  spec.restrictions = compiled.canonical();
  spec.warnings = falsifiable_combination_check(compiled);
  if (spec.columns.empty()) throw EmptyTypeSpace();
  spec.build_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return spec;
}

// Builds a program over an explicit list of pair types (e.g. a hand-made
// space); each type must be admissible on the active profiles.
inline LinearProgramSpec build_structure_from(const std::vector<PairType>& pairs, const TypeSpaceConfig& config,
                                              const std::vector<Restriction>& restrictions, const Estimand& estimand,
                                              const BuildOptions& options = {}) {
  validate(estimand);
  config.validate();
  CompiledSet compiled = compile_all(restrictions, config);
  if (compiled.bounds.size() > std::size_t(kMaxMassBounds))
    throw std::invalid_argument("at most 8 eps-restrictions are supported");
  std::vector<PairFilter> filters = compiled.pair_filters();
  detail::ColumnAccumulator acc(config.active_profiles, options.dedup);
  for (const PairType& t : pairs) {
    if (!is_admissible(t, config.active_profiles))
      throw std::invalid_argument("pair type is not consistent with Nash play on an active profile");
    bool ok = std::all_of(filters.begin(), filters.end(), [&](const PairFilter& f) { return f.accepts(t.s, t.s_other); });
    if (!ok) continue;
    PairGames single;
    for (int p = 0; p < kProfileCount; ++p)
      if (config.active_profiles.contains(p)) single.nash[std::size_t(p)] = NashSet(std::uint8_t(1u << t.e.chosen(p).index()));
    acc.add_pair(t.s, t.s_other, single, objective(t, estimand), detail::pair_weights(compiled.bounds, t.s, t.s_other));
  }
  LinearProgramSpec spec;
  spec.config = config;
  spec.estimand = estimand;
  spec.columns = acc.columns();
  spec.raw_pair_types = acc.raw();
  spec.admissible_pairs = acc.pairs();
  for (const MassBound& m : compiled.bounds) spec.mass_rows.push_back({m.canonical, m.bound});
  spec.restrictions = compiled.canonical();
  spec.warnings = falsifiable_combination_check(compiled);
  if (spec.columns.empty()) throw EmptyTypeSpace();
  return spec;
}

inline LinearProgramSpec with_observed(LinearProgramSpec spec, const ObservedDistribution& observed) {
  if (observed.active_blocks != spec.config.active_profiles)
    throw std::invalid_argument("observed blocks differ from the active profiles of the program");
  spec.observed = observed;
  return spec;
}

inline LinearProgramSpec build_program(const TypeSpaceConfig& config, const std::vector<Restriction>& restrictions,
                                       const Estimand& estimand, const ObservedDistribution& observed,
                                       const BuildOptions& options = {}) {
  return with_observed(build_structure(config, restrictions, estimand, options), observed);
}

// Adds a column equal to sum_k weight_k * column_k over existing type columns.
inline void append_mixture(LinearProgramSpec& spec, const std::vector<std::pair<std::size_t, double>>& parts) {
  GeneralColumn g;
  std::map<int, double> cells;
  g.weights.assign(spec.mass_rows.size(), 0.0);
  for (const auto& [idx, w] : parts) {
    const ProgramColumn& c = spec.columns.at(idx);
    auto within = unpack_signature(c.key.signature, spec.blocks());
    for (int p = 0; p < kProfileCount; ++p)
      if (within[std::size_t(p)] >= 0) cells[16 * p + within[std::size_t(p)]] += w;
    g.objective += w * c.key.objective;
    for (std::size_t k = 0; k < spec.mass_rows.size(); ++k) g.weights[k] += w * c.key.weights[k];
  }
  g.cells.assign(cells.begin(), cells.end());
  spec.extra_columns.push_back(std::move(g));
}

// ------------------------------------------------------------ standard form

enum class Sense { minimize, maximize };

// Row/column selection of the standard-form LP. Cells with zero mass in the
// pattern distribution force every column touching them to zero, so those
// rows and columns are removed; then one remaining cell row per block is
// dropped since the block's rows sum to the ones row.
struct ProgramLayout {
  std::vector<int> cell_rows;             // global cell rows kept, in order
  std::vector<std::size_t> type_columns;  // indices into columns then extra_columns
  int mass_rows = 0;
  lp::SparseMatrix matrix;                // rows: cell_rows, ones, mass rows
  std::vector<double> objective;          // per LP column (slacks 0), minimize sense

  int row_count() const { return matrix.rows; }
  std::size_t slack_offset() const { return type_columns.size(); }

  std::vector<double> rhs(const std::array<double, kCellCount>& cells, const std::vector<MassBoundRow>& bounds) const {
    std::vector<double> b;
    b.reserve(std::size_t(matrix.rows));
    for (int r : cell_rows) b.push_back(cells[std::size_t(r)]);
    b.push_back(1.0);
    for (const auto& m : bounds) b.push_back(m.bound);
    return b;
  }

  lp::StandardLP lp(const std::array<double, kCellCount>& cells, const std::vector<MassBoundRow>& bounds, Sense sense) const {
    lp::StandardLP out{matrix, rhs(cells, bounds), objective};
    if (sense == Sense::maximize)
      for (double& c : out.c) c = -c;
    return out;
  }
};

inline ProgramLayout make_layout(const LinearProgramSpec& spec, const std::array<double, kCellCount>& pattern,
                                 bool presolve = true) {
  const ProfileMask blocks = spec.blocks();
  std::array<bool, kCellCount> zero{};
  if (presolve)
    for (int r = 0; r < kCellCount; ++r) zero[std::size_t(r)] = blocks.contains(r / 16) && pattern[std::size_t(r)] <= 0.0;

  ProgramLayout layout;
  layout.mass_rows = int(spec.mass_rows.size());
  std::vector<std::vector<std::pair<int, double>>> col_cells;
  std::vector<double> col_obj;
  std::vector<std::vector<double>> col_w;

  for (std::size_t i = 0; i < spec.columns.size(); ++i) {
    const ProgramColumn& c = spec.columns[i];
    auto within = unpack_signature(c.key.signature, blocks);
    std::vector<std::pair<int, double>> cells;
    bool keep = true;
    for (int p = 0; p < kProfileCount && keep; ++p) {
      if (within[std::size_t(p)] < 0) continue;
      int row = 16 * p + within[std::size_t(p)];
      if (zero[std::size_t(row)]) keep = false;
      cells.push_back({row, 1.0});
    }
    if (!keep) continue;
    layout.type_columns.push_back(i);
    col_cells.push_back(std::move(cells));
    col_obj.push_back(c.key.objective);
    col_w.emplace_back(c.key.weights.begin(), c.key.weights.begin() + layout.mass_rows);
  }
  for (std::size_t i = 0; i < spec.extra_columns.size(); ++i) {
    const GeneralColumn& g = spec.extra_columns[i];
    bool keep = std::none_of(g.cells.begin(), g.cells.end(),
                             [&](const auto& cv) { return cv.second > 0 && zero[std::size_t(cv.first)]; });
    if (!keep) continue;
    layout.type_columns.push_back(spec.columns.size() + i);
    col_cells.push_back(g.cells);
    col_obj.push_back(g.objective);
    col_w.push_back(g.weights);
  }

  // Kept cell rows: nonzero pattern cells minus the last one of each block.
  std::array<int, kCellCount> row_of{};
  row_of.fill(-1);
  for (int p = 0; p < kProfileCount; ++p) {
    if (!blocks.contains(p)) continue;
    std::vector<int> rows;
    for (int w = 0; w < 16; ++w)
      if (!zero[std::size_t(16 * p + w)]) rows.push_back(16 * p + w);
    if (!rows.empty()) rows.pop_back();
    for (int r : rows) {
      row_of[std::size_t(r)] = int(layout.cell_rows.size());
      layout.cell_rows.push_back(r);
    }
  }
  const int ones_row = int(layout.cell_rows.size());
  layout.matrix.rows = ones_row + 1 + layout.mass_rows;
  for (std::size_t j = 0; j < col_cells.size(); ++j) {
    std::vector<std::pair<int, double>> entries;
    for (const auto& [row, v] : col_cells[j])
      if (row_of[std::size_t(row)] >= 0) entries.push_back({row_of[std::size_t(row)], v});
    std::sort(entries.begin(), entries.end());
    for (const auto& [r, v] : entries) layout.matrix.add_entry(r, v);
    layout.matrix.add_entry(ones_row, 1.0);
    for (int k = 0; k < layout.mass_rows; ++k) layout.matrix.add_entry(ones_row + 1 + k, col_w[j][std::size_t(k)]);
    layout.matrix.finish_column();
    layout.objective.push_back(col_obj[j]);
  }
  for (int k = 0; k < layout.mass_rows; ++k) {
    layout.matrix.add_entry(ones_row + 1 + k, 1.0);
    layout.matrix.finish_column();
    layout.objective.push_back(0.0);
  }
  return layout;
}

// -------------------------------------------------------------------- bounds

struct WitnessEntry {
  std::size_t column = 0;              // index into columns then extra_columns
  double mass = 0;
  std::optional<PairType> representative;
  std::uint64_t multiplicity = 1;
};

enum class IntervalStatus { interval, empty };

struct EndpointDiagnostics {
  int iterations = 0;
  bool degenerate = false;
  double min_reduced_cost = 0;
  double max_residual = 0;
};

struct IdentifiedInterval {
  IntervalStatus status = IntervalStatus::empty;
  double lower = 0;
  double upper = 0;
  std::vector<WitnessEntry> lower_witness;
  std::vector<WitnessEntry> upper_witness;
  EndpointDiagnostics lower_diag, upper_diag;
  int lp_rows = 0;
  int lp_columns = 0;
  double solve_seconds = 0;

  bool empty() const { return status == IntervalStatus::empty; }
  double width() const { return upper - lower; }
};

class SolverFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct BoundsOptions {
  // Phase-1 tolerance; unset picks 1e-9 for population cells, 1e-7 for samples.
  std::optional<double> feasibility_tol;
  bool presolve = true;
  lp::SolverOptions solver;
};

inline double default_feasibility_tol(const ObservedDistribution& obs) { return obs.households() > 0 ? 1e-7 : 1e-9; }

namespace detail {

inline std::vector<WitnessEntry> witness_of(const LinearProgramSpec& spec, const ProgramLayout& layout,
                                            const lp::BasicSolution& sol) {
  std::vector<WitnessEntry> out;
  for (std::size_t j = 0; j < layout.type_columns.size(); ++j) {
    double x = sol.x[j];
    if (x <= 1e-12) continue;
    WitnessEntry w;
    w.column = layout.type_columns[j];
    w.mass = x;
    if (w.column < spec.columns.size()) {
      const ProgramColumn& c = spec.columns[w.column];
      w.representative = PairType::from_id(c.representative);
      w.multiplicity = c.multiplicity;
    }
    out.push_back(w);
  }
  return out;
}

inline EndpointDiagnostics diagnostics_of(const lp::SolveOutcome& o) {
  EndpointDiagnostics d;
  d.iterations = o.iterations;
  if (o.solution) {
    d.degenerate = o.solution->is_degenerate();
    d.min_reduced_cost = o.solution->min_reduced_cost;
    d.max_residual = o.solution->max_residual;
  }
  return d;
}

}  // namespace detail

// Lower and upper value of the estimand over type distributions matching the
// observed cells (and the mass bounds).
inline IdentifiedInterval bounds(const LinearProgramSpec& spec, const ObservedDistribution& observed,
                                 const BoundsOptions& options = {}) {
  auto start = std::chrono::steady_clock::now();
  if (observed.active_blocks != spec.blocks())
    throw std::invalid_argument("observed blocks differ from the active profiles of the program");
  ProgramLayout layout = make_layout(spec, observed.cells, options.presolve);
  lp::SolverOptions so = options.solver;
  so.feasibility_tol = options.feasibility_tol.value_or(default_feasibility_tol(observed));

  IdentifiedInterval out;
  out.lp_rows = layout.row_count();
  out.lp_columns = layout.matrix.cols();
  lp::StandardLP problem = layout.lp(observed.cells, spec.mass_rows, Sense::minimize);
  lp::SolveOutcome lo = lp::solve(problem, so);
  for (double& c : problem.c) c = -c;
  lp::SolveOutcome hi = lp::solve(problem, so);

  auto failed = [](const lp::SolveOutcome& o) {
    return o.status == lp::SolveStatus::numerical_failure || o.status == lp::SolveStatus::unbounded;
  };
  if (failed(lo) || failed(hi))
    throw SolverFailure("LP solve failed: " + std::string(lp::to_string(failed(lo) ? lo.status : hi.status)) + " " +
                        (failed(lo) ? lo.message : hi.message));
  out.lower_diag = detail::diagnostics_of(lo);
  out.upper_diag = detail::diagnostics_of(hi);
  if (lo.status == lp::SolveStatus::infeasible && hi.status == lp::SolveStatus::infeasible) {
    out.status = IntervalStatus::empty;
  } else if (lo.optimal() && hi.optimal()) {
    out.status = IntervalStatus::interval;
    out.lower = lo.solution->value;
    out.upper = -hi.solution->value;
    out.lower_witness = detail::witness_of(spec, layout, *lo.solution);
    out.upper_witness = detail::witness_of(spec, layout, *hi.solution);
  } else {
    throw SolverFailure("phase 1 disagreed between the two endpoint solves");
  }
  out.solve_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

inline IdentifiedInterval bounds(const LinearProgramSpec& spec, const BoundsOptions& options = {}) {
  return bounds(spec, spec.observed, options);
}

// Exact A*mu for a type distribution (used to build feasible test data).
inline ObservedDistribution cells_of(const std::vector<PairType>& support, const std::vector<double>& masses,
                                     ProfileMask active) {
  ObservedDistribution obs;
  obs.active_blocks = active;
  for (std::size_t i = 0; i < support.size(); ++i) {
    auto within = column_of(support[i], active);
    for (int p = 0; p < kProfileCount; ++p)
      if (within[std::size_t(p)] >= 0) obs.cells[std::size_t(16 * p + within[std::size_t(p)])] += masses[i];
  }
  return obs;
}

// Equality system and mass rows as "row col value" triplets, one per nonzero.
// Rows 0..63 are cell rows (16*block + within), 64 the ones row, 65+ mass rows.
inline void write_triplets(const LinearProgramSpec& spec, std::ostream& out) {
  out.precision(17);
  const ProfileMask blocks = spec.blocks();
  for (std::size_t j = 0; j < spec.columns.size(); ++j) {
    const ProgramColumn& c = spec.columns[j];
    auto within = unpack_signature(c.key.signature, blocks);
    for (int p = 0; p < kProfileCount; ++p)
      if (within[std::size_t(p)] >= 0) out << 16 * p + within[std::size_t(p)] << ' ' << j << " 1\n";
    out << 64 << ' ' << j << " 1\n";
    for (std::size_t k = 0; k < spec.mass_rows.size(); ++k)
      if (c.key.weights[k]) out << 65 + k << ' ' << j << ' ' << int(c.key.weights[k]) << '\n';
  }
  for (std::size_t i = 0; i < spec.extra_columns.size(); ++i) {
    const std::size_t j = spec.columns.size() + i;
    const GeneralColumn& g = spec.extra_columns[i];
    for (const auto& [row, v] : g.cells) out << row << ' ' << j << ' ' << v << '\n';
    out << 64 << ' ' << j << " 1\n";
    for (std::size_t k = 0; k < g.weights.size(); ++k)
      if (g.weights[k] != 0) out << 65 + k << ' ' << j << ' ' << g.weights[k] << '\n';
  }
}

}  // namespace pairbounds
