#pragma once

#include <pairbounds/data.hpp>
#include <pairbounds/program.hpp>
#include <pairbounds/typespace.hpp>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <variant>
#include <vector>

namespace pairbounds {

// Explicit distribution over pair types plus the offer lottery.
struct TypeDgp {
  std::vector<PairType> support;
  std::vector<double> masses;
  std::array<double, kProfileCount> offer_probs{0.25, 0.25, 0.25, 0.25};

  ProfileMask offered_profiles() const {
    std::uint8_t m = 0;
    for (int p = 0; p < kProfileCount; ++p)
      if (offer_probs[std::size_t(p)] > 0) m |= std::uint8_t(1u << p);
    return ProfileMask(m);
  }
};

inline void validate_offer_probs(const std::array<double, kProfileCount>& probs) {
  double total = 0;
  for (double v : probs) {
    if (!(v >= 0) || !std::isfinite(v)) throw std::invalid_argument("offer probabilities must be nonnegative");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("offer probabilities must sum to one");
}

inline void validate(const TypeDgp& dgp) {
  if (dgp.support.empty() || dgp.support.size() != dgp.masses.size())
    throw std::invalid_argument("type distribution needs one mass per support point");
  double total = 0;
  for (double m : dgp.masses) {
    if (!(m >= 0) || !std::isfinite(m)) throw std::invalid_argument("type masses must be nonnegative");
    total += m;
  }
  if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("type masses must sum to one");
  validate_offer_probs(dgp.offer_probs);
  const ProfileMask offered = dgp.offered_profiles();
  for (const PairType& t : dgp.support)
    if (!is_admissible(t, offered)) throw std::invalid_argument("support contains a pair whose selection is not a Nash profile");
}

// ---------------------------------------------------------- structural model

// Take-up: D = 1{V <= index} with
//   index = (own offer ? offered : unoffered) + partner_offer*z' + partner_takeup*d'.
// An unoffered index of -inf gives one-sided noncompliance.
struct TakeUpEquation {
  double unoffered = -1.0;
  double offered = 0.5;
  double partner_offer = 0.0;
  double partner_takeup = 0.0;

  double index(int own_offer, int other_offer, int other_takeup) const {
    return (own_offer ? offered : unoffered) + partner_offer * other_offer + partner_takeup * other_takeup;
  }
};

// Y(d,d') = 1{V <= baseline + own_effect*d + spillover*d'}.
struct OutcomeEquation {
  double baseline = 0.0;
  double own_effect = 0.0;
  double spillover = 0.0;

  double index(int d, int d_other) const { return baseline + own_effect * d + spillover * d_other; }
};

struct MemberEquations {
  TakeUpEquation takeup;
  OutcomeEquation outcome;
  double scale = 1.0;  // V ~ N(0, scale^2)
};

enum class SelectionRule { lowest, highest, seeded_random };

// Threshold-crossing household model. Each member's latent V drives both
// take-up and outcomes, so the latent pins down a 12-bit type; (V1, V2) are
// bivariate normal with correlation rho. Member 2's equations are own-first.
struct StructuralDgp {
  std::array<MemberEquations, 2> members;
  double rho = 0.0;
  std::array<double, kProfileCount> offer_probs{0.25, 0.25, 0.25, 0.25};
  SelectionRule selection = SelectionRule::lowest;
  std::uint64_t selection_seed = 0;
};

inline void validate(const StructuralDgp& dgp) {
  for (const auto& m : dgp.members)
    if (!(m.scale > 0) || !std::isfinite(m.scale)) throw std::invalid_argument("latent scales must be positive");
  if (!(std::abs(dgp.rho) < 1)) throw std::invalid_argument("latent correlation must lie in (-1, 1)");
  // Mixed-sign interaction can leave a household with no pure equilibrium.
  if (dgp.members[0].takeup.partner_takeup * dgp.members[1].takeup.partner_takeup < 0)
    throw std::invalid_argument("partner take-up coefficients must share a sign");
  validate_offer_probs(dgp.offer_probs);
}

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Type of a member whose latent (in scale units) equals v.
inline IndividualType type_at(const MemberEquations& eq, double v) {
  IndividualType t;
  const double x = v * eq.scale;
  for (int d = 0; d < 2; ++d)
    for (int dd = 0; dd < 2; ++dd) t = t.with_potential_outcome(d, dd, x <= eq.outcome.index(d, dd) ? 1 : 0);
  for (int p = 0; p < kProfileCount; ++p)
    for (int dd = 0; dd < 2; ++dd)
      t = t.with_best_response(p, dd, x <= eq.takeup.index(p >> 1, p & 1, dd) ? 1 : 0);
  return t;
}

// Standardized thresholds at which the type changes.
inline std::vector<double> breakpoints(const MemberEquations& eq) {
  std::vector<double> out;
  auto add = [&](double t) {
    if (std::isfinite(t)) out.push_back(t / eq.scale);
  };
  for (int d = 0; d < 2; ++d)
    for (int dd = 0; dd < 2; ++dd) add(eq.outcome.index(d, dd));
  for (int p = 0; p < kProfileCount; ++p)
    for (int dd = 0; dd < 2; ++dd) add(eq.takeup.index(p >> 1, p & 1, dd));
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace detail

inline EquilibriumSelection select_equilibria(IndividualType s, IndividualType so, SelectionRule rule,
                                              std::uint64_t seed = 0) {
  EquilibriumSelection e;
  for (int p = 0; p < kProfileCount; ++p) {
    auto nash = nash_set(s, so, p).members();
    if (nash.empty()) throw std::domain_error("household has no pure-strategy equilibrium");
    std::size_t pick = 0;
    if (rule == SelectionRule::highest) pick = nash.size() - 1;
    else if (rule == SelectionRule::seeded_random)
      pick = detail::splitmix64(seed ^ detail::splitmix64((std::uint64_t(s.code()) << 20) | (std::uint64_t(so.code()) << 4) |
                                                          std::uint64_t(p))) %
             nash.size();
    e = e.with(p, nash[pick]);
  }
  return e;
}

inline PairType structural_pair(const StructuralDgp& dgp, double v1, double v2) {
  IndividualType s = detail::type_at(dgp.members[0], v1);
  IndividualType so = detail::type_at(dgp.members[1], v2);
  return {s, so, select_equilibria(s, so, dgp.selection, dgp.selection_seed)};
}

// Exact type distribution of a structural model: the type is constant on
// each cell of the breakpoint grid, and cell probabilities are bivariate
// normal rectangles integrated with Gauss-Kronrod quadrature.
inline TypeDgp to_type_dgp(const StructuralDgp& dgp) {
  validate(dgp);
  constexpr double inf = std::numeric_limits<double>::infinity();
  const double rho = dgp.rho, sd = std::sqrt(1 - rho * rho);
  boost::math::normal_distribution<double> normal;

  struct Interval {
    double lo, hi, rep;
  };
  auto intervals = [&](const MemberEquations& eq) {
    auto cuts = detail::breakpoints(eq);
    std::vector<Interval> out;
    double lo = -inf;
    for (double c : cuts) {
      out.push_back({lo, c, c});
      lo = c;
    }
    out.push_back({lo, inf, std::isfinite(lo) ? lo + 1.0 : 0.0});
    return out;
  };
  auto cdf = [&](double x) {
    if (x == inf) return 1.0;
    if (x == -inf) return 0.0;
    return boost::math::cdf(normal, x);
  };

  const auto first = intervals(dgp.members[0]);
  const auto second = intervals(dgp.members[1]);
  std::map<std::uint32_t, double> mass;
  for (const Interval& a : first) {
    IndividualType s = detail::type_at(dgp.members[0], a.rep);
    for (const Interval& b : second) {
      double prob;
      if (rho == 0) {
        prob = (cdf(a.hi) - cdf(a.lo)) * (cdf(b.hi) - cdf(b.lo));
      } else {
        auto f = [&](double x) {
          double dens = std::exp(-0.5 * x * x) / std::sqrt(2 * M_PI);
          double hi = b.hi == inf ? 1.0 : cdf((b.hi - rho * x) / sd);
          double lo = b.lo == -inf ? 0.0 : cdf((b.lo - rho * x) / sd);
          return dens * (hi - lo);
        };
        prob = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, a.lo, a.hi, 15, 1e-13);
      }
      if (prob <= 0) continue;
      IndividualType so = detail::type_at(dgp.members[1], b.rep);
      mass[PairType{s, so, select_equilibria(s, so, dgp.selection, dgp.selection_seed)}.id()] += prob;
    }
  }
  TypeDgp out;
  out.offer_probs = dgp.offer_probs;
  double total = 0;
  for (const auto& [t, m] : mass) total += m;
  for (const auto& [t, m] : mass) {
    out.support.push_back(PairType::from_id(t));
    out.masses.push_back(m / total);
  }
  return out;
}

using Dgp = std::variant<TypeDgp, StructuralDgp>;

// ------------------------------------------------------------------ sampling

namespace detail {

inline constexpr std::size_t kSampleChunk = 8192;

inline HouseholdRecord realize(const PairType& t, int profile, std::size_t index) {
  TakeUp d = t.e.chosen(profile);
  HouseholdRecord r;
  r.household_id = "h" + std::to_string(index + 1);
  r.z1 = profile >> 1;
  r.z2 = profile & 1;
  r.d1 = d.d;
  r.d2 = d.d_other;
  r.y1 = t.s.potential_outcome(d.d, d.d_other);
  r.y2 = t.s_other.potential_outcome(d.d_other, d.d);
  return r;
}

// Chunk c of the sample uses its own generator seeded by (seed, c), so the
// dataset does not depend on how chunks are scheduled.
template <class Draw>
std::vector<HouseholdRecord> sample_chunks(std::size_t n, std::uint64_t seed, unsigned threads, Draw draw) {
  std::vector<HouseholdRecord> out(n);
  const std::size_t chunks = (n + kSampleChunk - 1) / kSampleChunk;
  auto run = [&](std::size_t first_chunk, std::size_t stride) {
    for (std::size_t c = first_chunk; c < chunks; c += stride) {
      std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32), std::uint32_t(c), std::uint32_t(c >> 32)};
      std::mt19937_64 rng(seq);
      const std::size_t end = std::min(n, (c + 1) * kSampleChunk);
      for (std::size_t i = c * kSampleChunk; i < end; ++i) out[i] = draw(rng, i);
    }
  };
  unsigned workers = std::max(1u, std::min<unsigned>(threads ? threads : std::thread::hardware_concurrency(), unsigned(chunks)));
  if (workers <= 1) {
    run(0, 1);
    return out;
  }
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w) pool.emplace_back(run, w, workers);
  for (auto& t : pool) t.join();
  return out;
}

}  // namespace detail

inline std::vector<HouseholdRecord> sample_dataset(const TypeDgp& dgp, std::size_t n, std::uint64_t seed,
                                                   unsigned threads = 1) {
  if (n < 1) throw std::invalid_argument("sample size must be at least 1");
  validate(dgp);
  return detail::sample_chunks(n, seed, threads, [&](std::mt19937_64& rng, std::size_t i) {
    std::discrete_distribution<std::size_t> types(dgp.masses.begin(), dgp.masses.end());
    std::discrete_distribution<int> offers(dgp.offer_probs.begin(), dgp.offer_probs.end());
    const PairType& t = dgp.support[types(rng)];
    return detail::realize(t, offers(rng), i);
  });
}

inline std::vector<HouseholdRecord> sample_dataset(const StructuralDgp& dgp, std::size_t n, std::uint64_t seed,
                                                   unsigned threads = 1) {
  if (n < 1) throw std::invalid_argument("sample size must be at least 1");
  validate(dgp);
  const double sd = std::sqrt(1 - dgp.rho * dgp.rho);
  return detail::sample_chunks(n, seed, threads, [&](std::mt19937_64& rng, std::size_t i) {
    std::normal_distribution<double> z;
    std::discrete_distribution<int> offers(dgp.offer_probs.begin(), dgp.offer_probs.end());
    double v1 = z(rng);
    double v2 = dgp.rho * v1 + sd * z(rng);
    return detail::realize(structural_pair(dgp, v1, v2), offers(rng), i);
  });
}

inline std::vector<HouseholdRecord> sample_dataset(const Dgp& dgp, std::size_t n, std::uint64_t seed, unsigned threads = 1) {
  return std::visit([&](const auto& d) { return sample_dataset(d, n, seed, threads); }, dgp);
}

// ----------------------------------------------------------- population side

inline ObservedDistribution population_cells(const TypeDgp& dgp) {
  validate(dgp);
  return cells_of(dgp.support, dgp.masses, dgp.offered_profiles());
}

inline ObservedDistribution population_cells(const StructuralDgp& dgp) { return population_cells(to_type_dgp(dgp)); }

inline ObservedDistribution population_cells(const Dgp& dgp) {
  return std::visit([](const auto& d) { return population_cells(d); }, dgp);
}

inline double true_estimand(const TypeDgp& dgp, const Estimand& est) {
  double v = 0;
  for (std::size_t i = 0; i < dgp.support.size(); ++i) v += dgp.masses[i] * objective(dgp.support[i], est);
  return v;
}

inline double true_estimand(const StructuralDgp& dgp, const Estimand& est) { return true_estimand(to_type_dgp(dgp), est); }

inline double true_estimand(const Dgp& dgp, const Estimand& est) {
  return std::visit([&](const auto& d) { return true_estimand(d, est); }, dgp);
}

// ---------------------------------------------------------- random designs

// Uniform draw over member types, rejecting pairs without an equilibrium on
// a varied profile; the selection picks a uniform Nash profile on each
// active profile.
template <class Rng>
PairType random_pair_type(Rng& rng, const TypeSpaceConfig& config, const std::vector<PairFilter>& filters = {}) {
  const auto first = individual_types(config, 1);
  const auto second = individual_types(config, 2);
  auto accepted = [&](IndividualType s, IndividualType so) {
    for (const auto& f : filters) {
      if (f.member1 && !f.member1(s)) return false;
      if (f.member2 && !f.member2(so)) return false;
      if (f.pair && !f.pair(s, so)) return false;
    }
    return true;
  };
  for (int attempt = 0; attempt < 1000000; ++attempt) {
    IndividualType s = first[std::uniform_int_distribution<std::size_t>(0, first.size() - 1)(rng)];
    IndividualType so = second[std::uniform_int_distribution<std::size_t>(0, second.size() - 1)(rng)];
    if (!accepted(s, so)) continue;
    EquilibriumSelection e;
    bool ok = true;
    for (int p = 0; p < kProfileCount && ok; ++p) {
      if (!config.varied_profiles().contains(p)) continue;
      auto nash = nash_set(s, so, p).members();
      if (nash.empty()) ok = false;
      else if (config.active_profiles.contains(p))
        e = e.with(p, nash[std::uniform_int_distribution<std::size_t>(0, nash.size() - 1)(rng)]);
    }
    if (ok) return {s, so, e};
  }
  throw EmptyTypeSpace();
}

template <class Rng>
std::vector<double> dirichlet(Rng& rng, std::size_t k, double concentration = 1.0) {
  std::gamma_distribution<double> g(concentration);
  std::vector<double> w(k);
  double total = 0;
  for (double& v : w) total += (v = g(rng));
  for (double& v : w) v /= total;
  return w;
}

// Random k-point type distribution on a type space, offers uniform over its
// active profiles.
template <class Rng>
TypeDgp random_type_dgp(Rng& rng, const TypeSpaceConfig& config, std::size_t k,
                        const std::vector<PairFilter>& filters = {}) {
  TypeDgp dgp;
  for (std::size_t i = 0; i < k; ++i) dgp.support.push_back(random_pair_type(rng, config, filters));
  dgp.masses = dirichlet(rng, k);
  const double share = 1.0 / config.active_profiles.count();
  for (int p = 0; p < kProfileCount; ++p) dgp.offer_probs[std::size_t(p)] = config.active_profiles.contains(p) ? share : 0.0;
  return dgp;
}

// ------------------------------------------------------------------ presets

// Everyone takes up exactly when offered; outcomes vary across k pair types.
inline TypeDgp full_compliance_dgp(std::uint64_t seed = 1, std::size_t k = 6) {
  std::mt19937_64 rng(seed);
  IndividualType complier;
  for (int p = 0; p < kProfileCount; ++p) complier = complier.with_response(p, {p >> 1, p >> 1});
  TypeDgp dgp;
  for (std::size_t i = 0; i < k; ++i) {
    IndividualType s = IndividualType::from_parts(unsigned(rng() & 0xF), complier.brf_bits());
    IndividualType so = IndividualType::from_parts(unsigned(rng() & 0xF), complier.brf_bits());
    dgp.support.push_back({s, so, select_equilibria(s, so, SelectionRule::lowest)});
  }
  dgp.masses = dirichlet(rng, k);
  return dgp;
}

// One-sided noncompliance for both members with full-support masses over all
// 4096 such pairs. Small enough for repeated bootstrap solves.
inline TypeSpaceConfig benchmark_config() {
  TypeSpaceConfig config;
  config.class_filter = ClassFilter::dominant_only;
  return config;
}

inline std::vector<Restriction> benchmark_restrictions() { return {{RestrictionKind::one_sided_nc}}; }

inline TypeDgp benchmark_dgp(std::uint64_t seed = 20240501) {
  std::mt19937_64 rng(seed);
  TypeDgp dgp;
  for (unsigned po1 = 0; po1 < 16; ++po1)
    for (unsigned r1 = 0; r1 < 4; ++r1)
      for (unsigned po2 = 0; po2 < 16; ++po2)
        for (unsigned r2 = 0; r2 < 4; ++r2) {
          // r: take-up when offered alone / when both are offered; never without an offer.
          IndividualType s = IndividualType::from_parts(po1, 0).with_response(2, {int(r1 & 1), int(r1 & 1)}).with_response(
              3, {int(r1 >> 1), int(r1 >> 1)});
          IndividualType so = IndividualType::from_parts(po2, 0).with_response(2, {int(r2 & 1), int(r2 & 1)}).with_response(
              3, {int(r2 >> 1), int(r2 >> 1)});
          dgp.support.push_back({s, so, select_equilibria(s, so, SelectionRule::lowest)});
        }
  dgp.masses = dirichlet(rng, dgp.support.size(), 2.0);
  return dgp;
}

// Member 2's take-up falls slightly when member 1 is also offered
// (0.65 alone vs 0.64 jointly), violating the four-way take-up ordering on
// about 1% of households. Member 1 rises from 0.69 to 0.70. Nobody takes up
// without an own offer.
inline StructuralDgp vb_violation_dgp() {
  boost::math::normal_distribution<double> normal;
  auto q = [&](double p) { return boost::math::quantile(normal, p); };
  constexpr double never = -std::numeric_limits<double>::infinity();
  StructuralDgp dgp;
  dgp.members[0].takeup = {never, q(0.69), q(0.70) - q(0.69), 0.0};
  dgp.members[1].takeup = {never, q(0.65), q(0.64) - q(0.65), 0.0};
  dgp.members[0].outcome = {-0.9, 0.4, 0.2};
  dgp.members[1].outcome = {-0.65, 0.2, 0.1};
  dgp.rho = 0.3;
  return dgp;
}

inline std::vector<std::string> preset_names() { return {"benchmark", "full_compliance", "vb_violation"}; }

inline Dgp preset(const std::string& name, std::uint64_t seed = 1) {
  if (name == "benchmark") return benchmark_dgp();
  if (name == "full_compliance") return full_compliance_dgp(seed);
  if (name == "vb_violation") return vb_violation_dgp();
  throw std::invalid_argument("unknown DGP preset '" + name + "'");
}

}  // namespace pairbounds
