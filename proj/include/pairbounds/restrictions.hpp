#pragma once

#include <pairbounds/typespace.hpp>

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdio>
#include <functional>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace pairbounds {

enum class RestrictionKind {
  dominance,
  symmetry,
  supermodular,
  submodular,
  monotone_ia,
  vb_monotone,
  eps_vb_monotone,
  ior,
  one_sided_nc,
  strategic_substitutes,
  strategic_complements,
  eps_strategic_neutrality,
  monotone_treatment_response,
  eps_outcome_assort,
  eps_treatment_assort,
  // Parsed so configs can name them, rejected by compile().
  monotone_treatment_selection,
  stochastic_dominance,
};

enum class Scope { member1, member2, both };

struct Restriction {
  RestrictionKind kind = RestrictionKind::dominance;
  Scope scope = Scope::both;
  double eps = 0;
};

class UnsupportedNonlinear : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline constexpr std::array<std::pair<RestrictionKind, std::string_view>, 17> kRestrictionNames{{
    {RestrictionKind::dominance, "dominance"},
    {RestrictionKind::symmetry, "symmetry"},
    {RestrictionKind::supermodular, "supermodular"},
    {RestrictionKind::submodular, "submodular"},
    {RestrictionKind::monotone_ia, "monotone_ia"},
    {RestrictionKind::vb_monotone, "vb_monotone"},
    {RestrictionKind::eps_vb_monotone, "eps_vb_monotone"},
    {RestrictionKind::ior, "ior"},
    {RestrictionKind::one_sided_nc, "one_sided_nc"},
    {RestrictionKind::strategic_substitutes, "strategic_substitutes"},
    {RestrictionKind::strategic_complements, "strategic_complements"},
    {RestrictionKind::eps_strategic_neutrality, "eps_strategic_neutrality"},
    {RestrictionKind::monotone_treatment_response, "monotone_treatment_response"},
    {RestrictionKind::eps_outcome_assort, "eps_outcome_assort"},
    {RestrictionKind::eps_treatment_assort, "eps_treatment_assort"},
    {RestrictionKind::monotone_treatment_selection, "monotone_treatment_selection"},
    {RestrictionKind::stochastic_dominance, "stochastic_dominance"},
}};

inline std::string_view kind_name(RestrictionKind k) {
  for (const auto& [kind, name] : kRestrictionNames)
    if (kind == k) return name;
  return "unknown";
}

inline std::optional<RestrictionKind> parse_kind(std::string_view name) {
  for (const auto& [kind, n] : kRestrictionNames)
    if (n == name) return kind;
  return std::nullopt;
}

inline std::string_view scope_name(Scope s) {
  switch (s) {
    case Scope::member1: return "member1";
    case Scope::member2: return "member2";
    case Scope::both: return "both";
  }
  return "both";
}

inline std::optional<Scope> parse_scope(std::string_view s) {
  if (s == "member1") return Scope::member1;
  if (s == "member2") return Scope::member2;
  if (s == "both") return Scope::both;
  return std::nullopt;
}

constexpr bool is_eps_kind(RestrictionKind k) {
  return k == RestrictionKind::eps_vb_monotone || k == RestrictionKind::eps_strategic_neutrality ||
         k == RestrictionKind::eps_outcome_assort || k == RestrictionKind::eps_treatment_assort;
}

inline void validate(const Restriction& r) {
  if (!(r.eps >= 0.0 && r.eps <= 1.0)) throw std::invalid_argument("restriction eps must lie in [0, 1]");
}

// Parses "kind[:eps][:scope]", e.g. "eps_vb_monotone:0.02:member2".
inline Restriction parse_restriction(std::string_view text) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    std::size_t colon = text.find(':', start);
    parts.push_back(text.substr(start, colon == std::string_view::npos ? std::string_view::npos : colon - start));
    if (colon == std::string_view::npos) break;
    start = colon + 1;
  }
  Restriction r;
  auto kind = parse_kind(parts[0]);
  if (!kind) throw std::invalid_argument("unknown restriction kind '" + std::string(parts[0]) + "'");
  r.kind = *kind;
  if (parts.size() > 3) throw std::invalid_argument("restriction '" + std::string(text) + "' has too many fields");
  bool have_eps = false, have_scope = false;
  for (std::size_t i = 1; i < parts.size(); ++i) {
    if (auto s = parse_scope(parts[i]); s && !have_scope) {
      r.scope = *s;
      have_scope = true;
      continue;
    }
    double v = 0;
    auto res = std::from_chars(parts[i].data(), parts[i].data() + parts[i].size(), v);
    if (res.ec != std::errc() || res.ptr != parts[i].data() + parts[i].size() || have_eps)
      throw std::invalid_argument("cannot read field '" + std::string(parts[i]) + "' of restriction '" +
                                  std::string(text) + "'");
    r.eps = v;
    have_eps = true;
  }
  if (have_eps && !is_eps_kind(r.kind))
    throw std::invalid_argument("restriction '" + std::string(parts[0]) + "' takes no eps");
  validate(r);
  return r;
}

inline std::string to_string(const Restriction& r) {
  std::string out(kind_name(r.kind));
  if (is_eps_kind(r.kind)) {
    char buf[32];
    std::snprintf(buf, sizeof buf, ":%.17g", r.eps);
    out += buf;
  }
  out += ':';
  out += scope_name(r.scope);
  return out;
}

// Zero-mass exclusion of pair types.
struct HardFilter {
  RestrictionKind kind;
  std::string canonical;
  PairFilter filter;
};

// sum_t mu_t * weight(t) <= bound, weight a nonnegative violation count.
struct MassBound {
  RestrictionKind kind;
  std::string canonical;
  std::function<int(IndividualType, IndividualType)> weight;
  double bound = 0;
};

using CompiledConstraint = std::variant<HardFilter, MassBound>;

inline const std::string& serialize(const CompiledConstraint& c) {
  return std::visit([](const auto& v) -> const std::string& { return v.canonical; }, c);
}

namespace restriction_rules {

inline bool dominant(IndividualType t, ProfileMask profiles) {
  for (int p = 0; p < kProfileCount; ++p)
    if (profiles.contains(p) && classify(t, p) != ResponseClass::dominant) return false;
  return true;
}

inline bool no_class(IndividualType t, ProfileMask profiles, ResponseClass forbidden) {
  for (int p = 0; p < kProfileCount; ++p)
    if (profiles.contains(p) && classify(t, p) == forbidden) return false;
  return true;
}

inline int non_dominant_count(IndividualType t, ProfileMask profiles) {
  int n = 0;
  for (int p = 0; p < kProfileCount; ++p)
    if (profiles.contains(p) && classify(t, p) != ResponseClass::dominant) ++n;
  return n;
}

// D(0,z',d') <= D(1,z',d') for each partner offer z'.
inline bool monotone_ia(IndividualType t, ProfileMask profiles) {
  for (int zo = 0; zo < 2; ++zo) {
    int low = zo, high = 2 + zo;
    if (!profiles.contains(low) || !profiles.contains(high)) continue;
    for (int dd = 0; dd < 2; ++dd)
      if (t.best_response(low, dd) > t.best_response(high, dd)) return false;
  }
  return true;
}

// D(0,0,d') <= D(0,1,d') <= D(1,0,d') <= D(1,1,d') over the varied profiles.
inline bool vb_monotone(IndividualType t, ProfileMask profiles) {
  for (int dd = 0; dd < 2; ++dd) {
    int prev = -1;
    for (int p = 0; p < kProfileCount; ++p) {
      if (!profiles.contains(p)) continue;
      int v = t.best_response(p, dd);
      if (v < prev) return false;
      prev = v;
    }
  }
  return true;
}

// Take-up depends on the own offer only.
inline bool ior(IndividualType t, ProfileMask profiles) {
  for (int p = 0; p < kProfileCount; ++p)
    if (profiles.contains(p) && t.best_response(p, 0) != t.best_response(p, 1)) return false;
  for (int z = 0; z < 2; ++z) {
    int a = 2 * z, b = 2 * z + 1;
    if (profiles.contains(a) && profiles.contains(b) && t.raw_response(a) != t.raw_response(b)) return false;
  }
  return true;
}

inline bool one_sided_nc(IndividualType t, ProfileMask profiles) {
  for (int p = 0; p < kProfileCount; ++p) {
    if (!profiles.contains(p)) continue;
    if (t.best_response(p, 0) != t.best_response(p, 1)) return false;
    if (p < 2 && t.best_response(p, 0) != 0) return false;
  }
  return true;
}

inline bool monotone_treatment_response(IndividualType t) {
  int y00 = t.potential_outcome(0, 0), y01 = t.potential_outcome(0, 1);
  int y10 = t.potential_outcome(1, 0), y11 = t.potential_outcome(1, 1);
  return y00 <= y10 && y00 <= y01 && y10 <= y11 && y01 <= y11;
}

}  // namespace restriction_rules

namespace detail {

inline std::string canonical_name(const Restriction& r, const TypeSpaceConfig& config, bool hard) {
  std::ostringstream os;
  os << (hard ? "hard:" : "mass:") << to_string(r) << ":profiles=" << int(config.varied_profiles().bits());
  return os.str();
}

}  // namespace detail

// Compiles a restriction for a type space. Member predicates are evaluated on
// each member's own-first varied profiles. An eps-kind with eps = 0 compiles to
// the hard filter "violation count is zero".
inline CompiledConstraint compile(const Restriction& r, const TypeSpaceConfig& config = {}) {
  namespace rr = restriction_rules;
  validate(r);
  if (r.kind == RestrictionKind::monotone_treatment_selection || r.kind == RestrictionKind::stochastic_dominance)
    throw UnsupportedNonlinear("restriction '" + std::string(kind_name(r.kind)) +
                               "' is nonlinear in the type distribution and cannot be imposed in a linear program");

  const ProfileMask p1 = config.member_profiles(1);
  const ProfileMask p2 = config.member_profiles(2);
  const bool on1 = r.scope != Scope::member2;
  const bool on2 = r.scope != Scope::member1;

  auto member_filter = [&](std::function<bool(IndividualType, ProfileMask)> rule) -> CompiledConstraint {
    HardFilter h{r.kind, detail::canonical_name(r, config, true), {}};
    h.filter.name = std::string(kind_name(r.kind));
    if (on1) h.filter.member1 = [rule, p1](IndividualType t) { return rule(t, p1); };
    if (on2) h.filter.member2 = [rule, p2](IndividualType t) { return rule(t, p2); };
    return h;
  };

  // Pair weight for eps-kinds; member-level counts are summed over the scope.
  std::function<int(IndividualType, IndividualType)> weight;
  switch (r.kind) {
    case RestrictionKind::dominance:
      return member_filter(rr::dominant);
    case RestrictionKind::supermodular:
    case RestrictionKind::strategic_complements:
      return member_filter([](IndividualType t, ProfileMask p) {
        return rr::no_class(t, p, ResponseClass::strictly_submodular);
      });
    case RestrictionKind::submodular:
    case RestrictionKind::strategic_substitutes:
      return member_filter([](IndividualType t, ProfileMask p) {
        return rr::no_class(t, p, ResponseClass::strictly_supermodular);
      });
    case RestrictionKind::monotone_ia:
      return member_filter(rr::monotone_ia);
    case RestrictionKind::vb_monotone:
      return member_filter(rr::vb_monotone);
    case RestrictionKind::ior:
      return member_filter(rr::ior);
    case RestrictionKind::one_sided_nc:
      return member_filter(rr::one_sided_nc);
    case RestrictionKind::monotone_treatment_response:
      return member_filter([](IndividualType t, ProfileMask) { return rr::monotone_treatment_response(t); });
    case RestrictionKind::symmetry: {
      HardFilter h{r.kind, detail::canonical_name(r, config, true), {}};
      h.filter.name = "symmetry";
      ProfileMask varied = config.varied_profiles();
      h.filter.pair = [varied](IndividualType s, IndividualType so) { return is_symmetric(s, so, varied); };
      return h;
    }
    case RestrictionKind::eps_vb_monotone:
      weight = [on1, on2, p1, p2](IndividualType s, IndividualType so) {
        bool bad = (on1 && !rr::vb_monotone(s, p1)) || (on2 && !rr::vb_monotone(so, p2));
        return bad ? 1 : 0;
      };
      break;
    case RestrictionKind::eps_strategic_neutrality:
      weight = [on1, on2, p1, p2](IndividualType s, IndividualType so) {
        return (on1 ? rr::non_dominant_count(s, p1) : 0) + (on2 ? rr::non_dominant_count(so, p2) : 0);
      };
      break;
    case RestrictionKind::eps_outcome_assort:
      weight = [](IndividualType s, IndividualType so) { return std::popcount(s.po_bits() ^ so.po_bits()); };
      break;
    case RestrictionKind::eps_treatment_assort: {
      // Compared where both members' responses vary; elsewhere the bits are pinned.
      unsigned mask = 0;
      for (int p = 0; p < kProfileCount; ++p)
        if (p1.contains(p) && p2.contains(p)) mask |= 3u << (2 * p);
      weight = [mask](IndividualType s, IndividualType so) {
        return std::popcount((s.brf_bits() ^ so.brf_bits()) & mask);
      };
      break;
    }
    default:
      throw std::invalid_argument("unhandled restriction kind");
  }

  if (r.eps == 0.0) {
    HardFilter h{r.kind, detail::canonical_name(r, config, true), {}};
    h.filter.name = std::string(kind_name(r.kind));
    h.filter.pair = [weight](IndividualType s, IndividualType so) { return weight(s, so) == 0; };
    return h;
  }
  return MassBound{r.kind, detail::canonical_name(r, config, false), weight, r.eps};
}

struct CompiledSet {
  std::vector<HardFilter> filters;
  std::vector<MassBound> bounds;

  std::vector<PairFilter> pair_filters() const {
    std::vector<PairFilter> out;
    for (const HardFilter& h : filters) out.push_back(h.filter);
    return out;
  }
  std::vector<std::string> canonical() const {
    std::vector<std::string> out;
    for (const HardFilter& h : filters) out.push_back(h.canonical);
    for (const MassBound& m : bounds) out.push_back(m.canonical);
    return out;
  }
};

inline CompiledSet compile_all(const std::vector<Restriction>& restrictions, const TypeSpaceConfig& config = {}) {
  CompiledSet set;
  for (const Restriction& r : restrictions) {
    CompiledConstraint c = compile(r, config);
    if (auto* h = std::get_if<HardFilter>(&c)) set.filters.push_back(std::move(*h));
    else set.bounds.push_back(std::get<MassBound>(std::move(c)));
  }
  return set;
}

// Dominance (or zero-tolerance neutrality) together with symmetry leaves only
// games without asymmetric take-up equilibria, so data with any (0,1) or (1,0)
// take-up mass falsify the combination.
inline std::vector<std::string> falsifiable_combination_check(const CompiledSet& set) {
  bool dominance = false, symmetry = false;
  for (const HardFilter& h : set.filters) {
    if (h.kind == RestrictionKind::dominance || h.kind == RestrictionKind::eps_strategic_neutrality) dominance = true;
    if (h.kind == RestrictionKind::symmetry) symmetry = true;
  }
  if (dominance && symmetry)
    return {"dominance and symmetry are jointly imposed: the identified set is empty whenever asymmetric "
            "take-up (d,d') in {(0,1),(1,0)} has positive observed mass"};
  return {};
}

}  // namespace pairbounds
