#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace pairbounds {

// Offers (z, z_other) of one household. Index 2z + z_other gives the
// canonical order (0,0), (0,1), (1,0), (1,1).
struct InstrumentProfile {
  int z = 0;
  int z_other = 0;

  constexpr int index() const { return 2 * z + z_other; }
  constexpr InstrumentProfile mirrored() const { return {z_other, z}; }
  static constexpr InstrumentProfile from_index(int i) { return {i >> 1, i & 1}; }
  friend constexpr bool operator==(InstrumentProfile, InstrumentProfile) = default;
};

inline constexpr int kProfileCount = 4;

constexpr int mirror_index(int profile) { return ((profile & 1) << 1) | (profile >> 1); }

// Take-up profile (d, d_other); index 2d + d_other.
struct TakeUp {
  int d = 0;
  int d_other = 0;

  constexpr int index() const { return 2 * d + d_other; }
  constexpr TakeUp swapped() const { return {d_other, d}; }
  static constexpr TakeUp from_index(int i) { return {i >> 1, i & 1}; }
  friend constexpr bool operator==(TakeUp, TakeUp) = default;
};

// Subset of the four instrument profiles, bit i = profile index i.
class ProfileMask {
 public:
  constexpr ProfileMask() = default;
  constexpr explicit ProfileMask(std::uint8_t bits) : bits_(bits & 0xF) {}

  static constexpr ProfileMask all() { return ProfileMask(0xF); }
  static constexpr ProfileMask none() { return ProfileMask(0); }
  static constexpr ProfileMask only(int profile) { return ProfileMask(std::uint8_t(1u << profile)); }

  constexpr bool contains(int profile) const { return (bits_ >> profile) & 1u; }
  constexpr int count() const { return std::popcount(bits_); }
  constexpr bool empty() const { return bits_ == 0; }
  constexpr std::uint8_t bits() const { return bits_; }

  constexpr ProfileMask mirrored() const {
    std::uint8_t out = 0;
    for (int p = 0; p < kProfileCount; ++p)
      if (contains(p)) out |= std::uint8_t(1u << mirror_index(p));
    return ProfileMask(out);
  }
  constexpr ProfileMask operator|(ProfileMask o) const { return ProfileMask(bits_ | o.bits_); }
  constexpr ProfileMask with(int profile) const { return ProfileMask(bits_ | std::uint8_t(1u << profile)); }
  friend constexpr bool operator==(ProfileMask, ProfileMask) = default;

 private:
  std::uint8_t bits_ = 0;
};

// Take-up responses at one profile: (D(., ., 0), D(., ., 1)).
// index() = 2*when_partner_out + when_partner_in matches the row order
// (0,0), (0,1), (1,0), (1,1) used for the equilibrium taxonomy.
struct ResponseVector {
  int when_partner_out = 0;
  int when_partner_in = 0;

  constexpr int index() const { return 2 * when_partner_out + when_partner_in; }
  static constexpr ResponseVector from_index(int i) { return {i >> 1, i & 1}; }
  friend constexpr bool operator==(ResponseVector, ResponseVector) = default;
};

enum class ResponseClass { dominant, strictly_supermodular, strictly_submodular };

constexpr ResponseClass classify(ResponseVector r) {
  if (r.when_partner_out == r.when_partner_in) return ResponseClass::dominant;
  return r.when_partner_in > r.when_partner_out ? ResponseClass::strictly_supermodular
                                                : ResponseClass::strictly_submodular;
}

// Latent type of one household member: 4 potential-outcome bits then 8
// best-response bits. Arguments are always own-first.
class IndividualType {
 public:
  static constexpr int kBits = 12;
  static constexpr int kCount = 1 << kBits;

  constexpr IndividualType() = default;
  constexpr explicit IndividualType(std::uint16_t code) : code_(code) {
    if (code >= kCount) throw std::out_of_range("individual type code must be below 4096");
  }
  static constexpr IndividualType from_parts(unsigned po_bits, unsigned brf_bits) {
    return IndividualType(std::uint16_t((po_bits & 0xF) | ((brf_bits & 0xFF) << 4)));
  }

  constexpr std::uint16_t code() const { return code_; }
  constexpr unsigned po_bits() const { return code_ & 0xF; }
  constexpr unsigned brf_bits() const { return code_ >> 4; }

  static constexpr int po_position(int d, int d_other) { return 2 * d + d_other; }
  static constexpr int brf_position(int profile, int d_other) { return 4 + 2 * profile + d_other; }

  constexpr int potential_outcome(int d, int d_other) const { return bit(po_position(d, d_other)); }
  constexpr int best_response(int profile, int d_other) const {
    return bit(brf_position(profile, d_other));
  }
  constexpr int best_response(InstrumentProfile p, int d_other) const {
    return best_response(p.index(), d_other);
  }
  // The two brf bits of a profile as stored: D(.,0) | D(.,1) << 1.
  constexpr unsigned raw_response(int profile) const { return (code_ >> (4 + 2 * profile)) & 3u; }
  constexpr ResponseVector response(int profile) const {
    return {best_response(profile, 0), best_response(profile, 1)};
  }

  constexpr IndividualType with_potential_outcome(int d, int d_other, int value) const {
    return with_bit(po_position(d, d_other), value);
  }
  constexpr IndividualType with_best_response(int profile, int d_other, int value) const {
    return with_bit(brf_position(profile, d_other), value);
  }
  constexpr IndividualType with_response(int profile, ResponseVector r) const {
    return with_best_response(profile, 0, r.when_partner_out)
        .with_best_response(profile, 1, r.when_partner_in);
  }

  friend constexpr bool operator==(IndividualType, IndividualType) = default;
  friend constexpr auto operator<=>(IndividualType, IndividualType) = default;

 private:
  constexpr int bit(int pos) const { return (code_ >> pos) & 1; }
  constexpr IndividualType with_bit(int pos, int value) const {
    std::uint16_t c = code_ & std::uint16_t(~(1u << pos));
    return IndividualType(std::uint16_t(c | (value ? (1u << pos) : 0u)));
  }

  std::uint16_t code_ = 0;
};

constexpr int best_response(IndividualType s, InstrumentProfile profile, int d_other) {
  return s.best_response(profile, d_other);
}
constexpr int potential_outcome(IndividualType s, int d, int d_other) {
  return s.potential_outcome(d, d_other);
}
constexpr ResponseClass classify(IndividualType s, int profile) { return classify(s.response(profile)); }

// Set of pure-strategy take-up equilibria of one game; bit i = TakeUp index i.
class NashSet {
 public:
  constexpr NashSet() = default;
  constexpr explicit NashSet(std::uint8_t mask) : mask_(mask & 0xF) {}

  constexpr bool contains(TakeUp t) const { return (mask_ >> t.index()) & 1u; }
  constexpr int size() const { return std::popcount(mask_); }
  constexpr bool empty() const { return mask_ == 0; }
  constexpr std::uint8_t mask() const { return mask_; }
  std::vector<TakeUp> members() const {
    std::vector<TakeUp> out;
    for (int i = 0; i < 4; ++i)
      if ((mask_ >> i) & 1u) out.push_back(TakeUp::from_index(i));
    return out;
  }
  friend constexpr bool operator==(NashSet, NashSet) = default;

 private:
  std::uint8_t mask_ = 0;
};

namespace detail {

// Nash mask from the stored response bits of member 1 at profile p and
// member 2 at mirror(p); index = raw1 | raw2 << 2.
constexpr std::array<std::uint8_t, 16> make_nash_table() {
  std::array<std::uint8_t, 16> table{};
  for (unsigned raw1 = 0; raw1 < 4; ++raw1)
    for (unsigned raw2 = 0; raw2 < 4; ++raw2) {
      std::uint8_t mask = 0;
      for (int d = 0; d < 2; ++d)
        for (int dd = 0; dd < 2; ++dd) {
          int br1 = (raw1 >> dd) & 1;  // D_s(z,z',d')
          int br2 = (raw2 >> d) & 1;   // D_s'(z',z,d)
          if (br1 == d && br2 == dd) mask |= std::uint8_t(1u << (2 * d + dd));
        }
      table[raw1 | (raw2 << 2)] = mask;
    }
  return table;
}

inline constexpr std::array<std::uint8_t, 16> kNashTable = make_nash_table();

}  // namespace detail

constexpr NashSet nash_set(IndividualType s, IndividualType s_other, int profile) {
  unsigned raw1 = s.raw_response(profile);
  unsigned raw2 = s_other.raw_response(mirror_index(profile));
  return NashSet(detail::kNashTable[raw1 | (raw2 << 2)]);
}
constexpr NashSet nash_set(IndividualType s, IndividualType s_other, InstrumentProfile p) {
  return nash_set(s, s_other, p.index());
}

// Best-response symmetry at a profile: delta_s(z,z') == delta_s'(z',z).
constexpr bool is_symmetric(IndividualType s, IndividualType s_other, int profile) {
  return s.raw_response(profile) == s_other.raw_response(mirror_index(profile));
}
constexpr bool is_symmetric(IndividualType s, IndividualType s_other, ProfileMask profiles) {
  for (int p = 0; p < kProfileCount; ++p)
    if (profiles.contains(p) && !is_symmetric(s, s_other, p)) return false;
  return true;
}

// One deterministic take-up profile per game; 2 bits per instrument profile.
class EquilibriumSelection {
 public:
  constexpr EquilibriumSelection() = default;
  constexpr explicit EquilibriumSelection(std::uint8_t code) : code_(code) {}

  constexpr TakeUp chosen(int profile) const { return TakeUp::from_index((code_ >> (2 * profile)) & 3); }
  constexpr TakeUp chosen(InstrumentProfile p) const { return chosen(p.index()); }
  constexpr EquilibriumSelection with(int profile, TakeUp t) const {
    std::uint8_t c = code_ & std::uint8_t(~(3u << (2 * profile)));
    return EquilibriumSelection(std::uint8_t(c | (t.index() << (2 * profile))));
  }
  constexpr std::uint8_t code() const { return code_; }
  friend constexpr bool operator==(EquilibriumSelection, EquilibriumSelection) = default;

 private:
  std::uint8_t code_ = 0;
};

struct PairType {
  IndividualType s;
  IndividualType s_other;
  EquilibriumSelection e;

  constexpr std::uint32_t id() const {
    return (std::uint32_t(s.code()) << 20) | (std::uint32_t(s_other.code()) << 8) | e.code();
  }
  static constexpr PairType from_id(std::uint32_t id) {
    return {IndividualType(std::uint16_t(id >> 20)), IndividualType(std::uint16_t((id >> 8) & 0xFFF)),
            EquilibriumSelection(std::uint8_t(id & 0xFF))};
  }
  friend constexpr bool operator==(const PairType&, const PairType&) = default;
};

// True when every active game has a nonempty Nash set and e picks one of its members.
constexpr bool is_admissible(const PairType& t, ProfileMask active) {
  for (int p = 0; p < kProfileCount; ++p) {
    if (!active.contains(p)) continue;
    if (!nash_set(t.s, t.s_other, p).contains(t.e.chosen(p))) return false;
  }
  return true;
}

enum class ClassFilter { none, dominant_only, symmetric_only, supermodular_only, submodular_only };

// Which part of the type space to enumerate.
//  active_profiles: games that are observed; the equilibrium selection ranges over them.
//  counterfactual_profiles: games whose best responses vary (for policy targets)
//    but which carry no observation and no selection.
// Best-response bits at profiles in neither set are pinned to zero.
struct TypeSpaceConfig {
  ProfileMask active_profiles = ProfileMask::all();
  ProfileMask counterfactual_profiles = ProfileMask::none();
  ClassFilter class_filter = ClassFilter::none;

  ProfileMask varied_profiles() const { return active_profiles | counterfactual_profiles; }
  // Profiles (own-first) whose bits vary for the given member (1 or 2).
  ProfileMask member_profiles(int member) const {
    return member == 1 ? varied_profiles() : varied_profiles().mirrored();
  }
  void validate() const {
    if (active_profiles.empty()) throw std::invalid_argument("type space needs at least one active profile");
  }
};

// Hard filter made of optional member-level and pair-level predicates.
// Member predicates receive the member's own type; empty functions accept.
struct PairFilter {
  std::string name;
  std::function<bool(IndividualType)> member1;
  std::function<bool(IndividualType)> member2;
  std::function<bool(IndividualType, IndividualType)> pair;

  bool accepts(IndividualType s, IndividualType s_other) const {
    if (member1 && !member1(s)) return false;
    if (member2 && !member2(s_other)) return false;
    if (pair && !pair(s, s_other)) return false;
    return true;
  }
};

// Offer pairs as "z z'" digits, e.g. "{00,11}".
inline std::string to_string(ProfileMask m) {
  std::string out = "{";
  for (int p = 0; p < kProfileCount; ++p) {
    if (!m.contains(p)) continue;
    if (out.size() > 1) out += ',';
    out += char('0' + (p >> 1));
    out += char('0' + (p & 1));
  }
  return out + "}";
}

inline std::string to_string(ClassFilter f) {
  switch (f) {
    case ClassFilter::none: return "none";
    case ClassFilter::dominant_only: return "dominant_only";
    case ClassFilter::symmetric_only: return "symmetric_only";
    case ClassFilter::supermodular_only: return "supermodular_only";
    case ClassFilter::submodular_only: return "submodular_only";
  }
  return "unknown";
}

namespace detail {

constexpr bool class_accepts(ClassFilter f, IndividualType s, ProfileMask profiles) {
  for (int p = 0; p < kProfileCount; ++p) {
    if (!profiles.contains(p)) continue;
    ResponseClass c = classify(s, p);
    switch (f) {
      case ClassFilter::dominant_only:
        if (c != ResponseClass::dominant) return false;
        break;
      case ClassFilter::supermodular_only:
        if (c == ResponseClass::strictly_submodular) return false;
        break;
      case ClassFilter::submodular_only:
        if (c == ResponseClass::strictly_supermodular) return false;
        break;
      default: break;
    }
  }
  return true;
}

// Spread the low bits of `packed` over the brf pairs of the profiles in `profiles`.
constexpr unsigned expand_brf(unsigned packed, ProfileMask profiles) {
  unsigned brf = 0;
  int k = 0;
  for (int p = 0; p < kProfileCount; ++p) {
    if (!profiles.contains(p)) continue;
    brf |= ((packed >> (2 * k)) & 3u) << (2 * p);
    ++k;
  }
  return brf;
}

}  // namespace detail

// Canonical individual types of one member, ascending by code: all po bits,
// brf bits varying on the member's own-first profiles, pinned to 0 elsewhere,
// after the individual-level part of the class filter.
inline std::vector<IndividualType> individual_types(const TypeSpaceConfig& config, int member) {
  ProfileMask profiles = config.member_profiles(member);
  std::vector<IndividualType> out;
  unsigned combos = 1u << (2 * profiles.count());
  out.reserve(combos * 16);
  for (unsigned packed = 0; packed < combos; ++packed) {
    unsigned brf = detail::expand_brf(packed, profiles);
    for (unsigned po = 0; po < 16; ++po) {
      IndividualType t = IndividualType::from_parts(po, brf);
      if (detail::class_accepts(config.class_filter, t, profiles)) out.push_back(t);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

// Nash sets of one (s, s') pair across the four games.
struct PairGames {
  std::array<NashSet, kProfileCount> nash{};

  std::uint64_t selection_count(ProfileMask active) const {
    std::uint64_t n = 1;
    for (int p = 0; p < kProfileCount; ++p)
      if (active.contains(p)) n *= std::uint64_t(nash[p].size());
    return n;
  }
};

// Visits every selection in the Cartesian product of the active games'
// Nash sets in ascending selection code (highest profile varies slowest).
template <class Visitor>
void for_each_selection(const PairGames& games, ProfileMask active, Visitor&& visit) {
  std::array<std::array<TakeUp, 4>, kProfileCount> choices{};
  std::array<int, kProfileCount> sizes{};
  std::array<int, kProfileCount> profiles{};
  int depth = 0;
  for (int p = 0; p < kProfileCount; ++p) {
    if (!active.contains(p)) continue;
    int n = 0;
    for (int i = 0; i < 4; ++i)
      if ((games.nash[p].mask() >> i) & 1u) choices[depth][n++] = TakeUp::from_index(i);
    if (n == 0) return;
    sizes[depth] = n;
    profiles[depth] = p;
    ++depth;
  }
  std::array<int, kProfileCount> counter{};
  while (true) {
    EquilibriumSelection e;
    for (int k = 0; k < depth; ++k) e = e.with(profiles[k], choices[k][counter[k]]);
    visit(e);
    int k = 0;
    while (k < depth && ++counter[k] == sizes[k]) counter[k++] = 0;
    if (k == depth) break;
  }
}

// Half-open range of member-1 positions in individual_types(config, 1),
// used to split enumeration across workers.
struct IndexRange {
  std::size_t begin = 0;
  std::size_t end = static_cast<std::size_t>(-1);
};

// Visits (s, s', games) for every pair that passes the class filter and all
// hard filters and has a nonempty Nash set at every varied profile.
// Order is ascending in (s, s').
template <class Visitor>
void for_each_admissible_pair(const TypeSpaceConfig& config, const std::vector<PairFilter>& filters,
                              Visitor&& visit, IndexRange range = {}) {
  config.validate();
  const ProfileMask varied = config.varied_profiles();
  std::vector<IndividualType> first = individual_types(config, 1);
  std::vector<IndividualType> second = individual_types(config, 2);

  auto member_ok = [&](IndividualType t, int member) {
    for (const PairFilter& f : filters) {
      const auto& pred = member == 1 ? f.member1 : f.member2;
      if (pred && !pred(t)) return false;
    }
    return true;
  };
  std::erase_if(second, [&](IndividualType t) { return !member_ok(t, 2); });

  std::vector<const PairFilter*> pair_filters;
  for (const PairFilter& f : filters)
    if (f.pair) pair_filters.push_back(&f);
  const bool symmetric = config.class_filter == ClassFilter::symmetric_only;

  std::size_t stop = std::min(range.end, first.size());
  for (std::size_t i = range.begin; i < stop; ++i) {
    IndividualType s = first[i];
    if (!member_ok(s, 1)) continue;
    for (IndividualType so : second) {
      if (symmetric && !is_symmetric(s, so, varied)) continue;
      PairGames games;
      bool ok = true;
      for (int p = 0; p < kProfileCount && ok; ++p) {
        if (!varied.contains(p)) continue;
        games.nash[p] = nash_set(s, so, p);
        ok = !games.nash[p].empty();
      }
      if (!ok) continue;
      for (const PairFilter* f : pair_filters)
        if (!f->pair(s, so)) {
          ok = false;
          break;
        }
      if (ok) visit(s, so, std::as_const(games));
    }
  }
}

template <class Visitor>
void enumerate_pair_types(const TypeSpaceConfig& config, const std::vector<PairFilter>& filters,
                          Visitor&& visit, IndexRange range = {}) {
  const ProfileMask active = config.active_profiles;
  for_each_admissible_pair(
      config, filters,
      [&](IndividualType s, IndividualType so, const PairGames& games) {
        for_each_selection(games, active, [&](EquilibriumSelection e) { visit(PairType{s, so, e}); });
      },
      range);
}

struct TypeSpaceCounts {
  std::uint64_t member1 = 0;
  std::uint64_t member2 = 0;
  std::uint64_t pairs = 0;       // admissible (s, s')
  std::uint64_t pair_types = 0;  // raw (s, s', e)
};

inline TypeSpaceCounts count_pair_types(const TypeSpaceConfig& config,
                                        const std::vector<PairFilter>& filters = {}) {
  TypeSpaceCounts c;
  c.member1 = individual_types(config, 1).size();
  c.member2 = individual_types(config, 2).size();
  for_each_admissible_pair(config, filters, [&](IndividualType, IndividualType, const PairGames& g) {
    ++c.pairs;
    c.pair_types += g.selection_count(config.active_profiles);
  });
  return c;
}

}  // namespace pairbounds
