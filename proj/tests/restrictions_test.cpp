#include <pairbounds/restrictions.hpp>

#include <gtest/gtest.h>

#include <random>

namespace pb = pairbounds;

namespace {

int D(unsigned code, int z, int zo, int dd) { return (code >> (4 + 2 * (2 * z + zo) + dd)) & 1; }
int Y(unsigned code, int d, int dd) { return (code >> (2 * d + dd)) & 1; }

bool accepts(const pb::CompiledConstraint& c, pb::IndividualType s, pb::IndividualType so) {
  return std::get<pb::HardFilter>(c).filter.accepts(s, so);
}

bool member_accepts(const pb::CompiledConstraint& c, unsigned code) {
  const auto& f = std::get<pb::HardFilter>(c).filter;
  return f.member1(pb::IndividualType(std::uint16_t(code)));
}

pb::Restriction make(pb::RestrictionKind k, double eps = 0, pb::Scope scope = pb::Scope::both) {
  return pb::Restriction{k, scope, eps};
}

}  // namespace

TEST(Parse, KindEpsScope) {
  pb::Restriction r = pb::parse_restriction("eps_vb_monotone:0.02:member2");
  EXPECT_EQ(r.kind, pb::RestrictionKind::eps_vb_monotone);
  EXPECT_DOUBLE_EQ(r.eps, 0.02);
  EXPECT_EQ(r.scope, pb::Scope::member2);

  r = pb::parse_restriction("monotone_ia:member1");
  EXPECT_EQ(r.kind, pb::RestrictionKind::monotone_ia);
  EXPECT_EQ(r.scope, pb::Scope::member1);

  r = pb::parse_restriction("dominance");
  EXPECT_EQ(r.scope, pb::Scope::both);

  EXPECT_THROW(pb::parse_restriction("nonsense"), std::invalid_argument);
  EXPECT_THROW(pb::parse_restriction("eps_vb_monotone:1.5"), std::invalid_argument);
  EXPECT_THROW(pb::parse_restriction("dominance:0.1"), std::invalid_argument);
  EXPECT_THROW(pb::parse_restriction("eps_vb_monotone:abc"), std::invalid_argument);
  for (const auto& [kind, name] : pb::kRestrictionNames) EXPECT_EQ(pb::parse_kind(name), kind);
}

TEST(Compile, RejectsNonlinearKinds) {
  EXPECT_THROW(pb::compile(make(pb::RestrictionKind::monotone_treatment_selection)), pb::UnsupportedNonlinear);
  EXPECT_THROW(pb::compile(make(pb::RestrictionKind::stochastic_dominance)), pb::UnsupportedNonlinear);
}

TEST(Compile, EpsKindsCompileToMassBounds) {
  auto c = pb::compile(make(pb::RestrictionKind::eps_vb_monotone, 0.1));
  ASSERT_TRUE(std::holds_alternative<pb::MassBound>(c));
  EXPECT_DOUBLE_EQ(std::get<pb::MassBound>(c).bound, 0.1);
  EXPECT_TRUE(std::holds_alternative<pb::HardFilter>(pb::compile(make(pb::RestrictionKind::vb_monotone))));
}

TEST(Compile, ZeroNeutralityEqualsDominance) {
  auto neutral = pb::compile(make(pb::RestrictionKind::eps_strategic_neutrality, 0.0));
  auto dom = pb::compile(make(pb::RestrictionKind::dominance));
  std::mt19937 rng(1);
  for (unsigned a = 0; a < 4096; ++a)
    for (int k = 0; k < 64; ++k) {
      pb::IndividualType s{std::uint16_t(a)}, so{std::uint16_t(rng() & 0xFFF)};
      EXPECT_EQ(accepts(neutral, s, so), accepts(dom, s, so));
    }
}

TEST(Compile, DominanceAcceptsExactly256PerMember) {
  auto dom = pb::compile(make(pb::RestrictionKind::dominance));
  const auto& f = std::get<pb::HardFilter>(dom).filter;
  int n1 = 0, n2 = 0;
  for (unsigned a = 0; a < 4096; ++a) {
    n1 += f.member1(pb::IndividualType(std::uint16_t(a)));
    n2 += f.member2(pb::IndividualType(std::uint16_t(a)));
  }
  EXPECT_EQ(n1, 256);
  EXPECT_EQ(n2, 256);
}

TEST(Compile, VbEpsOneNeverBinds) {
  auto c = std::get<pb::MassBound>(pb::compile(make(pb::RestrictionKind::eps_vb_monotone, 1.0)));
  std::mt19937 rng(2);
  for (int i = 0; i < 20000; ++i) {
    int w = c.weight(pb::IndividualType(std::uint16_t(rng() & 0xFFF)), pb::IndividualType(std::uint16_t(rng() & 0xFFF)));
    EXPECT_GE(w, 0);
    EXPECT_LE(w, 1);
  }
}

TEST(Compile, IorRejectsTable1Type) {
  pb::IndividualType t = pb::IndividualType(0).with_best_response(3, 1, 1);
  auto c = pb::compile(make(pb::RestrictionKind::ior));
  EXPECT_FALSE(accepts(c, t, pb::IndividualType(0)));
  EXPECT_TRUE(accepts(c, pb::IndividualType(0), pb::IndividualType(0)));
}

TEST(Compile, MemberRulesMatchBitOracles) {
  auto ia = pb::compile(make(pb::RestrictionKind::monotone_ia));
  auto vb = pb::compile(make(pb::RestrictionKind::vb_monotone));
  auto ior = pb::compile(make(pb::RestrictionKind::ior));
  auto osnc = pb::compile(make(pb::RestrictionKind::one_sided_nc));
  auto mtr = pb::compile(make(pb::RestrictionKind::monotone_treatment_response));
  auto sub = pb::compile(make(pb::RestrictionKind::strategic_substitutes));
  auto comp = pb::compile(make(pb::RestrictionKind::strategic_complements));
  for (unsigned a = 0; a < 4096; ++a) {
    bool want_ia = true, want_vb = true, want_ior = true, want_osnc = true, want_sub = true, want_comp = true;
    for (int zo = 0; zo < 2; ++zo)
      for (int dd = 0; dd < 2; ++dd) want_ia &= D(a, 0, zo, dd) <= D(a, 1, zo, dd);
    for (int dd = 0; dd < 2; ++dd)
      want_vb &= D(a, 0, 0, dd) <= D(a, 0, 1, dd) && D(a, 0, 1, dd) <= D(a, 1, 0, dd) && D(a, 1, 0, dd) <= D(a, 1, 1, dd);
    for (int z = 0; z < 2; ++z)
      for (int zo = 0; zo < 2; ++zo)
        for (int dd = 0; dd < 2; ++dd) {
          want_ior &= D(a, z, zo, dd) == D(a, z, 0, 0);
          want_osnc &= D(a, z, zo, dd) == D(a, z, zo, 0) && (z == 1 || D(a, z, zo, dd) == 0);
        }
    for (int z = 0; z < 2; ++z)
      for (int zo = 0; zo < 2; ++zo) {
        want_sub &= D(a, z, zo, 1) <= D(a, z, zo, 0);
        want_comp &= D(a, z, zo, 0) <= D(a, z, zo, 1);
      }
    bool want_mtr = Y(a, 0, 0) <= Y(a, 1, 0) && Y(a, 0, 0) <= Y(a, 0, 1) && Y(a, 1, 0) <= Y(a, 1, 1) &&
                    Y(a, 0, 1) <= Y(a, 1, 1);
    EXPECT_EQ(member_accepts(ia, a), want_ia) << a;
    EXPECT_EQ(member_accepts(vb, a), want_vb) << a;
    EXPECT_EQ(member_accepts(ior, a), want_ior) << a;
    EXPECT_EQ(member_accepts(osnc, a), want_osnc) << a;
    EXPECT_EQ(member_accepts(mtr, a), want_mtr) << a;
    EXPECT_EQ(member_accepts(sub, a), want_sub) << a;
    EXPECT_EQ(member_accepts(comp, a), want_comp) << a;
  }
}

TEST(Compile, ScopeRestrictsTheCheckedMember) {
  auto only1 = pb::compile(make(pb::RestrictionKind::dominance, 0, pb::Scope::member1));
  pb::IndividualType strategic = pb::IndividualType(0).with_best_response(0, 1, 1);  // (0,1) at (0,0)
  EXPECT_TRUE(accepts(only1, pb::IndividualType(0), strategic));
  EXPECT_FALSE(accepts(only1, strategic, pb::IndividualType(0)));
}

TEST(Compile, MassWeightsCountViolations) {
  std::mt19937 rng(9);
  auto neutral = std::get<pb::MassBound>(pb::compile(make(pb::RestrictionKind::eps_strategic_neutrality, 0.1)));
  auto outcome = std::get<pb::MassBound>(pb::compile(make(pb::RestrictionKind::eps_outcome_assort, 0.1)));
  auto treat = std::get<pb::MassBound>(pb::compile(make(pb::RestrictionKind::eps_treatment_assort, 0.1)));
  for (int i = 0; i < 5000; ++i) {
    unsigned a = rng() & 0xFFF, b = rng() & 0xFFF;
    int want_neutral = 0, want_outcome = 0, want_treat = 0;
    for (int z = 0; z < 2; ++z)
      for (int zo = 0; zo < 2; ++zo) {
        want_neutral += D(a, z, zo, 0) != D(a, z, zo, 1);
        want_neutral += D(b, z, zo, 0) != D(b, z, zo, 1);
        for (int d = 0; d < 2; ++d) want_treat += D(a, z, zo, d) != D(b, z, zo, d);
      }
    for (int d = 0; d < 2; ++d)
      for (int dd = 0; dd < 2; ++dd) want_outcome += Y(a, d, dd) != Y(b, d, dd);
    pb::IndividualType s{std::uint16_t(a)}, so{std::uint16_t(b)};
    EXPECT_EQ(neutral.weight(s, so), want_neutral);
    EXPECT_EQ(outcome.weight(s, so), want_outcome);
    EXPECT_EQ(treat.weight(s, so), want_treat);
  }
}

TEST(Compile, DominanceAndSymmetryNeverEmitAsymmetricTakeUp) {
  pb::TypeSpaceConfig config;
  pb::CompiledSet set = pb::compile_all({make(pb::RestrictionKind::dominance), make(pb::RestrictionKind::symmetry)});
  std::uint64_t n = 0;
  pb::enumerate_pair_types(config, set.pair_filters(), [&](const pb::PairType& t) {
    ++n;
    for (int p = 0; p < 4; ++p) {
      pb::TakeUp e = t.e.chosen(p);
      EXPECT_EQ(e.d, e.d_other);
    }
  });
  EXPECT_EQ(n, 256u * 16u);
}

TEST(Compile, IsPure) {
  for (const auto& [kind, name] : pb::kRestrictionNames) {
    if (kind == pb::RestrictionKind::monotone_treatment_selection || kind == pb::RestrictionKind::stochastic_dominance)
      continue;
    pb::Restriction r = make(kind, pb::is_eps_kind(kind) ? 0.25 : 0.0);
    EXPECT_EQ(pb::serialize(pb::compile(r)), pb::serialize(pb::compile(r)));
  }
  EXPECT_NE(pb::serialize(pb::compile(make(pb::RestrictionKind::eps_vb_monotone, 0.25))),
            pb::serialize(pb::compile(make(pb::RestrictionKind::eps_vb_monotone, 0.5))));
}

TEST(FalsifiableCheck, Combinations) {
  using K = pb::RestrictionKind;
  EXPECT_EQ(pb::falsifiable_combination_check(pb::compile_all({make(K::dominance), make(K::symmetry)})).size(), 1u);
  EXPECT_TRUE(pb::falsifiable_combination_check(pb::compile_all({make(K::dominance)})).empty());
  EXPECT_TRUE(pb::falsifiable_combination_check(pb::compile_all({make(K::symmetry), make(K::monotone_ia)})).empty());
  EXPECT_EQ(pb::falsifiable_combination_check(
                pb::compile_all({make(K::eps_strategic_neutrality, 0.0), make(K::symmetry)}))
                .size(),
            1u);
}

TEST(Compile, ReducedSupportUsesVariedProfilesOnly) {
  pb::TypeSpaceConfig config;
  config.active_profiles = pb::ProfileMask::only(1);  // (0,1): member 2 varies at own-first (1,0)
  auto dom = pb::compile(make(pb::RestrictionKind::dominance), config);
  const auto& f = std::get<pb::HardFilter>(dom).filter;
  pb::IndividualType strategic_at_10 = pb::IndividualType(0).with_best_response(2, 1, 1);
  EXPECT_TRUE(f.member1(strategic_at_10));
  EXPECT_FALSE(f.member2(strategic_at_10));
}
