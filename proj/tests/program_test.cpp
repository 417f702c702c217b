#include <pairbounds/program.hpp>

#include <gtest/gtest.h>

#include <random>
#include <sstream>

namespace pb = pairbounds;

namespace {

// Member 1 never takes up at (0,0) and follows its own offer elsewhere;
// the partner follows its own offer except at (0,0) where it copies member 1
// (supermodular) or stays out (dominant). Everyone has Y = 1 only at (1,1).
pb::PairType counterexample_pair(bool supermodular_partner) {
  pb::IndividualType s = pb::IndividualType::from_parts(0b1000, 0);
  pb::IndividualType so = pb::IndividualType::from_parts(0b1000, 0);
  for (int p = 1; p < 4; ++p) {
    int own_offer = p >> 1;
    s = s.with_response(p, {own_offer, own_offer});
    so = so.with_response(p, {own_offer, own_offer});
  }
  if (supermodular_partner) so = so.with_best_response(0, 1, 1);
  pb::EquilibriumSelection e;
  for (int p = 0; p < 4; ++p) e = e.with(p, pb::TakeUp::from_index(p));
  return {s, so, e};
}

pb::PolicyTarget counterexample_gamma() { return {1, {1, 0, 0}, std::nullopt}; }

pb::ObservedDistribution full_compliance_cells() {
  pb::ObservedDistribution o;
  o.active_blocks = pb::ProfileMask::all();
  for (int p = 0; p < 4; ++p) {
    int z = p >> 1, zo = p & 1;
    int y = z && zo, yo = z && zo;
    o.cells[16 * p + pb::CellIndex::within_of(y, yo, z, zo)] = 1.0;
  }
  return o;
}

// Random admissible pair type on the active profiles (rejection sampling).
pb::PairType random_pair(std::mt19937_64& rng, const pb::TypeSpaceConfig& config) {
  auto first = pb::individual_types(config, 1);
  auto second = pb::individual_types(config, 2);
  while (true) {
    pb::IndividualType s = first[rng() % first.size()];
    pb::IndividualType so = second[rng() % second.size()];
    pb::EquilibriumSelection e;
    bool ok = true;
    for (int p = 0; p < 4 && ok; ++p) {
      pb::NashSet n = pb::nash_set(s, so, p);
      if (!config.varied_profiles().contains(p)) continue;
      if (n.empty()) ok = false;
      else if (config.active_profiles.contains(p)) {
        auto m = n.members();
        e = e.with(p, m[rng() % m.size()]);
      }
    }
    if (ok) return {s, so, e};
  }
}

struct RandomMixture {
  std::vector<pb::PairType> support;
  std::vector<double> masses;
};

RandomMixture random_mixture(std::mt19937_64& rng, const pb::TypeSpaceConfig& config, int k) {
  RandomMixture m;
  std::gamma_distribution<double> g(1.0);
  double total = 0;
  for (int i = 0; i < k; ++i) {
    m.support.push_back(random_pair(rng, config));
    m.masses.push_back(g(rng));
    total += m.masses.back();
  }
  for (double& v : m.masses) v /= total;
  return m;
}

}  // namespace

TEST(ColumnOf, CounterexampleUnderFullCompliance) {
  auto cells = pb::column_of(counterexample_pair(true), pb::ProfileMask::all());
  EXPECT_EQ(cells[3], pb::CellIndex::within_of(1, 1, 1, 1));
  EXPECT_EQ(cells[0], pb::CellIndex::within_of(0, 0, 0, 0));
}

TEST(ColumnOf, ZeroPairHitsFirstCell) {
  pb::PairType t{pb::IndividualType(0), pb::IndividualType(0), pb::EquilibriumSelection(0)};
  for (int c : pb::column_of(t, pb::ProfileMask::all())) EXPECT_EQ(c, 0);
  auto partial = pb::column_of(t, pb::ProfileMask(0b0110));
  EXPECT_EQ(partial[0], -1);
  EXPECT_EQ(partial[3], -1);
}

TEST(ColumnOf, MatchesOutcomeOracle) {
  std::mt19937_64 rng(1);
  pb::TypeSpaceConfig config;
  for (int i = 0; i < 2000; ++i) {
    pb::PairType t = random_pair(rng, config);
    auto cells = pb::column_of(t, config.active_profiles);
    for (int p = 0; p < 4; ++p) {
      int d = t.e.chosen(p).d, dd = t.e.chosen(p).d_other;
      int y = (t.s.code() >> (2 * d + dd)) & 1;
      int yo = (t.s_other.code() >> (2 * dd + d)) & 1;
      EXPECT_EQ(cells[p], 8 * y + 4 * yo + 2 * d + dd);
    }
    EXPECT_EQ(pb::unpack_signature(pb::pack_signature(cells, config.active_profiles), config.active_profiles), cells);
  }
}

TEST(Objective, ThetaExamples) {
  pb::PairType t = counterexample_pair(true);
  pb::FixedAllocation contrast{1, {1, 1}, pb::TakeUp{0, 0}};
  EXPECT_EQ(pb::objective_theta(t.s, t.s_other, contrast), 1);
  pb::FixedAllocation same{1, {0, 1}, pb::TakeUp{0, 1}};
  std::mt19937 rng(2);
  for (int i = 0; i < 1000; ++i) {
    pb::IndividualType a(std::uint16_t(rng() & 0xFFF)), b(std::uint16_t(rng() & 0xFFF));
    EXPECT_EQ(pb::objective_theta(a, b, same), 0);
    auto ade2 = pb::ade(2);
    EXPECT_EQ(pb::objective_theta(a, b, ade2), int((b.code() >> 2) & 1) - int(b.code() & 1));
    auto ase1 = pb::ase(1);
    EXPECT_EQ(pb::objective_theta(a, b, ase1), int((a.code() >> 1) & 1) - int(a.code() & 1));
  }
}

TEST(Objective, GammaExamples) {
  EXPECT_EQ(pb::objective(counterexample_pair(false), counterexample_gamma()), 0);
  EXPECT_EQ(pb::objective(counterexample_pair(true), counterexample_gamma()), 1);
  // Partner always takes up: gamma = Y(d1, 1) whatever the offers.
  pb::IndividualType always = pb::IndividualType::from_parts(0, 0xFF);
  std::mt19937 rng(4);
  for (int i = 0; i < 200; ++i) {
    pb::IndividualType own(std::uint16_t(rng() & 0xFFF));
    for (int d1 = 0; d1 < 2; ++d1)
      for (int z = 0; z < 4; ++z) {
        pb::PolicyTarget pt{1, {d1, z >> 1, z & 1}, std::nullopt};
        EXPECT_EQ(pb::objective_gamma(own, always, pt), own.potential_outcome(d1, 1));
        pb::PolicyTarget pt2{2, {d1, z >> 1, z & 1}, std::nullopt};
        EXPECT_EQ(pb::objective_gamma(always, own, pt2), own.potential_outcome(d1, 1));
      }
  }
}

TEST(Build, DominantOnlyCounts) {
  pb::TypeSpaceConfig config;
  config.class_filter = pb::ClassFilter::dominant_only;
  auto spec = pb::build_structure(config, {}, pb::ade());
  EXPECT_EQ(spec.raw_pair_types, 65536u);
  EXPECT_LE(spec.columns.size(), 65536u * 3u);
  std::uint64_t total = 0;
  for (const auto& c : spec.columns) total += c.multiplicity;
  EXPECT_EQ(total, 65536u);
}

TEST(Build, SingleBlockHasAtMost48Columns) {
  for (int p = 0; p < 4; ++p) {
    pb::TypeSpaceConfig config;
    config.active_profiles = pb::ProfileMask::only(p);
    auto spec = pb::build_structure(config, {}, pb::ade());
    EXPECT_LE(spec.columns.size(), 48u);
    EXPECT_EQ(spec.raw_pair_types, 4096u);
  }
}

TEST(Build, CounterexampleSpaceHasTwoColumns) {
  std::vector<pb::PairType> space = {counterexample_pair(false), counterexample_pair(true)};
  auto spec = pb::build_structure_from(space, {}, {}, counterexample_gamma());
  ASSERT_EQ(spec.columns.size(), 2u);
  EXPECT_EQ(spec.columns[0].key.signature, spec.columns[1].key.signature);
  EXPECT_EQ(spec.columns[0].key.objective, 0);
  EXPECT_EQ(spec.columns[1].key.objective, 1);
}

TEST(Bounds, CounterexampleIntervals) {
  std::vector<pb::PairType> space = {counterexample_pair(false), counterexample_pair(true)};
  auto full = pb::build_structure_from(space, {}, {}, counterexample_gamma());
  auto iv = pb::bounds(full, full_compliance_cells());
  ASSERT_EQ(iv.status, pb::IntervalStatus::interval);
  EXPECT_EQ(iv.lower, 0.0);
  EXPECT_EQ(iv.upper, 1.0);
  auto dom = pb::build_structure_from(space, {}, {{pb::RestrictionKind::dominance}}, counterexample_gamma());
  auto iv2 = pb::bounds(dom, full_compliance_cells());
  EXPECT_EQ(iv2.lower, 0.0);
  EXPECT_EQ(iv2.upper, 0.0);
  ASSERT_EQ(iv.upper_witness.size(), 1u);
  EXPECT_EQ(*iv.upper_witness[0].representative, counterexample_pair(true));
}

TEST(Bounds, ContainsTrueValueAndNegationSymmetry) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    pb::TypeSpaceConfig config;
    config.active_profiles = pb::ProfileMask(std::uint8_t(1 + rng() % 15));
    auto mix = random_mixture(rng, config, 6);
    auto obs = pb::cells_of(mix.support, mix.masses, config.active_profiles);
    for (const pb::Estimand& est : {pb::Estimand(pb::ade(1)), pb::Estimand(pb::ase(2)),
                                    pb::Estimand(pb::PolicyTarget{1, {1, 0, 1}, std::nullopt})}) {
      auto spec = pb::build_structure(config, {}, est);
      // Re-sample support inside the effective config so gamma sees varied partner bits.
      auto m2 = random_mixture(rng, spec.config, 6);
      auto obs2 = pb::cells_of(m2.support, m2.masses, spec.config.active_profiles);
      double truth = 0;
      for (std::size_t i = 0; i < m2.support.size(); ++i) truth += m2.masses[i] * pb::objective(m2.support[i], est);
      auto iv = pb::bounds(spec, obs2);
      ASSERT_EQ(iv.status, pb::IntervalStatus::interval);
      EXPECT_LE(iv.lower, truth + 1e-9);
      EXPECT_GE(iv.upper, truth - 1e-9);
      EXPECT_GE(iv.lower_diag.min_reduced_cost, -1e-9);

      // Negated objective flips the interval.
      pb::LinearProgramSpec neg = spec;
      for (auto& c : neg.columns) c.key.objective = std::int8_t(-c.key.objective);
      auto ivn = pb::bounds(neg, obs2);
      EXPECT_NEAR(ivn.lower, -iv.upper, 1e-9);
      EXPECT_NEAR(ivn.upper, -iv.lower, 1e-9);
      (void)obs;
    }
  }
}

TEST(Bounds, DedupIsSound) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 8; ++trial) {
    pb::TypeSpaceConfig config;
    config.active_profiles = pb::ProfileMask::only(int(rng() % 4));
    std::vector<pb::Restriction> r;
    if (trial % 2) r.push_back({pb::RestrictionKind::eps_strategic_neutrality, pb::Scope::both, 0.3});
    auto dedup = pb::build_structure(config, r, pb::ade(1 + trial % 2));
    auto raw = pb::build_structure(config, r, pb::ade(1 + trial % 2), {.dedup = false});
    EXPECT_EQ(raw.columns.size(), raw.raw_pair_types);
    EXPECT_LE(raw.raw_pair_types, 10000u);
    auto mix = random_mixture(rng, config, 5);
    auto obs = pb::cells_of(mix.support, mix.masses, config.active_profiles);
    auto a = pb::bounds(dedup, obs), b = pb::bounds(raw, obs);
    ASSERT_EQ(a.status, b.status);
    EXPECT_NEAR(a.lower, b.lower, 1e-9);
    EXPECT_NEAR(a.upper, b.upper, 1e-9);
  }
}

TEST(Bounds, ThreadCountDoesNotChangeColumns) {
  pb::TypeSpaceConfig config;
  config.active_profiles = pb::ProfileMask(0b1001);
  auto one = pb::build_structure(config, {}, pb::ade(), {.threads = 1});
  auto three = pb::build_structure(config, {}, pb::ade(), {.threads = 3});
  ASSERT_EQ(one.columns.size(), three.columns.size());
  for (std::size_t i = 0; i < one.columns.size(); ++i) {
    EXPECT_EQ(one.columns[i].key, three.columns[i].key);
    EXPECT_EQ(one.columns[i].multiplicity, three.columns[i].multiplicity);
    EXPECT_EQ(one.columns[i].representative, three.columns[i].representative);
  }
}

TEST(Layout, RankPresolveDropsOneRowPerBlock) {
  std::mt19937_64 rng(10);
  pb::TypeSpaceConfig config;
  config.class_filter = pb::ClassFilter::dominant_only;
  auto spec = pb::build_structure(config, {}, pb::ade());
  std::array<double, 64> positive;
  positive.fill(1.0 / 16);
  EXPECT_EQ(pb::make_layout(spec, positive).row_count(), 61);
  // Zero cells remove their rows and the columns that touch them.
  std::array<double, 64> sparse = positive;
  for (int w = 0; w < 8; ++w) sparse[w] = 0;
  auto layout = pb::make_layout(spec, sparse);
  EXPECT_EQ(layout.row_count(), 61 - 8);
  EXPECT_LT(layout.type_columns.size(), spec.columns.size());
}

TEST(Bounds, InfeasibleWhenCellsLieOutsideTheColumns) {
  pb::TypeSpaceConfig config;
  config.class_filter = pb::ClassFilter::dominant_only;
  auto spec = pb::build_structure(config, {{pb::RestrictionKind::symmetry}}, pb::ade());
  pb::ObservedDistribution o;
  o.active_blocks = pb::ProfileMask::all();
  for (int p = 0; p < 4; ++p) o.cells[16 * p + pb::CellIndex::within_of(0, 0, 1, 0)] = 1.0;
  EXPECT_EQ(pb::bounds(spec, o).status, pb::IntervalStatus::empty);
}

TEST(Triplets, OneLinePerNonzero) {
  pb::TypeSpaceConfig config;
  config.active_profiles = pb::ProfileMask::only(0);
  auto spec = pb::build_structure(config, {{pb::RestrictionKind::eps_outcome_assort, pb::Scope::both, 0.5}}, pb::ade());
  std::ostringstream os;
  pb::write_triplets(spec, os);
  std::istringstream in(os.str());
  std::string line;
  std::size_t lines = 0, expected = 0;
  while (std::getline(in, line)) ++lines;
  for (const auto& c : spec.columns) expected += 2 + (c.key.weights[0] ? 1 : 0);
  EXPECT_EQ(lines, expected);
}
