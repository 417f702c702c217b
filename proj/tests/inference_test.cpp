#include <pairbounds/inference.hpp>
#include <pairbounds/simulate.hpp>

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

namespace pb = pairbounds;

namespace {

struct Benchmark {
  pb::TypeDgp dgp = pb::benchmark_dgp();
  pb::LinearProgramSpec spec = pb::build_structure(pb::benchmark_config(), pb::benchmark_restrictions(), pb::ade(1));
};

const Benchmark& benchmark() {
  static const Benchmark b;
  return b;
}

pb::InferenceConfig config_for(pb::CiMethod m, int reps = 200, std::uint64_t seed = 1) {
  pb::InferenceConfig c;
  c.method = m;
  c.reps = reps;
  c.seed = seed;
  c.threads = 1;
  return c;
}

// Two compliers that differ only in member 1's outcome under (1,0).
pb::TypeDgp two_type_dgp(double share) {
  pb::IndividualType c;
  for (int p = 0; p < 4; ++p) c = c.with_response(p, {p >> 1, p >> 1});
  pb::IndividualType a = pb::IndividualType::from_parts(0b0000, c.brf_bits());
  pb::IndividualType b = pb::IndividualType::from_parts(0b0100, c.brf_bits());
  pb::TypeDgp dgp;
  for (auto s : {a, b}) dgp.support.push_back({s, c, pb::select_equilibria(s, c, pb::SelectionRule::lowest)});
  dgp.masses = {1 - share, share};
  dgp.offer_probs = {0, 0, 1, 0};
  return dgp;
}

double ks_distance(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double d = 0;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(double(i) / a.size() - double(j) / b.size()));
  }
  return d;
}

}  // namespace

TEST(Config, Validation) {
  pb::InferenceConfig c;
  c.alpha = 1.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c.alpha = 0.05;
  c.reps = 50;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c.method = pb::CiMethod::relaxed_box;
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(pb::parse_ci_method("numerical_delta"), pb::CiMethod::numerical_delta);
  EXPECT_FALSE(pb::parse_ci_method("ellipsoid"));
}

TEST(Helpers, SimplexProjection) {
  std::array<double, 4> v{0.7, -0.2, 0.4, 0.1};
  pb::detail::project_simplex(v.data(), 4);
  double sum = 0;
  for (double x : v) {
    EXPECT_GE(x, 0);
    sum += x;
  }
  EXPECT_NEAR(sum, 1.0, 1e-12);
  EXPECT_NEAR(v[0] - v[2], 0.3, 1e-12);
  std::array<double, 3> inside{0.2, 0.3, 0.5};
  pb::detail::project_simplex(inside.data(), 3);
  EXPECT_NEAR(inside[1], 0.3, 1e-15);
}

TEST(RelaxedBox, ZeroRadiusReproducesPointBounds) {
  auto records = pb::sample_dataset(benchmark().dgp, 2000, 4);
  auto c = config_for(pb::CiMethod::relaxed_box);
  c.kappa_override = 0.0;
  auto r = pb::relaxed_box_ci(benchmark().spec, records, c);
  EXPECT_NEAR(r.lower_ci, r.point_bounds.lower, 1e-6);
  EXPECT_NEAR(r.upper_ci, r.point_bounds.upper, 1e-6);
}

TEST(RelaxedBox, NestsPointBoundsAndShrinksWithAlpha) {
  auto records = pb::sample_dataset(benchmark().dgp, 2000, 5);
  auto obs = pb::empirical_cells(records);
  double prev_lo = -2, prev_hi = 2;
  for (double alpha : {0.01, 0.05, 0.2, 0.5}) {
    auto c = config_for(pb::CiMethod::relaxed_box);
    c.alpha = alpha;
    auto r = pb::relaxed_box_ci(benchmark().spec, obs, c);
    EXPECT_LE(r.lower_ci, r.point_bounds.lower + 1e-9);
    EXPECT_GE(r.upper_ci, r.point_bounds.upper - 1e-9);
    EXPECT_GE(r.lower_ci, prev_lo - 1e-9);
    EXPECT_LE(r.upper_ci, prev_hi + 1e-9);
    prev_lo = r.lower_ci;
    prev_hi = r.upper_ci;
  }
}

TEST(RelaxedBox, WidthShrinksTowardsPopulationGap) {
  auto pop = pb::bounds(benchmark().spec, pb::population_cells(benchmark().dgp));
  double prev = 3;
  for (std::size_t n : {1000u, 10000u, 100000u}) {
    auto r = pb::relaxed_box_ci(benchmark().spec, pb::sample_dataset(benchmark().dgp, n, 6),
                                config_for(pb::CiMethod::relaxed_box));
    double width = r.upper_ci - r.lower_ci;
    EXPECT_LT(width, prev);
    EXPECT_GE(width, pop.width() - 0.05);
    prev = width;
  }
  EXPECT_LT(prev - pop.width(), 0.5);
}

TEST(RelaxedBox, BootstrapKappa) {
  auto records = pb::sample_dataset(benchmark().dgp, 2000, 7);
  auto c = config_for(pb::CiMethod::relaxed_box);
  c.kappa_rule = pb::KappaRule::bootstrap;
  auto boot = pb::relaxed_box_ci(benchmark().spec, records, c);
  auto analytic = pb::relaxed_box_ci(benchmark().spec, records, config_for(pb::CiMethod::relaxed_box));
  EXPECT_GT(boot.kappa[3], 0);
  EXPECT_LT(boot.kappa[3], analytic.kappa[3]);
  EXPECT_LE(boot.lower_ci, boot.point_bounds.lower + 1e-9);
  EXPECT_GE(boot.upper_ci, boot.point_bounds.upper - 1e-9);
  EXPECT_THROW(pb::relaxed_box_ci(benchmark().spec, pb::empirical_cells(records), c), std::invalid_argument);
}

TEST(Resampling, SeedDeterminismAndThreads) {
  auto records = pb::sample_dataset(benchmark().dgp, 1000, 8);
  for (auto m : {pb::CiMethod::basis_bootstrap, pb::CiMethod::numerical_delta}) {
    auto a = pb::confidence_interval(benchmark().spec, records, config_for(m, 120, 9));
    auto c3 = config_for(m, 120, 9);
    c3.threads = 3;
    auto b = pb::confidence_interval(benchmark().spec, records, c3);
    EXPECT_EQ(a.lower_ci, b.lower_ci);
    EXPECT_EQ(a.upper_ci, b.upper_ci);
    EXPECT_EQ(a.lower_draws, b.lower_draws);
    auto other = pb::confidence_interval(benchmark().spec, records, config_for(m, 120, 10));
    EXPECT_NE(a.lower_draws, other.lower_draws);
  }
}

TEST(BasisBootstrap, ConstantDataGivesZeroWidth) {
  pb::TypeDgp dgp;
  pb::IndividualType c;
  for (int p = 0; p < 4; ++p) c = c.with_response(p, {p >> 1, p >> 1});
  pb::IndividualType s = pb::IndividualType::from_parts(0b1111, c.brf_bits());
  dgp.support = {{s, s, pb::select_equilibria(s, s, pb::SelectionRule::lowest)}};
  dgp.masses = {1.0};
  auto records = pb::sample_dataset(dgp, 500, 1);
  pb::TypeSpaceConfig config;
  config.class_filter = pb::ClassFilter::dominant_only;
  auto spec = pb::build_structure(config, {}, pb::ade(1));
  for (auto m : {pb::CiMethod::basis_bootstrap, pb::CiMethod::numerical_delta}) {
    auto r = pb::confidence_interval(spec, records, config_for(m));
    EXPECT_NEAR(r.point_bounds.width(), 0, 1e-9);
    EXPECT_NEAR(r.upper_ci - r.lower_ci, 0, 1e-9);
    for (double d : r.lower_draws) EXPECT_NEAR(d, 0, 1e-9);
  }
}

TEST(BasisBootstrap, MatchesDirectMonteCarlo) {
  // Full compliance: the endpoint is a smooth function of the cells.
  auto dgp = pb::full_compliance_dgp(3);
  pb::TypeSpaceConfig config;
  config.class_filter = pb::ClassFilter::dominant_only;
  auto spec = pb::build_structure(config, {}, pb::ade(1));
  const std::size_t n = 5000;
  const double truth = pb::true_estimand(dgp, pb::ade(1));
  auto records = pb::sample_dataset(dgp, n, 100);
  auto r = pb::basis_bootstrap_ci(spec, records, config_for(pb::CiMethod::basis_bootstrap, 500, 2));
  std::vector<double> direct;
  for (int m = 0; m < 500; ++m) {
    auto iv = pb::bounds(spec, pb::empirical_cells(pb::sample_dataset(dgp, n, 1000 + m)));
    direct.push_back(std::sqrt(double(n)) * (iv.lower - truth));
  }
  EXPECT_LT(ks_distance(r.lower_draws, direct), 0.1);
  EXPECT_EQ(r.infeasible_replicates, 0);
}

TEST(NumericalDelta, LinearInstanceMatchesAnalyticDelta) {
  // Two types in one block: the ADE equals the share of the second type.
  const double share = 0.3;
  auto dgp = two_type_dgp(share);
  auto spec = pb::build_structure_from(dgp.support, pb::TypeSpaceConfig{pb::ProfileMask::only(2)}, {}, pb::ade(1));
  ASSERT_EQ(spec.columns.size(), 2u);
  const std::size_t n = 4000;
  auto records = pb::sample_dataset(dgp, n, 21);
  auto r = pb::numerical_delta_ci(spec, records, config_for(pb::CiMethod::numerical_delta, 1000, 3));
  ASSERT_EQ(r.lower_draws.size(), 1000u);
  const double p_hat = r.point_bounds.lower;
  EXPECT_NEAR(r.point_bounds.upper, p_hat, 1e-9);
  double mean = 0, var = 0;
  for (double d : r.lower_draws) mean += d;
  mean /= double(r.lower_draws.size());
  for (double d : r.lower_draws) var += (d - mean) * (d - mean);
  var /= double(r.lower_draws.size() - 1);
  const double analytic_sd = std::sqrt(p_hat * (1 - p_hat));
  EXPECT_LE(std::abs(mean), 2 * analytic_sd / std::sqrt(double(r.lower_draws.size())));
  EXPECT_NEAR(std::sqrt(var) / analytic_sd, 1.0, 0.1);
  EXPECT_EQ(r.projected_replicates, 0);
}

TEST(NumericalDelta, StepSizeSensitivity) {
  auto records = pb::sample_dataset(benchmark().dgp, 5000, 31);
  auto c = config_for(pb::CiMethod::numerical_delta, 300, 4);
  auto third = pb::numerical_delta_ci(benchmark().spec, records, c);
  c.step_exponent = 1.0 / 6;
  auto sixth = pb::numerical_delta_ci(benchmark().spec, records, c);
  double w1 = third.upper_ci - third.lower_ci, w2 = sixth.upper_ci - sixth.lower_ci;
  EXPECT_LT(std::abs(w1 - w2) / w1, 0.2);
}

TEST(Resampling, EmptyPointBoundsPropagate) {
  auto records = pb::sample_dataset(pb::vb_violation_dgp(), 400000, 2);
  std::vector<pb::Restriction> r = {{pb::RestrictionKind::eps_vb_monotone, pb::Scope::both, 0.0},
                                    {pb::RestrictionKind::dominance}};
  auto spec = pb::build_structure(pb::TypeSpaceConfig{}, r, pb::ade(2));
  auto rep = pb::basis_bootstrap_ci(spec, records, config_for(pb::CiMethod::basis_bootstrap));
  EXPECT_TRUE(rep.empty());
  EXPECT_TRUE(rep.point_bounds.empty());
}
