#pragma once

// Closed-form sharp bounds on E[Y(1) - Y(0)] for a binary instrument,
// treatment and outcome, written independently of the LP machinery.

#include <pairbounds/program.hpp>

#include <algorithm>
#include <array>
#include <random>
#include <utility>
#include <vector>

namespace oracle {

// P[y][d][z] = Pr(Y = y, D = d | Z = z).
using BinaryIv = std::array<std::array<std::array<double, 2>, 2>, 2>;

inline std::pair<double, double> balke_pearl_ate(const BinaryIv& P) {
  auto p = [&](int y, int d, int z) { return P[y][d][z]; };
  const double lower = std::max({
      p(1, 1, 1) + p(0, 0, 0) - 1,
      p(1, 1, 0) + p(0, 0, 1) - 1,
      p(1, 1, 0) - p(1, 1, 1) - p(1, 0, 1) - p(0, 1, 0) - p(1, 0, 0),
      p(1, 1, 1) - p(1, 1, 0) - p(1, 0, 0) - p(0, 1, 1) - p(1, 0, 1),
      -p(0, 1, 1) - p(1, 0, 1),
      -p(0, 1, 0) - p(1, 0, 0),
      p(0, 0, 1) - p(0, 1, 1) - p(1, 0, 1) - p(0, 1, 0) - p(0, 0, 0),
      p(0, 0, 0) - p(0, 1, 0) - p(1, 0, 0) - p(0, 1, 1) - p(0, 0, 1),
  });
  const double upper = std::min({
      1 - p(0, 1, 1) - p(1, 0, 0),
      1 - p(0, 1, 0) - p(1, 0, 1),
      -p(0, 1, 0) + p(0, 1, 1) + p(0, 0, 1) + p(1, 1, 0) + p(0, 0, 0),
      -p(0, 1, 1) + p(1, 1, 1) + p(0, 0, 1) + p(0, 1, 0) + p(0, 0, 0),
      p(1, 1, 1) + p(0, 0, 1),
      p(1, 1, 0) + p(0, 0, 0),
      -p(1, 0, 1) + p(1, 1, 1) + p(0, 0, 1) + p(1, 1, 0) + p(1, 0, 0),
      -p(1, 0, 0) + p(1, 1, 0) + p(0, 0, 0) + p(1, 1, 1) + p(1, 0, 1),
  });
  return {lower, upper};
}

// Member type whose take-up follows its own offer through `takeup`
// (bit z = take-up under own offer z) and whose outcome ignores the partner
// (bit d = Y(d)).
inline pairbounds::IndividualType no_spillover_type(unsigned takeup, unsigned outcome) {
  pairbounds::IndividualType t;
  for (int d = 0; d < 2; ++d)
    for (int dd = 0; dd < 2; ++dd) t = t.with_potential_outcome(d, dd, int((outcome >> d) & 1));
  for (int p = 0; p < pairbounds::kProfileCount; ++p) {
    int v = int((takeup >> (p >> 1)) & 1);
    t = t.with_response(p, {v, v});
  }
  return t;
}

// Random product distribution over no-spillover pairs; the support lists
// every such pair so it doubles as the model's type space.
struct NoSpilloverInstance {
  std::vector<pairbounds::PairType> space;
  std::vector<double> masses;
  pairbounds::ObservedDistribution cells;
  BinaryIv member1;
};

inline NoSpilloverInstance no_spillover_instance(std::mt19937_64& rng) {
  namespace pb = pairbounds;
  auto marginal = [&] {
    std::vector<double> w(16);
    std::gamma_distribution<double> g(0.5);
    double total = 0;
    for (double& v : w) total += (v = (rng() % 3 == 0) ? 0.0 : g(rng));
    if (total == 0) w[0] = total = 1;
    for (double& v : w) v /= total;
    return w;
  };
  const auto m1 = marginal(), m2 = marginal();
  NoSpilloverInstance inst;
  for (unsigned a = 0; a < 16; ++a)
    for (unsigned b = 0; b < 16; ++b) {
      pb::IndividualType s = no_spillover_type(a & 3, a >> 2), so = no_spillover_type(b & 3, b >> 2);
      inst.space.push_back({s, so, pb::select_equilibria(s, so, pb::SelectionRule::lowest)});
      inst.masses.push_back(m1[a] * m2[b]);
    }
  inst.cells = pb::cells_of(inst.space, inst.masses, pb::ProfileMask::all());
  for (int z = 0; z < 2; ++z)
    for (int y = 0; y < 2; ++y)
      for (int d = 0; d < 2; ++d) {
        double v = 0;
        for (int y2 = 0; y2 < 2; ++y2)
          for (int d2 = 0; d2 < 2; ++d2) v += inst.cells.cell(2 * z, pb::CellIndex::within_of(y, y2, d, d2));
        inst.member1[y][d][z] = v;
      }
  return inst;
}

}  // namespace oracle
