#pragma once

// Revised primal simplex for  min c'x  s.t.  E x = b, x >= 0.
// Row counts in this library stay in the low hundreds, so the basis inverse
// is kept dense and updated in product form, with periodic refactorization.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pairbounds::lp {

// Compressed sparse column matrix.
struct SparseMatrix {
  int rows = 0;
  std::vector<std::int64_t> col_start{0};
  std::vector<int> row_index;
  std::vector<double> values;

  int cols() const { return static_cast<int>(col_start.size()) - 1; }
  std::int64_t nonzeros() const { return col_start.back(); }

  void add_entry(int row, double value) {
    if (value == 0.0) return;
    row_index.push_back(row);
    values.push_back(value);
  }
  void finish_column() { col_start.push_back(static_cast<std::int64_t>(row_index.size())); }

  template <class F>
  void for_column(int j, F&& f) const {
    for (std::int64_t k = col_start[j]; k < col_start[j + 1]; ++k) f(row_index[k], values[k]);
  }

  static SparseMatrix from_dense(const std::vector<std::vector<double>>& dense) {
    SparseMatrix m;
    m.rows = static_cast<int>(dense.size());
    int n = dense.empty() ? 0 : static_cast<int>(dense[0].size());
    for (int j = 0; j < n; ++j) {
      for (int i = 0; i < m.rows; ++i) m.add_entry(i, dense[i][j]);
      m.finish_column();
    }
    return m;
  }
};

struct StandardLP {
  SparseMatrix E;
  std::vector<double> b;
  std::vector<double> c;

  int rows() const { return E.rows; }
  int cols() const { return E.cols(); }
  void validate() const {
    if (static_cast<int>(b.size()) != E.rows) throw std::invalid_argument("rhs length differs from row count");
    if (static_cast<int>(c.size()) != E.cols()) throw std::invalid_argument("cost length differs from column count");
    auto finite = [](double v) { return std::isfinite(v); };
    if (!std::all_of(b.begin(), b.end(), finite) || !std::all_of(c.begin(), c.end(), finite) ||
        !std::all_of(E.values.begin(), E.values.end(), finite))
      throw std::invalid_argument("LP data must be finite");
  }
};

enum class SolveStatus { optimal, infeasible, unbounded, numerical_failure };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::optimal: return "optimal";
    case SolveStatus::infeasible: return "infeasible";
    case SolveStatus::unbounded: return "unbounded";
    case SolveStatus::numerical_failure: return "numerical_failure";
  }
  return "unknown";
}

struct SolverOptions {
  double feasibility_tol = 1e-9;  // phase-1 residual above this means infeasible
  double optimality_tol = 1e-9;   // reduced-cost threshold
  double pivot_tol = 1e-9;
  double max_condition = 1e12;
  int refactor_interval = 50;
  int max_iterations = 200000;
};

class SingularBasis : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Inverse of a basis matrix together with the row sign flips applied to the
// system when it was solved (rows with negative rhs are negated for phase 1).
struct BasisFactor {
  Eigen::MatrixXd inverse;
  std::vector<signed char> row_sign;
};

struct BasicSolution {
  // Basic variable per row; indices >= structural count denote the unit
  // column of row (index - structural count), kept only on redundant rows.
  std::vector<int> basis;
  std::vector<double> x;
  double value = 0;
  std::shared_ptr<const BasisFactor> factor;
  std::vector<double> basic_costs;
  int structural_count = 0;

  // Diagnostics.
  double min_reduced_cost = 0;   // over nonbasic structural columns
  double max_residual = 0;       // ||E x - b||_inf
  int degenerate_basics = 0;     // basic variables at zero
  int redundant_rows = 0;
  double condition_estimate = 0;

  bool is_degenerate() const { return degenerate_basics > 0; }
};

struct SolveOutcome {
  SolveStatus status = SolveStatus::numerical_failure;
  std::optional<BasicSolution> solution;
  int iterations = 0;
  double phase1_residual = 0;
  std::string message;

  bool optimal() const { return status == SolveStatus::optimal; }
};

// c_B' B^{-1} new_b for a stored optimal basis; new_b is in the original row
// orientation (the stored sign flips are applied here).
inline double revalue_basis(const BasicSolution& sol, std::span<const double> new_b) {
  if (!sol.factor) throw SingularBasis("basis has no stored factorization");
  const BasisFactor& f = *sol.factor;
  const auto m = static_cast<std::size_t>(f.inverse.rows());
  if (new_b.size() != m) throw std::invalid_argument("rhs length differs from basis dimension");
  Eigen::VectorXd rhs(static_cast<Eigen::Index>(m));
  for (std::size_t i = 0; i < m; ++i) rhs[Eigen::Index(i)] = f.row_sign[i] * new_b[i];
  Eigen::VectorXd xb = f.inverse * rhs;
  double v = 0;
  for (std::size_t i = 0; i < m; ++i) v += sol.basic_costs[i] * xb[Eigen::Index(i)];
  if (!std::isfinite(v)) throw SingularBasis("basis factorization produced a non-finite value");
  return v;
}

// Basic variable values B^{-1} new_b for a stored basis.
inline std::vector<double> basic_values(const BasicSolution& sol, std::span<const double> new_b) {
  if (!sol.factor) throw SingularBasis("basis has no stored factorization");
  const BasisFactor& f = *sol.factor;
  const Eigen::Index m = f.inverse.rows();
  if (static_cast<Eigen::Index>(new_b.size()) != m) throw std::invalid_argument("rhs length differs from basis dimension");
  Eigen::VectorXd rhs(m);
  for (Eigen::Index i = 0; i < m; ++i) rhs[i] = f.row_sign[std::size_t(i)] * new_b[std::size_t(i)];
  Eigen::VectorXd xb = f.inverse * rhs;
  return std::vector<double>(xb.data(), xb.data() + m);
}

namespace detail {

class Simplex {
 public:
  Simplex(const StandardLP& lp, const SolverOptions& opt) : lp_(lp), opt_(opt), m_(lp.rows()), n_(lp.cols()) {
    sign_.assign(std::size_t(m_), 1);
    for (int i = 0; i < m_; ++i)
      if (lp.b[std::size_t(i)] < 0) sign_[std::size_t(i)] = -1;
    b_.resize(m_);
    for (int i = 0; i < m_; ++i) b_[i] = sign_[std::size_t(i)] * lp.b[std::size_t(i)];
    nonbasic_pos_.assign(std::size_t(n_ + m_), -1);
  }

  SolveOutcome run(const std::vector<int>* warm_basis) {
    SolveOutcome out;
    if (m_ == 0) return trivial(out);

    bool warm = warm_basis && try_warm_start(*warm_basis);
    if (!warm) {
      cold_start();
      cost_.assign(std::size_t(n_ + m_), 0.0);
      for (int i = 0; i < m_; ++i) cost_[std::size_t(n_ + i)] = 1.0;
      allow_artificial_entering_ = false;
      SolveStatus s = iterate(out);
      if (s != SolveStatus::optimal) {
        out.status = s == SolveStatus::unbounded ? SolveStatus::numerical_failure : s;
        return out;
      }
      double residual = 0;
      for (int i = 0; i < m_; ++i)
        if (basis_[std::size_t(i)] >= n_) residual += std::max(0.0, xb_[i]);
      out.phase1_residual = residual;
      if (residual > opt_.feasibility_tol) {
        out.status = SolveStatus::infeasible;
        out.message = "phase 1 residual " + std::to_string(residual);
        return out;
      }
      if (!drive_out_artificials()) {
        out.status = SolveStatus::numerical_failure;
        out.message = failure_;
        return out;
      }
    }

    cost_.assign(std::size_t(n_ + m_), 0.0);
    for (int j = 0; j < n_; ++j) cost_[std::size_t(j)] = lp_.c[std::size_t(j)];
    SolveStatus s = iterate(out);
    out.status = s;
    if (s != SolveStatus::optimal) return out;
    if (!refactor()) {
      out.status = SolveStatus::numerical_failure;
      out.message = failure_;
      return out;
    }
    out.solution = extract();
    return out;
  }

 private:
  SolveOutcome trivial(SolveOutcome& out) {
    BasicSolution sol;
    sol.x.assign(std::size_t(n_), 0.0);
    sol.structural_count = n_;
    sol.factor = std::make_shared<BasisFactor>(BasisFactor{Eigen::MatrixXd(0, 0), {}});
    double min_c = 0;
    for (int j = 0; j < n_; ++j) min_c = std::min(min_c, lp_.c[std::size_t(j)]);
    if (min_c < -opt_.optimality_tol) {
      out.status = SolveStatus::unbounded;
      return out;
    }
    sol.min_reduced_cost = n_ ? *std::min_element(lp_.c.begin(), lp_.c.end()) : 0.0;
    out.status = SolveStatus::optimal;
    out.solution = std::move(sol);
    return out;
  }

  // Column j of the sign-adjusted system; artificials are unit columns.
  template <class F>
  void column(int j, F&& f) const {
    if (j >= n_) {
      f(j - n_, 1.0);
      return;
    }
    lp_.E.for_column(j, [&](int r, double v) { f(r, sign_[std::size_t(r)] * v); });
  }

  void cold_start() {
    basis_.resize(std::size_t(m_));
    for (int i = 0; i < m_; ++i) basis_[std::size_t(i)] = n_ + i;
    mark_basis();
    binv_ = Eigen::MatrixXd::Identity(m_, m_);
    xb_ = b_;
    since_refactor_ = 0;
  }

  bool try_warm_start(const std::vector<int>& basis) {
    if (static_cast<int>(basis.size()) != m_) return false;
    for (int j : basis)
      if (j < 0 || j >= n_ + m_) return false;
    basis_ = basis;
    mark_basis();
    if (!refactor()) return false;
    for (int i = 0; i < m_; ++i) {
      if (xb_[i] < -opt_.feasibility_tol) return false;
      if (basis_[std::size_t(i)] >= n_ && xb_[i] > opt_.feasibility_tol) return false;
    }
    return true;
  }

  void mark_basis() {
    std::fill(nonbasic_pos_.begin(), nonbasic_pos_.end(), -1);
    for (int i = 0; i < m_; ++i) nonbasic_pos_[std::size_t(basis_[std::size_t(i)])] = i;
  }

  bool refactor() {
    Eigen::MatrixXd B = Eigen::MatrixXd::Zero(m_, m_);
    for (int i = 0; i < m_; ++i) column(basis_[std::size_t(i)], [&](int r, double v) { B(r, i) = v; });
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(B);
    binv_ = lu.inverse();
    double cond = B.cwiseAbs().colwise().sum().maxCoeff() * binv_.cwiseAbs().colwise().sum().maxCoeff();
    condition_ = cond;
    if (!std::isfinite(cond) || cond > opt_.max_condition) {
      failure_ = "basis condition estimate " + std::to_string(cond) + " exceeds threshold";
      return false;
    }
    xb_ = binv_ * b_;
    since_refactor_ = 0;
    return true;
  }

  Eigen::VectorXd direction(int q) const {
    Eigen::VectorXd a = Eigen::VectorXd::Zero(m_);
    column(q, [&](int r, double v) { a.noalias() += v * binv_.col(r); });
    return a;
  }

  double reduced_cost(int j, const Eigen::VectorXd& y) const {
    double d = cost_[std::size_t(j)];
    column(j, [&](int r, double v) { d -= y[r] * v; });
    return d;
  }

  void pivot(int r, int q, const Eigen::VectorXd& alpha, double theta) {
    xb_.noalias() -= theta * alpha;
    xb_[r] = theta;
    Eigen::RowVectorXd pr = binv_.row(r) / alpha[r];
    binv_.noalias() -= alpha * pr;
    binv_.row(r) = pr;
    nonbasic_pos_[std::size_t(basis_[std::size_t(r)])] = -1;
    basis_[std::size_t(r)] = q;
    nonbasic_pos_[std::size_t(q)] = r;
    ++since_refactor_;
  }

  SolveStatus iterate(SolveOutcome& out) {
    int degenerate_run = 0;
    bool bland = false;
    const int bland_after = 10 * m_;
    while (true) {
      if (out.iterations >= opt_.max_iterations) {
        out.message = "iteration limit reached";
        return SolveStatus::numerical_failure;
      }
      if (since_refactor_ >= opt_.refactor_interval && !refactor()) {
        out.message = failure_;
        return SolveStatus::numerical_failure;
      }
      Eigen::VectorXd cb(m_);
      for (int i = 0; i < m_; ++i) cb[i] = cost_[std::size_t(basis_[std::size_t(i)])];
      Eigen::VectorXd y = binv_.transpose() * cb;

      int q = -1;
      double best = -opt_.optimality_tol;
      const int limit = allow_artificial_entering_ ? n_ + m_ : n_;
      for (int j = 0; j < limit; ++j) {
        if (nonbasic_pos_[std::size_t(j)] >= 0) continue;
        double d = reduced_cost(j, y);
        if (d < best) {
          q = j;
          if (bland) break;
          best = d;
        }
      }
      if (q < 0) return SolveStatus::optimal;

      Eigen::VectorXd alpha = direction(q);
      int r = ratio_test(alpha, bland);
      if (r < 0) return SolveStatus::unbounded;
      double theta = std::max(0.0, xb_[r]) / alpha[r];
      pivot(r, q, alpha, theta);
      ++out.iterations;

      if (theta <= 1e-12) {
        if (++degenerate_run >= bland_after) bland = true;
      } else {
        degenerate_run = 0;
        bland = false;
      }
    }
  }

  // Harris two-pass ratio test; Bland mode takes the smallest basic index
  // among exact minimum ratios.
  int ratio_test(const Eigen::VectorXd& alpha, bool bland) const {
    double bound = std::numeric_limits<double>::infinity();
    for (int i = 0; i < m_; ++i)
      if (alpha[i] > opt_.pivot_tol)
        bound = std::min(bound, (std::max(0.0, xb_[i]) + opt_.feasibility_tol) / alpha[i]);
    if (!std::isfinite(bound)) return -1;
    int r = -1;
    if (bland) {
      double min_ratio = std::numeric_limits<double>::infinity();
      for (int i = 0; i < m_; ++i)
        if (alpha[i] > opt_.pivot_tol) min_ratio = std::min(min_ratio, std::max(0.0, xb_[i]) / alpha[i]);
      for (int i = 0; i < m_; ++i) {
        if (alpha[i] <= opt_.pivot_tol) continue;
        if (std::max(0.0, xb_[i]) / alpha[i] <= min_ratio + 1e-12 &&
            (r < 0 || basis_[std::size_t(i)] < basis_[std::size_t(r)]))
          r = i;
      }
      return r;
    }
    double best_alpha = 0;
    for (int i = 0; i < m_; ++i) {
      if (alpha[i] <= opt_.pivot_tol) continue;
      if (std::max(0.0, xb_[i]) / alpha[i] <= bound && alpha[i] > best_alpha) {
        best_alpha = alpha[i];
        r = i;
      }
    }
    return r;
  }

  // After phase 1, swap zero-valued artificials for structural columns where
  // possible; rows where no structural column has a nonzero entry are redundant.
  bool drive_out_artificials() {
    for (int r = 0; r < m_; ++r) {
      if (basis_[std::size_t(r)] < n_) continue;
      Eigen::RowVectorXd row = binv_.row(r);
      int q = -1;
      double best = 1e-7;
      for (int j = 0; j < n_; ++j) {
        if (nonbasic_pos_[std::size_t(j)] >= 0) continue;
        double v = 0;
        column(j, [&](int i, double a) { v += row[i] * a; });
        if (std::abs(v) > best) {
          best = std::abs(v);
          q = j;
          if (best > 1e-3) break;
        }
      }
      if (q < 0) continue;
      Eigen::VectorXd alpha = direction(q);
      pivot(r, q, alpha, std::max(0.0, xb_[r]) / alpha[r]);
      if (since_refactor_ >= opt_.refactor_interval && !refactor()) return false;
    }
    return refactor();
  }

  BasicSolution extract() const {
    BasicSolution sol;
    sol.structural_count = n_;
    sol.basis = basis_;
    sol.x.assign(std::size_t(n_), 0.0);
    sol.basic_costs.resize(std::size_t(m_));
    for (int i = 0; i < m_; ++i) {
      int j = basis_[std::size_t(i)];
      sol.basic_costs[std::size_t(i)] = j < n_ ? lp_.c[std::size_t(j)] : 0.0;
      if (j < n_) sol.x[std::size_t(j)] = std::max(0.0, xb_[i]);
      else ++sol.redundant_rows;
      if (std::abs(xb_[i]) <= opt_.feasibility_tol) ++sol.degenerate_basics;
    }
    for (int j = 0; j < n_; ++j) sol.value += lp_.c[std::size_t(j)] * sol.x[std::size_t(j)];

    std::vector<double> residual(lp_.b.begin(), lp_.b.end());
    for (int j = 0; j < n_; ++j) {
      double xj = sol.x[std::size_t(j)];
      if (xj != 0.0) lp_.E.for_column(j, [&](int r, double v) { residual[std::size_t(r)] -= v * xj; });
    }
    for (double r : residual) sol.max_residual = std::max(sol.max_residual, std::abs(r));

    Eigen::VectorXd cb(m_);
    for (int i = 0; i < m_; ++i) cb[i] = sol.basic_costs[std::size_t(i)];
    Eigen::VectorXd y = binv_.transpose() * cb;
    double min_d = std::numeric_limits<double>::infinity();
    for (int j = 0; j < n_; ++j) {
      if (nonbasic_pos_[std::size_t(j)] >= 0) continue;
      double d = lp_.c[std::size_t(j)];
      column(j, [&](int r, double v) { d -= y[r] * v; });
      min_d = std::min(min_d, d);
    }
    sol.min_reduced_cost = std::isfinite(min_d) ? min_d : 0.0;
    sol.condition_estimate = condition_;
    sol.factor = std::make_shared<BasisFactor>(BasisFactor{binv_, sign_});
    return sol;
  }

  const StandardLP& lp_;
  SolverOptions opt_;
  int m_, n_;
  std::vector<signed char> sign_;
  Eigen::VectorXd b_;
  std::vector<int> basis_;
  std::vector<int> nonbasic_pos_;  // row of a basic variable, -1 if nonbasic
  std::vector<double> cost_;
  Eigen::MatrixXd binv_;
  Eigen::VectorXd xb_;
  int since_refactor_ = 0;
  bool allow_artificial_entering_ = false;
  double condition_ = 1;
  std::string failure_;
};

}  // namespace detail

inline SolveOutcome solve(const StandardLP& lp, const SolverOptions& options = {}) {
  lp.validate();
  return detail::Simplex(lp, options).run(nullptr);
}

// Starts phase 2 from `basis` when it is primal feasible for lp.b, otherwise
// falls back to a cold start.
inline SolveOutcome solve_from(const StandardLP& lp, const std::vector<int>& basis,
                               const SolverOptions& options = {}) {
  lp.validate();
  SolveOutcome warm = detail::Simplex(lp, options).run(&basis);
  if (warm.status == SolveStatus::numerical_failure) return detail::Simplex(lp, options).run(nullptr);
  return warm;
}

}  // namespace pairbounds::lp
