#pragma once

// Brute-force reference for small strictly convex QPs: every choice of
// active constraints (lower, upper, or inactive per row) gives an equality
// constrained QP; the optimum is the cheapest primal-feasible candidate.

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <vector>

#include "hdeepc/densekit.hpp"

namespace hdeepc::testing {

struct OracleResult {
  Vec z;
  double objective = std::numeric_limits<double>::infinity();
  bool feasible = false;
};

inline OracleResult brute_force_qp(const QpProblem& p, double feas_tol = 1e-9) {
  const Index n = p.q.size();
  const Index m = p.A.rows();
  OracleResult best;
  std::vector<int> choice(static_cast<size_t>(m), 0);  // 0 inactive, 1 lower, 2 upper
  while (true) {
    bool valid = true;
    std::vector<Index> rows;
    std::vector<double> rhs;
    for (Index i = 0; i < m; ++i) {
      const int c = choice[static_cast<size_t>(i)];
      if (c == 1) {
        if (!std::isfinite(p.l(i))) valid = false;
        rows.push_back(i);
        rhs.push_back(p.l(i));
      } else if (c == 2) {
        if (!std::isfinite(p.u(i)) || p.l(i) == p.u(i)) valid = false;
        rows.push_back(i);
        rhs.push_back(p.u(i));
      }
    }
    if (valid) {
      const Index k = static_cast<Index>(rows.size());
      Mat K = Mat::Zero(n + k, n + k);
      Vec b = Vec::Zero(n + k);
      K.topLeftCorner(n, n) = p.P;
      b.head(n) = -p.q;
      for (Index j = 0; j < k; ++j) {
        K.block(n + j, 0, 1, n) = p.A.row(rows[static_cast<size_t>(j)]);
        K.block(0, n + j, n, 1) = p.A.row(rows[static_cast<size_t>(j)]).transpose();
        b(n + j) = rhs[static_cast<size_t>(j)];
      }
      Eigen::CompleteOrthogonalDecomposition<Mat> cod(K);
      const Vec sol = cod.solve(b);
      if ((K * sol - b).norm() <= 1e-9 * (1.0 + b.norm())) {
        const Vec z = sol.head(n);
        const Vec Az = p.A * z;
        bool feasible = true;
        for (Index i = 0; i < m; ++i)
          if (Az(i) < p.l(i) - feas_tol || Az(i) > p.u(i) + feas_tol) feasible = false;
        if (feasible) {
          const double obj = 0.5 * z.dot(p.P * z) + p.q.dot(z);
          if (obj < best.objective) {
            best.objective = obj;
            best.z = z;
            best.feasible = true;
          }
        }
      }
    }
    Index pos = 0;
    while (pos < m && choice[static_cast<size_t>(pos)] == 2) choice[static_cast<size_t>(pos++)] = 0;
    if (pos == m) break;
    ++choice[static_cast<size_t>(pos)];
  }
  return best;
}

/// Random feasible, strictly convex QP with at most 10 variables and a mix
/// of equality, two-sided, and one-sided rows.
inline QpProblem random_small_qp(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> nvar(1, 10);
  std::uniform_int_distribution<int> ncon(0, 7);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const Index n = nvar(rng);
  const Index m = ncon(rng);
  QpProblem p;
  Mat M(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) M(i, j) = normal(rng);
  p.P = M * M.transpose() + 0.1 * Mat::Identity(n, n);
  p.q.resize(n);
  for (Index i = 0; i < n; ++i) p.q(i) = 3.0 * normal(rng);
  p.A.resize(m, n);
  for (Index i = 0; i < m; ++i)
    for (Index j = 0; j < n; ++j) p.A(i, j) = normal(rng);
  Vec x0(n);
  for (Index i = 0; i < n; ++i) x0(i) = normal(rng);
  const Vec Ax0 = p.A * x0;
  p.l.resize(m);
  p.u.resize(m);
  Index equalities = 0;
  for (Index i = 0; i < m; ++i) {
    const double kind = unit(rng);
    if (kind < 0.15 && equalities + 1 < n) {
      p.l(i) = p.u(i) = Ax0(i);
      ++equalities;
    } else if (kind < 0.4) {
      p.l(i) = -kInf;
      p.u(i) = Ax0(i) + unit(rng);
    } else if (kind < 0.55) {
      p.l(i) = Ax0(i) - unit(rng);
      p.u(i) = kInf;
    } else {
      p.l(i) = Ax0(i) - unit(rng);
      p.u(i) = Ax0(i) + unit(rng);
    }
  }
  return p;
}

}  // namespace hdeepc::testing
