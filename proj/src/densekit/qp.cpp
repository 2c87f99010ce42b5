#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "hdeepc/densekit.hpp"

namespace hdeepc {

namespace {

constexpr double kRhoMin = 1e-6;
constexpr double kRhoMax = 1e6;
constexpr double kRhoEqualityScale = 1e3;
constexpr double kScaleMin = 1e-4;
constexpr double kScaleMax = 1e4;

enum class RowKind { Free, Equality, Inequality };

double inf_norm(const Vec& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

Vec project_box(const Vec& v, const Vec& l, const Vec& u) { return v.cwiseMax(l).cwiseMin(u); }

void validate(const QpProblem& p) {
  const Index n = p.q.size();
  const Index m = p.A.rows();
  if (p.P.rows() != n || p.P.cols() != n)
    throw DimensionMismatch("qp_solve: P must be " + std::to_string(n) + "x" + std::to_string(n));
  if (p.A.cols() != n && !(m == 0))
    throw DimensionMismatch("qp_solve: A has " + std::to_string(p.A.cols()) + " columns, expected " +
                            std::to_string(n));
  if (p.l.size() != m || p.u.size() != m)
    throw DimensionMismatch("qp_solve: bound vectors must have " + std::to_string(m) + " entries");
  if (!p.P.allFinite() || !p.q.allFinite() || !p.A.allFinite())
    throw Error("qp_solve: non-finite problem data");
  for (Index i = 0; i < m; ++i) {
    if (std::isnan(p.l(i)) || std::isnan(p.u(i)) || p.l(i) > p.u(i))
      throw Error("qp_solve: bound " + std::to_string(i) + " has l > u");
  }
  const double scale = std::max(1.0, p.P.cwiseAbs().maxCoeff());
  if ((p.P - p.P.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw NonConvex("qp_solve: P is not symmetric");
}

// Cholesky with a small diagonal shift; eigen-decomposition only when the
// shifted factorization fails.
void probe_psd(const Mat& P, double shift) {
  if (P.rows() == 0) return;
  const double scale = std::max(1.0, P.cwiseAbs().maxCoeff());
  Mat shifted = P;
  shifted.diagonal().array() += shift * scale;
  Eigen::LLT<Mat> llt(shifted);
  if (llt.info() == Eigen::Success) return;
  Eigen::SelfAdjointEigenSolver<Mat> es(P, Eigen::EigenvaluesOnly);
  const double lmin = es.eigenvalues().minCoeff();
  if (lmin < -shift * scale)
    throw NonConvex("qp_solve: P has eigenvalue " + std::to_string(lmin));
}

// Problem after modified Ruiz equilibration:
//   Pb = c D P D, qb = c D q, Ab = E A D, lb = E l, ub = E u.
struct Scaled {
  Mat P, A;
  Vec q, l, u;
  Vec D, E;
  double c = 1.0;
};

Scaled equilibrate(const QpProblem& p, int iterations) {
  Scaled s;
  const Index n = p.q.size();
  const Index m = p.A.rows();
  s.P = p.P;
  s.A = m > 0 ? p.A : Mat::Zero(0, n);
  s.q = p.q;
  s.D = Vec::Ones(n);
  s.E = Vec::Ones(m);

  auto clamp_scale = [](double v) {
    if (v < 1e-12) return 1.0;
    return std::clamp(v, kScaleMin, kScaleMax);
  };

  for (int it = 0; it < iterations; ++it) {
    Vec delta(n);
    for (Index j = 0; j < n; ++j) {
      double nrm = s.P.col(j).cwiseAbs().maxCoeff();
      if (m > 0) nrm = std::max(nrm, s.A.col(j).cwiseAbs().maxCoeff());
      delta(j) = 1.0 / std::sqrt(clamp_scale(nrm));
    }
    Vec eps(m);
    for (Index i = 0; i < m; ++i) eps(i) = 1.0 / std::sqrt(clamp_scale(s.A.row(i).cwiseAbs().maxCoeff()));

    s.P = delta.asDiagonal() * s.P * delta.asDiagonal();
    s.A = eps.asDiagonal() * s.A * delta.asDiagonal();
    s.q = s.q.cwiseProduct(delta);
    s.D = s.D.cwiseProduct(delta);
    s.E = s.E.cwiseProduct(eps);

    double mean_col = 0.0;
    for (Index j = 0; j < n; ++j) mean_col += s.P.col(j).cwiseAbs().maxCoeff();
    mean_col = n > 0 ? mean_col / static_cast<double>(n) : 0.0;
    const double gamma = 1.0 / clamp_scale(std::max(mean_col, inf_norm(s.q)));
    s.P *= gamma;
    s.q *= gamma;
    s.c *= gamma;
  }
  s.l = p.l.cwiseProduct(s.E);
  s.u = p.u.cwiseProduct(s.E);
  return s;
}

std::vector<RowKind> classify_rows(const Vec& l, const Vec& u) {
  std::vector<RowKind> kinds(static_cast<size_t>(l.size()));
  for (Index i = 0; i < l.size(); ++i) {
    if (std::isinf(l(i)) && std::isinf(u(i)))
      kinds[i] = RowKind::Free;
    else if (l(i) == u(i))
      kinds[i] = RowKind::Equality;
    else
      kinds[i] = RowKind::Inequality;
  }
  return kinds;
}

Vec make_rho(const std::vector<RowKind>& kinds, double rho) {
  Vec r(static_cast<Index>(kinds.size()));
  for (size_t i = 0; i < kinds.size(); ++i) {
    switch (kinds[i]) {
      case RowKind::Free: r(i) = kRhoMin; break;
      case RowKind::Equality: r(i) = kRhoEqualityScale * rho; break;
      case RowKind::Inequality: r(i) = rho; break;
    }
  }
  return r;
}

// Solves the equality-constrained KKT system
//   [P  Aa'] [x ]   [-q]
//   [Aa  0 ] [ya] = [ba]
// through a quasi-definite regularization plus iterative refinement, which
// converges to the minimum-norm solution of consistent singular systems. A
// complete orthogonal decomposition is the fallback.
bool solve_kkt(const Mat& P, const Vec& q, const Mat& Aa, const Vec& ba, Vec& x, Vec& ya, bool allow_cod) {
  const Index n = P.rows();
  const Index k = Aa.rows();
  const Index dim = n + k;
  Mat K = Mat::Zero(dim, dim);
  K.topLeftCorner(n, n) = P;
  if (k > 0) {
    K.topRightCorner(n, k) = Aa.transpose();
    K.bottomLeftCorner(k, n) = Aa;
  }
  Vec rhs(dim);
  rhs << -q, ba;

  const double kscale = std::max(1.0, K.cwiseAbs().maxCoeff());
  const double delta = 1e-9 * kscale;
  Mat Kreg = K;
  Kreg.diagonal().head(n).array() += delta;
  Kreg.diagonal().tail(k).array() -= delta;

  const double tol = 1e-13 * (1.0 + inf_norm(rhs)) * kscale;
  Eigen::PartialPivLU<Mat> lu(Kreg);
  Vec sol = Vec::Zero(dim);
  double res = kInf;
  for (int it = 0; it < 40; ++it) {
    const Vec r = rhs - K * sol;
    res = inf_norm(r);
    if (res <= tol) break;
    sol += lu.solve(r);
  }
  if (!(res <= 1e3 * tol) || !sol.allFinite()) {
    if (!allow_cod) return false;
    Eigen::CompleteOrthogonalDecomposition<Mat> cod(K);
    sol = cod.solve(rhs);
    sol += cod.solve(Vec(rhs - K * sol));
    res = inf_norm(rhs - K * sol);
    if (!(res <= 1e5 * tol) || !sol.allFinite()) return false;
  }
  x = sol.head(n);
  ya = sol.tail(k);
  return true;
}

// Active-set refinement on the scaled problem. `act` holds -1 (lower
// active), +1 (upper active), 2 (equality) or 0 (inactive) per row.
bool polish(const Scaled& s, const std::vector<RowKind>& kinds, const Vec& z_admm, const Vec& y_admm,
            int max_rounds, bool allow_cod, Vec& x_out, Vec& y_out) {
  const Index n = s.q.size();
  const Index m = s.A.rows();
  std::vector<int> act(static_cast<size_t>(m), 0);
  for (Index i = 0; i < m; ++i) {
    if (kinds[i] == RowKind::Equality) {
      act[i] = 2;
    } else if (kinds[i] == RowKind::Inequality) {
      if (std::isfinite(s.l(i)) && z_admm(i) - s.l(i) < -y_admm(i))
        act[i] = -1;
      else if (std::isfinite(s.u(i)) && s.u(i) - z_admm(i) < y_admm(i))
        act[i] = 1;
    }
  }

  Vec x, ya;
  for (int round = 0; round < max_rounds; ++round) {
    std::vector<Index> rows;
    for (Index i = 0; i < m; ++i)
      if (act[i] != 0) rows.push_back(i);
    Mat Aa(static_cast<Index>(rows.size()), n);
    Vec ba(static_cast<Index>(rows.size()));
    for (size_t r = 0; r < rows.size(); ++r) {
      const Index i = rows[r];
      Aa.row(static_cast<Index>(r)) = s.A.row(i);
      ba(static_cast<Index>(r)) = act[i] == 1 ? s.u(i) : s.l(i);
    }
    if (!solve_kkt(s.P, s.q, Aa, ba, x, ya, allow_cod)) return false;

    Vec y = Vec::Zero(m);
    for (size_t r = 0; r < rows.size(); ++r) y(rows[r]) = ya(static_cast<Index>(r));

    const Vec Ax = m > 0 ? Vec(s.A * x) : Vec::Zero(0);
    Index worst_primal = -1;
    double worst_primal_val = 0.0;
    Index worst_dual = -1;
    double worst_dual_val = 0.0;
    for (Index i = 0; i < m; ++i) {
      const double tol_p = 1e-10 * (1.0 + std::abs(Ax(i)));
      if (act[i] == 0) {
        const double v = std::max(s.l(i) - Ax(i), Ax(i) - s.u(i));
        if (v > tol_p && v > worst_primal_val) {
          worst_primal_val = v;
          worst_primal = i;
        }
      } else if (act[i] == -1 || act[i] == 1) {
        const double wrong = act[i] == -1 ? y(i) : -y(i);
        const double tol_d = 1e-10 * (1.0 + std::abs(y(i)));
        if (wrong > tol_d && wrong > worst_dual_val) {
          worst_dual_val = wrong;
          worst_dual = i;
        }
      }
    }
    if (worst_primal >= 0) {
      act[worst_primal] = Ax(worst_primal) < s.l(worst_primal) ? -1 : 1;
      continue;
    }
    if (worst_dual >= 0) {
      act[worst_dual] = 0;
      continue;
    }
    x_out = x;
    y_out = y;
    return true;
  }
  return false;
}

struct Unscaled {
  Vec z, y;
};

Unscaled unscale(const Scaled& s, const Vec& xb, const Vec& yb) {
  return {xb.cwiseProduct(s.D), yb.cwiseProduct(s.E) / s.c};
}

// Primal-dual interior point on the scaled problem, Mehrotra
// predictor-corrector. Inequality rows become G x + s = h, s >= 0 with one
// row per finite bound; equality rows stay as E x = b. Newton systems are
// solved through H = P + G'WG and the Schur complement E H^-1 E'.
struct IpmOutcome {
  Vec x, y;  // scaled primal and row duals
  int iterations = 0;
  bool converged = false;
  bool finished = false;  // finisher accepted an iterate
};

IpmOutcome interior_point(const Scaled& s, const std::vector<RowKind>& kinds, const QpSettings& settings,
                          const QpProblem& original, const std::function<bool(const Vec&, const Vec&)>& finisher) {
  const Index n = s.q.size();
  const Index m = s.A.rows();
  std::vector<Index> eq_rows, g_rows;
  std::vector<double> g_sign;
  for (Index i = 0; i < m; ++i) {
    if (kinds[i] == RowKind::Equality) {
      eq_rows.push_back(i);
    } else if (kinds[i] == RowKind::Inequality) {
      if (std::isfinite(s.l(i))) {
        g_rows.push_back(i);
        g_sign.push_back(-1.0);
      }
      if (std::isfinite(s.u(i))) {
        g_rows.push_back(i);
        g_sign.push_back(1.0);
      }
    }
  }
  const auto me = static_cast<Index>(eq_rows.size());
  const auto mg = static_cast<Index>(g_rows.size());

  Mat E(me, n);
  Vec b(me);
  for (Index r = 0; r < me; ++r) {
    E.row(r) = s.A.row(eq_rows[r]);
    b(r) = s.l(eq_rows[r]);
  }
  std::vector<Eigen::Triplet<double>> trips;
  Vec h(mg);
  for (Index r = 0; r < mg; ++r) {
    const Index i = g_rows[r];
    const double sg = g_sign[r];
    for (Index j = 0; j < n; ++j)
      if (s.A(i, j) != 0.0) trips.emplace_back(r, j, sg * s.A(i, j));
    h(r) = sg > 0 ? s.u(i) : -s.l(i);
  }
  Eigen::SparseMatrix<double> G(mg, n);
  G.setFromTriplets(trips.begin(), trips.end());
  const Eigen::SparseMatrix<double> Gt = G.transpose();

  const double scale = std::max({1.0, s.P.cwiseAbs().maxCoeff(), me > 0 ? E.cwiseAbs().maxCoeff() : 0.0});
  const double reg = 1e-11 * scale;

  Eigen::LLT<Mat> Hf, Sf;
  Eigen::PartialPivLU<Mat> Kf;
  bool full_kkt = false;
  Mat HinvEt;
  Vec W;

  // Builds and factors the reduced system for weights W = z / s. The Schur
  // route (H, then E H^-1 E') is cheaper; when either Cholesky factor fails
  // the regularized KKT matrix is factored by LU instead.
  auto factor = [&](const Vec& w) {
    Mat H = s.P;
    if (mg > 0) H += Mat(Gt * w.asDiagonal() * G);
    H.diagonal().array() += reg;
    full_kkt = false;
    Hf.compute(H);
    if (Hf.info() == Eigen::Success) {
      if (me == 0) return;
      HinvEt = Hf.solve(E.transpose());
      Mat S = E * HinvEt;
      S.diagonal().array() += reg;
      Sf.compute(S);
      if (Sf.info() == Eigen::Success) return;
    }
    full_kkt = true;
    Mat K = Mat::Zero(n + me, n + me);
    K.topLeftCorner(n, n) = H;
    K.topRightCorner(n, me) = E.transpose();
    K.bottomLeftCorner(me, n) = E;
    K.bottomRightCorner(me, me).diagonal().array() -= reg;
    Kf.compute(K);
  };

  // Solves [H E'; E 0] [dx; dy] = [rx; ry] with iterative refinement.
  auto reduced_solve = [&](const Vec& rx, const Vec& ry, Vec& dx, Vec& dy) {
    auto once = [&](const Vec& ax, const Vec& ay, Vec& ox, Vec& oy) {
      if (full_kkt) {
        Vec r(n + me);
        r << ax, ay;
        const Vec sol = Kf.solve(r);
        ox = sol.head(n);
        oy = sol.tail(me);
      } else if (me > 0) {
        const Vec hx = Hf.solve(ax);
        oy = Sf.solve(Vec(E * hx - ay));
        ox = hx - HinvEt * oy;
      } else {
        oy = Vec::Zero(0);
        ox = Hf.solve(ax);
      }
    };
    once(rx, ry, dx, dy);
    const double target = 1e-14 * (1.0 + std::max(inf_norm(rx), inf_norm(ry)));
    double last = kInf;
    for (int pass = 0; pass < 5; ++pass) {
      Vec Hdx = s.P * dx;
      if (mg > 0) Hdx += Gt * W.cwiseProduct(G * dx);
      const Vec ex = rx - Hdx - (me > 0 ? Vec(E.transpose() * dy) : Vec::Zero(n));
      const Vec ey = me > 0 ? Vec(ry - E * dx) : Vec::Zero(0);
      const double err = std::max(inf_norm(ex), inf_norm(ey));
      if (err <= target || err >= 0.5 * last) break;
      last = err;
      Vec cx, cy;
      once(ex, ey, cx, cy);
      dx += cx;
      dy += cy;
    }
  };

  IpmOutcome out;
  out.x = Vec::Zero(n);
  out.y = Vec::Zero(m);
  Vec x = Vec::Zero(n), y = Vec::Zero(me);
  Vec sl = Vec::Ones(mg), z = Vec::Ones(mg);

  // Starting point from the problem with unit weights.
  W = Vec::Ones(mg);
  factor(W);
  {
    Vec dx, dy;
    const Vec rx = -s.q + (mg > 0 ? Vec(Gt * h) : Vec::Zero(n));
    reduced_solve(rx, b, dx, dy);
    x = dx;
    y = dy;
    if (mg > 0) {
      const Vec r = h - G * x;
      const double shift_s = std::max(0.0, -r.minCoeff()) + 1.0;
      sl = r.array() + shift_s;
      z = Vec::Ones(mg);
    }
  }

  auto candidate_duals = [&](const Vec& yv, const Vec& zv) {
    Vec yr = Vec::Zero(m);
    for (Index r = 0; r < me; ++r) yr(eq_rows[r]) += yv(r);
    for (Index r = 0; r < mg; ++r) yr(g_rows[r]) += g_sign[r] * zv(r);
    return yr;
  };

  for (int it = 1; it <= settings.max_ipm_iterations; ++it) {
    out.iterations = it;
    out.x = x;
    out.y = candidate_duals(y, z);
    const Vec Gx = mg > 0 ? Vec(G * x) : Vec::Zero(0);
    const Vec rd = s.P * x + s.q + (me > 0 ? Vec(E.transpose() * y) : Vec::Zero(n)) +
                   (mg > 0 ? Vec(Gt * z) : Vec::Zero(n));
    const Vec re = me > 0 ? Vec(E * x - b) : Vec::Zero(0);
    const Vec ri = Gx + sl - h;
    const double mu = mg > 0 ? sl.dot(z) / static_cast<double>(mg) : 0.0;

    // Convergence is judged on the original problem.
    const Vec yr = candidate_duals(y, z);
    const Vec zo = x.cwiseProduct(s.D);
    const Vec yo = yr.cwiseProduct(s.E) / s.c;
    const auto kkt = kkt_residuals(original, zo, yo);
    const double obj = std::abs(0.5 * zo.dot(original.P * zo) + original.q.dot(zo));
    const double gap = mg > 0 ? sl.dot(z) / s.c : 0.0;
    if (kkt.primal <= settings.eps_primal && kkt.dual <= settings.eps_dual) {
      out.x = x;
      out.y = yr;
      if (gap <= std::max(settings.eps_dual, 1e-10) * (1.0 + obj)) {
        out.converged = true;
        return out;
      }
      // Close enough for the active set to be settled.
      if (gap <= 1e-7 * (1.0 + obj) && finisher(x, yr)) {
        out.converged = true;
        out.finished = true;
        return out;
      }
    }
    if (!x.allFinite() || !z.allFinite()) return out;

    W = mg > 0 ? Vec(z.cwiseQuotient(sl)) : Vec::Zero(0);
    factor(W);

    // Newton direction for a complementarity target rc (s o z - target).
    auto direction = [&](const Vec& rc, Vec& dx, Vec& dy, Vec& dz, Vec& ds) {
      const Vec tmp = mg > 0 ? Vec(W.cwiseProduct(ri) - rc.cwiseQuotient(sl)) : Vec::Zero(0);
      const Vec rx = -rd - (mg > 0 ? Vec(Gt * tmp) : Vec::Zero(n));
      reduced_solve(rx, -re, dx, dy);
      if (mg > 0) {
        const Vec Gdx = G * dx;
        dz = W.cwiseProduct(ri + Gdx) - rc.cwiseQuotient(sl);
        ds = -ri - Gdx;
      } else {
        dz = Vec::Zero(0);
        ds = Vec::Zero(0);
      }
    };
    auto max_step = [](const Vec& v, const Vec& dv) {
      double a = 1.0;
      for (Index i = 0; i < v.size(); ++i)
        if (dv(i) < 0) a = std::min(a, -v(i) / dv(i));
      return a;
    };

    Vec dx, dy, dz, ds;
    const Vec rc_aff = sl.cwiseProduct(z);
    direction(rc_aff, dx, dy, dz, ds);
    if (mg == 0) {
      x += dx;
      y += dy;
      continue;
    }
    const double a_aff = std::min(max_step(sl, ds), max_step(z, dz));
    const double mu_aff = (sl + a_aff * ds).dot(z + a_aff * dz) / static_cast<double>(mg);
    const double sigma = std::pow(std::clamp(mu_aff / std::max(mu, 1e-300), 0.0, 1.0), 3);
    const Vec rc = rc_aff + ds.cwiseProduct(dz) - Vec::Constant(mg, sigma * mu);
    direction(rc, dx, dy, dz, ds);
    const double a = std::min(1.0, 0.99 * std::min(max_step(sl, ds), max_step(z, dz)));
    x += a * dx;
    y += a * dy;
    z += a * dz;
    sl += a * ds;
  }
  return out;
}

}  // namespace

Index QpProblem::num_equalities() const {
  Index c = 0;
  for (Index i = 0; i < l.size(); ++i)
    if (l(i) == u(i)) ++c;
  return c;
}

std::string_view to_string(QpStatus s) {
  switch (s) {
    case QpStatus::Optimal: return "Optimal";
    case QpStatus::MaxIterations: return "MaxIterations";
    case QpStatus::PrimalInfeasible: return "PrimalInfeasible";
    case QpStatus::DualInfeasible: return "DualInfeasible";
  }
  return "Unknown";
}

KktResiduals kkt_residuals(const QpProblem& p, const Vec& z, const Vec& y) {
  KktResiduals r;
  const Vec Az = p.A.rows() > 0 ? Vec(p.A * z) : Vec::Zero(0);
  const Vec proj = project_box(Az, p.l, p.u);
  r.primal = inf_norm(Az - proj) / (1.0 + std::max(inf_norm(Az), inf_norm(proj)));
  const Vec Pz = p.P * z;
  const Vec Aty = p.A.rows() > 0 ? Vec(p.A.transpose() * y) : Vec::Zero(z.size());
  r.dual = inf_norm(Pz + p.q + Aty) /
           (1.0 + std::max({inf_norm(Pz), inf_norm(Aty), inf_norm(p.q)}));
  return r;
}

QpSolution qp_solve(const QpProblem& p, const QpSettings& settings) {
  validate(p);
  probe_psd(p.P, settings.psd_shift);

  const Index n = p.q.size();
  const Index m = p.A.rows();
  QpSolution out;

  auto finish = [&](const Vec& z, const Vec& y, QpStatus status, int iters, bool polished) {
    out.z = z;
    out.y = y;
    out.status = status;
    out.iterations = iters;
    out.polished = polished;
    out.objective = 0.5 * z.dot(p.P * z) + p.q.dot(z);
    const auto r = kkt_residuals(p, z, y);
    out.primal_residual = r.primal;
    out.dual_residual = r.dual;
    return out;
  };

  if (n == 0) return finish(Vec::Zero(0), Vec::Zero(m), QpStatus::Optimal, 0, false);

  const Scaled s = equilibrate(p, settings.scaling_iterations);
  const auto kinds = classify_rows(s.l, s.u);
  const bool has_inequalities =
      std::any_of(kinds.begin(), kinds.end(), [](RowKind k) { return k == RowKind::Inequality; });

  auto try_polish = [&](const Vec& zb, const Vec& yb, Unscaled& cand, bool allow_cod = true,
                        int rounds = -1) {
    if (!settings.polish) return false;
    Vec xp, yp;
    if (!polish(s, kinds, zb, yb, rounds < 0 ? settings.max_polish_rounds : rounds, allow_cod, xp, yp))
      return false;
    cand = unscale(s, xp, yp);
    const auto r = kkt_residuals(p, cand.z, cand.y);
    return r.primal <= settings.eps_primal && r.dual <= settings.eps_dual;
  };

  auto run_ipm = [&](int spent, std::optional<QpSolution>& result) {
    Unscaled cand;
    // Polishing an interior-point answer is a refinement only: a few
    // active-set rounds, no rank-revealing fallback.
    auto polish_from = [&](const Vec& xb, const Vec& yb, int rounds) {
      if (!xb.allFinite() || !yb.allFinite()) return false;
      return try_polish(m > 0 ? Vec(s.A * xb) : Vec::Zero(0), yb, cand, false, rounds);
    };
    const IpmOutcome r =
        interior_point(s, kinds, settings, p, [&](const Vec& xb, const Vec& yb) { return polish_from(xb, yb, 3); });
    if (r.finished) {
      result = finish(cand.z, cand.y, QpStatus::Optimal, spent + r.iterations, true);
      return true;
    }
    if (!r.converged) {
      // A stalled iterate often still identifies the active set.
      if (!polish_from(r.x, r.y, 10)) return false;
      result = finish(cand.z, cand.y, QpStatus::Optimal, spent + r.iterations, true);
      return true;
    }
    if (polish_from(r.x, r.y, 10)) {
      result = finish(cand.z, cand.y, QpStatus::Optimal, spent + r.iterations, true);
    } else {
      const auto u = unscale(s, r.x, r.y);
      result = finish(u.z, u.y, QpStatus::Optimal, spent + r.iterations, false);
    }
    return true;
  };
  if (settings.method == QpMethod::InteriorPoint) {
    std::optional<QpSolution> result;
    if (run_ipm(0, result)) return *result;
  }
  const int admm_cap = settings.method == QpMethod::Auto
                           ? std::min(settings.max_iterations, settings.auto_admm_iterations)
                           : settings.max_iterations;

  Vec x = Vec::Zero(n);
  if (settings.initial_z) {
    if (settings.initial_z->size() != n) throw DimensionMismatch("qp_solve: initial iterate has wrong size");
    x = settings.initial_z->cwiseQuotient(s.D);
  }
  Vec z = m > 0 ? project_box(Vec(s.A * x), s.l, s.u) : Vec::Zero(0);
  Vec y = Vec::Zero(m);

  // A pure equality/free problem has a known active set: polish directly.
  if (!has_inequalities) {
    Unscaled cand;
    if (try_polish(z, y, cand)) return finish(cand.z, cand.y, QpStatus::Optimal, 0, true);
  }

  double rho = settings.rho;
  Vec rho_vec = make_rho(kinds, rho);
  Eigen::LLT<Mat> factor;
  auto refactor = [&]() {
    Mat M = s.P;
    M.diagonal().array() += settings.sigma;
    if (m > 0) M.noalias() += s.A.transpose() * rho_vec.asDiagonal() * s.A;
    factor.compute(M);
  };
  refactor();

  double polish_trigger = 1e-3;
  Vec x_prev = x, y_prev = y;
  const double alpha = settings.alpha;

  int iter = 0;
  for (iter = 1; iter <= admm_cap; ++iter) {
    x_prev = x;
    y_prev = y;

    Vec rhs = settings.sigma * x - s.q;
    if (m > 0) rhs.noalias() += s.A.transpose() * (rho_vec.cwiseProduct(z) - y);
    const Vec x_tilde = factor.solve(rhs);
    const Vec z_tilde = m > 0 ? Vec(s.A * x_tilde) : Vec::Zero(0);

    x = alpha * x_tilde + (1.0 - alpha) * x_prev;
    const Vec z_relaxed = alpha * z_tilde + (1.0 - alpha) * z;
    const Vec z_new = project_box(z_relaxed + y.cwiseQuotient(rho_vec), s.l, s.u);
    y += rho_vec.cwiseProduct(z_relaxed - z_new);
    z = z_new;

    if (iter % settings.check_every != 0 && iter != admm_cap) continue;

    // Residuals in the original coordinates.
    const Vec Ax = m > 0 ? Vec(s.A * x) : Vec::Zero(0);
    const Vec Px = s.P * x;
    const Vec Aty = m > 0 ? Vec(s.A.transpose() * y) : Vec::Zero(n);
    const Vec Einv = s.E.cwiseInverse();
    const Vec Dinv = s.D.cwiseInverse();
    const double prim = inf_norm((Ax - z).cwiseProduct(Einv));
    const double prim_norm = std::max(inf_norm(Ax.cwiseProduct(Einv)), inf_norm(z.cwiseProduct(Einv)));
    const double dual = inf_norm((Px + s.q + Aty).cwiseProduct(Dinv)) / s.c;
    const double dual_norm = std::max({inf_norm(Px.cwiseProduct(Dinv)), inf_norm(Aty.cwiseProduct(Dinv)),
                                       inf_norm(s.q.cwiseProduct(Dinv))}) /
                             s.c;
    const double prim_rel = prim / (1.0 + prim_norm);
    const double dual_rel = dual / (1.0 + dual_norm);

    if (prim_rel <= settings.eps_primal && dual_rel <= settings.eps_dual) {
      Unscaled cand;
      if (try_polish(z, y, cand)) return finish(cand.z, cand.y, QpStatus::Optimal, iter, true);
      const auto u = unscale(s, x, y);
      return finish(u.z, u.y, QpStatus::Optimal, iter, false);
    }

    if (std::max(prim_rel, dual_rel) <= polish_trigger) {
      Unscaled cand;
      if (try_polish(z, y, cand)) return finish(cand.z, cand.y, QpStatus::Optimal, iter, true);
      polish_trigger = std::max(polish_trigger * 0.1, 1e-9);
    }

    // Primal infeasibility certificate.
    if (m > 0) {
      Vec dy = y - y_prev;
      for (Index i = 0; i < m; ++i) {
        if (std::isinf(s.u(i))) dy(i) = std::min(dy(i), 0.0);
        if (std::isinf(s.l(i))) dy(i) = std::max(dy(i), 0.0);
      }
      const double dy_norm = inf_norm(dy.cwiseProduct(s.E));
      if (dy_norm > 1e-30) {
        dy /= dy_norm;
        double support = 0.0;
        for (Index i = 0; i < m; ++i) {
          if (dy(i) > 0) support += s.u(i) * dy(i);
          if (dy(i) < 0) support += s.l(i) * dy(i);
        }
        if (support < -settings.eps_primal_infeasible &&
            inf_norm(Vec(s.A.transpose() * dy).cwiseProduct(Dinv)) < settings.eps_primal_infeasible) {
          const auto u = unscale(s, x, y);
          return finish(u.z, u.y, QpStatus::PrimalInfeasible, iter, false);
        }
      }
    }

    // Dual infeasibility certificate.
    {
      Vec dx = x - x_prev;
      const double dx_norm = inf_norm(dx.cwiseProduct(s.D));
      if (dx_norm > 1e-30) {
        dx /= dx_norm;
        const double eps = settings.eps_dual_infeasible;
        if (s.q.dot(dx) / s.c < -eps && inf_norm(Vec(s.P * dx).cwiseProduct(Dinv)) / s.c < eps) {
          bool ok = true;
          const Vec Adx = m > 0 ? Vec((s.A * dx).cwiseProduct(Einv)) : Vec::Zero(0);
          for (Index i = 0; i < m && ok; ++i) {
            const bool lo = std::isfinite(s.l(i));
            const bool hi = std::isfinite(s.u(i));
            if (lo && hi) ok = std::abs(Adx(i)) < eps;
            else if (hi) ok = Adx(i) < eps;
            else if (lo) ok = Adx(i) > -eps;
          }
          if (ok) {
            const auto u = unscale(s, x, y);
            return finish(u.z, u.y, QpStatus::DualInfeasible, iter, false);
          }
        }
      }
    }

    if (settings.adaptive_rho && m > 0) {
      const double prim_s = inf_norm(Ax - z) / std::max({inf_norm(Ax), inf_norm(z), 1e-30});
      const double dual_s = inf_norm(Px + s.q + Aty) /
                            std::max({inf_norm(Px), inf_norm(Aty), inf_norm(s.q), 1e-30});
      const double ratio = std::sqrt(prim_s / std::max(dual_s, 1e-30));
      const double rho_new = std::clamp(rho * ratio, kRhoMin, kRhoMax);
      if (rho_new > 5.0 * rho || rho_new < 0.2 * rho) {
        rho = rho_new;
        rho_vec = make_rho(kinds, rho);
        refactor();
      }
    }
  }

  Unscaled cand;
  if (try_polish(z, y, cand, settings.method != QpMethod::Auto))
    return finish(cand.z, cand.y, QpStatus::Optimal, admm_cap, true);
  if (settings.method == QpMethod::Auto) {
    std::optional<QpSolution> result;
    if (run_ipm(admm_cap, result)) return *result;
  }
  const auto u = unscale(s, x, y);
  return finish(u.z, u.y, QpStatus::MaxIterations, admm_cap, false);
}

}  // namespace hdeepc
