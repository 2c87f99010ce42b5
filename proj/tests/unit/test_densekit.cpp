#include <doctest.h>

#include <random>

#include "../support/qp_oracle.hpp"
#include "hdeepc/densekit.hpp"

using namespace hdeepc;

namespace {

QpProblem unconstrained(const Mat& P, const Vec& q) {
  QpProblem p;
  p.P = P;
  p.q = q;
  p.A = Mat::Zero(0, q.size());
  p.l = Vec::Zero(0);
  p.u = Vec::Zero(0);
  return p;
}

}  // namespace

TEST_CASE("qp: active upper bound") {
  // (x-1)^2 = x^2 - 2x + 1
  QpProblem p;
  p.P = Mat::Constant(1, 1, 2.0);
  p.q = Vec::Constant(1, -2.0);
  p.A = Mat::Ones(1, 1);
  p.l = Vec::Constant(1, -kInf);
  p.u = Vec::Constant(1, 0.5);
  const QpSolution s = qp_solve(p);
  CHECK(s.status == QpStatus::Optimal);
  CHECK(s.z(0) == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(s.objective == doctest::Approx(0.25 - 1.0).epsilon(1e-9));
}

TEST_CASE("qp: symmetric equality") {
  QpProblem p;
  p.P = 2.0 * Mat::Identity(2, 2);
  p.q = Vec::Zero(2);
  p.A = Mat::Ones(1, 2);
  p.l = Vec::Constant(1, 2.0);
  p.u = Vec::Constant(1, 2.0);
  const QpSolution s = qp_solve(p);
  CHECK(s.status == QpStatus::Optimal);
  CHECK(s.z(0) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(s.z(1) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("qp: unconstrained against hand KKT") {
  // (1+u0)^2 + u0^2 + u1^2: gradient 2(1+u0) + 2u0 = 0 -> u0 = -1/2.
  Mat P(2, 2);
  P << 4.0, 0.0, 0.0, 2.0;
  Vec q(2);
  q << 2.0, 0.0;
  const QpSolution s = qp_solve(unconstrained(P, q));
  CHECK(s.status == QpStatus::Optimal);
  CHECK(s.z(0) == doctest::Approx(-0.5).epsilon(1e-9));
  CHECK(std::abs(s.z(1)) < 1e-9);
  // Finite-difference check of stationarity of the original function.
  auto f = [](double a, double b) { return (1 + a) * (1 + a) + a * a + b * b; };
  const double h = 1e-6;
  CHECK(std::abs((f(s.z(0) + h, s.z(1)) - f(s.z(0) - h, s.z(1))) / (2 * h)) < 1e-6);
}

TEST_CASE("qp: errors and statuses") {
  SUBCASE("dimension mismatch") {
    QpProblem p = unconstrained(Mat::Identity(2, 2), Vec::Zero(3));
    CHECK_THROWS_AS((void)qp_solve(p), DimensionMismatch);
  }
  SUBCASE("indefinite hessian") {
    Mat P(2, 2);
    P << 1.0, 0.0, 0.0, -1.0;
    CHECK_THROWS_AS((void)qp_solve(unconstrained(P, Vec::Zero(2))), NonConvex);
  }
  SUBCASE("contradictory equalities") {
    QpProblem p;
    p.P = Mat::Identity(1, 1);
    p.q = Vec::Zero(1);
    p.A = Mat::Ones(2, 1);
    p.l = Vec(2);
    p.l << 1.0, 2.0;
    p.u = p.l;
    CHECK(qp_solve(p).status == QpStatus::PrimalInfeasible);
  }
  SUBCASE("unbounded linear objective") {
    QpProblem p;
    p.P = Mat::Zero(1, 1);
    p.q = Vec::Constant(1, 1.0);
    p.A = Mat::Ones(1, 1);
    p.l = Vec::Constant(1, -kInf);
    p.u = Vec::Constant(1, 0.0);
    CHECK(qp_solve(p).status == QpStatus::DualInfeasible);
  }
}

TEST_CASE("qp: equality-constrained matches direct KKT solve") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const Index n = 6, m = 3;
    Mat M(n, n), A(m, n);
    Vec q(n), b(m);
    for (Index i = 0; i < n; ++i) {
      q(i) = normal(rng);
      for (Index j = 0; j < n; ++j) M(i, j) = normal(rng);
    }
    for (Index i = 0; i < m; ++i) {
      b(i) = normal(rng);
      for (Index j = 0; j < n; ++j) A(i, j) = normal(rng);
    }
    QpProblem p;
    p.P = M * M.transpose() + 0.01 * Mat::Identity(n, n);
    p.q = q;
    p.A = A;
    p.l = b;
    p.u = b;
    Mat K = Mat::Zero(n + m, n + m);
    K.topLeftCorner(n, n) = p.P;
    K.topRightCorner(n, m) = A.transpose();
    K.bottomLeftCorner(m, n) = A;
    Vec rhs(n + m);
    rhs << -q, b;
    const Vec direct = K.partialPivLu().solve(rhs).head(n);
    const QpSolution s = qp_solve(p);
    REQUIRE(s.status == QpStatus::Optimal);
    CHECK((s.z - direct).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("qp: random problems against brute-force oracle, with local optimality probe") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 40; ++trial) {
    const QpProblem p = testing::random_small_qp(rng);
    const testing::OracleResult oracle = testing::brute_force_qp(p);
    REQUIRE(oracle.feasible);
    const QpSolution s = qp_solve(p);
    CAPTURE(trial);
    REQUIRE(s.status == QpStatus::Optimal);
    CHECK(std::abs(s.objective - oracle.objective) <= 1e-6 * (1.0 + std::abs(oracle.objective)));
    CHECK(s.primal_residual <= 1e-8);
    CHECK(s.dual_residual <= 1e-8);
    // Reported objective equals the formula.
    CHECK(std::abs(s.objective - (0.5 * s.z.dot(p.P * s.z) + p.q.dot(s.z))) < 1e-10 * (1 + std::abs(s.objective)));
    // Feasible perturbations of size 1e-4 never decrease the objective.
    for (Index j = 0; j < p.num_vars(); ++j) {
      for (double sign : {-1.0, 1.0}) {
        Vec z = s.z;
        z(j) += sign * 1e-4;
        const Vec Az = p.A * z;
        bool feasible = true;
        for (Index i = 0; i < p.num_constraints(); ++i)
          if (Az(i) < p.l(i) || Az(i) > p.u(i)) feasible = false;
        if (!feasible) continue;
        const double obj = 0.5 * z.dot(p.P * z) + p.q.dot(z);
        CHECK(obj >= s.objective - 1e-9 * (1 + std::abs(s.objective)));
      }
    }
  }
}

TEST_CASE("least squares") {
  CHECK((least_squares_solve(Mat::Identity(2, 2), Vec{{3.0, 4.0}}) - Vec{{3.0, 4.0}}).norm() < 1e-14);
  CHECK(least_squares_solve(Mat::Ones(2, 1), Vec{{1.0, 3.0}})(0) == doctest::Approx(2.0));
  const Vec x = least_squares_solve(Mat::Ones(1, 2), Vec::Constant(1, 2.0));
  // Pseudoinverse oracle: pinv([1 1]) = [1/2; 1/2].
  CHECK((x - Vec{{1.0, 1.0}}).norm() < 1e-12);
  CHECK_THROWS_AS((void)least_squares_solve(Mat::Ones(2, 2), Vec::Ones(3)), DimensionMismatch);
}

TEST_CASE("rank") {
  CHECK(rank_of(Mat::Identity(3, 3), 1e-9) == 3);
  CHECK(rank_of(Mat::Zero(2, 2), 1e-9) == 0);
  Mat M(2, 2);
  M << 1, 2, 2, 4;
  CHECK(rank_of(M, 1e-9) == 1);

  std::mt19937_64 rng(5);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    Mat L(5, 3), R(3, 6);
    for (Index i = 0; i < L.size(); ++i) L.data()[i] = normal(rng);
    for (Index i = 0; i < R.size(); ++i) R.data()[i] = normal(rng);
    Mat A = L * R;
    const Index base = rank_of(A, 1e-9);
    CHECK(base == 3);
    Mat B = A;
    B.row(0).swap(B.row(4));
    B.row(2) *= -7.5;
    CHECK(rank_of(B, 1e-9) == base);
  }
}

TEST_CASE("qp: interior-point and auto methods agree with the oracle") {
  std::mt19937_64 rng(77);
  for (const QpMethod method : {QpMethod::InteriorPoint, QpMethod::Auto}) {
    for (int trial = 0; trial < 30; ++trial) {
      const QpProblem p = testing::random_small_qp(rng);
      const testing::OracleResult oracle = testing::brute_force_qp(p);
      REQUIRE(oracle.feasible);
      QpSettings st;
      st.method = method;
      const QpSolution s = qp_solve(p, st);
      CAPTURE(trial);
      REQUIRE(s.status == QpStatus::Optimal);
      CHECK(std::abs(s.objective - oracle.objective) <= 1e-6 * (1.0 + std::abs(oracle.objective)));
      CHECK(s.primal_residual <= 1e-8);
    }
  }
}

TEST_CASE("qp: interior-point reports infeasibility") {
  QpProblem p = unconstrained(Mat::Identity(1, 1), Vec::Zero(1));
  p.A = Mat::Ones(2, 1);
  p.l = Vec{{1.0, -kInf}};
  p.u = Vec{{kInf, -1.0}};
  QpSettings st;
  st.method = QpMethod::InteriorPoint;
  const QpSolution s = qp_solve(p, st);
  CHECK(s.status == QpStatus::PrimalInfeasible);
}

TEST_CASE("spectral radius") {
  Mat R(2, 2);
  R << 0, -2, 2, 0;  // rotation-scaling, eigenvalues +-2i
  CHECK(spectral_radius(R) == doctest::Approx(2.0));
  CHECK(spectral_radius(Vec{{0.5, -0.9, 0.1}}.asDiagonal().toDenseMatrix()) == doctest::Approx(0.9));
}
