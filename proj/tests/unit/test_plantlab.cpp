#include <doctest.h>

#include <cmath>
#include <random>

#include "../support/generators.hpp"
#include "hdeepc/plantlab.hpp"

using namespace hdeepc;

TEST_CASE("lti step by hand") {
  LtiPlant p;
  p.A = Mat{{0.5, 1.0}, {0.0, 0.8}};
  p.B = Mat{{0.0}, {1.0}};
  p.C = Mat{{1.0, 0.0}};
  p.D = Mat{{0.25}};
  const StepResult r = lti_step(p, Vec{{2.0, -1.0}}, Vec{{4.0}});
  CHECK(r.x_next(0) == doctest::Approx(0.0));
  CHECK(r.x_next(1) == doctest::Approx(3.2));
  CHECK(r.y(0) == doctest::Approx(3.0));
  CHECK_THROWS_AS((void)lti_step(p, Vec::Zero(3), Vec::Zero(1)), DimensionMismatch);
  p.D = Mat::Zero(2, 1);
  CHECK_THROWS_AS(p.validate(), DimensionMismatch);
}

TEST_CASE("observability and toeplitz on a scalar plant") {
  const Mat A{{0.5}}, B{{2.0}}, C{{3.0}}, D{{1.0}};
  const Mat O = observability_matrix(A, C, 3);
  CHECK(O(0, 0) == doctest::Approx(3.0));
  CHECK(O(1, 0) == doctest::Approx(1.5));
  CHECK(O(2, 0) == doctest::Approx(0.75));
  const Mat T = toeplitz_matrix(A, B, C, D, 3);
  const Mat expected{{1.0, 0.0, 0.0}, {6.0, 1.0, 0.0}, {3.0, 6.0, 1.0}};
  CHECK((T - expected).norm() < 1e-14);
}

TEST_CASE("rollout identity, property") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 40; ++trial) {
    const LtiPlant p = testing::random_plant(rng);
    const Index N = 1 + static_cast<Index>(rng() % 8);
    const Vec x0 = testing::randn(rng, p.n());
    const Mat u = testing::randn(rng, p.m(), N);
    Vec x = x0;
    Mat y(p.p(), N);
    for (Index k = 0; k < N; ++k) {
      const StepResult r = lti_step(p, x, u.col(k));
      y.col(k) = r.y;
      x = r.x_next;
    }
    const Vec predicted = observability_matrix(p.A, p.C, N) * x0 + toeplitz_matrix(p.A, p.B, p.C, p.D, N) * stack(u);
    CAPTURE(trial);
    CHECK((predicted - stack(y)).lpNorm<Eigen::Infinity>() <= 1e-10 * (1.0 + stack(y).lpNorm<Eigen::Infinity>()));
  }
}

TEST_CASE("stack and unstack") {
  const Mat s{{1, 2, 3}, {4, 5, 6}};
  const Vec v = stack(s);
  CHECK(v(0) == 1);
  CHECK(v(1) == 4);
  CHECK(v(2) == 2);
  CHECK(unstack(v, 2) == s);
  CHECK_THROWS_AS((void)unstack(v, 4), DimensionMismatch);
}

TEST_CASE("controllability") {
  CHECK(is_controllable(Mat{{1, 1}, {0, 1}}, Mat{{0}, {1}}));
  CHECK_FALSE(is_controllable(Mat{{1, 0}, {0, 2}}, Mat{{1}, {0}}));
}

TEST_CASE("bess plant") {
  BessPlant lin;
  lin.tau_q = 10.0;
  const Vec x{{0.1, -0.2, 0.6}};
  const Vec u{{1.5, -0.5}};
  const StepResult a = nl_step(lin, x, u);
  const StepResult b = lti_step(lin.linear_model(), x, u);
  CHECK((a.x_next - b.x_next).norm() < 1e-15);
  CHECK(a.y(0) == x(0));
  CHECK(a.y(1) == x(2));

  BessPlant eff = lin;
  eff.mode = BessMode::EfficiencyNonlinear;
  eff.eta = 0.9;
  // Discharging drains 1/eta times the charge; charging stores eta times it.
  CHECK(nl_step(eff, x, u).x_next(2) == doctest::Approx(0.6 - 1e-4 * 1.5 / 0.9));
  CHECK(nl_step(eff, x, Vec{{-1.5, 0.0}}).x_next(2) == doctest::Approx(0.6 + 1e-4 * 1.5 * 0.9));
  CHECK(nl_step(eff, x, u).x_next.head(2).isApprox(b.x_next.head(2)));

  BessPlant strong = eff;
  strong.mode = BessMode::StrongNonlinear;
  strong.eta = 1.0;
  const StepResult s = nl_step(strong, x, u);
  CHECK(s.x_next(0) == doctest::Approx(0.9 * std::sin(0.1) + 0.2 * 0.1 * 1.5 + 1.5 - 0.5));
  CHECK(s.x_next(1) == doctest::Approx(0.9 * std::sin(-0.2) + 0.2 * -0.2 * -0.5 - 0.5));
}

TEST_CASE("truth plant dispatch") {
  const TruthPlant bess = BessPlant{};
  CHECK(state_dim(bess) == 3);
  CHECK(input_dim(bess) == 2);
  CHECK(output_dim(bess) == 2);
  CHECK(model_at(bess, 0).has_value());
  NonlinearPlant user{1, 1, 1, [](const Vec& x, const Vec& u) { return StepResult{x * 0.5 + u, x}; }};
  const TruthPlant nl = user;
  CHECK_FALSE(model_at(nl, 0).has_value());
  CHECK(simulate_step(nl, Vec{{2.0}}, Vec{{1.0}}, 3).x_next(0) == doctest::Approx(2.0));
}

TEST_CASE("time-varying plant") {
  TimeVaryingPlant tv;
  tv.nominal = coupled8_surrogate();
  tv.perturbation_sd = 0.1;
  tv.perturbed_rows = {2, 7};
  tv.rng_seed = 99;
  const LtiPlant a = perturb_time_varying(tv, 5);
  const LtiPlant b = perturb_time_varying(tv, 5);
  const LtiPlant c = perturb_time_varying(tv, 6);
  CHECK(a.A == b.A);
  CHECK(a.A != c.A);
  for (Index r = 0; r < 8; ++r) {
    if (r == 2 || r == 7) continue;
    CHECK(a.A.row(r) == tv.nominal.A.row(r));
  }
  CHECK(a.B == tv.nominal.B);

  // Relative perturbations have the requested spread.
  std::vector<double> rel;
  for (std::int64_t t = 0; t < 400; ++t) {
    const LtiPlant pt = perturb_time_varying(tv, t);
    for (Index r : tv.perturbed_rows)
      for (Index col = 0; col < 8; ++col)
        if (tv.nominal.A(r, col) != 0.0) rel.push_back(pt.A(r, col) / tv.nominal.A(r, col) - 1.0);
  }
  double mean = 0, sq = 0;
  for (double d : rel) mean += d;
  mean /= static_cast<double>(rel.size());
  for (double d : rel) sq += (d - mean) * (d - mean);
  const double sd = std::sqrt(sq / static_cast<double>(rel.size() - 1));
  CHECK(std::abs(mean) < 0.01);
  CHECK(sd == doctest::Approx(0.1).epsilon(0.08));

  tv.perturbed_rows = {8};
  CHECK_THROWS_AS((void)perturb_time_varying(tv, 0), IndexOutOfRange);
}

TEST_CASE("coupled8 surrogate") {
  const LtiPlant p = coupled8_surrogate();
  CHECK(p.n() == 8);
  CHECK(p.m() == 2);
  CHECK(p.p() == 3);
  CHECK(coupled8_surrogate(true).p() == 8);
  CHECK(spectral_radius(p.A) < 1.0);
  CHECK(is_controllable(p.A, p.B));
  CHECK(rank_of(observability_matrix(p.A, p.C, 8), 1e-10) == 8);
}

TEST_CASE("noise sources") {
  NoiseSpec g{NoiseKind::Gaussian, Vec{{2.0, 0.5}}, 3};
  NoiseSource src(g, 2);
  const int n = 20000;
  Vec sum = Vec::Zero(2), sq = Vec::Zero(2);
  for (int i = 0; i < n; ++i) {
    const Vec v = src.draw();
    sum += v;
    sq += v.cwiseAbs2();
  }
  CHECK(std::abs(sum(0) / n) < 0.05);
  CHECK(std::sqrt(sq(0) / n) == doctest::Approx(2.0).epsilon(0.03));
  CHECK(std::sqrt(sq(1) / n) == doctest::Approx(0.5).epsilon(0.03));

  NoiseSource uni({NoiseKind::Uniform, Vec::Constant(1, 0.3), 4}, 3);
  double worst = 0, msq = 0;
  for (int i = 0; i < n; ++i) {
    const Vec v = uni.draw();
    worst = std::max(worst, v.lpNorm<Eigen::Infinity>());
    msq += v.squaredNorm();
  }
  CHECK(worst <= 0.3);
  // Variance of U(-a, a) is a^2 / 3.
  CHECK(msq / (3.0 * n) == doctest::Approx(0.09 / 3.0).epsilon(0.03));

  NoiseSource none({}, 2);
  CHECK(none.draw().isZero());
  CHECK_THROWS_AS(NoiseSource({NoiseKind::Gaussian, Vec::Ones(3), 0}, 2), DimensionMismatch);
}

TEST_CASE("persistently exciting inputs") {
  const Mat u = generate_pe_input(2, 60, 9, 17, Vec{{1.0, 5.0}});
  CHECK(u.rows() == 2);
  CHECK(u.cols() == 60);
  CHECK(u.row(0).cwiseAbs().maxCoeff() <= 1.0);
  CHECK(u.row(1).cwiseAbs().maxCoeff() <= 5.0);
  CHECK(u.row(1).cwiseAbs().maxCoeff() > 1.0);
  CHECK(generate_pe_input(2, 60, 9, 17, Vec{{1.0, 5.0}}) == u);
  CHECK_THROWS_AS((void)generate_pe_input(2, 20, 9, 1), LengthTooShort);
  CHECK_THROWS_AS((void)generate_pe_input(2, 20, 0, 1), LengthTooShort);
  CHECK_THROWS_AS((void)generate_pe_input(2, 60, 9, 1, Vec::Ones(3)), DimensionMismatch);
}

TEST_CASE("moving average noise") {
  const Index window = 10;
  const Vec w = moving_average_noise(50000, 1.0, window, 8);
  // The average of `window` independent unit normals has variance 1/window,
  // and neighbours share window-1 samples.
  const double var = w.squaredNorm() / static_cast<double>(w.size());
  CHECK(var == doctest::Approx(1.0 / window).epsilon(0.05));
  const double lag1 = w.head(w.size() - 1).dot(w.tail(w.size() - 1)) / static_cast<double>(w.size() - 1);
  CHECK(lag1 / var == doctest::Approx(0.9).epsilon(0.03));
  CHECK(moving_average_noise(5, 1.0, 1, 3).size() == 5);
  CHECK_THROWS_AS((void)moving_average_noise(5, 1.0, 0, 3), DimensionMismatch);
}
