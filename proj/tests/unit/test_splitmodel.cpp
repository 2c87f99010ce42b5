#include <doctest.h>

#include <random>

#include "../support/generators.hpp"
#include "hdeepc/splitmodel.hpp"

using namespace hdeepc;

TEST_CASE("split and compose round trip, property") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 30; ++trial) {
    const LtiPlant p = testing::random_plant(rng);
    const Index nk = testing::uniform_index(rng, 0, p.n());
    std::vector<Index> known;
    for (Index o = 0; o < p.p(); ++o)
      if (rng() % 2) known.push_back(o);
    const PartitionedPlant pp = split_plant(p, nk, known);
    CHECK(pp.n_k() == nk);
    CHECK(pp.n_u() == p.n() - nk);
    CHECK(pp.p_k() == static_cast<Index>(known.size()));
    CHECK(pp.known_outputs == known);
    const LtiPlant back = compose(pp);
    CHECK(back.A == p.A);
    CHECK(back.B == p.B);
    CHECK(back.C == p.C);
    CHECK(back.D == p.D);
  }
}

TEST_CASE("split by hand") {
  LtiPlant p;
  p.A = Mat{{1, 2, 3}, {4, 5, 6}, {7, 8, 9}};
  p.B = Mat{{1}, {2}, {3}};
  p.C = Mat{{1, 0, 0}, {0, 0, 1}};
  p.D = Mat{{0}, {0}};
  const PartitionedPlant pp = split_plant(p, 1, {1});
  CHECK(pp.A_u == Mat{{1, 2}, {4, 5}});
  CHECK(pp.A_f == Mat{{3}, {6}});
  CHECK(pp.A_c == Mat{{7, 8}});
  CHECK(pp.A_k == Mat{{9}});
  CHECK(pp.C_u == Mat{{1, 0}});
  CHECK(pp.C_f == Mat{{0}});
  CHECK(pp.C_c == Mat{{0, 0}});
  CHECK(pp.C_k == Mat{{1}});
  // A_c = [7 8] is not a multiple of C_u = [1 0].
  CHECK_THROWS_AS((void)solve_transform(pp), TransformInfeasible);

  CHECK_THROWS_AS((void)split_plant(p, 4, {}), IndexOutOfRange);
  CHECK_THROWS_AS((void)split_plant(p, 1, {2}), IndexOutOfRange);
  CHECK_THROWS_AS((void)split_plant(p, 1, {0, 0}), IndexOutOfRange);
}

TEST_CASE("transform pair on a bess-like plant") {
  BessPlant b;
  b.tau_q = 1e4;
  const PartitionedPlant pp = split_plant(b.linear_model(), 1, {1});
  const TransformPair tp = solve_transform(pp);
  // SoC does not depend on the electrical states: both couplings vanish.
  CHECK(tp.A_y.norm() < 1e-14);
  CHECK(tp.C_y.norm() < 1e-14);
  const KnownModel km = known_model(pp, tp);
  CHECK(km.A_k(0, 0) == 1.0);
  CHECK(km.B_k(0, 0) == doctest::Approx(-1e-7));
  CHECK(km.p() == 2);
  CHECK_THROWS_AS((void)known_model(pp, TransformPair{Mat::Zero(2, 1), tp.C_y}), MissingTransform);
}

TEST_CASE("random coupled plants admit the transform, property") {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 30; ++trial) {
    const Index n = testing::uniform_index(rng, 1, 6);
    const Index m = testing::uniform_index(rng, 1, 2);
    const Index p = testing::uniform_index(rng, 1, 3);
    const Index nk = testing::uniform_index(rng, 0, n);
    const Index pk = testing::uniform_index(rng, 0, p);
    const LtiPlant plant = random_coupled_plant(n, m, p, nk, pk, 500 + static_cast<std::uint64_t>(trial));
    CHECK(is_controllable(plant.A, plant.B));
    const double rho = spectral_radius(plant.A);
    CHECK(rho >= 0.5 - 1e-9);
    CHECK(rho <= 0.95 + 1e-9);
    std::vector<Index> known;
    for (Index o = p - pk; o < p; ++o) known.push_back(o);
    const PartitionedPlant pp = split_plant(plant, nk, known);
    const TransformPair tp = solve_transform(pp);
    CAPTURE(trial);
    CHECK((tp.A_y * pp.C_u - pp.A_c).norm() <= 1e-9 * (1 + pp.A_c.norm()));
    CHECK((tp.C_y * pp.C_u - pp.C_c).norm() <= 1e-9 * (1 + pp.C_c.norm()));
    CHECK((tp.A_y * pp.C_f).norm() <= 1e-9);
    CHECK((tp.A_y * pp.D_u).norm() <= 1e-9);
    const AssumptionReport rep = validate_assumptions(pp, tp, std::nullopt, n, 2, 3, true);
    CHECK(rep.coupling.status == (nk + pk == 0 ? CheckStatus::NotApplicable : CheckStatus::Pass));
  }
}

TEST_CASE("fallback moves infeasible known outputs") {
  // Two unknown states, one known; y1 reads only the unknown part, y2 reads
  // the second unknown state which y1 cannot express.
  LtiPlant p;
  p.A = Mat{{0.5, 0.1, 0.0}, {0.0, 0.4, 0.0}, {0.3, 0.0, 0.9}};
  p.B = Mat{{1.0}, {0.5}, {0.2}};
  p.C = Mat{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  p.D = Mat::Zero(3, 1);
  // Known outputs {1, 2}: y2 = x2 needs C_y with C_y C_u = [0 1], C_u = [1 0].
  const SplitResult r = split_with_fallback(p, 1, {1, 2});
  CHECK(r.moved_outputs == std::vector<Index>{1});
  CHECK(r.pp.known_outputs == std::vector<Index>{2});
  CHECK(r.pp.unknown_outputs == std::vector<Index>{0, 1});
  CHECK((r.tp.A_y * r.pp.C_u - r.pp.A_c).norm() < 1e-12);

  // A state coupling that no output can express is fatal.
  LtiPlant q = p;
  q.C = Mat{{0, 1, 0}, {0, 0, 1}};
  q.D = Mat::Zero(2, 1);
  CHECK_THROWS_AS((void)split_with_fallback(q, 1, {1}), TransformInfeasible);
}

TEST_CASE("assumption report") {
  BessPlant b;
  const LtiPlant lin = b.linear_model();
  const PartitionedPlant pp = split_plant(lin, 1, {1});
  const Index order = 2 + 3 + 3;
  const Mat u = generate_pe_input(2, 40, order, 5);
  AssumptionReport rep = validate_assumptions(pp, std::nullopt, u, 3, 2, 3, true);
  CHECK(rep.all_pass());
  CHECK(rep.achieved_rank == 2 * order);
  CHECK(rep.required_rank == 2 * order);

  rep = validate_assumptions(pp, std::nullopt, Mat(Mat::Ones(2, 40)), 3, 2, 3, true);
  CHECK(rep.excitation.status == CheckStatus::Fail);
  CHECK_FALSE(rep.all_pass());
  rep = validate_assumptions(pp, std::nullopt, Mat(u.leftCols(5)), 3, 2, 3, true);
  CHECK(rep.excitation.status == CheckStatus::Fail);
  rep = validate_assumptions(pp, std::nullopt, u, 3, 2, 3, false);
  CHECK(rep.initial_state.status == CheckStatus::Fail);
  rep = validate_assumptions(std::nullopt, std::nullopt, u, 3, 2, 3, false);
  CHECK(rep.coupling.status == CheckStatus::NotApplicable);
  CHECK(rep.initial_state.status == CheckStatus::NotApplicable);
  rep = validate_assumptions(std::nullopt, std::nullopt, std::nullopt, 3, 2, 3, false);
  CHECK(rep.excitation.status == CheckStatus::Fail);
  // Everything known: no data needed.
  const PartitionedPlant all = split_plant(lin, 3, {0, 1});
  rep = validate_assumptions(all, std::nullopt, std::nullopt, 3, 2, 3, true);
  CHECK(rep.excitation.status == CheckStatus::NotApplicable);
  CHECK(rep.all_pass());
  CHECK(to_string(CheckStatus::Pass) == "pass");
}
