#include <cmath>
#include <string>

#include "hdeepc/plantlab.hpp"

namespace hdeepc {

namespace {

void expect_size(const Vec& v, Index n, const char* what) {
  if (v.size() != n)
    throw DimensionMismatch(std::string(what) + " has " + std::to_string(v.size()) + " entries, expected " +
                            std::to_string(n));
}

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

}  // namespace

void LtiPlant::validate() const {
  const Index nn = A.rows();
  if (A.cols() != nn) throw DimensionMismatch("A must be square");
  if (B.rows() != nn) throw DimensionMismatch("B must have n rows");
  if (C.cols() != nn) throw DimensionMismatch("C must have n columns");
  if (D.rows() != C.rows() || D.cols() != B.cols()) throw DimensionMismatch("D must be p x m");
}

StepResult lti_step(const LtiPlant& plant, const Vec& x, const Vec& u) {
  expect_size(x, plant.n(), "state");
  expect_size(u, plant.m(), "input");
  return {plant.A * x + plant.B * u, plant.C * x + plant.D * u};
}

LtiPlant perturb_time_varying(const TimeVaryingPlant& tv, std::int64_t t) {
  LtiPlant out = tv.nominal;
  if (tv.perturbation_sd == 0.0 || tv.perturbed_rows.empty()) return out;
  std::seed_seq seq{static_cast<std::uint32_t>(tv.rng_seed & 0xffffffffu),
                    static_cast<std::uint32_t>(tv.rng_seed >> 32),
                    static_cast<std::uint32_t>(static_cast<std::uint64_t>(t) & 0xffffffffu),
                    static_cast<std::uint32_t>(static_cast<std::uint64_t>(t) >> 32), 0x7a11u};
  std::mt19937_64 rng(seq);
  std::normal_distribution<double> normal(0.0, tv.perturbation_sd);
  for (Index r : tv.perturbed_rows) {
    if (r < 0 || r >= out.A.rows()) throw IndexOutOfRange("perturbed row " + std::to_string(r));
    for (Index c = 0; c < out.A.cols(); ++c) out.A(r, c) *= 1.0 + normal(rng);
  }
  return out;
}

LtiPlant BessPlant::linear_model() const {
  LtiPlant p;
  p.A.resize(3, 3);
  p.A << 0.98, 1.0, 0.0,
         -0.2, 0.6, 0.0,
         0.0, 0.0, 1.0;
  p.B.resize(3, 2);
  p.B << 1.0, 1.0,
         0.0, 0.0,
         -1e-3 / tau_q, 0.0;
  p.C.resize(2, 3);
  p.C << 1.0, 0.0, 0.0,
         0.0, 0.0, 1.0;
  p.D = Mat::Zero(2, 2);
  return p;
}

StepResult nl_step(const BessPlant& plant, const Vec& x, const Vec& u) {
  expect_size(x, 3, "BESS state");
  expect_size(u, 2, "BESS input");
  const LtiPlant lin = plant.linear_model();
  if (plant.mode == BessMode::Linear) return lti_step(lin, x, u);

  StepResult r;
  r.y = lin.C * x;
  r.x_next.resize(3);
  if (plant.mode == BessMode::EfficiencyNonlinear) {
    r.x_next.head(2) = lin.A.topRows(2) * x + lin.B.topRows(2) * u;
  } else {
    r.x_next(0) = plant.a * std::sin(x(0)) + plant.b * x(0) * u(0) + u(0) + u(1);
    r.x_next(1) = plant.a * std::sin(x(1)) + plant.b * x(1) * u(1) + u(1);
  }
  r.x_next(2) = x(2) + (-1e-3 / plant.tau_q) * plant.alpha(u(0)) * u(0);
  return r;
}

StepResult nl_step(const NonlinearPlant& plant, const Vec& x, const Vec& u) {
  expect_size(x, plant.n, "state");
  expect_size(u, plant.m, "input");
  StepResult r = plant.step(x, u);
  expect_size(r.x_next, plant.n, "next state");
  expect_size(r.y, plant.p, "output");
  return r;
}

StepResult simulate_step(const TruthPlant& plant, const Vec& x, const Vec& u, std::int64_t t) {
  return std::visit(overloaded{
                        [&](const LtiPlant& p) { return lti_step(p, x, u); },
                        [&](const TimeVaryingPlant& p) { return lti_step(perturb_time_varying(p, t), x, u); },
                        [&](const BessPlant& p) { return nl_step(p, x, u); },
                        [&](const NonlinearPlant& p) { return nl_step(p, x, u); },
                    },
                    plant);
}

Index state_dim(const TruthPlant& plant) {
  return std::visit(overloaded{
                        [](const LtiPlant& p) { return p.n(); },
                        [](const TimeVaryingPlant& p) { return p.nominal.n(); },
                        [](const BessPlant&) { return Index{3}; },
                        [](const NonlinearPlant& p) { return p.n; },
                    },
                    plant);
}

Index input_dim(const TruthPlant& plant) {
  return std::visit(overloaded{
                        [](const LtiPlant& p) { return p.m(); },
                        [](const TimeVaryingPlant& p) { return p.nominal.m(); },
                        [](const BessPlant&) { return Index{2}; },
                        [](const NonlinearPlant& p) { return p.m; },
                    },
                    plant);
}

Index output_dim(const TruthPlant& plant) {
  return std::visit(overloaded{
                        [](const LtiPlant& p) { return p.p(); },
                        [](const TimeVaryingPlant& p) { return p.nominal.p(); },
                        [](const BessPlant&) { return Index{2}; },
                        [](const NonlinearPlant& p) { return p.p; },
                    },
                    plant);
}

std::optional<LtiPlant> model_at(const TruthPlant& plant, std::int64_t t) {
  return std::visit(overloaded{
                        [](const LtiPlant& p) -> std::optional<LtiPlant> { return p; },
                        [t](const TimeVaryingPlant& p) -> std::optional<LtiPlant> {
                          return perturb_time_varying(p, t);
                        },
                        [](const BessPlant& p) -> std::optional<LtiPlant> { return p.linear_model(); },
                        [](const NonlinearPlant&) -> std::optional<LtiPlant> { return std::nullopt; },
                    },
                    plant);
}

Mat observability_matrix(const Mat& A, const Mat& C, Index N) {
  if (A.rows() != A.cols() || C.cols() != A.rows()) throw DimensionMismatch("observability_matrix");
  const Index p = C.rows();
  Mat O(p * N, A.cols());
  Mat CA = C;
  for (Index k = 0; k < N; ++k) {
    O.middleRows(k * p, p) = CA;
    CA = CA * A;
  }
  return O;
}

Mat toeplitz_matrix(const Mat& A, const Mat& B, const Mat& C, const Mat& D, Index N) {
  if (A.rows() != A.cols() || B.rows() != A.rows() || C.cols() != A.rows() || D.rows() != C.rows() ||
      D.cols() != B.cols())
    throw DimensionMismatch("toeplitz_matrix");
  const Index p = C.rows();
  const Index m = B.cols();
  // markov[k] = C A^{k-1} B for k >= 1, markov[0] = D.
  std::vector<Mat> markov(static_cast<size_t>(N));
  if (N > 0) markov[0] = D;
  Mat AkB = B;
  for (Index k = 1; k < N; ++k) {
    markov[static_cast<size_t>(k)] = C * AkB;
    AkB = A * AkB;
  }
  Mat T = Mat::Zero(p * N, m * N);
  for (Index i = 0; i < N; ++i)
    for (Index j = 0; j <= i; ++j) T.block(i * p, j * m, p, m) = markov[static_cast<size_t>(i - j)];
  return T;
}

bool is_controllable(const Mat& A, const Mat& B) {
  const Index n = A.rows();
  if (n == 0) return true;
  Mat K(n, n * B.cols());
  Mat AkB = B;
  for (Index k = 0; k < n; ++k) {
    K.middleCols(k * B.cols(), B.cols()) = AkB;
    AkB = A * AkB;
  }
  return rank_of(K, 1e-10) == n;
}

LtiPlant coupled8_surrogate(bool full_state_output) {
  constexpr double dt = 0.1;
  constexpr double k_ground = 1.0;
  constexpr double k_couple = 1.5;
  constexpr double damping = 0.9;
  constexpr double motor_pole = 0.7;
  constexpr double motor_gain = 0.3;
  constexpr double back_emf = 0.05;

  LtiPlant p;
  p.A = Mat::Zero(8, 8);
  p.B = Mat::Zero(8, 2);
  // x1, x2: motor torque states driven by u1, u2 and loaded by disc speeds.
  p.A(0, 0) = motor_pole;
  p.A(1, 1) = motor_pole;
  p.A(0, 3) = -back_emf;
  p.A(1, 7) = -back_emf;
  p.B(0, 0) = motor_gain;
  p.B(1, 1) = motor_gain;
  // x3..x8: (angle, speed) of discs 1..3.
  const Index angle[3] = {2, 4, 6};
  const Index speed[3] = {3, 5, 7};
  for (int i = 0; i < 3; ++i) {
    p.A(angle[i], angle[i]) = 1.0;
    p.A(angle[i], speed[i]) = dt;
    p.A(speed[i], speed[i]) = 1.0 - dt * damping;
    p.A(speed[i], angle[i]) = -dt * k_ground;
  }
  for (int i = 0; i < 2; ++i) {
    const Index a = angle[i];
    const Index b = angle[i + 1];
    p.A(speed[i], a) -= dt * k_couple;
    p.A(speed[i], b) += dt * k_couple;
    p.A(speed[i + 1], b) -= dt * k_couple;
    p.A(speed[i + 1], a) += dt * k_couple;
  }
  p.A(speed[0], 0) = dt;
  p.A(speed[2], 1) = dt;

  if (full_state_output) {
    p.C = Mat::Identity(8, 8);
  } else {
    p.C = Mat::Zero(3, 8);
    p.C(0, 0) = 1.0;
    p.C(1, 1) = 1.0;
    p.C(2, angle[1]) = 1.0;
  }
  p.D = Mat::Zero(p.C.rows(), 2);
  return p;
}

Vec stack(const Mat& signal) { return Eigen::Map<const Vec>(signal.data(), signal.size()); }

Mat unstack(const Vec& stacked, Index channels) {
  if (channels == 0) return Mat::Zero(0, 0);
  if (stacked.size() % channels != 0) throw DimensionMismatch("unstack: length not divisible by channel count");
  return Eigen::Map<const Mat>(stacked.data(), channels, stacked.size() / channels);
}

}  // namespace hdeepc
