#include "hdeepc/splitmodel.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace hdeepc {

namespace {

Mat select_rows(const Mat& M, const std::vector<Index>& rows) {
  Mat out(static_cast<Index>(rows.size()), M.cols());
  for (size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Index>(i)) = M.row(rows[i]);
  return out;
}

// Solves X M = B row by row in the least-squares sense and returns the
// largest entrywise residual.
double solve_rows(const Mat& M, const Mat& B, Mat& X) {
  X = Mat::Zero(B.rows(), M.rows());
  double worst = 0.0;
  if (M.rows() == 0) return B.size() == 0 ? 0.0 : B.cwiseAbs().maxCoeff();
  const Mat Mt = M.transpose();
  for (Index i = 0; i < B.rows(); ++i) {
    const Vec b = B.row(i).transpose();
    const Vec x = least_squares_solve(Mt, b);
    X.row(i) = x.transpose();
    if (b.size() > 0) worst = std::max(worst, (Mt * x - b).cwiseAbs().maxCoeff());
  }
  return worst;
}

std::vector<double> row_residuals(const Mat& M, const Mat& B, const Mat& X) {
  std::vector<double> out(static_cast<size_t>(B.rows()), 0.0);
  for (Index i = 0; i < B.rows(); ++i) {
    const Vec r = M.rows() > 0 ? Vec(M.transpose() * X.row(i).transpose() - B.row(i).transpose())
                               : Vec(-B.row(i).transpose());
    out[static_cast<size_t>(i)] = r.size() > 0 ? r.cwiseAbs().maxCoeff() : 0.0;
  }
  return out;
}

Mat coupling_matrix(const PartitionedPlant& pp) {
  Mat M(pp.p_u(), pp.n_u() + pp.n_k() + pp.m());
  M << pp.C_u, pp.C_f, pp.D_u;
  return M;
}

Mat coupling_target(const Mat& coupled, Index n_k, Index m) {
  Mat B = Mat::Zero(coupled.rows(), coupled.cols() + n_k + m);
  B.leftCols(coupled.cols()) = coupled;
  return B;
}

}  // namespace

PartitionedPlant split_plant(const LtiPlant& plant, Index n_kappa, const std::vector<Index>& kappa_outputs) {
  plant.validate();
  const Index n = plant.n();
  const Index p = plant.p();
  if (n_kappa < 0 || n_kappa > n)
    throw IndexOutOfRange("known state count " + std::to_string(n_kappa) + " outside [0, " + std::to_string(n) + "]");
  std::vector<bool> known(static_cast<size_t>(p), false);
  for (Index o : kappa_outputs) {
    if (o < 0 || o >= p) throw IndexOutOfRange("known output index " + std::to_string(o));
    if (known[static_cast<size_t>(o)]) throw IndexOutOfRange("known output index repeated: " + std::to_string(o));
    known[static_cast<size_t>(o)] = true;
  }
  PartitionedPlant pp;
  for (Index o = 0; o < p; ++o) (known[static_cast<size_t>(o)] ? pp.known_outputs : pp.unknown_outputs).push_back(o);

  const Index nu = n - n_kappa;
  pp.A_u = plant.A.topLeftCorner(nu, nu);
  pp.A_f = plant.A.topRightCorner(nu, n_kappa);
  pp.A_c = plant.A.bottomLeftCorner(n_kappa, nu);
  pp.A_k = plant.A.bottomRightCorner(n_kappa, n_kappa);
  pp.B_u = plant.B.topRows(nu);
  pp.B_k = plant.B.bottomRows(n_kappa);
  const Mat Cu_rows = select_rows(plant.C, pp.unknown_outputs);
  const Mat Ck_rows = select_rows(plant.C, pp.known_outputs);
  pp.C_u = Cu_rows.leftCols(nu);
  pp.C_f = Cu_rows.rightCols(n_kappa);
  pp.C_c = Ck_rows.leftCols(nu);
  pp.C_k = Ck_rows.rightCols(n_kappa);
  pp.D_u = select_rows(plant.D, pp.unknown_outputs);
  pp.D_k = select_rows(plant.D, pp.known_outputs);
  return pp;
}

LtiPlant compose(const PartitionedPlant& pp) {
  const Index nu = pp.n_u(), nk = pp.n_k(), n = nu + nk, m = pp.m();
  const Index p = pp.p_u() + pp.p_k();
  LtiPlant out;
  out.A.resize(n, n);
  out.A << pp.A_u, pp.A_f, pp.A_c, pp.A_k;
  out.B.resize(n, m);
  out.B << pp.B_u, pp.B_k;
  out.C.resize(p, n);
  out.D.resize(p, m);
  for (Index i = 0; i < pp.p_u(); ++i) {
    const Index o = pp.unknown_outputs[static_cast<size_t>(i)];
    out.C.row(o) << pp.C_u.row(i), pp.C_f.row(i);
    out.D.row(o) = pp.D_u.row(i);
  }
  for (Index i = 0; i < pp.p_k(); ++i) {
    const Index o = pp.known_outputs[static_cast<size_t>(i)];
    out.C.row(o) << pp.C_c.row(i), pp.C_k.row(i);
    out.D.row(o) = pp.D_k.row(i);
  }
  return out;
}

TransformPair solve_transform(const PartitionedPlant& pp) {
  const Mat M = coupling_matrix(pp);
  TransformPair tp;
  const double ra = solve_rows(M, coupling_target(pp.A_c, pp.n_k(), pp.m()), tp.A_y);
  const double limit_a = 1e-6 * (1.0 + pp.A_c.norm());
  if (ra > limit_a)
    throw TransformInfeasible("no A_y with A_c = A_y C_u, A_y C_f = 0, A_y D_u = 0 (residual " +
                                  std::to_string(ra) + ")",
                              ra);
  const double rc = solve_rows(M, coupling_target(pp.C_c, pp.n_k(), pp.m()), tp.C_y);
  const double limit_c = 1e-6 * (1.0 + pp.C_c.norm());
  if (rc > limit_c)
    throw TransformInfeasible("no C_y with C_c = C_y C_u, C_y C_f = 0, C_y D_u = 0 (residual " +
                                  std::to_string(rc) + ")",
                              rc);
  return tp;
}

KnownModel known_model(const PartitionedPlant& pp, const TransformPair& tp) {
  if (tp.A_y.rows() != pp.n_k() || tp.A_y.cols() != pp.p_u() || tp.C_y.rows() != pp.p_k() ||
      tp.C_y.cols() != pp.p_u())
    throw MissingTransform("transform pair does not match the partition");
  return {pp.A_k, pp.B_k, pp.C_k, pp.D_k, tp.A_y, tp.C_y, pp.unknown_outputs, pp.known_outputs};
}

SplitResult split_with_fallback(const LtiPlant& plant, Index n_kappa, const std::vector<Index>& kappa_outputs) {
  SplitResult out;
  std::vector<Index> known = kappa_outputs;
  while (true) {
    out.pp = split_plant(plant, n_kappa, known);
    const Mat M = coupling_matrix(out.pp);
    const Mat target = coupling_target(out.pp.C_c, out.pp.n_k(), out.pp.m());
    Mat Cy;
    solve_rows(M, target, Cy);
    const std::vector<double> res = row_residuals(M, target, Cy);
    const double limit = 1e-6 * (1.0 + out.pp.C_c.norm());
    std::vector<Index> keep;
    bool moved = false;
    for (Index i = 0; i < out.pp.p_k(); ++i) {
      const Index o = out.pp.known_outputs[static_cast<size_t>(i)];
      if (res[static_cast<size_t>(i)] > limit) {
        out.moved_outputs.push_back(o);
        moved = true;
      } else {
        keep.push_back(o);
      }
    }
    if (!moved) break;
    known = keep;
  }
  std::sort(out.moved_outputs.begin(), out.moved_outputs.end());
  out.tp = solve_transform(out.pp);
  return out;
}

std::string to_string(CheckStatus s) {
  switch (s) {
    case CheckStatus::Pass: return "pass";
    case CheckStatus::Fail: return "fail";
    case CheckStatus::NotApplicable: return "not applicable";
  }
  return "?";
}

bool AssumptionReport::all_pass() const {
  for (const AssumptionCheck* c : {&coupling, &excitation, &initial_state})
    if (c->status == CheckStatus::Fail) return false;
  return true;
}

AssumptionReport validate_assumptions(const std::optional<PartitionedPlant>& pp, const std::optional<TransformPair>& tp,
                                      const std::optional<Mat>& data_inputs, Index n, Index T_ini, Index N,
                                      bool state_estimate_available) {
  AssumptionReport rep;
  if (!pp || pp->n_k() + pp->p_k() == 0) {
    rep.coupling = {CheckStatus::NotApplicable, 0.0, "no known dynamics"};
  } else {
    const Mat M = coupling_matrix(*pp);
    Mat Ay, Cy;
    if (tp) {
      Ay = tp->A_y;
      Cy = tp->C_y;
    } else {
      solve_rows(M, coupling_target(pp->A_c, pp->n_k(), pp->m()), Ay);
      solve_rows(M, coupling_target(pp->C_c, pp->n_k(), pp->m()), Cy);
    }
    double worst = 0.0;
    for (double r : row_residuals(M, coupling_target(pp->A_c, pp->n_k(), pp->m()), Ay)) worst = std::max(worst, r);
    double worst_c = 0.0;
    for (double r : row_residuals(M, coupling_target(pp->C_c, pp->n_k(), pp->m()), Cy)) worst_c = std::max(worst_c, r);
    const bool ok = worst <= 1e-6 * (1.0 + pp->A_c.norm()) && worst_c <= 1e-6 * (1.0 + pp->C_c.norm());
    rep.coupling = {ok ? CheckStatus::Pass : CheckStatus::Fail, std::max(worst, worst_c),
                    ok ? "coupling transform exists" : "coupling equations have no exact solution"};
  }

  const bool data_needed = !pp || pp->p_u() > 0;
  if (!data_needed) {
    rep.excitation = {CheckStatus::NotApplicable, 0.0, "no data-driven part"};
  } else if (!data_inputs) {
    rep.excitation = {CheckStatus::Fail, 0.0, "no data supplied"};
  } else {
    const Index order = T_ini + N + n;
    rep.required_rank = data_inputs->rows() * order;
    if (data_inputs->cols() < order) {
      rep.excitation = {CheckStatus::Fail, 0.0,
                        "data length " + std::to_string(data_inputs->cols()) + " below excitation order " +
                            std::to_string(order)};
    } else {
      const PeCheck pe = check_pe(*data_inputs, order);
      rep.achieved_rank = pe.rank;
      rep.excitation = {pe.exciting ? CheckStatus::Pass : CheckStatus::Fail, 0.0,
                        "rank " + std::to_string(pe.rank) + " of " + std::to_string(pe.required) + " at order " +
                            std::to_string(order)};
    }
  }

  if (!pp || pp->n_k() == 0)
    rep.initial_state = {CheckStatus::NotApplicable, 0.0, "no known states"};
  else
    rep.initial_state = {state_estimate_available ? CheckStatus::Pass : CheckStatus::Fail, 0.0,
                         state_estimate_available ? "known-state estimate supplied" : "no known-state estimate"};
  return rep;
}

LtiPlant random_coupled_plant(Index n, Index m, Index p, Index n_kappa, Index p_kappa, std::uint64_t seed) {
  if (n_kappa < 0 || n_kappa > n || p_kappa < 0 || p_kappa > p || m < 1 || n < 1)
    throw IndexOutOfRange("random_coupled_plant: bad dimensions");
  const Index nu = n - n_kappa;
  const Index pu = p - p_kappa;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> radius(0.5, 0.95);
  auto randn = [&](Index r, Index c) {
    Mat M(r, c);
    for (Index i = 0; i < M.size(); ++i) M.data()[i] = normal(rng);
    return M;
  };
  for (int attempt = 0; attempt < 100; ++attempt) {
    PartitionedPlant pp;
    pp.A_u = randn(nu, nu);
    pp.A_f = randn(nu, n_kappa);
    pp.A_k = randn(n_kappa, n_kappa);
    pp.B_u = randn(nu, m);
    pp.B_k = randn(n_kappa, m);
    pp.C_u = randn(pu, nu);
    pp.C_f = Mat::Zero(pu, n_kappa);
    pp.D_u = Mat::Zero(pu, m);
    const Mat Ay = randn(n_kappa, pu);
    const Mat Cy = randn(p_kappa, pu);
    pp.A_c = Ay * pp.C_u;
    pp.C_c = Cy * pp.C_u;
    pp.C_k = randn(p_kappa, n_kappa);
    pp.D_k = randn(p_kappa, m);
    for (Index o = 0; o < pu; ++o) pp.unknown_outputs.push_back(o);
    for (Index o = pu; o < p; ++o) pp.known_outputs.push_back(o);
    LtiPlant plant = compose(pp);
    const double rho = spectral_radius(plant.A);
    if (rho < 1e-6) continue;
    plant.A *= radius(rng) / rho;
    if (!is_controllable(plant.A, plant.B)) continue;
    return plant;
  }
  throw Error("random_coupled_plant: no controllable plant after 100 draws");
}

}  // namespace hdeepc
