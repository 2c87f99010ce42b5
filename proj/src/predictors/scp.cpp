#include <algorithm>
#include <cmath>

#include "hdeepc/predictors.hpp"

namespace hdeepc {

namespace {

double slice_distance(const KnownSlice& a, const KnownSlice& b) {
  auto d = [](const Mat& x, const Mat& y) { return x.size() == 0 ? 0.0 : (x - y).cwiseAbs().maxCoeff(); };
  return std::max({d(a.A_k, b.A_k), d(a.A_y, b.A_y), d(a.B_k, b.B_k), d(a.C_k, b.C_k), d(a.C_y, b.C_y),
                   d(a.D_k, b.D_k), d(a.c, b.c), d(a.d, b.d)});
}

double slice_scale(const KnownSlice& a) {
  double s = 1.0;
  for (const Mat* M : {&a.A_k, &a.A_y, &a.B_k, &a.C_k, &a.C_y, &a.D_k})
    if (M->size() > 0) s = std::max(s, M->cwiseAbs().maxCoeff());
  return s;
}

Mat known_rows(const Mat& y, const std::vector<Index>& known) {
  Mat out(static_cast<Index>(known.size()), y.cols());
  for (size_t j = 0; j < known.size(); ++j) out.row(static_cast<Index>(j)) = y.row(known[j]);
  return out;
}

}  // namespace

KnownSlice linearize_known(const NonlinearKnownModel& model, const Vec& x, const Vec& y_u, const Vec& u) {
  if (model.linearize) return model.linearize(x, y_u, u);
  const Index nk = model.n_k, pu = static_cast<Index>(model.unknown_outputs.size());
  const Index pk = static_cast<Index>(model.known_outputs.size()), m = model.m;
  KnownSlice s;
  s.A_k.resize(nk, nk);
  s.A_y.resize(nk, pu);
  s.B_k.resize(nk, m);
  s.C_k.resize(pk, nk);
  s.C_y.resize(pk, pu);
  s.D_k.resize(pk, m);
  // Central differences, one argument block at a time.
  auto column = [&](int which, Index i, Vec& df, Vec& dh) {
    Vec xp = x, yp = y_u, up = u, xm = x, ym = y_u, um = u;
    double* vp = which == 0 ? &xp(i) : which == 1 ? &yp(i) : &up(i);
    double* vm = which == 0 ? &xm(i) : which == 1 ? &ym(i) : &um(i);
    const double h = 1e-6 * (1.0 + std::abs(*vp));
    *vp += h;
    *vm -= h;
    df = (model.f(xp, yp, up) - model.f(xm, ym, um)) / (2 * h);
    dh = (model.h(xp, yp, up) - model.h(xm, ym, um)) / (2 * h);
  };
  Vec df, dh;
  for (Index i = 0; i < nk; ++i) {
    column(0, i, df, dh);
    s.A_k.col(i) = df;
    s.C_k.col(i) = dh;
  }
  for (Index i = 0; i < pu; ++i) {
    column(1, i, df, dh);
    s.A_y.col(i) = df;
    s.C_y.col(i) = dh;
  }
  for (Index i = 0; i < m; ++i) {
    column(2, i, df, dh);
    s.B_k.col(i) = df;
    s.D_k.col(i) = dh;
  }
  s.c = model.f(x, y_u, u) - s.A_k * x - s.A_y * y_u - s.B_k * u;
  s.d = model.h(x, y_u, u) - s.C_k * x - s.C_y * y_u - s.D_k * u;
  return s;
}

NonlinearKnownModel bess_known_model(const BessPlant& plant) {
  NonlinearKnownModel km;
  km.unknown_outputs = {0};
  km.known_outputs = {1};
  km.n_k = 1;
  km.m = 2;
  const double gain = -1e-3 / plant.tau_q;
  km.f = [plant, gain](const Vec& x, const Vec&, const Vec& u) {
    return Vec::Constant(1, x(0) + gain * plant.alpha(u(0)) * u(0));
  };
  km.h = [](const Vec& x, const Vec&, const Vec&) { return Vec::Constant(1, x(0)); };
  km.linearize = [plant, gain](const Vec&, const Vec&, const Vec& u) {
    KnownSlice s;
    s.A_k = Mat::Identity(1, 1);
    s.A_y = Mat::Zero(1, 1);
    s.B_k = Mat::Zero(1, 2);
    s.B_k(0, 0) = gain * plant.alpha(u(0));
    s.C_k = Mat::Identity(1, 1);
    s.C_y = Mat::Zero(1, 1);
    s.D_k = Mat::Zero(1, 2);
    s.c = Vec::Zero(1);
    s.d = Vec::Zero(1);
    return s;
  };
  return km;
}

double known_dynamics_residual(const NonlinearKnownModel& model, const ScpTrajectory& traj, const Mat& y_k) {
  double worst = 0.0;
  const Index N = traj.u.cols();
  for (Index k = 0; k < N; ++k) {
    const Vec x = traj.x_k.col(k), yu = traj.y_u.col(k), u = traj.u.col(k);
    if (model.n_k > 0) worst = std::max(worst, (traj.x_k.col(k + 1) - model.f(x, yu, u)).cwiseAbs().maxCoeff());
    if (y_k.rows() > 0) worst = std::max(worst, (y_k.col(k) - model.h(x, yu, u)).cwiseAbs().maxCoeff());
  }
  return worst;
}

StepDecision nl_hdeepc_step(const NonlinearKnownModel& model, const HankelBlocks& blocks, const ControllerSpec& spec,
                            const InitWindow& window, const Mat& reference, const InputPins& pins,
                            const std::optional<ScpTrajectory>& initial, const QpSettings& settings) {
  const Index N = spec.N, m = model.m, nk = model.n_k;
  const Index pu = static_cast<Index>(model.unknown_outputs.size());
  const Index p = pu + static_cast<Index>(model.known_outputs.size());
  if (nk > 0 && (!window.x_kappa_hat || window.x_kappa_hat->size() != nk))
    throw DimensionMismatch("known-state estimate missing or of wrong size");

  ScpTrajectory traj;
  if (initial) {
    traj = *initial;
    if (traj.u.rows() != m || traj.u.cols() != N || traj.y_u.rows() != pu || traj.y_u.cols() != N ||
        traj.x_k.rows() != nk || traj.x_k.cols() != N + 1)
      throw DimensionMismatch("initial SCP trajectory has wrong shape");
    if (nk > 0) traj.x_k.col(0) = *window.x_kappa_hat;
  } else {
    traj.u = Mat::Zero(m, N);
    for (size_t c = 0; c < pins.channels.size(); ++c) traj.u.row(pins.channels[c]) = pins.values.row(static_cast<Index>(c));
    traj.y_u = Mat::Zero(pu, N);
    traj.x_k.resize(nk, N + 1);
    if (nk > 0) {
      traj.x_k.col(0) = *window.x_kappa_hat;
      for (Index k = 0; k < N; ++k)
        traj.x_k.col(k + 1) = model.f(traj.x_k.col(k), traj.y_u.col(k), traj.u.col(k));
    }
  }

  if (spec.scp.max_iters <= 0) {
    StepDecision d;
    d.u_star = traj.u;
    d.y_u_pred = traj.y_u;
    d.x_k_pred = traj.x_k;
    d.y_pred.resize(p, N);
    for (Index k = 0; k < N; ++k) {
      const Vec yk = model.h(traj.x_k.col(k), traj.y_u.col(k), traj.u.col(k));
      for (Index j = 0; j < pu; ++j) d.y_pred(model.unknown_outputs[static_cast<size_t>(j)], k) = traj.y_u(j, k);
      for (Index j = 0; j < yk.size(); ++j) d.y_pred(model.known_outputs[static_cast<size_t>(j)], k) = yk(j);
    }
    d.objective = tracking_cost(d.y_pred, d.u_star, reference, spec.Q, spec.R);
    d.status = QpStatus::MaxIterations;
    d.converged = false;
    d.scp_iterations = 0;
    return d;
  }

  KnownDynamics kd;
  kd.unknown_outputs = model.unknown_outputs;
  kd.known_outputs = model.known_outputs;
  kd.n_k = nk;
  kd.m = m;

  std::optional<StepDecision> best, last;
  double best_residual = kInf;
  bool converged = false;
  int iterations = 0;
  std::vector<KnownSlice> previous;
  for (int it = 0; it < spec.scp.max_iters; ++it) {
    kd.slices.clear();
    for (Index k = 0; k < N; ++k)
      kd.slices.push_back(linearize_known(model, traj.x_k.col(k), traj.y_u.col(k), traj.u.col(k)));
    if (!previous.empty()) {
      double change = 0.0, scale = 1.0;
      for (Index k = 0; k < N; ++k) {
        change = std::max(change, slice_distance(kd.slices[static_cast<size_t>(k)], previous[static_cast<size_t>(k)]));
        scale = std::max(scale, slice_scale(previous[static_cast<size_t>(k)]));
      }
      if (change <= 1e-14 * scale) {
        converged = true;
        break;
      }
    }
    Mat lo, hi;
    const bool trust = std::isfinite(spec.scp.trust_region) && (initial || it > 0);
    if (trust) {
      lo = traj.u.array() - spec.scp.trust_region;
      hi = traj.u.array() + spec.scp.trust_region;
    }
    const BuiltQp built = build_hybrid(kd, &blocks, spec, window, reference, pins, trust ? &lo : nullptr,
                                       trust ? &hi : nullptr);
    StepDecision d = solve_step(built, settings);
    ++iterations;
    if (d.status == QpStatus::PrimalInfeasible || d.status == QpStatus::DualInfeasible) {
      if (!best) {
        d.converged = false;
        d.scp_iterations = iterations;
        return d;
      }
      break;
    }
    ScpTrajectory next{d.x_k_pred, d.y_u_pred, d.u_star};
    const double residual = known_dynamics_residual(model, next, known_rows(d.y_pred, model.known_outputs));
    const double du = (next.u - traj.u).cwiseAbs().maxCoeff();
    if (residual < best_residual) {
      best_residual = residual;
      best = d;
    }
    last = d;
    previous = kd.slices;
    traj = std::move(next);
    if (du <= spec.scp.tol) {
      converged = true;
      break;
    }
  }
  StepDecision out = converged ? *last : *best;
  out.converged = converged;
  out.scp_iterations = iterations;
  return out;
}

}  // namespace hdeepc
