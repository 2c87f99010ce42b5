#include <chrono>

#include "hdeepc/looprunner.hpp"

namespace hdeepc {

namespace {

// Keeps only the listed channels of a stacked (channels-per-sample) vector.
Vec select_channels(const Vec& stacked, Index channels, const std::vector<Index>& keep) {
  const Index samples = channels == 0 ? 0 : stacked.size() / channels;
  Vec out(static_cast<Index>(keep.size()) * samples);
  for (Index t = 0; t < samples; ++t)
    for (size_t j = 0; j < keep.size(); ++j)
      out(t * static_cast<Index>(keep.size()) + static_cast<Index>(j)) = stacked(t * channels + keep[j]);
  return out;
}

Vec known_state_estimate(const StepContext& ctx, Index n_k) {
  if (ctx.x_kappa_hat) return *ctx.x_kappa_hat;
  if (ctx.x_hat.size() < n_k) throw DimensionMismatch("state estimate shorter than the known-state count");
  return ctx.x_hat.tail(n_k);
}

}  // namespace

MpcController::MpcController(LtiPlant model, ControllerSpec spec, bool follow_plant)
    : model_(std::move(model)), spec_(std::move(spec)), follow_plant_(follow_plant) {
  model_.validate();
  spec_.validate(model_.m(), model_.p());
}

StepDecision MpcController::decide(const StepContext& ctx) {
  const LtiPlant& model = follow_plant_ && ctx.model ? *ctx.model : model_;
  const BuiltQp built = build_mpc(model, spec_, ctx.x_hat, ctx.reference, ctx.pins);
  last_equality_rows_ = built.equality_rows();
  return solve_step(built, qp_settings);
}

DeepcController::DeepcController(HankelBlocks blocks, ControllerSpec spec)
    : blocks_(std::move(blocks)), spec_(std::move(spec)) {
  spec_.validate(blocks_.m, blocks_.p_y);
}

StepDecision DeepcController::decide(const StepContext& ctx) {
  InitWindow w{ctx.u_ini, ctx.y_ini, std::nullopt};
  if (spec_.variant == Variant::DeePC_Condensed) {
    const BuiltQp built = build_condensed(blocks_, nullptr, spec_, w, ctx.reference, ctx.pins);
    last_equality_rows_ = built.equality_rows();
    return solve_step(built, qp_settings);
  }
  const BuiltQp built = build_deepc(blocks_, spec_, w, ctx.reference, ctx.pins);
  last_equality_rows_ = built.equality_rows();
  return solve_step(built, qp_settings);
}

HdeepcController::HdeepcController(const LtiPlant& model, Index n_kappa, std::vector<Index> kappa_outputs,
                                   HankelBlocks blocks, ControllerSpec spec, bool follow_plant)
    : n_kappa_(n_kappa),
      kappa_outputs_(std::move(kappa_outputs)),
      blocks_(std::move(blocks)),
      spec_(std::move(spec)),
      follow_plant_(follow_plant) {
  SplitResult split = split_with_fallback(model, n_kappa_, kappa_outputs_);
  known_ = hdeepc::known_model(split.pp, split.tp);
  moved_ = split.moved_outputs;
  kappa_outputs_ = split.pp.known_outputs;
  if (blocks_.p_y != known_.p_u())
    throw DimensionMismatch("hybrid controller data must hold exactly the unknown outputs (" +
                            std::to_string(known_.p_u()) + " channels)");
  spec_.validate(model.m(), model.p());
}

StepDecision HdeepcController::decide(const StepContext& ctx) {
  if (follow_plant_ && ctx.model) {
    const PartitionedPlant pp = split_plant(*ctx.model, n_kappa_, kappa_outputs_);
    known_ = hdeepc::known_model(pp, solve_transform(pp));
  }
  const Index p = known_.p();
  InitWindow w{ctx.u_ini, select_channels(ctx.y_ini, p, known_.unknown_outputs),
               known_state_estimate(ctx, known_.n_k())};
  const KnownDynamics kd = lti_known_dynamics(known_, blocks_.m, spec_.N);
  const BuiltQp built = spec_.variant == Variant::HDeePC_Condensed
                            ? build_condensed(blocks_, &kd, spec_, w, ctx.reference, ctx.pins)
                            : build_hybrid(kd, known_.p_u() > 0 ? &blocks_ : nullptr, spec_, w, ctx.reference,
                                           ctx.pins);
  last_equality_rows_ = built.equality_rows();
  return solve_step(built, qp_settings);
}

NlHdeepcController::NlHdeepcController(NonlinearKnownModel model, HankelBlocks blocks, ControllerSpec spec)
    : model_(std::move(model)), blocks_(std::move(blocks)), spec_(std::move(spec)) {
  spec_.validate(model_.m, static_cast<Index>(model_.unknown_outputs.size() + model_.known_outputs.size()));
}

StepDecision NlHdeepcController::decide(const StepContext& ctx) {
  const Index p = static_cast<Index>(model_.unknown_outputs.size() + model_.known_outputs.size());
  InitWindow w{ctx.u_ini, select_channels(ctx.y_ini, p, model_.unknown_outputs),
               known_state_estimate(ctx, model_.n_k)};
  std::optional<ScpTrajectory> init;
  if (previous_) {
    // Shift the previous plan by one step and repeat its last column.
    ScpTrajectory t = *previous_;
    const Index N = spec_.N;
    auto shift = [](Mat& M) {
      if (M.cols() < 2) return;
      const Index c = M.cols();
      M.leftCols(c - 1) = Mat(M.rightCols(c - 1));
    };
    shift(t.u);
    shift(t.y_u);
    shift(t.x_k);
    for (size_t c = 0; c < ctx.pins.channels.size(); ++c)
      t.u.row(ctx.pins.channels[c]) = ctx.pins.values.row(static_cast<Index>(c));
    if (t.u.cols() == N) init = t;
  }
  StepDecision d = nl_hdeepc_step(model_, blocks_, spec_, w, ctx.reference, ctx.pins, init, qp_settings);
  if (d.status == QpStatus::Optimal || d.status == QpStatus::MaxIterations)
    previous_ = ScpTrajectory{d.x_k_pred, d.y_u_pred, d.u_star};
  else
    previous_.reset();
  return d;
}

void ObserverSpec::validate(const KnownModel& km) const {
  if (gain.rows() != km.n_k() || gain.cols() != km.p_k())
    throw DimensionMismatch("observer gain must be n_k x p_k");
  if (x0.size() != km.n_k()) throw DimensionMismatch("observer initial estimate must have n_k entries");
  if (km.n_k() == 0) return;
  const double rho = spectral_radius(km.A_k - gain * km.C_k);
  if (!(rho < 1.0)) throw Error("observer error dynamics are not stable (spectral radius " + std::to_string(rho) + ")");
}

Vec observer_step(const ObserverSpec& obs, const KnownModel& km, const Vec& x_hat, const Vec& y_u, const Vec& y_k,
                  const Vec& u) {
  if (x_hat.size() != km.n_k() || y_u.size() != km.p_u() || y_k.size() != km.p_k() || u.size() != km.B_k.cols())
    throw DimensionMismatch("observer_step: argument sizes");
  const Vec innovation = y_k - (km.C_y * y_u + km.C_k * x_hat + km.D_k * u);
  return km.A_k * x_hat + km.A_y * y_u + km.B_k * u + obs.gain * innovation;
}

Mat design_observer_gain(const Mat& A_k, const Mat& C_k) {
  const Index n = A_k.rows(), p = C_k.rows();
  if (n == 0 || p == 0) return Mat::Zero(n, p);
  Mat P = Mat::Identity(n, n);
  Mat L = Mat::Zero(n, p);
  for (int it = 0; it < 10000; ++it) {
    const Mat S = C_k * P * C_k.transpose() + Mat::Identity(p, p);
    L = A_k * P * C_k.transpose() * S.inverse();
    const Mat next = A_k * P * A_k.transpose() + Mat::Identity(n, n) - L * S * L.transpose();
    const double change = (next - P).cwiseAbs().maxCoeff();
    P = 0.5 * (next + next.transpose());
    if (change <= 1e-12 * (1.0 + P.cwiseAbs().maxCoeff())) break;
  }
  return L;
}

}  // namespace hdeepc
