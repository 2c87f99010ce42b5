#include <chrono>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>

#include "hdeepc/kernels.hpp"
#include "hdeepc/looprunner.hpp"

namespace hdeepc {

namespace {

// Rolling window of the last T_ini samples, stored oldest first.
class Window {
 public:
  Window(Index channels, Index length) : data_(Mat::Zero(channels, length)) {}
  void push(const Vec& v) {
    const Index L = data_.cols();
    if (L > 1) data_.leftCols(L - 1) = Mat(data_.rightCols(L - 1));
    if (L > 0) data_.col(L - 1) = v;
  }
  [[nodiscard]] Vec stacked() const { return stack(data_); }

 private:
  Mat data_;
};

Vec pinned_values(const LoopConfig& loop, Index column) {
  Vec v(static_cast<Index>(loop.disturbance_channels.size()));
  for (Index c = 0; c < v.size(); ++c) {
    if (column >= loop.disturbance.cols())
      throw DimensionMismatch("disturbance record too short for step " + std::to_string(column));
    v(c) = loop.disturbance(c, column);
  }
  return v;
}

void apply_pins(const LoopConfig& loop, Vec& u, Index column) {
  const Vec v = pinned_values(loop, column);
  for (size_t c = 0; c < loop.disturbance_channels.size(); ++c) u(loop.disturbance_channels[c]) = v(static_cast<Index>(c));
}

}  // namespace

double ClosedLoopResult::mean_solve_time() const {
  if (solve_times.empty()) return 0.0;
  return std::accumulate(solve_times.begin(), solve_times.end(), 0.0) / static_cast<double>(solve_times.size());
}

double ClosedLoopResult::mean_stage_cost() const {
  if (stage_costs.empty()) return 0.0;
  return total_cost / static_cast<double>(stage_costs.size());
}

double evaluate_cost(const Mat& y, const Mat& u, const Mat& reference, const Mat& Q, const Mat& R) {
  return tracking_cost(y, u, reference, Q, R);
}

ClosedLoopResult run_receding_horizon(const TruthPlant& plant, Controller& controller, const LoopConfig& loop) {
  const ControllerSpec& spec = controller.spec();
  const Index n = state_dim(plant), m = input_dim(plant), p = output_dim(plant);
  const Index N = spec.N, T_ini = spec.T_ini;
  if (loop.s < 1 || loop.s > std::max<Index>(1, N - 1) || loop.s > N)
    throw Error("inputs applied per solve must lie in [1, N-1]");
  if (loop.x0.size() != n) throw DimensionMismatch("initial state has wrong size");
  if (!loop.reference) throw Error("loop reference is not set");
  if (loop.Q.rows() != p || loop.R.rows() != m) throw DimensionMismatch("stage-cost weights");
  for (Index c : loop.disturbance_channels)
    if (c < 0 || c >= m) throw IndexOutOfRange("disturbance channel " + std::to_string(c));

  const bool use_observer = loop.state_source == StateSource::Observer && controller.known_states() > 0;
  if (use_observer) {
    if (!loop.observer || !loop.observer_model) throw Error("observer state source needs an observer and its model");
    loop.observer->validate(*loop.observer_model);
  }

  ClosedLoopResult res;
  NoiseSource out_noise(loop.output_noise, p);
  NoiseSource state_noise(loop.state_noise, n);
  Window u_win(m, T_ini), y_win(p, T_ini);
  Vec x = loop.x0;
  std::int64_t clock = loop.t0;

  // Warm fill.
  const Mat excitation = random_input(m, T_ini, loop.warm_fill.seed, loop.warm_fill.amplitude);
  res.warm_u.resize(m, T_ini);
  res.warm_y.resize(p, T_ini);
  for (Index j = 0; j < T_ini; ++j) {
    Vec u = excitation.col(j);
    apply_pins(loop, u, j);
    StepResult r = simulate_step(plant, x, u, clock++);
    const Vec y = r.y + out_noise.draw();
    res.warm_u.col(j) = u;
    res.warm_y.col(j) = y;
    u_win.push(u);
    y_win.push(y);
    x = std::move(r.x_next);
  }

  std::optional<Vec> x_kappa_hat;
  if (use_observer) x_kappa_hat = loop.observer->x0;

  res.u_applied.resize(m, loop.steps);
  res.y_measured.resize(p, loop.steps);
  res.x_true.resize(n, loop.steps + 1);
  res.reference.resize(p, loop.steps);
  if (use_observer) res.x_kappa_hat.resize(loop.observer_model->n_k(), loop.steps);
  res.x_true.col(0) = x;

  Mat plan;
  bool plan_valid = false;
  Vec last_u = res.warm_u.cols() > 0 ? Vec(res.warm_u.col(T_ini - 1)) : Vec::Zero(m);
  for (Index t = 0; t < loop.steps; ++t) {
    if (t % loop.s == 0) {
      StepContext ctx;
      ctx.t = clock;
      ctx.u_ini = u_win.stacked();
      ctx.y_ini = y_win.stacked();
      ctx.x_hat = x + state_noise.draw();
      ctx.x_kappa_hat = x_kappa_hat;
      ctx.reference.resize(p, N);
      for (Index k = 0; k < N; ++k) ctx.reference.col(k) = loop.reference(t + k);
      if (!loop.disturbance_channels.empty()) {
        ctx.pins.channels = loop.disturbance_channels;
        ctx.pins.values.resize(static_cast<Index>(loop.disturbance_channels.size()), N);
        for (Index k = 0; k < N; ++k) ctx.pins.values.col(k) = pinned_values(loop, T_ini + t + k);
      }
      ctx.model = model_at(plant, clock);

      const auto start = std::chrono::steady_clock::now();
      const StepDecision d = controller.decide(ctx);
      const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      res.solve_times.push_back(elapsed);
      res.statuses.push_back(d.status);
      res.objectives.push_back(d.objective);
      res.equality_rows.push_back(controller.last_equality_rows());
      if (!d.converged) ++res.scp_not_converged;
      const bool failed = d.status == QpStatus::PrimalInfeasible || d.status == QpStatus::DualInfeasible;
      if (failed && loop.policy == FailurePolicy::Abort)
        throw SolverAbort("solver reported " + std::string(to_string(d.status)) + " at step " + std::to_string(t));
      plan_valid = !failed;
      if (plan_valid) plan = d.u_star;
      std::vector<Vec> applied;
      for (Index k = 0; k < loop.s && k < N; ++k) applied.push_back(plan_valid ? Vec(plan.col(k)) : last_u);
      res.plans.push_back(std::move(applied));
    }
    Vec u = plan_valid ? Vec(plan.col(t % loop.s)) : last_u;
    apply_pins(loop, u, T_ini + t);

    StepResult r = simulate_step(plant, x, u, clock++);
    const Vec y = r.y + out_noise.draw();
    const Vec ref = loop.reference(t);
    const Vec e = y - ref;
    const double stage = e.dot(loop.Q * e) + u.dot(loop.R * u);
    res.stage_costs.push_back(stage);
    res.total_cost += stage;
    res.u_applied.col(t) = u;
    res.y_measured.col(t) = y;
    res.reference.col(t) = ref;

    if (use_observer) {
      const KnownModel& km = *loop.observer_model;
      res.x_kappa_hat.col(t) = *x_kappa_hat;
      Vec yu(km.p_u()), yk(km.p_k());
      for (Index j = 0; j < km.p_u(); ++j) yu(j) = y(km.unknown_outputs[static_cast<size_t>(j)]);
      for (Index j = 0; j < km.p_k(); ++j) yk(j) = y(km.known_outputs[static_cast<size_t>(j)]);
      x_kappa_hat = observer_step(*loop.observer, km, *x_kappa_hat, yu, yk, u);
    }

    u_win.push(u);
    y_win.push(y);
    last_u = u;
    x = std::move(r.x_next);
    res.x_true.col(t + 1) = x;
  }
  return res;
}

void write_result_csv(std::ostream& os, const ClosedLoopResult& r) {
  const Index m = r.u_applied.rows(), p = r.y_measured.rows();
  os << "t";
  for (Index i = 0; i < m; ++i) os << ",u" << i + 1;
  for (Index i = 0; i < p; ++i) os << ",y" << i + 1;
  for (Index i = 0; i < p; ++i) os << ",r" << i + 1;
  os << ",stage_cost,solve_time,status\n";
  os << std::setprecision(std::numeric_limits<double>::max_digits10);
  const size_t per_solve = r.plans.empty() ? 1 : std::max<size_t>(1, r.plans.front().size());
  for (Index t = 0; t < r.u_applied.cols(); ++t) {
    os << t;
    for (Index i = 0; i < m; ++i) os << "," << r.u_applied(i, t);
    for (Index i = 0; i < p; ++i) os << "," << r.y_measured(i, t);
    for (Index i = 0; i < p; ++i) os << "," << r.reference(i, t);
    const size_t solve = static_cast<size_t>(t) / per_solve;
    const bool solved_here = static_cast<size_t>(t) % per_solve == 0 && solve < r.solve_times.size();
    os << "," << r.stage_costs[static_cast<size_t>(t)] << "," << (solved_here ? r.solve_times[solve] : 0.0) << ","
       << (solve < r.statuses.size() ? to_string(r.statuses[solve]) : "none") << "\n";
  }
}

std::vector<EquivalenceRow> equivalence_check(const LtiPlant& plant, const ControllerSpec& spec,
                                              const std::vector<SplitChoice>& splits,
                                              const EquivalenceSettings& settings) {
  plant.validate();
  const Index n = plant.n(), m = plant.m(), p = plant.p();
  const Index order = spec.T_ini + spec.N + n;
  const Index T = settings.T > 0 ? settings.T : (m + 1) * order + 10;
  const CollectedData data =
      collect_data(plant, Vec::Zero(n), T, ExcitationSpec{order, Vec::Ones(1), settings.seed}, NoiseSpec{});

  LoopConfig loop;
  loop.steps = settings.steps;
  loop.s = 1;
  std::mt19937_64 rng(settings.seed ^ 0x5eedull);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  loop.x0.resize(n);
  for (Index i = 0; i < n; ++i) loop.x0(i) = unit(rng);
  Vec r(p);
  for (Index i = 0; i < p; ++i) r(i) = 0.5 * unit(rng);
  loop.reference = [r](Index) { return r; };
  loop.warm_fill = ExcitationSpec{1, Vec::Ones(1), settings.seed + 17};
  loop.Q = spec.Q;
  loop.R = spec.R;
  loop.t0 = T;

  ControllerSpec mpc_spec = spec;
  mpc_spec.variant = Variant::MPC;
  MpcController mpc(plant, mpc_spec);
  const ClosedLoopResult ref_run = run_receding_horizon(plant, mpc, loop);

  ControllerSpec deepc_spec = spec;
  deepc_spec.variant = Variant::DeePC;
  DeepcController deepc(partition_data(data.log, spec.T_ini, spec.N), deepc_spec);
  const ClosedLoopResult deepc_run = run_receding_horizon(plant, deepc, loop);
  const double d_vs_m = (deepc_run.u_applied - ref_run.u_applied).cwiseAbs().maxCoeff();

  std::vector<EquivalenceRow> rows(splits.size());
  auto job = [&](std::size_t i) {
    EquivalenceRow& row = rows[i];
    row.split = splits[i];
    row.deepc_vs_mpc = d_vs_m;
    SplitResult split;
    try {
      split = split_with_fallback(plant, row.split.n_kappa, row.split.kappa_outputs);
    } catch (const TransformInfeasible& e) {
      row.coupling = CheckStatus::Fail;
      row.coupling_residual = e.residual();
      row.note = "coupling transform does not exist; equivalence not asserted";
      return;
    }
    row.moved_outputs = split.moved_outputs;
    row.coupling = split.pp.n_k() + split.pp.p_k() == 0 ? CheckStatus::NotApplicable : CheckStatus::Pass;
    ControllerSpec h_spec = spec;
    h_spec.variant = Variant::HDeePC;
    HankelBlocks blocks =
        partition_data(restrict_outputs(data.log, split.pp.unknown_outputs), spec.T_ini, spec.N);
    HdeepcController h(plant, row.split.n_kappa, row.split.kappa_outputs, std::move(blocks), h_spec);
    const ClosedLoopResult h_run = run_receding_horizon(plant, h, loop);
    row.hdeepc_vs_mpc = (h_run.u_applied - ref_run.u_applied).cwiseAbs().maxCoeff();
    row.hdeepc_vs_deepc = (h_run.u_applied - deepc_run.u_applied).cwiseAbs().maxCoeff();
    row.pass = row.hdeepc_vs_mpc <= settings.tol && row.deepc_vs_mpc <= settings.tol;
  };
  if (settings.parallel)
    kernels::for_each_omp(splits.size(), job);
  else
    kernels::for_each_serial(splits.size(), job);
  return rows;
}

}  // namespace hdeepc
