#include <exception>
#include <map>
#include <numeric>

#include "hdeepc/kernels.hpp"
#include "hdeepc/scenario.hpp"

namespace hdeepc {

using nlohmann::json;

namespace {

// Independent stream per purpose from one user seed.
std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t purpose) { return seed * 1000 + purpose; }

enum Stream : std::uint64_t { kData = 1, kNoise = 2, kWarm = 3, kDisturbance = 4, kTimeVarying = 5, kStateNoise = 6,
                              kDataNoise = 7 };

bool is_bess(const ScenarioConfig& cfg) { return cfg.plant.builtin.rfind("bess", 0) == 0; }

bool is_hybrid(Variant v) {
  return v == Variant::HDeePC || v == Variant::HDeePC_Condensed || v == Variant::NL_HDeePC;
}

BessPlant bess_of(const ScenarioConfig& cfg) {
  BessPlant b;
  b.tau_q = cfg.plant.tau_q;
  b.a = cfg.plant.a;
  b.b = cfg.plant.b;
  if (cfg.plant.builtin == "bess_1a") {
    b.mode = BessMode::Linear;
    b.eta = 1.0;
  } else if (cfg.plant.builtin == "bess_1b") {
    b.mode = BessMode::EfficiencyNonlinear;
    b.eta = cfg.plant.eta;
  } else {
    b.mode = BessMode::StrongNonlinear;
    b.eta = cfg.plant.eta;
  }
  return b;
}

ControllerSpec spec_of(const ControllerConfig& c) {
  return ControllerSpec{c.variant, c.N, c.T_ini, c.Q, c.R, c.u_box, c.y_box, c.reg, c.scp};
}

NoiseSpec noise_of(const NoiseConfig& n, std::uint64_t seed) { return NoiseSpec{n.kind, n.scale, seed}; }

struct Prepared {
  TruthPlant truth;
  LtiPlant model;
  std::optional<CollectedData> data;
  std::unique_ptr<Controller> controller;
  std::optional<SplitResult> split;
  std::vector<Index> moved_outputs;
};

std::optional<SplitResult> split_of(const ScenarioConfig& cfg, const LtiPlant& model) {
  if (!is_hybrid(cfg.controller.variant)) return std::nullopt;
  const PartitionConfig& part = cfg.partition;
  if (part.A_y) {
    SplitResult r;
    r.pp = split_plant(model, part.n_kappa, part.kappa_outputs);
    r.tp = TransformPair{*part.A_y, *part.C_y};
    if (r.tp.A_y.rows() != r.pp.A_k.rows() || r.tp.A_y.cols() != r.pp.C_u.rows())
      throw ConfigInvalid("partition.A_y", "must be n_kappa x p_u");
    if (r.tp.C_y.rows() != r.pp.C_k.rows() || r.tp.C_y.cols() != r.pp.C_u.rows())
      throw ConfigInvalid("partition.C_y", "must be p_kappa x p_u");
    return r;
  }
  return split_with_fallback(model, part.n_kappa, part.kappa_outputs);
}

CollectedData gather(const ScenarioConfig& cfg, const TruthPlant& truth, Index n, std::uint64_t seed) {
  const Index m = input_dim(truth);
  ExcitationSpec ex{cfg.controller.T_ini + cfg.controller.N + n, Vec::Constant(m, cfg.controller.data_amplitude),
                    stream_seed(seed, kData)};
  return collect_data(truth, cfg.plant.x0, cfg.controller.T, ex, noise_of(cfg.loop.noise, stream_seed(seed, kDataNoise)));
}

Prepared prepare(const ScenarioConfig& cfg, std::uint64_t seed) {
  Prepared out;
  out.truth = make_truth_plant(cfg, seed);
  out.model = make_model(cfg);
  const Index n = out.model.n();
  const ControllerSpec spec = spec_of(cfg.controller);
  const Variant v = cfg.controller.variant;
  if (v != Variant::MPC) out.data = gather(cfg, out.truth, n, seed);
  try {
    out.split = split_of(cfg, out.model);
  } catch (const TransformInfeasible& e) {
    throw ConfigInvalid("partition", e.what());
  }

  switch (v) {
    case Variant::MPC:
      out.controller = std::make_unique<MpcController>(out.model, spec, cfg.controller.follow_plant);
      break;
    case Variant::DeePC:
    case Variant::DeePC_Condensed:
      out.controller = std::make_unique<DeepcController>(
          partition_data(out.data->log, cfg.controller.T_ini, cfg.controller.N), spec);
      break;
    case Variant::HDeePC:
    case Variant::HDeePC_Condensed: {
      const HankelBlocks blocks = partition_data(restrict_outputs(out.data->log, out.split->pp.unknown_outputs),
                                                 cfg.controller.T_ini, cfg.controller.N);
      auto ctl = std::make_unique<HdeepcController>(out.model, cfg.partition.n_kappa, out.split->pp.known_outputs,
                                                    blocks, spec, cfg.controller.follow_plant);
      out.moved_outputs = out.split->moved_outputs;
      out.controller = std::move(ctl);
      break;
    }
    case Variant::NL_HDeePC: {
      const NonlinearKnownModel km = bess_known_model(bess_of(cfg));
      const HankelBlocks blocks =
          partition_data(restrict_outputs(out.data->log, km.unknown_outputs), cfg.controller.T_ini, cfg.controller.N);
      out.controller = std::make_unique<NlHdeepcController>(km, blocks, spec);
      break;
    }
  }
  out.controller->qp_settings.method = cfg.controller.solver;
  return out;
}

LoopConfig loop_of(const ScenarioConfig& cfg, const Prepared& prep, std::uint64_t seed) {
  const LoopConfigFile& l = cfg.loop;
  const Index m = prep.model.m(), n = prep.model.n();
  LoopConfig loop;
  loop.steps = l.steps;
  loop.s = l.s;
  loop.x0 = cfg.plant.x0;
  loop.t0 = prep.data ? cfg.controller.T : 0;
  loop.output_noise = noise_of(l.noise, stream_seed(seed, kNoise));
  loop.state_noise = noise_of(l.state_noise, stream_seed(seed, kStateNoise));
  const Vec r = l.reference;
  loop.reference = [r](Index) { return r; };
  loop.disturbance_channels = l.disturbance_channels;
  const Index horizon = cfg.controller.T_ini + l.steps + cfg.controller.N;
  loop.disturbance.resize(static_cast<Index>(l.disturbance_channels.size()), horizon);
  for (size_t c = 0; c < l.disturbance_channels.size(); ++c)
    loop.disturbance.row(static_cast<Index>(c)) =
        moving_average_noise(horizon, l.disturbance_sd, l.disturbance_window, stream_seed(seed, kDisturbance) + 97 * c)
            .transpose();
  loop.warm_fill = ExcitationSpec{1, Vec::Constant(m, cfg.controller.data_amplitude), stream_seed(seed, kWarm)};
  loop.state_source = l.state_source;
  loop.policy = l.policy;
  loop.Q = cfg.controller.Q;
  loop.R = cfg.controller.R;
  if (l.state_source == StateSource::Observer) {
    const auto* h = dynamic_cast<const HdeepcController*>(prep.controller.get());
    if (!h) throw ConfigInvalid("loop.state_source", "the observer needs an LTI hybrid controller");
    const KnownModel& km = h->known_model();
    ObserverSpec obs;
    obs.gain = design_observer_gain(km.A_k, km.C_k);
    obs.x0 = cfg.plant.x0.tail(km.n_k());
    if (l.observer_offset.size() == km.n_k()) obs.x0 += l.observer_offset;
    try {
      obs.validate(km);
    } catch (const Error& e) {
      throw ConfigInvalid("loop.state_source", e.what());
    }
    loop.observer = obs;
    loop.observer_model = km;
  }
  (void)n;
  return loop;
}

AssumptionReport report_of(const ScenarioConfig& cfg, const Prepared& prep) {
  std::optional<PartitionedPlant> pp;
  std::optional<TransformPair> tp;
  if (prep.split) {
    pp = prep.split->pp;
    tp = prep.split->tp;
  } else if (cfg.controller.variant == Variant::MPC) {
    // Model-based control: every state and output is known.
    std::vector<Index> all(static_cast<size_t>(prep.model.p()));
    for (Index o = 0; o < prep.model.p(); ++o) all[static_cast<size_t>(o)] = o;
    pp = split_plant(prep.model, prep.model.n(), all);
  }
  std::optional<Mat> u;
  if (prep.data) u = prep.data->log.u;
  AssumptionReport rep = validate_assumptions(pp, tp, u, prep.model.n(), cfg.controller.T_ini, cfg.controller.N, true);
  for (Index o : prep.moved_outputs)
    rep.warnings.push_back("known output " + std::to_string(o) + " has no coupling row; moved to the data-driven part");
  if (cfg.controller.variant == Variant::NL_HDeePC)
    rep.warnings.push_back("coupling checked on the linear model; the known SoC equation is nonlinear");
  return rep;
}

}  // namespace

TruthPlant make_truth_plant(const ScenarioConfig& cfg, std::uint64_t seed) {
  if (is_bess(cfg)) return bess_of(cfg);
  const LtiPlant nominal = make_model(cfg);
  if (cfg.plant.tv_sd > 0) {
    TimeVaryingPlant tv;
    tv.nominal = nominal;
    tv.perturbation_sd = cfg.plant.tv_sd;
    tv.perturbed_rows = cfg.plant.tv_rows;
    tv.rng_seed = stream_seed(seed, kTimeVarying);
    return tv;
  }
  return nominal;
}

LtiPlant make_model(const ScenarioConfig& cfg) {
  if (is_bess(cfg)) return bess_of(cfg).linear_model();
  if (cfg.plant.builtin == "coupled8") return coupled8_surrogate(cfg.plant.full_state_output);
  if (!cfg.plant.matrices) throw ConfigInvalid("plant", "matrices plant without matrices");
  return *cfg.plant.matrices;
}

ScenarioRun run_scenario(const ScenarioConfig& cfg, std::uint64_t seed) {
  Prepared prep = prepare(cfg, seed);
  const LoopConfig loop = loop_of(cfg, prep, seed);
  ScenarioRun run;
  run.report = report_of(cfg, prep);
  run.moved_outputs = prep.moved_outputs;
  run.result = run_receding_horizon(prep.truth, *prep.controller, loop);
  run.equality_rows = run.result.equality_rows.empty() ? 0 : run.result.equality_rows.front();
  if (cfg.controller.variant != Variant::MPC) {
    const Index p_u = prep.split ? static_cast<Index>(prep.split->pp.unknown_outputs.size()) : prep.model.p();
    run.condensed_equality_rows = (prep.model.m() + p_u) * cfg.controller.T_ini;
  }
  return run;
}

AssumptionReport audit_scenario(const ScenarioConfig& cfg, std::uint64_t seed, std::vector<Index>* moved_outputs) {
  try {
    const Prepared prep = prepare(cfg, seed);
    if (moved_outputs) *moved_outputs = prep.moved_outputs;
    return report_of(cfg, prep);
  } catch (const LengthTooShort&) {
  } catch (const ExcitationFailed&) {
  }
  // The data cannot be excited to the required order: report the rank the
  // same input distribution reaches instead of failing the audit.
  Prepared prep;
  prep.truth = make_truth_plant(cfg, seed);
  prep.model = make_model(cfg);
  try {
    prep.split = split_of(cfg, prep.model);
  } catch (const TransformInfeasible& e) {
    throw ConfigInvalid("partition", e.what());
  }
  if (prep.split) prep.moved_outputs = prep.split->moved_outputs;
  const Index m = prep.model.m();
  CollectedData data;
  data.log.u = random_input(m, cfg.controller.T, stream_seed(seed, kData), Vec::Constant(m, cfg.controller.data_amplitude));
  prep.data = std::move(data);
  if (moved_outputs) *moved_outputs = prep.moved_outputs;
  return report_of(cfg, prep);
}

json report_to_json(const AssumptionReport& rep) {
  auto check = [](const AssumptionCheck& c) {
    return json{{"status", to_string(c.status)}, {"residual", c.residual}, {"detail", c.detail}};
  };
  return json{{"coupling", check(rep.coupling)},
              {"excitation", check(rep.excitation)},
              {"initial_state", check(rep.initial_state)},
              {"achieved_rank", rep.achieved_rank},
              {"required_rank", rep.required_rank},
              {"warnings", rep.warnings},
              {"all_pass", rep.all_pass()}};
}

json summary_json(const ScenarioConfig& cfg, const ScenarioRun& run) {
  std::map<std::string, int> statuses;
  for (QpStatus s : run.result.statuses) ++statuses[std::string(to_string(s))];
  return json{{"scenario", cfg.name},
              {"variant", to_string(cfg.controller.variant)},
              {"total_cost", run.result.total_cost},
              {"mean_stage_cost", run.result.mean_stage_cost()},
              {"mean_solve_time", run.result.mean_solve_time()},
              {"steps", cfg.loop.steps},
              {"statuses", statuses},
              {"equality_rows", run.equality_rows},
              {"condensed_equality_rows", run.condensed_equality_rows},
              {"scp_not_converged", run.result.scp_not_converged},
              {"moved_outputs", run.moved_outputs},
              {"assumptions", report_to_json(run.report)}};
}

SweepKind sweep_from_string(const std::string& s) {
  if (s == "split") return SweepKind::Split;
  if (s == "lambda") return SweepKind::Lambda;
  if (s == "tau_q") return SweepKind::TauQ;
  throw ConfigInvalid("sweep", "must be split, lambda or tau_q");
}

std::vector<SweepRow> sweep_scenario(const ScenarioConfig& cfg, SweepKind kind, const std::vector<double>& values,
                                     std::uint64_t seed) {
  const LtiPlant model = make_model(cfg);
  std::vector<ScenarioConfig> cfgs;
  for (double value : values) {
    ScenarioConfig c = cfg;
    switch (kind) {
      case SweepKind::Split: {
        if (!is_hybrid(c.controller.variant) || c.controller.variant == Variant::NL_HDeePC)
          throw ConfigInvalid("controller.variant", "split sweeps need an LTI hybrid variant");
        if (value < 0 || value > static_cast<double>(model.n()) || value != std::floor(value))
          throw ConfigInvalid("sweep", "split values must be integers in [0, n]");
        const auto k = static_cast<Index>(value);
        c.partition.present = true;
        c.partition.n_kappa = k;
        c.partition.A_y.reset();
        c.partition.C_y.reset();
        c.partition.kappa_outputs.clear();
        for (Index o = model.p() - std::min(k, model.p()); o < model.p(); ++o) c.partition.kappa_outputs.push_back(o);
        break;
      }
      case SweepKind::Lambda:
        if (value < 0) throw ConfigInvalid("sweep", "lambda values must be nonnegative");
        c.controller.reg.lambda_g = value;
        break;
      case SweepKind::TauQ:
        if (!is_bess(c)) throw ConfigInvalid("sweep", "tau_q sweeps need a battery plant");
        if (!(value > 0)) throw ConfigInvalid("sweep", "tau_q values must be positive");
        c.plant.tau_q = value;
        break;
    }
    cfgs.push_back(std::move(c));
  }
  std::vector<SweepRow> rows(values.size());
  std::vector<std::exception_ptr> errors(values.size());
  kernels::for_each_omp(values.size(), [&](std::size_t i) {
    try {
      const ScenarioRun run = run_scenario(cfgs[i], seed);
      rows[i].value = values[i];
      rows[i].total_cost = run.result.total_cost;
      rows[i].total_solve_time =
          std::accumulate(run.result.solve_times.begin(), run.result.solve_times.end(), 0.0);
      rows[i].equality_constraint_count = run.condensed_equality_rows;
    } catch (...) {
      errors[i] = std::current_exception();
    }
  });
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return rows;
}

}  // namespace hdeepc
