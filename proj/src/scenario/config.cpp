#include <fstream>
#include <set>

#include "hdeepc/scenario.hpp"

namespace hdeepc {

using nlohmann::json;

namespace {

void reject_unknown(const json& obj, const std::string& block, const std::set<std::string>& allowed) {
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!allowed.count(it.key())) throw ConfigInvalid(block.empty() ? it.key() : block + "." + it.key(), "unknown key");
}

const json& require_object(const json& doc, const std::string& key, const std::string& path) {
  if (!doc.contains(key)) throw ConfigInvalid(path, "missing required block");
  const json& obj = doc.at(key);
  if (!obj.is_object()) throw ConfigInvalid(path, "must be an object");
  return obj;
}

double number(const json& v, const std::string& path) {
  if (!v.is_number()) throw ConfigInvalid(path, "must be a number");
  return v.get<double>();
}

Index count(const json& v, const std::string& path, Index min_value = 0) {
  if (!v.is_number_integer() && !v.is_number_unsigned()) throw ConfigInvalid(path, "must be an integer");
  const auto x = v.get<long long>();
  if (x < min_value) throw ConfigInvalid(path, "must be at least " + std::to_string(min_value));
  return static_cast<Index>(x);
}

bool boolean(const json& v, const std::string& path) {
  if (!v.is_boolean()) throw ConfigInvalid(path, "must be true or false");
  return v.get<bool>();
}

std::string text(const json& v, const std::string& path) {
  if (!v.is_string()) throw ConfigInvalid(path, "must be a string");
  return v.get<std::string>();
}

// Numeric array; null entries map to `null_value` (used for open bounds).
Vec vector_of(const json& v, const std::string& path, double null_value = std::numeric_limits<double>::quiet_NaN()) {
  if (!v.is_array()) throw ConfigInvalid(path, "must be an array of numbers");
  Vec out(static_cast<Index>(v.size()));
  for (size_t i = 0; i < v.size(); ++i) {
    if (v[i].is_null() && !std::isnan(null_value))
      out(static_cast<Index>(i)) = null_value;
    else
      out(static_cast<Index>(i)) = number(v[i], path + "[" + std::to_string(i) + "]");
  }
  return out;
}

std::vector<Index> indices_of(const json& v, const std::string& path) {
  if (!v.is_array()) throw ConfigInvalid(path, "must be an array of indices");
  std::vector<Index> out;
  for (size_t i = 0; i < v.size(); ++i) out.push_back(count(v[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

// {"rows": r, "cols": c, "data": [[...], ...]}, or a plain array read as a
// diagonal when allow_diagonal is set.
Mat matrix_of(const json& v, const std::string& path, bool allow_diagonal) {
  if (v.is_array() && allow_diagonal) {
    const Vec d = vector_of(v, path);
    return d.asDiagonal();
  }
  if (!v.is_object()) throw ConfigInvalid(path, allow_diagonal ? "must be a diagonal array or a matrix object"
                                                                : "must be a matrix object");
  reject_unknown(v, path, {"rows", "cols", "data"});
  if (!v.contains("rows") || !v.contains("cols") || !v.contains("data"))
    throw ConfigInvalid(path, "matrix needs rows, cols and data");
  const Index rows = count(v.at("rows"), path + ".rows");
  const Index cols = count(v.at("cols"), path + ".cols");
  const json& data = v.at("data");
  if (!data.is_array() || static_cast<Index>(data.size()) != rows)
    throw ConfigInvalid(path + ".data", "must have " + std::to_string(rows) + " rows");
  Mat M(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    const Vec row = vector_of(data[static_cast<size_t>(i)], path + ".data[" + std::to_string(i) + "]");
    if (row.size() != cols)
      throw ConfigInvalid(path + ".data[" + std::to_string(i) + "]", "must have " + std::to_string(cols) + " entries");
    M.row(i) = row.transpose();
  }
  return M;
}

Norm norm_of(const json& v, const std::string& path) {
  const std::string s = text(v, path);
  if (s == "L1") return Norm::L1;
  if (s == "L2sq") return Norm::L2sq;
  throw ConfigInvalid(path, "must be \"L1\" or \"L2sq\"");
}

NoiseConfig noise_of(const json& v, const std::string& path) {
  if (!v.is_object()) throw ConfigInvalid(path, "must be an object");
  reject_unknown(v, path, {"kind", "scale"});
  NoiseConfig n;
  const std::string kind = v.contains("kind") ? text(v.at("kind"), path + ".kind") : "none";
  if (kind == "none")
    n.kind = NoiseKind::None;
  else if (kind == "gaussian")
    n.kind = NoiseKind::Gaussian;
  else if (kind == "uniform")
    n.kind = NoiseKind::Uniform;
  else
    throw ConfigInvalid(path + ".kind", "must be none, gaussian or uniform");
  if (v.contains("scale")) {
    n.scale = v.at("scale").is_number() ? Vec::Constant(1, number(v.at("scale"), path + ".scale"))
                                        : vector_of(v.at("scale"), path + ".scale");
    for (Index i = 0; i < n.scale.size(); ++i)
      if (n.scale(i) < 0) throw ConfigInvalid(path + ".scale", "must be nonnegative");
  } else if (n.kind != NoiseKind::None) {
    throw ConfigInvalid(path + ".scale", "required for this noise kind");
  }
  return n;
}

LtiPlant read_matrices(const json& v, const std::string& path) {
  LtiPlant m;
  for (const char* key : {"A", "B", "C", "D"})
    if (!v.contains(key)) throw ConfigInvalid(path + "." + key, "required for this plant");
  m.A = matrix_of(v.at("A"), path + ".A", false);
  m.B = matrix_of(v.at("B"), path + ".B", false);
  m.C = matrix_of(v.at("C"), path + ".C", false);
  m.D = matrix_of(v.at("D"), path + ".D", false);
  try {
    m.validate();
  } catch (const DimensionMismatch& e) {
    throw ConfigInvalid(path, e.what());
  }
  return m;
}

PlantConfig parse_plant(const json& v, const std::filesystem::path& base_dir) {
  reject_unknown(v, "plant", {"builtin", "tau_q", "eta", "a", "b", "full_state_output", "A", "B", "C", "D", "path",
                              "time_varying", "x0"});
  PlantConfig p;
  if (!v.contains("builtin")) throw ConfigInvalid("plant.builtin", "missing");
  p.builtin = text(v.at("builtin"), "plant.builtin");
  static const std::set<std::string> builtins{"bess_1a", "bess_1b", "bess_1c", "coupled8", "matrices", "file"};
  if (!builtins.count(p.builtin))
    throw ConfigInvalid("plant.builtin", "must be one of bess_1a, bess_1b, bess_1c, coupled8, matrices, file");
  if (v.contains("tau_q")) p.tau_q = number(v.at("tau_q"), "plant.tau_q");
  if (v.contains("eta")) p.eta = number(v.at("eta"), "plant.eta");
  if (v.contains("a")) p.a = number(v.at("a"), "plant.a");
  if (v.contains("b")) p.b = number(v.at("b"), "plant.b");
  if (!(p.tau_q > 0)) throw ConfigInvalid("plant.tau_q", "must be positive");
  if (!(p.eta > 0 && p.eta <= 1)) throw ConfigInvalid("plant.eta", "must lie in (0, 1]");
  if (v.contains("full_state_output")) p.full_state_output = boolean(v.at("full_state_output"), "plant.full_state_output");
  const bool has_matrices = v.contains("A") || v.contains("B") || v.contains("C") || v.contains("D");
  if (p.builtin == "matrices") {
    p.matrices = read_matrices(v, "plant");
  } else if (has_matrices) {
    throw ConfigInvalid("plant.A", "matrices are only read for builtin \"matrices\"");
  }
  if (p.builtin == "file") {
    if (!v.contains("path")) throw ConfigInvalid("plant.path", "required for file plants");
    std::filesystem::path file = text(v.at("path"), "plant.path");
    if (file.is_relative()) file = base_dir / file;
    std::ifstream in(file);
    if (!in) throw IoError("cannot open plant file " + file.string());
    json doc;
    try {
      in >> doc;
    } catch (const json::parse_error& e) {
      throw ConfigInvalid("plant.path", std::string("plant file is not valid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw ConfigInvalid("plant.path", "plant file must hold an object");
    reject_unknown(doc, "plant.path", {"A", "B", "C", "D"});
    p.matrices = read_matrices(doc, "plant.path");
  } else if (v.contains("path")) {
    throw ConfigInvalid("plant.path", "only read for builtin \"file\"");
  }
  if (v.contains("time_varying")) {
    const json& tv = v.at("time_varying");
    if (!tv.is_object()) throw ConfigInvalid("plant.time_varying", "must be an object");
    reject_unknown(tv, "plant.time_varying", {"sd", "rows"});
    if (tv.contains("sd")) p.tv_sd = number(tv.at("sd"), "plant.time_varying.sd");
    if (tv.contains("rows")) p.tv_rows = indices_of(tv.at("rows"), "plant.time_varying.rows");
    if (p.tv_sd < 0) throw ConfigInvalid("plant.time_varying.sd", "must be nonnegative");
    if (p.builtin.rfind("bess", 0) == 0 && p.tv_sd > 0)
      throw ConfigInvalid("plant.time_varying", "only LTI plants can be made time-varying");
  }
  if (v.contains("x0")) p.x0 = vector_of(v.at("x0"), "plant.x0");
  return p;
}

ControllerConfig parse_controller(const json& v) {
  reject_unknown(v, "controller", {"variant", "N", "T_ini", "T", "Q", "R", "u_lower", "u_upper", "y_lower", "y_upper",
                                   "lambda_g", "lambda_y", "g_norm", "slack_norm", "slack", "scp", "data_amplitude",
                                   "follow_plant", "solver"});
  ControllerConfig c;
  if (!v.contains("variant")) throw ConfigInvalid("controller.variant", "missing");
  try {
    c.variant = variant_from_string(text(v.at("variant"), "controller.variant"));
  } catch (const ConfigInvalid&) {
    throw;
  } catch (const Error& e) {
    throw ConfigInvalid("controller.variant", e.what());
  }
  for (const char* key : {"N", "T_ini", "Q", "R"})
    if (!v.contains(key)) throw ConfigInvalid(std::string("controller.") + key, "missing");
  c.N = count(v.at("N"), "controller.N", 1);
  c.T_ini = count(v.at("T_ini"), "controller.T_ini", 1);
  if (v.contains("T")) c.T = count(v.at("T"), "controller.T", 1);
  if (c.variant != Variant::MPC && c.T == 0) throw ConfigInvalid("controller.T", "data length required for data-driven variants");
  c.Q = matrix_of(v.at("Q"), "controller.Q", true);
  c.R = matrix_of(v.at("R"), "controller.R", true);
  if (v.contains("u_lower")) c.u_box.lower = vector_of(v.at("u_lower"), "controller.u_lower", -kInf);
  if (v.contains("u_upper")) c.u_box.upper = vector_of(v.at("u_upper"), "controller.u_upper", kInf);
  if (v.contains("y_lower")) c.y_box.lower = vector_of(v.at("y_lower"), "controller.y_lower", -kInf);
  if (v.contains("y_upper")) c.y_box.upper = vector_of(v.at("y_upper"), "controller.y_upper", kInf);
  auto complete = [](ConstraintSet& s, const char* name) {
    if (s.lower.size() == 0 && s.upper.size() > 0) s.lower = Vec::Constant(s.upper.size(), -kInf);
    if (s.upper.size() == 0 && s.lower.size() > 0) s.upper = Vec::Constant(s.lower.size(), kInf);
    if (s.lower.size() != s.upper.size())
      throw ConfigInvalid(std::string("controller.") + name + "_upper", "lower and upper bounds differ in length");
  };
  complete(c.u_box, "u");
  complete(c.y_box, "y");
  if (v.contains("lambda_g")) c.reg.lambda_g = number(v.at("lambda_g"), "controller.lambda_g");
  if (v.contains("lambda_y")) c.reg.lambda_y = number(v.at("lambda_y"), "controller.lambda_y");
  if (c.reg.lambda_g < 0) throw ConfigInvalid("controller.lambda_g", "must be nonnegative");
  if (c.reg.lambda_y < 0) throw ConfigInvalid("controller.lambda_y", "must be nonnegative");
  if (v.contains("g_norm")) c.reg.g_norm = norm_of(v.at("g_norm"), "controller.g_norm");
  if (v.contains("slack_norm")) c.reg.slack_norm = norm_of(v.at("slack_norm"), "controller.slack_norm");
  if (v.contains("slack")) c.reg.slack_enabled = boolean(v.at("slack"), "controller.slack");
  if (v.contains("scp")) {
    const json& s = v.at("scp");
    if (!s.is_object()) throw ConfigInvalid("controller.scp", "must be an object");
    reject_unknown(s, "controller.scp", {"max_iters", "tol", "trust_region"});
    if (s.contains("max_iters")) c.scp.max_iters = static_cast<int>(count(s.at("max_iters"), "controller.scp.max_iters"));
    if (s.contains("tol")) c.scp.tol = number(s.at("tol"), "controller.scp.tol");
    if (s.contains("trust_region"))
      c.scp.trust_region = s.at("trust_region").is_null() ? kInf : number(s.at("trust_region"), "controller.scp.trust_region");
  }
  if (v.contains("data_amplitude")) c.data_amplitude = number(v.at("data_amplitude"), "controller.data_amplitude");
  if (!(c.data_amplitude > 0)) throw ConfigInvalid("controller.data_amplitude", "must be positive");
  if (v.contains("follow_plant")) c.follow_plant = boolean(v.at("follow_plant"), "controller.follow_plant");
  if (v.contains("solver")) {
    const std::string s = text(v.at("solver"), "controller.solver");
    if (s == "admm")
      c.solver = QpMethod::Admm;
    else if (s == "ipm")
      c.solver = QpMethod::InteriorPoint;
    else if (s == "auto")
      c.solver = QpMethod::Auto;
    else
      throw ConfigInvalid("controller.solver", "must be admm, ipm or auto");
  }
  return c;
}

LoopConfigFile parse_loop(const json& v) {
  reject_unknown(v, "loop", {"steps", "s", "seed", "noise", "state_noise", "reference", "disturbance", "state_source",
                             "observer_offset", "failure_policy"});
  LoopConfigFile l;
  if (!v.contains("steps")) throw ConfigInvalid("loop.steps", "missing");
  l.steps = count(v.at("steps"), "loop.steps", 1);
  if (v.contains("s")) l.s = count(v.at("s"), "loop.s", 1);
  if (v.contains("seed")) l.seed = static_cast<std::uint64_t>(count(v.at("seed"), "loop.seed"));
  if (v.contains("noise")) l.noise = noise_of(v.at("noise"), "loop.noise");
  if (v.contains("state_noise")) l.state_noise = noise_of(v.at("state_noise"), "loop.state_noise");
  if (v.contains("reference")) l.reference = vector_of(v.at("reference"), "loop.reference");
  if (v.contains("disturbance")) {
    const json& d = v.at("disturbance");
    if (!d.is_object()) throw ConfigInvalid("loop.disturbance", "must be an object");
    reject_unknown(d, "loop.disturbance", {"channels", "sd", "window"});
    if (!d.contains("channels")) throw ConfigInvalid("loop.disturbance.channels", "missing");
    l.disturbance_channels = indices_of(d.at("channels"), "loop.disturbance.channels");
    if (d.contains("sd")) l.disturbance_sd = number(d.at("sd"), "loop.disturbance.sd");
    if (d.contains("window")) l.disturbance_window = count(d.at("window"), "loop.disturbance.window", 1);
  }
  if (v.contains("state_source")) {
    const std::string s = text(v.at("state_source"), "loop.state_source");
    if (s == "full")
      l.state_source = StateSource::FullMeasurement;
    else if (s == "observer")
      l.state_source = StateSource::Observer;
    else
      throw ConfigInvalid("loop.state_source", "must be \"full\" or \"observer\"");
  }
  if (v.contains("observer_offset")) l.observer_offset = vector_of(v.at("observer_offset"), "loop.observer_offset");
  if (v.contains("failure_policy")) {
    const std::string s = text(v.at("failure_policy"), "loop.failure_policy");
    if (s == "hold")
      l.policy = FailurePolicy::HoldLast;
    else if (s == "abort")
      l.policy = FailurePolicy::Abort;
    else
      throw ConfigInvalid("loop.failure_policy", "must be \"hold\" or \"abort\"");
  }
  return l;
}

PartitionConfig parse_partition(const json& v) {
  reject_unknown(v, "partition", {"n_kappa", "kappa_outputs", "A_y", "C_y"});
  PartitionConfig p;
  p.present = true;
  if (!v.contains("n_kappa")) throw ConfigInvalid("partition.n_kappa", "missing");
  p.n_kappa = count(v.at("n_kappa"), "partition.n_kappa");
  if (v.contains("kappa_outputs")) p.kappa_outputs = indices_of(v.at("kappa_outputs"), "partition.kappa_outputs");
  if (v.contains("A_y")) p.A_y = matrix_of(v.at("A_y"), "partition.A_y", false);
  if (v.contains("C_y")) p.C_y = matrix_of(v.at("C_y"), "partition.C_y", false);
  if (p.A_y.has_value() != p.C_y.has_value()) throw ConfigInvalid("partition.C_y", "A_y and C_y must be given together");
  return p;
}

bool is_hybrid(Variant v) {
  return v == Variant::HDeePC || v == Variant::HDeePC_Condensed || v == Variant::NL_HDeePC;
}

}  // namespace

ScenarioConfig parse_config(const json& doc, const std::string& name, const std::filesystem::path& base_dir) {
  if (!doc.is_object()) throw ConfigInvalid("<root>", "configuration must be a JSON object");
  reject_unknown(doc, "", {"name", "plant", "controller", "loop", "partition", "output"});
  ScenarioConfig cfg;
  cfg.name = doc.contains("name") ? text(doc.at("name"), "name") : name;
  cfg.plant = parse_plant(require_object(doc, "plant", "plant"), base_dir);
  cfg.controller = parse_controller(require_object(doc, "controller", "controller"));
  cfg.loop = parse_loop(require_object(doc, "loop", "loop"));
  if (doc.contains("partition")) cfg.partition = parse_partition(require_object(doc, "partition", "partition"));
  if (doc.contains("output")) {
    const json& o = require_object(doc, "output", "output");
    reject_unknown(o, "output", {"dir", "prefix"});
    if (o.contains("dir")) cfg.output.dir = text(o.at("dir"), "output.dir");
    if (o.contains("prefix")) cfg.output.prefix = text(o.at("prefix"), "output.prefix");
  }
  if (cfg.output.prefix.empty()) cfg.output.prefix = cfg.name;

  // Cross-block checks that need the plant dimensions.
  const LtiPlant model = make_model(cfg);
  const Index n = model.n(), m = model.m(), p = model.p();
  if (cfg.plant.x0.size() == 0) cfg.plant.x0 = Vec::Zero(n);
  if (cfg.plant.x0.size() != n) throw ConfigInvalid("plant.x0", "must have " + std::to_string(n) + " entries");
  for (Index r : cfg.plant.tv_rows)
    if (r >= n) throw ConfigInvalid("plant.time_varying.rows", "row index out of range");
  const ControllerConfig& c = cfg.controller;
  if (c.Q.rows() != p || c.Q.cols() != p) throw ConfigInvalid("controller.Q", "must be " + std::to_string(p) + " x " + std::to_string(p));
  if (c.R.rows() != m || c.R.cols() != m) throw ConfigInvalid("controller.R", "must be " + std::to_string(m) + " x " + std::to_string(m));
  if (!c.u_box.empty() && c.u_box.lower.size() != m) throw ConfigInvalid("controller.u_lower", "needs one bound per input");
  if (!c.y_box.empty() && c.y_box.lower.size() != p) throw ConfigInvalid("controller.y_lower", "needs one bound per output");
  ControllerSpec spec{c.variant, c.N, c.T_ini, c.Q, c.R, c.u_box, c.y_box, c.reg, c.scp};
  try {
    spec.validate(m, p);
  } catch (const Error& e) {
    throw ConfigInvalid("controller", e.what());
  }
  if (cfg.loop.s > std::max<Index>(1, c.N - 1)) throw ConfigInvalid("loop.s", "must lie in [1, N-1]");
  if (cfg.loop.reference.size() == 0) cfg.loop.reference = Vec::Zero(p);
  if (cfg.loop.reference.size() != p) throw ConfigInvalid("loop.reference", "must have " + std::to_string(p) + " entries");
  for (Index ch : cfg.loop.disturbance_channels)
    if (ch >= m) throw ConfigInvalid("loop.disturbance.channels", "channel out of range");
  if (cfg.loop.noise.kind != NoiseKind::None && cfg.loop.noise.scale.size() != 1 && cfg.loop.noise.scale.size() != p)
    throw ConfigInvalid("loop.noise.scale", "needs 1 or p entries");
  if (cfg.loop.state_noise.kind != NoiseKind::None && cfg.loop.state_noise.scale.size() != 1 &&
      cfg.loop.state_noise.scale.size() != n)
    throw ConfigInvalid("loop.state_noise.scale", "needs 1 or n entries");

  if (is_hybrid(c.variant)) {
    if (!cfg.partition.present) throw ConfigInvalid("partition", "required for hybrid variants");
    if (cfg.partition.n_kappa > n) throw ConfigInvalid("partition.n_kappa", "exceeds the state dimension");
    for (Index o : cfg.partition.kappa_outputs)
      if (o >= p) throw ConfigInvalid("partition.kappa_outputs", "output index out of range");
    if (c.variant == Variant::NL_HDeePC) {
      if (cfg.plant.builtin.rfind("bess", 0) != 0)
        throw ConfigInvalid("controller.variant", "NL_HDeePC needs a battery plant with a known nonlinear SoC equation");
      if (cfg.partition.n_kappa != 1 || cfg.partition.kappa_outputs != std::vector<Index>{1})
        throw ConfigInvalid("partition", "NL_HDeePC on the battery plant uses n_kappa = 1 and kappa_outputs = [1]");
    }
  }
  if (cfg.loop.state_source == StateSource::Observer) {
    if (!is_hybrid(c.variant)) throw ConfigInvalid("loop.state_source", "the observer serves hybrid variants only");
    if (cfg.loop.observer_offset.size() != 0 && cfg.loop.observer_offset.size() != cfg.partition.n_kappa)
      throw ConfigInvalid("loop.observer_offset", "needs one entry per known state");
  }
  if (c.variant != Variant::MPC) {
    const Index order = c.T_ini + c.N + n;
    if (c.T < c.T_ini + c.N) throw ConfigInvalid("controller.T", "data shorter than T_ini + N");
    (void)order;
  }
  return cfg;
}

ScenarioConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::parse_error& e) {
    throw ConfigInvalid("<root>", std::string("not valid JSON: ") + e.what());
  }
  return parse_config(doc, path.stem().string(), path.parent_path());
}

}  // namespace hdeepc
