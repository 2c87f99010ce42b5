#include <algorithm>
#include <cmath>
#include <string>

#include "hdeepc/predictors.hpp"

namespace hdeepc {

namespace {

struct Triplet {
  Index row, col;
  double value;
};

// Collects constraint rows in triplet form, densified at the end.
class RowAssembler {
 public:
  explicit RowAssembler(Index nz) : nz_(nz) {}

  Index add_rows(Index count, const Vec& lo, const Vec& hi) {
    const Index start = static_cast<Index>(lower_.size());
    for (Index i = 0; i < count; ++i) {
      lower_.push_back(lo(i));
      upper_.push_back(hi(i));
    }
    return start;
  }
  Index add_equalities(const Vec& rhs) { return add_rows(rhs.size(), rhs, rhs); }
  void set(Index row, Index col, double v) {
    if (v != 0.0) entries_.push_back({row, col, v});
  }
  void add_block(Index row0, Index col0, const Mat& M, double scale = 1.0) {
    for (Index j = 0; j < M.cols(); ++j)
      for (Index i = 0; i < M.rows(); ++i) set(row0 + i, col0 + j, scale * M(i, j));
  }
  void finish(QpProblem& qp) const {
    const Index rows = static_cast<Index>(lower_.size());
    qp.A = Mat::Zero(rows, nz_);
    for (const Triplet& t : entries_) qp.A(t.row, t.col) += t.value;
    qp.l = Eigen::Map<const Vec>(lower_.data(), rows);
    qp.u = Eigen::Map<const Vec>(upper_.data(), rows);
  }

 private:
  Index nz_;
  std::vector<Triplet> entries_;
  std::vector<double> lower_, upper_;
};

void check_reference(const Mat& r, Index p, Index N) {
  if (r.rows() != p || r.cols() != N)
    throw DimensionMismatch("reference must be " + std::to_string(p) + " x " + std::to_string(N) + ", got " +
                            std::to_string(r.rows()) + " x " + std::to_string(r.cols()));
}

void check_pins(const InputPins& pins, Index m, Index N) {
  if (pins.empty()) return;
  if (pins.values.rows() != static_cast<Index>(pins.channels.size()) || pins.values.cols() != N)
    throw DimensionMismatch("input pins must be (channels x N)");
  for (Index c : pins.channels)
    if (c < 0 || c >= m) throw IndexOutOfRange("pinned input channel " + std::to_string(c));
}

double lower_of(const ConstraintSet& s, Index i) { return s.lower.size() == 0 ? -kInf : s.lower(i); }
double upper_of(const ConstraintSet& s, Index i) { return s.upper.size() == 0 ? kInf : s.upper(i); }

// Position of each original output: (is_known, index within its group).
std::vector<std::pair<bool, Index>> output_map(const std::vector<Index>& unknown, const std::vector<Index>& known) {
  const Index p = static_cast<Index>(unknown.size() + known.size());
  std::vector<std::pair<bool, Index>> map(static_cast<size_t>(p), {false, -1});
  for (size_t j = 0; j < unknown.size(); ++j) {
    const Index o = unknown[j];
    if (o < 0 || o >= p) throw IndexOutOfRange("output index " + std::to_string(o));
    map[static_cast<size_t>(o)] = {false, static_cast<Index>(j)};
  }
  for (size_t j = 0; j < known.size(); ++j) {
    const Index o = known[j];
    if (o < 0 || o >= p || map[static_cast<size_t>(o)].second >= 0)
      throw IndexOutOfRange("output index " + std::to_string(o));
    map[static_cast<size_t>(o)] = {true, static_cast<Index>(j)};
  }
  return map;
}

void check_known(const KnownDynamics& kd, Index N) {
  if (static_cast<Index>(kd.slices.size()) != N)
    throw DimensionMismatch("known dynamics need one slice per horizon step");
  const Index nk = kd.n_k, pk = kd.p_k(), pu = kd.p_u(), m = kd.m;
  for (const KnownSlice& s : kd.slices) {
    auto expect = [](const Mat& M, Index r, Index c, const char* name) {
      if (M.rows() != r || M.cols() != c)
        throw DimensionMismatch(std::string("known slice ") + name + " must be " + std::to_string(r) + " x " +
                                std::to_string(c));
    };
    expect(s.A_k, nk, nk, "A_k");
    expect(s.A_y, nk, pu, "A_y");
    expect(s.B_k, nk, m, "B_k");
    expect(s.C_k, pk, nk, "C_k");
    expect(s.C_y, pk, pu, "C_y");
    expect(s.D_k, pk, m, "D_k");
    if (s.c.size() != nk || s.d.size() != pk) throw DimensionMismatch("known slice offsets");
  }
}

}  // namespace

std::string to_string(Variant v) {
  switch (v) {
    case Variant::MPC: return "MPC";
    case Variant::DeePC: return "DeePC";
    case Variant::HDeePC: return "HDeePC";
    case Variant::HDeePC_Condensed: return "HDeePC_Condensed";
    case Variant::DeePC_Condensed: return "DeePC_Condensed";
    case Variant::NL_HDeePC: return "NL_HDeePC";
  }
  return "?";
}

Variant variant_from_string(const std::string& s) {
  for (Variant v : {Variant::MPC, Variant::DeePC, Variant::HDeePC, Variant::HDeePC_Condensed, Variant::DeePC_Condensed,
                    Variant::NL_HDeePC})
    if (to_string(v) == s) return v;
  throw Error("unknown controller variant '" + s + "'");
}

std::string to_string(Norm n) { return n == Norm::L1 ? "L1" : "L2sq"; }

bool ConstraintSet::active() const {
  for (Index i = 0; i < lower.size(); ++i)
    if (std::isfinite(lower(i))) return true;
  for (Index i = 0; i < upper.size(); ++i)
    if (std::isfinite(upper(i))) return true;
  return false;
}

void ConstraintSet::validate(Index channels, const char* what) const {
  if (empty()) return;
  if (lower.size() != channels || upper.size() != channels)
    throw DimensionMismatch(std::string(what) + " box needs " + std::to_string(channels) + " bounds per side");
  for (Index i = 0; i < channels; ++i)
    if (std::isnan(lower(i)) || std::isnan(upper(i)) || lower(i) > upper(i))
      throw Error(std::string(what) + " box has lower > upper on channel " + std::to_string(i));
}

void ControllerSpec::validate(Index m, Index p) const {
  if (N < 1) throw Error("horizon N must be at least 1");
  if (T_ini < 1) throw Error("T_ini must be at least 1");
  if (Q.rows() != p || Q.cols() != p) throw DimensionMismatch("Q must be p x p");
  if (R.rows() != m || R.cols() != m) throw DimensionMismatch("R must be m x m");
  if ((Q - Q.transpose()).cwiseAbs().maxCoeff() > 1e-12 * (1 + Q.cwiseAbs().maxCoeff()))
    throw NonConvex("Q must be symmetric");
  Eigen::SelfAdjointEigenSolver<Mat> es(Q, Eigen::EigenvaluesOnly);
  if (p > 0 && es.eigenvalues().minCoeff() < -1e-12 * (1 + Q.cwiseAbs().maxCoeff()))
    throw NonConvex("Q must be positive semidefinite");
  Eigen::LLT<Mat> llt(R);
  if (llt.info() != Eigen::Success || (R - R.transpose()).cwiseAbs().maxCoeff() > 1e-12 * (1 + R.cwiseAbs().maxCoeff()))
    throw NonConvex("R must be symmetric positive definite");
  u_box.validate(m, "input");
  y_box.validate(p, "output");
  if (!(reg.lambda_g >= 0.0) || !(reg.lambda_y >= 0.0) || !std::isfinite(reg.lambda_g) ||
      !std::isfinite(reg.lambda_y))
    throw Error("regularization weights must be finite and nonnegative");
}

KnownDynamics lti_known_dynamics(const KnownModel& km, Index m, Index N) {
  KnownDynamics kd;
  kd.unknown_outputs = km.unknown_outputs;
  kd.known_outputs = km.known_outputs;
  kd.n_k = km.n_k();
  kd.m = m;
  KnownSlice s{km.A_k, km.A_y, km.B_k, km.C_k, km.C_y, km.D_k, Vec::Zero(km.n_k()), Vec::Zero(km.p_k())};
  kd.slices.assign(static_cast<size_t>(N), s);
  check_known(kd, N);
  return kd;
}

BuiltQp build_hybrid(const KnownDynamics& known, const HankelBlocks* blocks, const ControllerSpec& spec,
                     const InitWindow& window, const Mat& reference, const InputPins& pins, const Mat* u_lower,
                     const Mat* u_upper) {
  const Index N = spec.N, T_ini = spec.T_ini, m = known.m;
  const Index nk = known.n_k, pu = known.p_u(), pk = known.p_k(), p = pu + pk;
  spec.validate(m, p);
  check_known(known, N);
  check_reference(reference, p, N);
  check_pins(pins, m, N);
  const auto omap = output_map(known.unknown_outputs, known.known_outputs);

  const bool use_data = pu > 0;
  if (use_data) {
    if (blocks == nullptr) throw DimensionMismatch("hybrid problem with unknown outputs needs data");
    if (blocks->m != m || blocks->p_y != pu || blocks->T_ini != T_ini || blocks->N != N)
      throw DimensionMismatch("Hankel blocks do not match the controller dimensions");
    if (window.u_ini.size() != m * T_ini || window.y_ini.size() != pu * T_ini)
      throw DimensionMismatch("initial window has wrong length");
  }
  Vec x_hat = Vec::Zero(nk);
  if (nk > 0) {
    if (!window.x_kappa_hat || window.x_kappa_hat->size() != nk)
      throw DimensionMismatch("known-state estimate missing or of wrong size");
    x_hat = *window.x_kappa_hat;
  }
  const bool slack = use_data && spec.reg.slack_enabled;
  const bool g_l1 = use_data && spec.reg.g_norm == Norm::L1 && spec.reg.lambda_g > 0.0;
  const bool s_l1 = slack && spec.reg.slack_norm == Norm::L1;

  BuiltQp b;
  b.m = m;
  b.p = p;
  b.N = N;
  b.n_k = nk;
  b.p_u = pu;
  b.unknown_outputs = known.unknown_outputs;
  b.known_outputs = known.known_outputs;
  Index off = 0;
  auto take = [&](Index size) {
    BuiltQp::Block blk{off, size};
    off += size;
    return blk;
  };
  b.g = take(use_data ? blocks->K() : 0);
  b.u = take(m * N);
  b.y_u = take(pu * N);
  b.x_k = take(nk * (N + 1));
  b.y_k = take(pk * N);
  b.sigma = take(slack ? pu * T_ini : 0);
  b.t_g = take(g_l1 ? b.g.size : 0);
  b.t_sigma = take(s_l1 ? b.sigma.size : 0);
  const Index nz = off;

  auto y_var = [&](Index k, Index o) {
    const auto [is_known, j] = omap[static_cast<size_t>(o)];
    return is_known ? b.y_k.offset + k * pk + j : b.y_u.offset + k * pu + j;
  };

  RowAssembler rows(nz);
  if (use_data) {
    Index r = rows.add_equalities(window.u_ini);
    rows.add_block(r, b.g.offset, blocks->U_P);
    r = rows.add_equalities(window.y_ini);
    rows.add_block(r, b.g.offset, blocks->Y_P);
    if (slack) rows.add_block(r, b.sigma.offset, Mat::Identity(b.sigma.size, b.sigma.size), -1.0);
    r = rows.add_equalities(Vec::Zero(m * N));
    rows.add_block(r, b.g.offset, blocks->U_F);
    rows.add_block(r, b.u.offset, Mat::Identity(m * N, m * N), -1.0);
    r = rows.add_equalities(Vec::Zero(pu * N));
    rows.add_block(r, b.g.offset, blocks->Y_F);
    rows.add_block(r, b.y_u.offset, Mat::Identity(pu * N, pu * N), -1.0);
  }
  if (nk > 0) {
    const Index r = rows.add_equalities(x_hat);
    rows.add_block(r, b.x_k.offset, Mat::Identity(nk, nk));
  }
  for (Index k = 0; k < N; ++k) {
    const KnownSlice& s = known.slices[static_cast<size_t>(k)];
    if (nk > 0) {
      const Index r = rows.add_equalities(s.c);
      rows.add_block(r, b.x_k.offset + (k + 1) * nk, Mat::Identity(nk, nk));
      rows.add_block(r, b.x_k.offset + k * nk, s.A_k, -1.0);
      rows.add_block(r, b.y_u.offset + k * pu, s.A_y, -1.0);
      rows.add_block(r, b.u.offset + k * m, s.B_k, -1.0);
    }
    if (pk > 0) {
      const Index r = rows.add_equalities(s.d);
      rows.add_block(r, b.y_k.offset + k * pk, Mat::Identity(pk, pk));
      rows.add_block(r, b.x_k.offset + k * nk, s.C_k, -1.0);
      rows.add_block(r, b.y_u.offset + k * pu, s.C_y, -1.0);
      rows.add_block(r, b.u.offset + k * m, s.D_k, -1.0);
    }
  }
  for (Index k = 0; k < N; ++k) {
    for (size_t c = 0; c < pins.channels.size(); ++c) {
      const Index r = rows.add_equalities(Vec::Constant(1, pins.values(static_cast<Index>(c), k)));
      rows.set(r, b.u.offset + k * m + pins.channels[c], 1.0);
    }
  }
  for (Index k = 0; k < N; ++k) {
    for (Index i = 0; i < m; ++i) {
      double lo = lower_of(spec.u_box, i), hi = upper_of(spec.u_box, i);
      if (u_lower) lo = std::max(lo, (*u_lower)(i, k));
      if (u_upper) hi = std::min(hi, (*u_upper)(i, k));
      if (!std::isfinite(lo) && !std::isfinite(hi)) continue;
      const Index r = rows.add_rows(1, Vec::Constant(1, lo), Vec::Constant(1, hi));
      rows.set(r, b.u.offset + k * m + i, 1.0);
    }
    for (Index o = 0; o < p; ++o) {
      const double lo = lower_of(spec.y_box, o), hi = upper_of(spec.y_box, o);
      if (!std::isfinite(lo) && !std::isfinite(hi)) continue;
      const Index r = rows.add_rows(1, Vec::Constant(1, lo), Vec::Constant(1, hi));
      rows.set(r, y_var(k, o), 1.0);
    }
  }
  // |v| <= t as v - t <= 0 and v + t >= 0.
  auto epigraph = [&](const BuiltQp::Block& v, const BuiltQp::Block& t) {
    const Index n = v.size;
    Index r = rows.add_rows(n, Vec::Constant(n, -kInf), Vec::Zero(n));
    rows.add_block(r, v.offset, Mat::Identity(n, n));
    rows.add_block(r, t.offset, Mat::Identity(n, n), -1.0);
    r = rows.add_rows(n, Vec::Zero(n), Vec::Constant(n, kInf));
    rows.add_block(r, v.offset, Mat::Identity(n, n));
    rows.add_block(r, t.offset, Mat::Identity(n, n));
  };
  if (g_l1) epigraph(b.g, b.t_g);
  if (s_l1) epigraph(b.sigma, b.t_sigma);
  rows.finish(b.qp);

  // Objective: sum_k (y_k - r_k)'Q(y_k - r_k) + u_k'R u_k + regularization.
  b.qp.P = Mat::Zero(nz, nz);
  b.qp.q = Vec::Zero(nz);
  for (Index k = 0; k < N; ++k) {
    for (Index o1 = 0; o1 < p; ++o1) {
      const Index v1 = y_var(k, o1);
      for (Index o2 = 0; o2 < p; ++o2) b.qp.P(v1, y_var(k, o2)) += 2.0 * spec.Q(o1, o2);
      b.qp.q(v1) -= 2.0 * spec.Q.row(o1).dot(reference.col(k));
    }
    b.qp.P.block(b.u.offset + k * m, b.u.offset + k * m, m, m) += 2.0 * spec.R;
    b.constant += reference.col(k).dot(spec.Q * reference.col(k));
  }
  if (use_data && spec.reg.lambda_g > 0.0) {
    if (g_l1)
      b.qp.q.segment(b.t_g.offset, b.t_g.size).array() += spec.reg.lambda_g;
    else
      b.qp.P.block(b.g.offset, b.g.offset, b.g.size, b.g.size).diagonal().array() += 2.0 * spec.reg.lambda_g;
  }
  if (slack && spec.reg.lambda_y > 0.0) {
    if (s_l1)
      b.qp.q.segment(b.t_sigma.offset, b.t_sigma.size).array() += spec.reg.lambda_y;
    else
      b.qp.P.block(b.sigma.offset, b.sigma.offset, b.sigma.size, b.sigma.size).diagonal().array() +=
          2.0 * spec.reg.lambda_y;
  }
  b.qp.P = 0.5 * (b.qp.P + b.qp.P.transpose());
  return b;
}

BuiltQp build_mpc(const LtiPlant& plant, const ControllerSpec& spec, const Vec& x_hat, const Mat& reference,
                  const InputPins& pins) {
  plant.validate();
  if (x_hat.size() != plant.n()) throw DimensionMismatch("state estimate has wrong size");
  KnownModel km;
  km.A_k = plant.A;
  km.B_k = plant.B;
  km.C_k = plant.C;
  km.D_k = plant.D;
  km.A_y = Mat::Zero(plant.n(), 0);
  km.C_y = Mat::Zero(plant.p(), 0);
  for (Index o = 0; o < plant.p(); ++o) km.known_outputs.push_back(o);
  InitWindow w;
  w.x_kappa_hat = x_hat;
  return build_hybrid(lti_known_dynamics(km, plant.m(), spec.N), nullptr, spec, w, reference, pins);
}

BuiltQp build_deepc(const HankelBlocks& blocks, const ControllerSpec& spec, const InitWindow& window,
                    const Mat& reference, const InputPins& pins) {
  KnownDynamics kd;
  kd.m = blocks.m;
  kd.n_k = 0;
  for (Index o = 0; o < blocks.p_y; ++o) kd.unknown_outputs.push_back(o);
  KnownSlice s{Mat::Zero(0, 0), Mat::Zero(0, blocks.p_y), Mat::Zero(0, blocks.m),
               Mat::Zero(0, 0), Mat::Zero(0, blocks.p_y), Mat::Zero(0, blocks.m),
               Vec::Zero(0), Vec::Zero(0)};
  kd.slices.assign(static_cast<size_t>(spec.N), s);
  return build_hybrid(kd, &blocks, spec, window, reference, pins);
}

BuiltQp build_hdeepc(const KnownModel& km, const HankelBlocks& blocks, const ControllerSpec& spec,
                     const InitWindow& window, const Mat& reference, const InputPins& pins) {
  return build_hybrid(lti_known_dynamics(km, blocks.m, spec.N), &blocks, spec, window, reference, pins);
}

BuiltQp build_condensed(const HankelBlocks& blocks, const KnownDynamics* known, const ControllerSpec& spec,
                        const InitWindow& window, const Mat& reference, const InputPins& pins) {
  if (spec.u_box.active() || spec.y_box.active())
    throw BoxesUnsupported("condensed formulations do not support input/output boxes");
  if (spec.reg.slack_enabled) throw Error("condensed formulations do not support the output slack");
  if (spec.reg.g_norm == Norm::L1 && spec.reg.lambda_g > 0.0)
    throw Error("condensed formulations support only a quadratic penalty on g");
  const Index N = spec.N, T_ini = spec.T_ini, m = blocks.m, K = blocks.K();
  KnownDynamics empty;
  if (known == nullptr) {
    empty.m = m;
    for (Index o = 0; o < blocks.p_y; ++o) empty.unknown_outputs.push_back(o);
    KnownSlice s{Mat::Zero(0, 0), Mat::Zero(0, blocks.p_y), Mat::Zero(0, m), Mat::Zero(0, 0),
                 Mat::Zero(0, blocks.p_y), Mat::Zero(0, m), Vec::Zero(0), Vec::Zero(0)};
    empty.slices.assign(static_cast<size_t>(N), s);
    known = &empty;
  }
  const Index nk = known->n_k, pu = known->p_u(), pk = known->p_k(), p = pu + pk;
  spec.validate(m, p);
  check_known(*known, N);
  check_reference(reference, p, N);
  check_pins(pins, m, N);
  if (known->m != m) throw DimensionMismatch("known dynamics input count differs from data");
  if (blocks.p_y != pu || blocks.T_ini != T_ini || blocks.N != N)
    throw DimensionMismatch("Hankel blocks do not match the controller dimensions");
  if (window.u_ini.size() != m * T_ini || window.y_ini.size() != pu * T_ini)
    throw DimensionMismatch("initial window has wrong length");
  Vec x_hat = Vec::Zero(nk);
  if (nk > 0) {
    if (!window.x_kappa_hat || window.x_kappa_hat->size() != nk)
      throw DimensionMismatch("known-state estimate missing or of wrong size");
    x_hat = *window.x_kappa_hat;
  }
  const auto omap = output_map(known->unknown_outputs, known->known_outputs);

  BuiltQp b;
  b.condensed = true;
  b.m = m;
  b.p = p;
  b.N = N;
  b.n_k = nk;
  b.p_u = pu;
  b.unknown_outputs = known->unknown_outputs;
  b.known_outputs = known->known_outputs;
  b.g = {0, K};
  b.Um = blocks.U_F;
  // Known outputs as affine functions of g by rolling the known dynamics
  // forward: x = X g + x0.
  b.Ym = Mat::Zero(p * N, K);
  b.y0 = Vec::Zero(p * N);
  Mat X = Mat::Zero(nk, K);
  Vec x0 = x_hat;
  for (Index k = 0; k < N; ++k) {
    const KnownSlice& s = known->slices[static_cast<size_t>(k)];
    const auto Uk = blocks.U_F.middleRows(k * m, m);
    const auto Yk = blocks.Y_F.middleRows(k * pu, pu);
    const Mat Yk_known = s.C_k * X + s.C_y * Yk + s.D_k * Uk;
    const Vec yk0 = s.C_k * x0 + s.d;
    for (Index o = 0; o < p; ++o) {
      const auto [is_known, j] = omap[static_cast<size_t>(o)];
      if (is_known) {
        b.Ym.row(k * p + o) = Yk_known.row(j);
        b.y0(k * p + o) = yk0(j);
      } else {
        b.Ym.row(k * p + o) = Yk.row(j);
      }
    }
    X = s.A_k * X + s.A_y * Yk + s.B_k * Uk;
    x0 = s.A_k * x0 + s.c;
  }

  RowAssembler rows(K);
  Index r = rows.add_equalities(window.u_ini);
  rows.add_block(r, 0, blocks.U_P);
  r = rows.add_equalities(window.y_ini);
  rows.add_block(r, 0, blocks.Y_P);
  for (Index k = 0; k < N; ++k) {
    for (size_t c = 0; c < pins.channels.size(); ++c) {
      r = rows.add_equalities(Vec::Constant(1, pins.values(static_cast<Index>(c), k)));
      rows.add_block(r, 0, blocks.U_F.row(k * m + pins.channels[c]));
    }
  }
  rows.finish(b.qp);

  Mat Qbar = Mat::Zero(p * N, p * N), Rbar = Mat::Zero(m * N, m * N);
  for (Index k = 0; k < N; ++k) {
    Qbar.block(k * p, k * p, p, p) = spec.Q;
    Rbar.block(k * m, k * m, m, m) = spec.R;
  }
  const Vec rstack = stack(reference);
  const Vec e0 = b.y0 - rstack;
  b.qp.P = 2.0 * (b.Ym.transpose() * Qbar * b.Ym + b.Um.transpose() * Rbar * b.Um);
  b.qp.P.diagonal().array() += 2.0 * spec.reg.lambda_g;
  b.qp.P = 0.5 * (b.qp.P + b.qp.P.transpose());
  b.qp.q = 2.0 * b.Ym.transpose() * (Qbar * e0);
  b.constant = e0.dot(Qbar * e0);
  return b;
}

StepDecision BuiltQp::decode(const QpSolution& sol) const {
  StepDecision d;
  d.status = sol.status;
  d.iterations = sol.iterations;
  d.objective = sol.objective + constant;
  const Vec& z = sol.z;
  if (condensed) {
    const Vec g_val = z.segment(g.offset, g.size);
    d.g_star = g_val;
    d.u_star = unstack(Um * g_val, m);
    d.y_pred = unstack(Ym * g_val + y0, p);
    d.y_u_pred.resize(p_u, N);
    for (Index j = 0; j < p_u; ++j) d.y_u_pred.row(j) = d.y_pred.row(unknown_outputs[static_cast<size_t>(j)]);
    d.x_k_pred = Mat::Zero(n_k, 0);
    d.sigma = Vec::Zero(0);
    return d;
  }
  if (g.size > 0) d.g_star = z.segment(g.offset, g.size);
  d.u_star = unstack(z.segment(u.offset, u.size), m);
  d.y_u_pred = p_u > 0 ? unstack(z.segment(y_u.offset, y_u.size), p_u) : Mat::Zero(0, N);
  const Index pk = p - p_u;
  const Mat yk = pk > 0 ? unstack(z.segment(y_k.offset, y_k.size), pk) : Mat::Zero(0, N);
  d.x_k_pred = n_k > 0 ? unstack(z.segment(x_k.offset, x_k.size), n_k) : Mat::Zero(0, N + 1);
  d.y_pred.resize(p, N);
  for (Index j = 0; j < p_u; ++j) d.y_pred.row(unknown_outputs[static_cast<size_t>(j)]) = d.y_u_pred.row(j);
  for (Index j = 0; j < pk; ++j) d.y_pred.row(known_outputs[static_cast<size_t>(j)]) = yk.row(j);
  d.sigma = z.segment(sigma.offset, sigma.size);
  return d;
}

StepDecision solve_step(const BuiltQp& built, const QpSettings& settings) {
  return built.decode(qp_solve(built.qp, settings));
}

double tracking_cost(const Mat& y, const Mat& u, const Mat& reference, const Mat& Q, const Mat& R) {
  if (y.cols() != u.cols() || y.cols() != reference.cols() || y.rows() != reference.rows())
    throw DimensionMismatch("tracking_cost: trajectory sizes");
  double total = 0.0;
  for (Index k = 0; k < y.cols(); ++k) {
    const Vec e = y.col(k) - reference.col(k);
    total += e.dot(Q * e) + u.col(k).dot(R * u.col(k));
  }
  return total;
}

}  // namespace hdeepc
