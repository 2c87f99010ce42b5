#include "hdeepc/behavior.hpp"

#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "hdeepc/kernels.hpp"

namespace hdeepc {

void DataLog::validate() const {
  if (u.cols() != y.cols())
    throw DimensionMismatch("data log: " + std::to_string(u.cols()) + " input samples vs " +
                            std::to_string(y.cols()) + " output samples");
  check_finite(u, "data log inputs");
  check_finite(y, "data log outputs");
}

void write_csv(std::ostream& os, const DataLog& log) {
  log.validate();
  os << "t";
  for (Index i = 0; i < log.u.rows(); ++i) os << ",u" << i + 1;
  for (Index i = 0; i < log.y.rows(); ++i) os << ",y" << i + 1;
  os << "\n" << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (Index t = 0; t < log.length(); ++t) {
    os << t;
    for (Index i = 0; i < log.u.rows(); ++i) os << "," << log.u(i, t);
    for (Index i = 0; i < log.y.rows(); ++i) os << "," << log.y(i, t);
    os << "\n";
  }
}

DataLog read_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw IoError("data log: missing header");
  std::vector<std::string> cols;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cols.push_back(cell);
  }
  if (cols.empty() || cols[0] != "t") throw IoError("data log: header must start with 't'");
  Index m = 0, p = 0;
  for (size_t c = 1; c < cols.size(); ++c) {
    const std::string expect_u = "u" + std::to_string(m + 1);
    const std::string expect_y = "y" + std::to_string(p + 1);
    if (p == 0 && cols[c] == expect_u)
      ++m;
    else if (cols[c] == expect_y)
      ++p;
    else
      throw IoError("data log: unexpected column '" + cols[c] + "'");
  }
  std::vector<std::vector<double>> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> row;
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw IoError("data log: bad number '" + cell + "'");
      }
    }
    if (static_cast<Index>(row.size()) != 1 + m + p)
      throw IoError("data log: row " + std::to_string(rows.size()) + " has " + std::to_string(row.size()) +
                    " fields");
    rows.push_back(std::move(row));
  }
  DataLog log{Mat(m, static_cast<Index>(rows.size())), Mat(p, static_cast<Index>(rows.size()))};
  for (size_t t = 0; t < rows.size(); ++t) {
    for (Index i = 0; i < m; ++i) log.u(i, static_cast<Index>(t)) = rows[t][static_cast<size_t>(1 + i)];
    for (Index i = 0; i < p; ++i) log.y(i, static_cast<Index>(t)) = rows[t][static_cast<size_t>(1 + m + i)];
  }
  return log;
}

Mat build_hankel(const Mat& signal, Index L) { return kernels::hankel_omp(signal, L); }

PeCheck check_pe(const Mat& u, Index L, double tol) {
  PeCheck out;
  out.required = u.rows() * L;
  out.rank = rank_of(build_hankel(u, L), tol);
  out.exciting = out.required > 0 && out.rank == out.required;
  return out;
}

HankelBlocks partition_data(const DataLog& log, Index T_ini, Index N) {
  log.validate();
  if (T_ini < 1 || N < 1) throw TooShort("partition_data: T_ini and N must be positive");
  const Index L = T_ini + N;
  if (log.length() < L)
    throw TooShort("partition_data: " + std::to_string(log.length()) + " samples cannot fill depth " +
                   std::to_string(L));
  HankelBlocks b;
  b.T = log.length();
  b.T_ini = T_ini;
  b.N = N;
  b.m = log.u.rows();
  b.p_y = log.y.rows();
  const Mat Hu = build_hankel(log.u, L);
  const Mat Hy = b.p_y > 0 ? build_hankel(log.y, L) : Mat::Zero(0, Hu.cols());
  b.U_P = Hu.topRows(b.m * T_ini);
  b.U_F = Hu.bottomRows(b.m * N);
  b.Y_P = Hy.topRows(b.p_y * T_ini);
  b.Y_F = Hy.bottomRows(b.p_y * N);
  return b;
}

DataLog restrict_outputs(const DataLog& log, const std::vector<Index>& channels) {
  DataLog out{log.u, Mat(static_cast<Index>(channels.size()), log.length())};
  for (size_t i = 0; i < channels.size(); ++i) {
    const Index c = channels[i];
    if (c < 0 || c >= log.y.rows()) throw IndexOutOfRange("output channel " + std::to_string(c));
    out.y.row(static_cast<Index>(i)) = log.y.row(c);
  }
  return out;
}

CollectedData collect_data(const TruthPlant& plant, const Vec& x0, Index T, const ExcitationSpec& excitation,
                           const NoiseSpec& noise, const std::vector<Index>& output_filter, std::int64_t t0) {
  const Index m = input_dim(plant);
  const Index p = output_dim(plant);
  if (x0.size() != state_dim(plant)) throw DimensionMismatch("collect_data: initial state size");
  const Mat u = generate_pe_input(m, T, excitation.order, excitation.seed, excitation.amplitude);
  NoiseSource source(noise, p);
  CollectedData out;
  out.log.u = u;
  out.log.y.resize(p, T);
  Vec x = x0;
  for (Index t = 0; t < T; ++t) {
    StepResult r = simulate_step(plant, x, u.col(t), t0 + t);
    out.log.y.col(t) = r.y + source.draw();
    x = std::move(r.x_next);
  }
  out.x_final = x;
  if (!output_filter.empty()) out.log = restrict_outputs(out.log, output_filter);
  return out;
}

double behavioral_residual(const HankelBlocks& blocks, const Vec& g, const InitWindow& w, const Vec& u,
                           const Vec& y) {
  if (g.size() != blocks.K()) throw DimensionMismatch("behavioral_residual: g has wrong length");
  if (w.u_ini.size() != blocks.U_P.rows() || w.y_ini.size() != blocks.Y_P.rows() || u.size() != blocks.U_F.rows() ||
      y.size() != blocks.Y_F.rows())
    throw DimensionMismatch("behavioral_residual: window/trajectory lengths");
  Mat stackM(blocks.U_P.rows() + blocks.Y_P.rows() + blocks.U_F.rows() + blocks.Y_F.rows(), blocks.K());
  stackM << blocks.U_P, blocks.Y_P, blocks.U_F, blocks.Y_F;
  Vec rhs(stackM.rows());
  rhs << w.u_ini, w.y_ini, u, y;
  return kernels::residual_inf_omp(stackM, g, rhs);
}

}  // namespace hdeepc
