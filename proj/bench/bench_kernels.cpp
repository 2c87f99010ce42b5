// Serial against OpenMP timings for the data-parallel kernels.
//
//   bench_kernels [--samples T] [--depth L] [--repeats k] [--jobs n]

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <vector>

#include "hdeepc/kernels.hpp"
#include "hdeepc/predictors.hpp"

using namespace hdeepc;

namespace {

double seconds_of(const std::function<void()>& work, int repeats) {
  double best = 1e300;
  for (int r = 0; r < repeats; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    work();
    best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  return best;
}

void report(const char* name, double serial, double parallel, bool agree) {
  std::printf("%-22s serial %10.6f s   omp %10.6f s   speedup %5.2f   %s\n", name, serial, parallel,
              serial / parallel, agree ? "agree" : "MISMATCH");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"kernel benchmark"};
  Index samples = 20000, depth = 120;
  int repeats = 5, jobs = 32;
  app.add_option("--samples", samples, "signal length");
  app.add_option("--depth", depth, "Hankel depth");
  app.add_option("--repeats", repeats, "repetitions (best time is reported)");
  app.add_option("--jobs", jobs, "independent QP solves for the fan-out kernel");
  CLI11_PARSE(app, argc, argv);

  std::printf("threads: %d\n", kernels::max_threads());
  std::mt19937_64 rng(1);
  std::normal_distribution<double> normal(0.0, 1.0);
  Mat signal(3, samples);
  for (Index i = 0; i < signal.size(); ++i) signal.data()[i] = normal(rng);

  Mat hs, ho;
  const double t_hs = seconds_of([&] { hs = kernels::hankel_serial(signal, depth); }, repeats);
  const double t_ho = seconds_of([&] { ho = kernels::hankel_omp(signal, depth); }, repeats);
  report("hankel", t_hs, t_ho, hs == ho);

  Vec g(hs.cols()), rhs(hs.rows());
  for (Index i = 0; i < g.size(); ++i) g(i) = normal(rng);
  for (Index i = 0; i < rhs.size(); ++i) rhs(i) = normal(rng);
  double rs = 0, ro = 0;
  const double t_rs = seconds_of([&] { rs = kernels::residual_inf_serial(hs, g, rhs); }, repeats);
  const double t_ro = seconds_of([&] { ro = kernels::residual_inf_omp(hs, g, rhs); }, repeats);
  report("residual_inf", t_rs, t_ro, std::abs(rs - ro) <= 1e-12 * (1 + rs));

  // Fan-out of independent QP solves, as in sweeps and equivalence runs.
  std::vector<QpProblem> qps(static_cast<size_t>(jobs));
  for (QpProblem& p : qps) {
    const Index n = 40, m = 30;
    Mat M(n, n);
    for (Index i = 0; i < M.size(); ++i) M.data()[i] = normal(rng);
    p.P = M * M.transpose() + Mat::Identity(n, n);
    p.q = Vec::NullaryExpr(n, [&] { return normal(rng); });
    p.A = Mat::NullaryExpr(m, n, [&] { return normal(rng); });
    p.l = Vec::Constant(m, -1.0);
    p.u = Vec::Constant(m, 1.0);
  }
  std::vector<double> fs(qps.size()), fo(qps.size());
  const double t_fs = seconds_of(
      [&] { kernels::for_each_serial(qps.size(), [&](std::size_t i) { fs[i] = qp_solve(qps[i]).objective; }); },
      repeats);
  const double t_fo = seconds_of(
      [&] { kernels::for_each_omp(qps.size(), [&](std::size_t i) { fo[i] = qp_solve(qps[i]).objective; }); },
      repeats);
  report("for_each (qp_solve)", t_fs, t_fo, fs == fo);
  return 0;
}
