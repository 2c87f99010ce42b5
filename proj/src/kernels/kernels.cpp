#include "hdeepc/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <exception>
#include <string>

namespace hdeepc::kernels {

namespace {

void check_depth(const Mat& samples, Index depth) {
  if (depth < 1 || depth > samples.cols())
    throw TooShort("hankel: signal of length " + std::to_string(samples.cols()) +
                   " is too short for depth " + std::to_string(depth));
}

}  // namespace

Mat hankel_serial(const Mat& samples, Index depth) {
  check_depth(samples, depth);
  const Index q = samples.rows();
  const Index cols = samples.cols() - depth + 1;
  Mat H(q * depth, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index b = 0; b < depth; ++b) H.block(b * q, j, q, 1) = samples.col(j + b);
  return H;
}

Mat hankel_omp(const Mat& samples, Index depth) {
  check_depth(samples, depth);
  const Index q = samples.rows();
  const Index cols = samples.cols() - depth + 1;
  Mat H(q * depth, cols);
#pragma omp parallel for schedule(static)
  for (Index j = 0; j < cols; ++j)
    for (Index b = 0; b < depth; ++b) H.block(b * q, j, q, 1) = samples.col(j + b);
  return H;
}

double residual_inf_serial(const Mat& M, const Vec& g, const Vec& rhs) {
  if (M.cols() != g.size() || M.rows() != rhs.size()) throw DimensionMismatch("residual: size mismatch");
  double worst = 0.0;
  for (Index i = 0; i < M.rows(); ++i) worst = std::max(worst, std::abs(M.row(i).dot(g) - rhs(i)));
  return worst;
}

double residual_inf_omp(const Mat& M, const Vec& g, const Vec& rhs) {
  if (M.cols() != g.size() || M.rows() != rhs.size()) throw DimensionMismatch("residual: size mismatch");
  double worst = 0.0;
#pragma omp parallel for reduction(max : worst) schedule(static)
  for (Index i = 0; i < M.rows(); ++i) worst = std::max(worst, std::abs(M.row(i).dot(g) - rhs(i)));
  return worst;
}

void for_each_serial(std::size_t count, const std::function<void(std::size_t)>& job) {
  for (std::size_t i = 0; i < count; ++i) job(i);
}

void for_each_omp(std::size_t count, const std::function<void(std::size_t)>& job) {
  // Exceptions cannot cross the parallel region; the first one is rethrown.
  std::exception_ptr first_error;
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(count); ++i) {
    try {
      job(static_cast<std::size_t>(i));
    } catch (...) {
#pragma omp critical(hdeepc_for_each_error)
      if (!first_error) first_error = std::current_exception();
    }
  }
  if (first_error) std::rethrow_exception(first_error);
}

int max_threads() { return omp_get_max_threads(); }

}  // namespace hdeepc::kernels
