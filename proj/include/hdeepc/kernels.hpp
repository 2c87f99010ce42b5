#pragma once

// Data-parallel kernels. Each OpenMP kernel has a serial twin with the same
// contract; tests check they agree and bench/ compares their timings.

#include <cstddef>
#include <functional>

#include "hdeepc/densekit.hpp"

namespace hdeepc::kernels {

/// Block Hankel matrix of a signal stored as a (q x T) matrix, one sample
/// per column. Column j of the result stacks samples j..j+L-1.
[[nodiscard]] Mat hankel_serial(const Mat& samples, Index depth);
[[nodiscard]] Mat hankel_omp(const Mat& samples, Index depth);

/// ||M g - rhs||_inf
[[nodiscard]] double residual_inf_serial(const Mat& M, const Vec& g, const Vec& rhs);
[[nodiscard]] double residual_inf_omp(const Mat& M, const Vec& g, const Vec& rhs);

/// Runs job(i) for i in [0, count). Jobs must not share mutable state; the
/// caller collects results by index.
void for_each_serial(std::size_t count, const std::function<void(std::size_t)>& job);
void for_each_omp(std::size_t count, const std::function<void(std::size_t)>& job);

/// Threads OpenMP will use for the parallel variants.
[[nodiscard]] int max_threads();

}  // namespace hdeepc::kernels
