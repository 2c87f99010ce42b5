#include <string>

#include "hdeepc/kernels.hpp"
#include "hdeepc/plantlab.hpp"

namespace hdeepc {

namespace {

double channel_scale(const Vec& scale, Index channel) {
  if (scale.size() == 1) return scale(0);
  return scale(channel);
}

void check_scale(const Vec& scale, Index channels, const char* what) {
  if (scale.size() != 1 && scale.size() != channels)
    throw DimensionMismatch(std::string(what) + " needs 1 or " + std::to_string(channels) + " entries");
}

Mat draw_uniform(Index m, Index T, std::uint64_t seed, const Vec& amplitude) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  Mat u(m, T);
  for (Index t = 0; t < T; ++t)
    for (Index i = 0; i < m; ++i) u(i, t) = channel_scale(amplitude, i) * unit(rng);
  return u;
}

}  // namespace

NoiseSource::NoiseSource(NoiseSpec spec, Index channels)
    : spec_(std::move(spec)), channels_(channels), rng_(spec_.rng_seed) {
  if (spec_.kind != NoiseKind::None) check_scale(spec_.scale, channels_, "noise scale");
}

Vec NoiseSource::draw() {
  Vec v = Vec::Zero(channels_);
  if (spec_.kind == NoiseKind::Gaussian) {
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Index i = 0; i < channels_; ++i) v(i) = channel_scale(spec_.scale, i) * normal(rng_);
  } else if (spec_.kind == NoiseKind::Uniform) {
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    for (Index i = 0; i < channels_; ++i) v(i) = channel_scale(spec_.scale, i) * unit(rng_);
  }
  return v;
}

Mat random_input(Index m, Index T, std::uint64_t seed, const Vec& amplitude) {
  check_scale(amplitude, m, "excitation amplitude");
  return draw_uniform(m, T, seed, amplitude);
}

Mat generate_pe_input(Index m, Index T, Index order, std::uint64_t seed, const Vec& amplitude) {
  check_scale(amplitude, m, "excitation amplitude");
  if (order < 1) throw LengthTooShort("excitation order must be at least 1");
  const Index needed = (m + 1) * order - 1;
  if (T < needed)
    throw LengthTooShort("persistent excitation of order " + std::to_string(order) + " needs at least " +
                         std::to_string(needed) + " samples, got " + std::to_string(T));
  Index best_rank = 0;
  for (int attempt = 0; attempt < 10; ++attempt) {
    Mat u = draw_uniform(m, T, seed + static_cast<std::uint64_t>(attempt) * 0x9e3779b97f4a7c15ull, amplitude);
    const Index r = rank_of(kernels::hankel_omp(u, order), 1e-9);
    if (r == m * order) return u;
    best_rank = std::max(best_rank, r);
  }
  throw ExcitationFailed("no persistently exciting input of order " + std::to_string(order) +
                         " after 10 attempts (best rank " + std::to_string(best_rank) + ")");
}

Vec moving_average_noise(Index T, double sd, Index window, std::uint64_t seed) {
  if (window < 1) throw DimensionMismatch("moving average window must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, sd);
  // Draw window-1 samples of history so the first outputs are full averages.
  Vec raw(T + window - 1);
  for (Index i = 0; i < raw.size(); ++i) raw(i) = normal(rng);
  Vec out(T);
  for (Index t = 0; t < T; ++t) out(t) = raw.segment(t, window).mean();
  return out;
}

}  // namespace hdeepc
