#include "buildiff/schedule.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace buildiff {

NoiseSchedule::NoiseSchedule(std::size_t steps, double beta_first, double beta_last,
                             SigmaMode sigma_mode)
    : sigma_mode_(sigma_mode) {
  if (steps < 2) throw std::invalid_argument("noise schedule: need at least 2 steps");
  if (!(beta_first > 0.0 && beta_first < beta_last && beta_last < 1.0))
    throw std::invalid_argument("noise schedule: require 0 < beta_1 < beta_T < 1");
  betas_.resize(steps);
  alphas_.resize(steps);
  alpha_bars_.resize(steps);
  sigmas_.resize(steps);
  const double span = beta_last - beta_first;
  double abar = 1.0;
  for (std::size_t i = 0; i < steps; ++i) {
    betas_[i] = beta_first + static_cast<double>(i) / static_cast<double>(steps - 1) * span;
    alphas_[i] = 1.0 - betas_[i];
    abar *= alphas_[i];
    alpha_bars_[i] = abar;
  }
  sigmas_[0] = 0.0;
  for (std::size_t i = 1; i < steps; ++i) {
    const double var = sigma_mode == SigmaMode::kLarge
                           ? betas_[i]
                           : betas_[i] * (1.0 - alpha_bars_[i - 1]) / (1.0 - alpha_bars_[i]);
    sigmas_[i] = std::sqrt(var);
  }
}

void NoiseSchedule::check_step(std::size_t t) const {
  if (t < 1 || t > steps())
    throw std::out_of_range("time step " + std::to_string(t) + " outside [1, " +
                            std::to_string(steps()) + "]");
}

NoiseSchedule linear_beta_schedule(std::size_t steps, double beta_first, double beta_last,
                                   SigmaMode sigma_mode) {
  return NoiseSchedule(steps, beta_first, beta_last, sigma_mode);
}

double lambda_weight(std::size_t t, std::size_t steps) {
  if (t < 1 || t > steps)
    throw std::out_of_range("lambda_weight: t=" + std::to_string(t) + " outside [1, " +
                            std::to_string(steps) + "]");
  if (t == 1) return 1.0;
  // Compare 4t against multiples of T so fractional quarter points are exact.
  const std::size_t q = 4 * t;
  if (q <= steps) return 0.75;
  if (q <= 2 * steps) return 0.5;
  if (q <= 3 * steps) return 0.25;
  return 0.0;
}

std::vector<double> sinusoidal_embedding(double t, std::size_t dim) {
  if (dim == 0 || dim % 2 != 0)
    throw std::invalid_argument("sinusoidal_embedding: dimension must be even and positive, got " +
                                std::to_string(dim));
  std::vector<double> out(dim);
  for (std::size_t i = 0; i < dim / 2; ++i) {
    const double freq = std::pow(10000.0, static_cast<double>(2 * i) / static_cast<double>(dim));
    out[2 * i] = std::sin(t / freq);
    out[2 * i + 1] = std::cos(t / freq);
  }
  return out;
}

}  // namespace buildiff
