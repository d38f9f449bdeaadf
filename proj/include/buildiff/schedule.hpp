#pragma once

#include <cstddef>
#include <vector>

namespace buildiff {

// Per-step sampling noise for the ancestral update.
enum class SigmaMode {
  kLarge,      // sigma_t^2 = beta_t
  kPosterior,  // sigma_t^2 = beta_t (1 - abar_{t-1}) / (1 - abar_t)
};

// Linear beta schedule on 1-based steps t = 1..T. Accessors take t directly.
class NoiseSchedule {
 public:
  NoiseSchedule(std::size_t steps, double beta_first, double beta_last,
                SigmaMode sigma_mode = SigmaMode::kLarge);

  std::size_t steps() const { return betas_.size(); }
  double beta(std::size_t t) const { return betas_.at(t - 1); }
  double alpha(std::size_t t) const { return alphas_.at(t - 1); }
  double alpha_bar(std::size_t t) const { return alpha_bars_.at(t - 1); }
  // Always 0 at t = 1.
  double sigma(std::size_t t) const { return sigmas_.at(t - 1); }
  SigmaMode sigma_mode() const { return sigma_mode_; }
  double beta_first() const { return betas_.front(); }
  double beta_last() const { return betas_.back(); }

  void check_step(std::size_t t) const;

 private:
  std::vector<double> betas_, alphas_, alpha_bars_, sigmas_;
  SigmaMode sigma_mode_;
};

NoiseSchedule linear_beta_schedule(std::size_t steps, double beta_first, double beta_last,
                                   SigmaMode sigma_mode = SigmaMode::kLarge);

// Footprint-regularizer weight: 1 at t = 1, then 0.75 / 0.5 / 0.25 / 0 on the
// quarters of (1, T], upper bounds inclusive.
double lambda_weight(std::size_t t, std::size_t steps);

// Sinusoidal step embedding: [2i] = sin(t / 10000^(2i/d)), [2i+1] = cos(...).
std::vector<double> sinusoidal_embedding(double t, std::size_t dim);

}  // namespace buildiff
