#pragma once

// Forward noising, x0 reconstruction, guided noise, the ancestral reverse
// step, and the base / upsampler sampling loops.

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "buildiff/autodiff.hpp"
#include "buildiff/denoiser.hpp"
#include "buildiff/embedding.hpp"
#include "buildiff/geometry.hpp"
#include "buildiff/rng.hpp"
#include "buildiff/schedule.hpp"

namespace buildiff {

// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps
PointCloud forward_noise(const PointCloud& x0, std::size_t t, std::span<const double> eps,
                         const NoiseSchedule& schedule);

// x0_hat = (x_t - sqrt(1 - abar_t) eps_hat) / sqrt(abar_t)
PointCloud reconstruct_x0(const PointCloud& xt, std::size_t t, std::span<const double> eps_hat,
                          const NoiseSchedule& schedule);
// Differentiable form, used by the footprint regularizer.
ad::Var reconstruct_x0(ad::Var xt, ad::Var eps_hat, std::size_t t, const NoiseSchedule& schedule);

// (1 + gamma) eps_cond - gamma eps_uncond
std::vector<double> guided_epsilon(std::span<const double> eps_cond,
                                   std::span<const double> eps_uncond, double gamma);

// x_{t-1} = (x_t - (1 - alpha_t)/sqrt(1 - abar_t) eps) / sqrt(alpha_t) + sigma_t z.
// z is ignored (and may be empty) at t = 1.
PointCloud ancestral_step(const PointCloud& xt, std::size_t t, std::span<const double> eps_guided,
                          std::span<const double> z, const NoiseSchedule& schedule);

std::vector<double> gaussian_noise(std::size_t count, Rng& rng);

struct SampleTrace {
  std::uint64_t seed = 0;
  double gamma = 0.0;
  std::size_t stride = 0;  // 0 disables snapshots
  // (t, x_t) in decreasing t.
  std::vector<std::pair<std::size_t, PointCloud>> snapshots;
};

struct SampleResult {
  PointCloud cloud;
  SampleTrace trace;
  std::size_t model_calls = 0;
};

struct SampleOptions {
  double gamma = 4.0;
  std::uint64_t seed = 0;
  std::size_t trace_stride = 0;
};

// Runs t = T..1 from Gaussian noise. Calls the model twice per step when
// gamma != 0 (conditional and null condition), once otherwise.
SampleResult sample_base(const NoisePredictor& model, const ConditionEmbedding& cond,
                         std::size_t points, const NoiseSchedule& schedule,
                         const SampleOptions& options);

// Denoises `points` - K new points while the first K rows are reset to
// `lowres` before every model call and after the final step.
SampleResult sample_upsampled(const NoisePredictor& model, const ConditionEmbedding& cond,
                              const PointCloud& lowres, std::size_t points,
                              const NoiseSchedule& schedule, const SampleOptions& options);

// Independent base chains in parallel; chain i draws from Rng::derive(seed, i).
std::vector<PointCloud> sample_base_chains(const NoisePredictor& model,
                                           std::span<const ConditionEmbedding> conds,
                                           std::size_t points, const NoiseSchedule& schedule,
                                           double gamma, std::uint64_t seed);

}  // namespace buildiff
