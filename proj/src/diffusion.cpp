#include "buildiff/diffusion.hpp"

#include <cmath>
#include <exception>
#include <stdexcept>
#include <string>

#include "buildiff/error.hpp"
#include "buildiff/rng.hpp"

namespace buildiff {

namespace {

void require_len(std::size_t got, std::size_t want, const char* who) {
  if (got != want)
    throw std::invalid_argument(std::string(who) + ": expected " + std::to_string(want) +
                                " noise values, got " + std::to_string(got));
}

void require_finite(std::span<const double> v, std::size_t t, const char* what) {
  for (double x : v)
    if (!std::isfinite(x))
      throw NumericError(std::string("sampling aborted: non-finite ") + what + " at step t=" +
                         std::to_string(t));
}

}  // namespace

PointCloud forward_noise(const PointCloud& x0, std::size_t t, std::span<const double> eps,
                         const NoiseSchedule& schedule) {
  schedule.check_step(t);
  require_len(eps.size(), x0.flat().size(), "forward_noise");
  const double a = std::sqrt(schedule.alpha_bar(t));
  const double b = std::sqrt(1.0 - schedule.alpha_bar(t));
  std::vector<double> out(eps.size());
  const auto x = x0.flat();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * x[i] + b * eps[i];
  return PointCloud(std::move(out), x0.meta());
}

PointCloud reconstruct_x0(const PointCloud& xt, std::size_t t, std::span<const double> eps_hat,
                          const NoiseSchedule& schedule) {
  schedule.check_step(t);
  require_len(eps_hat.size(), xt.flat().size(), "reconstruct_x0");
  const double a = std::sqrt(schedule.alpha_bar(t));
  const double b = std::sqrt(1.0 - schedule.alpha_bar(t));
  std::vector<double> out(eps_hat.size());
  const auto x = xt.flat();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (x[i] - b * eps_hat[i]) / a;
  return PointCloud(std::move(out), xt.meta());
}

ad::Var reconstruct_x0(ad::Var xt, ad::Var eps_hat, std::size_t t, const NoiseSchedule& schedule) {
  schedule.check_step(t);
  const double a = std::sqrt(schedule.alpha_bar(t));
  const double b = std::sqrt(1.0 - schedule.alpha_bar(t));
  return ad::scale(ad::sub(xt, ad::scale(eps_hat, b)), 1.0 / a);
}

std::vector<double> guided_epsilon(std::span<const double> eps_cond,
                                   std::span<const double> eps_uncond, double gamma) {
  if (eps_cond.size() != eps_uncond.size())
    throw std::invalid_argument("guided_epsilon: shape mismatch (" +
                                std::to_string(eps_cond.size()) + " vs " +
                                std::to_string(eps_uncond.size()) + ")");
  std::vector<double> out(eps_cond.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = (1.0 + gamma) * eps_cond[i] - gamma * eps_uncond[i];
  return out;
}

PointCloud ancestral_step(const PointCloud& xt, std::size_t t, std::span<const double> eps_guided,
                          std::span<const double> z, const NoiseSchedule& schedule) {
  if (t < 1) throw std::out_of_range("ancestral_step: t must be >= 1");
  schedule.check_step(t);
  require_len(eps_guided.size(), xt.flat().size(), "ancestral_step");
  if (t > 1) require_len(z.size(), xt.flat().size(), "ancestral_step");
  const double inv_sqrt_alpha = 1.0 / std::sqrt(schedule.alpha(t));
  const double coef = (1.0 - schedule.alpha(t)) / std::sqrt(1.0 - schedule.alpha_bar(t));
  const double sigma = schedule.sigma(t);
  const auto x = xt.flat();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = (x[i] - coef * eps_guided[i]) * inv_sqrt_alpha;
    if (t > 1) out[i] += sigma * z[i];
  }
  return PointCloud(std::move(out), xt.meta());
}

std::vector<double> gaussian_noise(std::size_t count, Rng& rng) {
  std::vector<double> out(count);
  for (auto& v : out) v = rng.normal();
  return out;
}

namespace {

std::vector<double> model_epsilon(const NoisePredictor& model, const PointCloud& x, std::size_t t,
                                  const ConditionEmbedding& cond, double gamma,
                                  std::size_t& calls) {
  auto eps_cond = model.predict(x, t, cond);
  ++calls;
  require_finite(eps_cond, t, "model output");
  if (gamma == 0.0) return eps_cond;
  const auto eps_uncond = model.predict(x, t, ConditionEmbedding::dropped_condition());
  ++calls;
  require_finite(eps_uncond, t, "model output");
  return guided_epsilon(eps_cond, eps_uncond, gamma);
}

void overwrite_prefix(PointCloud& x, const PointCloud& prefix) {
  auto dst = x.flat();
  const auto src = prefix.flat();
  std::copy(src.begin(), src.end(), dst.begin());
}

}  // namespace

SampleResult sample_base(const NoisePredictor& model, const ConditionEmbedding& cond,
                         std::size_t points, const NoiseSchedule& schedule,
                         const SampleOptions& options) {
  if (points < 1) throw std::invalid_argument("sample_base: need at least one point");
  Rng rng(options.seed);
  SampleResult result;
  result.trace.seed = options.seed;
  result.trace.gamma = options.gamma;
  result.trace.stride = options.trace_stride;

  PointCloud x(gaussian_noise(points * 3, rng));
  for (std::size_t t = schedule.steps(); t >= 1; --t) {
    if (options.trace_stride && (t == schedule.steps() || t % options.trace_stride == 0))
      result.trace.snapshots.emplace_back(t, x);
    const auto eps = model_epsilon(model, x, t, cond, options.gamma, result.model_calls);
    const auto z = t > 1 ? gaussian_noise(points * 3, rng) : std::vector<double>{};
    x = ancestral_step(x, t, eps, z, schedule);
  }
  if (options.trace_stride) result.trace.snapshots.emplace_back(0, x);
  result.cloud = std::move(x);
  return result;
}

SampleResult sample_upsampled(const NoisePredictor& model, const ConditionEmbedding& cond,
                              const PointCloud& lowres, std::size_t points,
                              const NoiseSchedule& schedule, const SampleOptions& options) {
  const std::size_t k = lowres.size();
  if (k == 0) throw std::invalid_argument("sample_upsampled: empty low-resolution cloud");
  if (points <= k)
    throw std::invalid_argument("sample_upsampled: target count " + std::to_string(points) +
                                " must exceed the " + std::to_string(k) + " conditioning points");
  Rng rng(options.seed);
  SampleResult result;
  result.trace.seed = options.seed;
  result.trace.gamma = options.gamma;
  result.trace.stride = options.trace_stride;

  PointCloud x(gaussian_noise(points * 3, rng));
  for (std::size_t t = schedule.steps(); t >= 1; --t) {
    overwrite_prefix(x, lowres);
    if (options.trace_stride && (t == schedule.steps() || t % options.trace_stride == 0))
      result.trace.snapshots.emplace_back(t, x);
    const auto eps = model_epsilon(model, x, t, cond, options.gamma, result.model_calls);
    const auto z = t > 1 ? gaussian_noise(points * 3, rng) : std::vector<double>{};
    x = ancestral_step(x, t, eps, z, schedule);
  }
  overwrite_prefix(x, lowres);
  if (options.trace_stride) result.trace.snapshots.emplace_back(0, x);
  result.cloud = std::move(x);
  return result;
}

std::vector<PointCloud> sample_base_chains(const NoisePredictor& model,
                                           std::span<const ConditionEmbedding> conds,
                                           std::size_t points, const NoiseSchedule& schedule,
                                           double gamma, std::uint64_t seed) {
  std::vector<PointCloud> out(conds.size());
  const auto n = static_cast<std::ptrdiff_t>(conds.size());
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      SampleOptions opts;
      opts.gamma = gamma;
      // Chain seeds come from a derived stream so chains never share noise.
      opts.seed = Rng::derive(seed, static_cast<std::uint64_t>(i)).engine()();
      out[static_cast<std::size_t>(i)] =
          sample_base(model, conds[static_cast<std::size_t>(i)], points, schedule, opts).cloud;
    } catch (...) {
#pragma omp critical
      failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

}  // namespace buildiff
