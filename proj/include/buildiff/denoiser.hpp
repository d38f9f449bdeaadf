#pragma once

// Conditional noise predictor eps(x_t, t, z_I).
//
// Backbone: a shared per-point MLP with a global max-pooled context vector.
// Conditioning: the step embedding goes through two linear layers with
// LeakyReLU; it and the image embedding (or the learned null embedding) are
// broadcast to K x d, concatenated to K x 2d and passed through two per-point
// convolutions, giving a K x d map that is concatenated into the point
// features before and after pooling.

#include <cstdint>
#include <string>
#include <vector>

#include "buildiff/autodiff.hpp"
#include "buildiff/embedding.hpp"
#include "buildiff/geometry.hpp"

namespace buildiff {

// Anything that predicts noise for a noisy cloud: the trained network or an
// analytic oracle. Implementations must be safe to call concurrently.
class NoisePredictor {
 public:
  virtual ~NoisePredictor() = default;
  // Returns n x 3 values, flat.
  virtual std::vector<double> predict(const PointCloud& xt, std::size_t t,
                                      const ConditionEmbedding& cond) const = 0;
};

struct DenoiserConfig {
  std::size_t embed_dim = 128;
  std::size_t point_hidden = 64;
  std::size_t point_features = 128;
  std::size_t global_features = 128;
  std::size_t decoder_hidden1 = 128;
  std::size_t decoder_hidden2 = 64;
  // Upsampler variant: a fourth input channel flags the fixed conditioning points.
  bool point_flag = false;
  double slope = 0.01;
};

class Denoiser : public NoisePredictor {
 public:
  Denoiser(const DenoiserConfig& config, std::uint64_t seed);

  const DenoiserConfig& config() const { return config_; }
  ad::ParameterSet& params() { return params_; }
  const ad::ParameterSet& params() const { return params_; }

  // K x d fused condition map. Uses the null embedding when cond.dropped.
  ad::Var fuse_conditions(ad::Tape& tape, const ConditionEmbedding& cond, std::size_t t,
                          std::size_t points);

  // Differentiable forward pass; xt is (K x 3). `fixed_points` leading rows
  // are flagged as conditioning when the config enables point flags.
  ad::Var forward(ad::Tape& tape, ad::Var xt, std::size_t t, const ConditionEmbedding& cond,
                  std::size_t fixed_points = 0);

  std::vector<double> predict(const PointCloud& xt, std::size_t t,
                              const ConditionEmbedding& cond) const override;

  // Number of leading points treated as fixed conditioning in predict().
  void set_fixed_points(std::size_t k) { fixed_points_ = k; }
  std::size_t fixed_points() const { return fixed_points_; }

 private:
  ad::Var linear(ad::Tape& tape, ad::Var x, const std::string& name);
  void add_linear(const std::string& name, std::size_t in, std::size_t out, std::uint64_t seed,
                  bool zero = false);
  static void check_finite(const ad::Var& v, const std::string& layer);

  DenoiserConfig config_;
  ad::ParameterSet params_;
  std::size_t fixed_points_ = 0;
};

}  // namespace buildiff
