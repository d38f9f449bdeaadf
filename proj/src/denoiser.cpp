#include "buildiff/denoiser.hpp"

#include <cmath>
#include <stdexcept>

#include "buildiff/error.hpp"
#include "buildiff/rng.hpp"
#include "buildiff/schedule.hpp"

namespace buildiff {

namespace {

ad::Tensor kaiming_uniform(std::size_t in, std::size_t out, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(in));
  std::vector<double> w(in * out);
  for (auto& v : w) v = rng.uniform(-bound, bound);
  return ad::Tensor::matrix(in, out, std::move(w));
}

}  // namespace

Denoiser::Denoiser(const DenoiserConfig& config, std::uint64_t seed) : config_(config) {
  const auto d = config.embed_dim;
  if (d == 0 || d % 2 != 0) throw std::invalid_argument("denoiser: embedding dimension must be even");
  const std::size_t in = config.point_flag ? 4 : 3;

  add_linear("time.fc1", d, d, seed);
  add_linear("time.fc2", d, d, seed);
  add_linear("fuse.conv1", 2 * d, d, seed);
  add_linear("fuse.conv2", d, d, seed);
  {
    Rng rng = Rng::derive(seed, 0xa11);
    std::vector<double> null(d);
    for (auto& v : null) v = rng.normal();
    params_.add("null_embedding", ad::Tensor::matrix(1, d, std::move(null)));
  }
  add_linear("point.fc1", in, config.point_hidden, seed);
  add_linear("point.fc2", config.point_hidden + d, config.point_features, seed);
  add_linear("global.fc", config.point_features, config.global_features, seed);
  add_linear("decoder.fc1", config.point_features + config.global_features + d,
             config.decoder_hidden1, seed);
  add_linear("decoder.fc2", config.decoder_hidden1, config.decoder_hidden2, seed);
  add_linear("decoder.out", config.decoder_hidden2, 3, seed, /*zero=*/true);
}

void Denoiser::add_linear(const std::string& name, std::size_t in, std::size_t out,
                          std::uint64_t seed, bool zero) {
  Rng rng = Rng::derive(seed, params_.size());
  params_.add(name + ".w", zero ? ad::Tensor::zeros({in, out}) : kaiming_uniform(in, out, rng));
  params_.add(name + ".b", ad::Tensor::zeros({1, out}));
}

ad::Var Denoiser::linear(ad::Tape& tape, ad::Var x, const std::string& name) {
  const auto w = tape.param(params_.at(name + ".w"));
  const auto b = tape.param(params_.at(name + ".b"));
  return ad::add(ad::matmul(x, w), ad::broadcast_rows(b, x.shape()[0]));
}

void Denoiser::check_finite(const ad::Var& v, const std::string& layer) {
  if (!v.value().all_finite())
    throw NumericError("denoiser: non-finite activations in layer '" + layer + "'");
}

ad::Var Denoiser::fuse_conditions(ad::Tape& tape, const ConditionEmbedding& cond, std::size_t t,
                                  std::size_t points) {
  const auto d = config_.embed_dim;
  const double slope = config_.slope;
  if (points == 0) throw std::invalid_argument("fuse_conditions: zero points");
  if (!cond.dropped && cond.dim() != d)
    throw std::invalid_argument("fuse_conditions: image embedding has dimension " +
                                std::to_string(cond.dim()) + ", denoiser expects " +
                                std::to_string(d));

  auto zt = tape.constant(ad::Tensor::matrix(1, d, sinusoidal_embedding(static_cast<double>(t), d)));
  zt = ad::leaky_relu(linear(tape, zt, "time.fc1"), slope);
  zt = linear(tape, zt, "time.fc2");
  check_finite(zt, "time");

  const auto zi = cond.dropped ? tape.param(params_.at("null_embedding"))
                               : tape.constant(ad::Tensor::matrix(1, d, cond.values));
  // Every row of the broadcast K x 2d map is identical, so the per-point
  // convolutions run on one row and the result is broadcast afterwards.
  const ad::Var parts[] = {zi, zt};
  auto fused = ad::concat_cols(parts);
  fused = ad::leaky_relu(linear(tape, fused, "fuse.conv1"), slope);
  fused = ad::leaky_relu(linear(tape, fused, "fuse.conv2"), slope);
  check_finite(fused, "fuse");
  return ad::broadcast_rows(fused, points);
}

ad::Var Denoiser::forward(ad::Tape& tape, ad::Var xt, std::size_t t,
                          const ConditionEmbedding& cond, std::size_t fixed_points) {
  if (xt.shape().size() != 2 || xt.shape()[1] != 3)
    throw std::invalid_argument("denoiser: expected (K x 3) input, got " + ad::shape_str(xt.shape()));
  const std::size_t k = xt.shape()[0];
  const double slope = config_.slope;

  ad::Var input = xt;
  if (config_.point_flag) {
    if (fixed_points > k) throw std::invalid_argument("denoiser: more fixed points than points");
    std::vector<double> flag(k, 0.0);
    for (std::size_t i = 0; i < fixed_points; ++i) flag[i] = 1.0;
    const ad::Var parts[] = {xt, tape.constant(ad::Tensor::matrix(k, 1, std::move(flag)))};
    input = ad::concat_cols(parts);
  }

  const auto cmap = fuse_conditions(tape, cond, t, k);

  auto h1 = ad::leaky_relu(linear(tape, input, "point.fc1"), slope);
  check_finite(h1, "point.fc1");
  const ad::Var p2[] = {h1, cmap};
  auto feat = ad::leaky_relu(linear(tape, ad::concat_cols(p2), "point.fc2"), slope);
  check_finite(feat, "point.fc2");

  auto global = ad::leaky_relu(linear(tape, ad::reduce_max_rows(feat), "global.fc"), slope);
  check_finite(global, "global.fc");

  const ad::Var p3[] = {feat, ad::broadcast_rows(global, k), cmap};
  auto u = ad::leaky_relu(linear(tape, ad::concat_cols(p3), "decoder.fc1"), slope);
  u = ad::leaky_relu(linear(tape, u, "decoder.fc2"), slope);
  check_finite(u, "decoder.fc2");
  auto eps = linear(tape, u, "decoder.out");
  check_finite(eps, "decoder.out");
  return eps;
}

std::vector<double> Denoiser::predict(const PointCloud& xt, std::size_t t,
                                      const ConditionEmbedding& cond) const {
  ad::Tape tape;
  // Binding parameters copies their values into the tape; without a
  // backward() call nothing is written back, so concurrent calls are safe.
  auto& self = const_cast<Denoiser&>(*this);
  const auto x = tape.constant(xt.as_tensor());
  return self.forward(tape, x, t, cond, fixed_points_).value().vec();
}

}  // namespace buildiff
