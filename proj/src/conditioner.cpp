#include "buildiff/conditioner.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "buildiff/error.hpp"
#include "buildiff/optim.hpp"
#include "buildiff/rng.hpp"

namespace buildiff {

SilhouetteImage::SilhouetteImage(std::size_t width, std::size_t height, std::vector<double> pixels)
    : width_(width), height_(height), pixels_(std::move(pixels)) {
  if (width == 0 || height == 0) throw std::invalid_argument("silhouette: zero dimension");
  if (pixels_.size() != width * height)
    throw std::invalid_argument("silhouette: pixel count does not match dimensions");
  for (double p : pixels_)
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("silhouette: pixel outside [0,1]");
}

SilhouetteImage rotate90(const SilhouetteImage& image) {
  const auto n = image.width();
  if (n != image.height()) throw std::invalid_argument("rotate90: image is not square");
  std::vector<double> out(n * n);
  // Counter-clockwise: new(x, y) = old(n-1-y, x).
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t x = 0; x < n; ++x) out[y * n + x] = image.at(n - 1 - y, x);
  return SilhouetteImage(n, n, std::move(out));
}

SilhouetteImage augment(const SilhouetteImage& image, std::uint64_t seed,
                        const AugmentOptions& options) {
  Rng rng(seed);
  const bool rotate = rng.uniform() < options.rotate_prob;
  const double shift = rng.uniform(-options.jitter, options.jitter);
  SilhouetteImage out = image;
  if (rotate) {
    if (image.width() != image.height())
      throw std::invalid_argument("augment: rotation drawn for a non-square image");
    out = rotate90(image);
  }
  if (shift == 0.0) return out;
  std::vector<double> px = out.pixels();
  for (auto& p : px) p = std::clamp(p + shift, 0.0, 1.0);
  return SilhouetteImage(out.width(), out.height(), std::move(px));
}

namespace {

struct ConvSpec {
  std::size_t in_side, kernel, stride, pad, dilation;
};

std::vector<std::int64_t> conv_index(const ConvSpec& s, std::size_t& out_side) {
  out_side = (s.in_side + 2 * s.pad - s.dilation * (s.kernel - 1) - 1) / s.stride + 1;
  std::vector<std::int64_t> idx;
  idx.reserve(out_side * out_side * s.kernel * s.kernel);
  for (std::size_t oy = 0; oy < out_side; ++oy)
    for (std::size_t ox = 0; ox < out_side; ++ox)
      for (std::size_t ky = 0; ky < s.kernel; ++ky)
        for (std::size_t kx = 0; kx < s.kernel; ++kx) {
          const auto iy = static_cast<std::int64_t>(oy * s.stride + ky * s.dilation) -
                          static_cast<std::int64_t>(s.pad);
          const auto ix = static_cast<std::int64_t>(ox * s.stride + kx * s.dilation) -
                          static_cast<std::int64_t>(s.pad);
          const auto side = static_cast<std::int64_t>(s.in_side);
          idx.push_back(iy < 0 || ix < 0 || iy >= side || ix >= side ? -1 : iy * side + ix);
        }
  return idx;
}

// Stride-2 3x3 transposed convolution (padding 1, output padding 1) as a
// dense convolution over the zero-interleaved input: in_side -> 2 * in_side.
std::vector<std::int64_t> tconv_index(std::size_t in_side) {
  const std::size_t out_side = 2 * in_side;
  const auto side = static_cast<std::int64_t>(in_side);
  std::vector<std::int64_t> idx;
  idx.reserve(out_side * out_side * 9);
  auto source = [side](std::int64_t p) -> std::int64_t {
    if (p < 0 || p % 2 != 0) return -1;
    const auto q = p / 2;
    return q < side ? q : -1;
  };
  for (std::size_t oy = 0; oy < out_side; ++oy)
    for (std::size_t ox = 0; ox < out_side; ++ox)
      for (std::int64_t ky = 0; ky < 3; ++ky)
        for (std::int64_t kx = 0; kx < 3; ++kx) {
          const auto iy = source(static_cast<std::int64_t>(oy) + ky - 1);
          const auto ix = source(static_cast<std::int64_t>(ox) + kx - 1);
          idx.push_back(iy < 0 || ix < 0 ? -1 : iy * side + ix);
        }
  return idx;
}

ad::Tensor kaiming_uniform(std::size_t fan_in, std::size_t out, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::vector<double> w(fan_in * out);
  for (auto& v : w) v = rng.uniform(-bound, bound);
  return ad::Tensor::matrix(fan_in, out, std::move(w));
}

}  // namespace

Autoencoder::Autoencoder(const AutoencoderConfig& config, std::uint64_t seed) : config_(config) {
  const auto s = config.image_size;
  if (s < 8 || s % 8 != 0)
    throw std::invalid_argument("autoencoder: image size must be a multiple of 8, got " +
                                std::to_string(s));
  const auto c1 = config.channels1, c2 = config.channels2, c3 = config.channels3;
  const auto cp = config.projection_channels, d = config.embed_dim;

  auto make_conv = [](std::size_t side, std::size_t stride, std::size_t pad, std::size_t dil) {
    ConvGeometry g;
    std::size_t out_side = 0;
    g.index = conv_index({side, 3, stride, pad, dil}, out_side);
    g.out_pixels = out_side * out_side;
    g.taps = 9;
    return g;
  };
  auto make_tconv = [](std::size_t side) {
    ConvGeometry g;
    g.index = tconv_index(side);
    g.out_pixels = 4 * side * side;
    g.taps = 9;
    return g;
  };
  enc1_ = make_conv(s, 2, 1, 1);
  enc2_ = make_conv(s / 2, 2, 1, 1);
  enc3_ = make_conv(s / 4, 2, 1, 1);
  bottleneck_ = s / 8;
  dil1_ = make_conv(bottleneck_, 1, 1, 1);
  dil2_ = make_conv(bottleneck_, 1, 2, 2);
  dec1_ = make_tconv(bottleneck_);
  dec2_ = make_tconv(s / 4);
  dec3_ = make_tconv(s / 2);

  const std::size_t cells = bottleneck_ * bottleneck_;
  auto add = [&](const std::string& name, std::size_t fan_in, std::size_t out) {
    Rng rng = Rng::derive(seed, params_.size());
    params_.add(name + ".w", kaiming_uniform(fan_in, out, rng));
    params_.add(name + ".b", ad::Tensor::zeros({1, out}));
  };
  add("enc.conv1", 9 * 1, c1);
  add("enc.conv2", 9 * c1, c2);
  add("enc.conv3", 9 * c2, c3);
  add("enc.dilated1", 9 * c3, c3);
  add("enc.dilated2", 9 * c3, c3);
  add("enc.project", c3, cp);
  add("enc.embed", cells * cp, d);
  add("dec.expand", d, cells * c3);
  add("dec.tconv1", 9 * c3, c2);
  add("dec.tconv2", 9 * c2, c1);
  add("dec.tconv3", 9 * c1, 1);
}

ad::Var Autoencoder::linear(ad::Tape& tape, ad::Var x, const std::string& name) {
  const auto w = tape.param(params_.at(name + ".w"));
  const auto b = tape.param(params_.at(name + ".b"));
  return ad::add(ad::matmul(x, w), ad::broadcast_rows(b, x.shape()[0]));
}

ad::Var Autoencoder::conv(ad::Tape& tape, ad::Var x, const ConvGeometry& g,
                          const std::string& name) {
  const auto channels = x.shape()[1];
  auto cols = ad::gather_rows(x, g.index);
  cols = ad::reshape(cols, {g.out_pixels, g.taps * channels});
  return linear(tape, cols, name);
}

void Autoencoder::check_image(const SilhouetteImage& image) const {
  if (image.width() != config_.image_size || image.height() != config_.image_size)
    throw std::invalid_argument("autoencoder: expected " + std::to_string(config_.image_size) + "x" +
                                std::to_string(config_.image_size) + " image, got " +
                                std::to_string(image.width()) + "x" +
                                std::to_string(image.height()));
}

ad::Var Autoencoder::encode(ad::Tape& tape, const SilhouetteImage& image) {
  check_image(image);
  const double slope = config_.slope;
  const auto side = config_.image_size;
  auto x = tape.constant(ad::Tensor::matrix(side * side, 1, image.pixels()));
  x = ad::leaky_relu(conv(tape, x, enc1_, "enc.conv1"), slope);
  x = ad::leaky_relu(conv(tape, x, enc2_, "enc.conv2"), slope);
  auto h = ad::leaky_relu(conv(tape, x, enc3_, "enc.conv3"), slope);
  const auto d1 = ad::leaky_relu(conv(tape, h, dil1_, "enc.dilated1"), slope);
  const auto d2 = ad::leaky_relu(conv(tape, d1, dil2_, "enc.dilated2"), slope);
  h = ad::add(ad::add(h, d1), d2);
  auto p = ad::leaky_relu(linear(tape, h, "enc.project"), slope);
  p = ad::reshape(p, {1, p.value().size()});
  return linear(tape, p, "enc.embed");
}

ad::Var Autoencoder::decode(ad::Tape& tape, ad::Var z) {
  const double slope = config_.slope;
  auto x = ad::leaky_relu(linear(tape, z, "dec.expand"), slope);
  x = ad::reshape(x, {bottleneck_ * bottleneck_, config_.channels3});
  x = ad::leaky_relu(conv(tape, x, dec1_, "dec.tconv1"), slope);
  x = ad::leaky_relu(conv(tape, x, dec2_, "dec.tconv2"), slope);
  return ad::sigmoid(conv(tape, x, dec3_, "dec.tconv3"));
}

ConditionEmbedding Autoencoder::encode(const SilhouetteImage& image) const {
  ad::Tape tape;
  // Read-only use of the parameters; see Denoiser::predict.
  auto& self = const_cast<Autoencoder&>(*this);
  const auto z = self.encode(tape, image);
  if (!z.value().all_finite()) throw NumericError("autoencoder: non-finite embedding");
  return {z.value().vec(), false};
}

SilhouetteImage Autoencoder::decode(const ConditionEmbedding& z) const {
  if (z.dropped || z.dim() != config_.embed_dim)
    throw std::invalid_argument("autoencoder: decode needs a " + std::to_string(config_.embed_dim) +
                                "-dimensional embedding");
  for (double v : z.values)
    if (!std::isfinite(v)) throw std::invalid_argument("autoencoder: non-finite embedding");
  ad::Tape tape;
  auto& self = const_cast<Autoencoder&>(*this);
  const auto img = self.decode(tape, tape.constant(ad::Tensor::matrix(1, z.dim(), z.values)));
  std::vector<double> px = img.value().vec();
  for (auto& p : px) p = std::clamp(std::isfinite(p) ? p : 0.0, 0.0, 1.0);
  return SilhouetteImage(config_.image_size, config_.image_size, std::move(px));
}

ad::Var ae_loss(ad::Var image, ad::Var reconstruction, ad::Var z, ad::Var z_aug) {
  return ad::add(ad::mse(image, reconstruction), ad::mse(z, z_aug));
}

AeTrainLog train_autoencoder(Autoencoder& model, std::span<const SilhouetteImage> images,
                             const AeTrainOptions& options) {
  if (images.empty()) throw std::invalid_argument("train_autoencoder: empty dataset");
  if (options.batch_size == 0) throw std::invalid_argument("train_autoencoder: zero batch size");
  const auto side = model.config().image_size;
  auto params = model.params().all();
  AdamState local;
  AdamState& adam = options.adam ? *options.adam : local;
  adam.lr = options.lr;
  AeTrainLog log;
  std::vector<std::size_t> order(images.size());
  for (std::size_t epoch = options.start_epoch; epoch < options.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle = Rng::derive(options.seed, epoch);
    std::shuffle(order.begin(), order.end(), shuffle.engine());
    double epoch_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
      const std::size_t end = std::min(order.size(), start + options.batch_size);
      ad::Tape tape;
      std::vector<ad::Var> losses;
      for (std::size_t b = start; b < end; ++b) {
        const auto& img = images[order[b]];
        const auto aug = augment(img, Rng::derive(options.seed, (epoch << 32) | order[b]).engine()(),
                                 options.augment);
        const auto z = model.encode(tape, img);
        auto z_aug = model.encode(tape, aug);
        if (model.config().stop_grad_augmented) z_aug = tape.constant(z_aug.value());
        const auto rec = model.decode(tape, z);
        const auto target = tape.constant(ad::Tensor::matrix(side * side, 1, img.pixels()));
        losses.push_back(ae_loss(target, rec, z, z_aug));
      }
      auto total = losses[0];
      for (std::size_t i = 1; i < losses.size(); ++i) total = ad::add(total, losses[i]);
      const auto loss = ad::scale(total, 1.0 / static_cast<double>(losses.size()));
      if (!std::isfinite(loss.value().item()))
        throw NumericError("autoencoder training diverged in epoch " + std::to_string(epoch + 1));
      tape.backward(loss);
      adam_step(adam, params);
      epoch_sum += loss.value().item() * static_cast<double>(end - start);
    }
    log.epoch_loss.push_back(epoch_sum / static_cast<double>(images.size()));
    if (options.on_epoch) options.on_epoch(epoch, log.epoch_loss.back());
  }
  return log;
}

}  // namespace buildiff
