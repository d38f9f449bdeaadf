#pragma once

// Silhouette auto-encoder producing the image embedding z_I.
//
// Encoder: three stride-2 3x3 convolutions, a dilated block (rates 1 and 2 in
// cascade, summed with its input), a 1x1 projection and a linear layer to d.
// Decoder: linear back to the bottleneck grid, then three stride-2 transposed
// convolutions and a sigmoid. Convolutions are gathers (im2col) followed by
// a matmul, so the whole network runs on the autodiff tape.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "buildiff/autodiff.hpp"
#include "buildiff/optim.hpp"
#include "buildiff/embedding.hpp"

namespace buildiff {

class SilhouetteImage {
 public:
  SilhouetteImage() = default;
  SilhouetteImage(std::size_t width, std::size_t height, std::vector<double> pixels);

  std::size_t width() const { return width_; }
  std::size_t height() const { return height_; }
  // Row-major, y down.
  const std::vector<double>& pixels() const { return pixels_; }
  double at(std::size_t x, std::size_t y) const { return pixels_[y * width_ + x]; }

  friend bool operator==(const SilhouetteImage&, const SilhouetteImage&) = default;

 private:
  std::size_t width_ = 0;
  std::size_t height_ = 0;
  std::vector<double> pixels_;
};

// Counter-clockwise quarter turn. Requires a square image.
SilhouetteImage rotate90(const SilhouetteImage& image);

struct AugmentOptions {
  double rotate_prob = 0.5;
  double jitter = 0.2;  // global additive intensity shift, uniform in +-jitter
};

SilhouetteImage augment(const SilhouetteImage& image, std::uint64_t seed,
                        const AugmentOptions& options = {});

struct AutoencoderConfig {
  std::size_t image_size = 32;
  std::size_t embed_dim = 128;
  std::size_t channels1 = 8;
  std::size_t channels2 = 16;
  std::size_t channels3 = 32;
  std::size_t projection_channels = 8;
  double slope = 0.01;
  // Treat z_I^a as a constant in the consistency loss.
  bool stop_grad_augmented = false;
};

class Autoencoder {
 public:
  Autoencoder(const AutoencoderConfig& config, std::uint64_t seed);

  const AutoencoderConfig& config() const { return config_; }
  ad::ParameterSet& params() { return params_; }
  const ad::ParameterSet& params() const { return params_; }

  // (1 x d)
  ad::Var encode(ad::Tape& tape, const SilhouetteImage& image);
  // (H*W x 1) in (0, 1)
  ad::Var decode(ad::Tape& tape, ad::Var z);

  ConditionEmbedding encode(const SilhouetteImage& image) const;
  SilhouetteImage decode(const ConditionEmbedding& z) const;

 private:
  struct ConvGeometry {
    std::vector<std::int64_t> index;
    std::size_t out_pixels = 0;
    std::size_t taps = 0;
  };
  ad::Var conv(ad::Tape& tape, ad::Var x, const ConvGeometry& g, const std::string& name);
  ad::Var linear(ad::Tape& tape, ad::Var x, const std::string& name);
  void check_image(const SilhouetteImage& image) const;

  AutoencoderConfig config_;
  ad::ParameterSet params_;
  ConvGeometry enc1_, enc2_, enc3_, dil1_, dil2_, dec1_, dec2_, dec3_;
  std::size_t bottleneck_ = 0;  // side length of the smallest grid
};

// MSE(I, I_hat) + MSE(z, z_a)
ad::Var ae_loss(ad::Var image, ad::Var reconstruction, ad::Var z, ad::Var z_aug);

struct AeTrainOptions {
  std::size_t epochs = 30;
  double lr = 0.0002;
  std::size_t batch_size = 8;
  std::uint64_t seed = 0;
  AugmentOptions augment;
  // Resume support: epochs before start_epoch are skipped and `adam`, when
  // set, carries the optimizer state across calls.
  std::size_t start_epoch = 0;
  AdamState* adam = nullptr;
  std::function<void(std::size_t epoch, double loss)> on_epoch;
};

struct AeTrainLog {
  std::vector<double> epoch_loss;  // mean L_AE per epoch
};

// Trains in place. Throws NumericError (naming the epoch) on divergence.
AeTrainLog train_autoencoder(Autoencoder& model, std::span<const SilhouetteImage> images,
                             const AeTrainOptions& options);

}  // namespace buildiff
