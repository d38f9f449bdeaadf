#pragma once

// Experiment configuration: a flat key=value file. Every key has a default;
// files and command-line flags override individual keys.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "buildiff/conditioner.hpp"
#include "buildiff/denoiser.hpp"
#include "buildiff/schedule.hpp"

namespace buildiff {

struct TrainConfig {
  std::uint64_t seed = 1;

  // base diffusion
  std::size_t steps = 1000;
  double beta_first = 0.0001;
  double beta_last = 0.02;
  SigmaMode sigma_mode = SigmaMode::kLarge;
  std::size_t points = 1024;  // K
  std::size_t embed_dim = 128;
  double rho = 0.001;
  double drop_prob = 0.1;
  double gamma = 4.0;
  double lr = 0.0002;
  std::size_t batch_size = 8;
  std::size_t epochs_base = 700;

  // upsampler
  std::size_t steps_upsampler = 500;
  std::size_t points_high = 4096;  // N
  std::size_t epochs_upsampler = 200;
  std::string upsampler_conditioning = "fps";  // fps | random

  // denoiser widths
  std::size_t point_hidden = 64;
  std::size_t point_features = 128;
  std::size_t global_features = 128;
  std::size_t decoder_hidden1 = 128;
  std::size_t decoder_hidden2 = 64;

  // auto-encoder
  std::size_t image_size = 32;
  std::size_t epochs_ae = 30;
  double lr_ae = 0.0002;
  std::size_t batch_size_ae = 8;
  std::size_t ae_channels1 = 8;
  std::size_t ae_channels2 = 16;
  std::size_t ae_channels3 = 32;
  std::size_t ae_projection_channels = 8;
  bool stop_grad_augmented = false;
  double augment_rotate_prob = 0.5;
  double augment_jitter = 0.2;

  std::size_t checkpoint_every = 10;  // epochs

  static TrainConfig paper();
  static TrainConfig toy();

  // Throws std::invalid_argument naming the offending key.
  void validate() const;

  NoiseSchedule base_schedule() const;
  NoiseSchedule upsampler_schedule() const;
  DenoiserConfig base_denoiser() const;
  DenoiserConfig upsampler_denoiser() const;
  AutoencoderConfig autoencoder() const;
};

struct ConfigKey {
  std::string name;
  std::string help;
  std::function<std::string(const TrainConfig&)> get;
  std::function<void(TrainConfig&, const std::string&)> set;
};

// All keys in file order.
const std::vector<ConfigKey>& config_keys();
const ConfigKey* find_config_key(const std::string& name);

// Sets one key from text; throws InputError on an unknown key or bad value.
void set_config_value(TrainConfig& config, const std::string& key, const std::string& value);

std::string format_config(const TrainConfig& config);
// Applies the assignments in `text` on top of `base`.
TrainConfig parse_config(const std::string& text, TrainConfig base = TrainConfig::paper());
TrainConfig load_config(const std::filesystem::path& path, TrainConfig base = TrainConfig::paper());
void save_config(const std::filesystem::path& path, const TrainConfig& config);

}  // namespace buildiff
