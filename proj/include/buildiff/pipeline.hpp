#pragma once

// Training loops for the three stages (auto-encoder, base diffusion,
// upsampler), checkpoint layout and model loading for inference.
//
// Checkpoint directory layout:
//   ae.bdif, base.bdif, upsampler.bdif   parameters + optimizer state + meta
//   <stage>.cfg                          config echo (key = value)
//   <stage>.rng                          RNG state at the checkpoint
//   <stage>.log.jsonl                    one JSON object per step / epoch
//   embeddings.bdif                      frozen image embeddings keyed by id
//   train.lock                           present while a stage is training

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "buildiff/autodiff.hpp"
#include "buildiff/conditioner.hpp"
#include "buildiff/config.hpp"
#include "buildiff/denoiser.hpp"
#include "buildiff/embedding.hpp"
#include "buildiff/geometry.hpp"
#include "buildiff/optim.hpp"
#include "buildiff/rng.hpp"
#include "buildiff/schedule.hpp"

namespace buildiff {

// lambda(t) * Chamfer(proj(x0), proj(x0_hat)) with nearest-neighbour
// assignments held fixed for the backward pass. Returns an exact zero
// constant, without any neighbour search, when lambda(t) == 0.
ad::Var regularization_loss(ad::Tape& tape, const PointCloud& x0, ad::Var x0_hat, std::size_t t,
                            const NoiseSchedule& schedule);

struct TrainSample {
  const PointCloud* x0 = nullptr;  // clean cloud, model point count
  const ConditionEmbedding* cond = nullptr;
  std::size_t fixed = 0;  // upsampler: leading rows of x0 are the clean conditioning
};

// Random quantities of one training sample.
struct SampleDraw {
  std::size_t t = 1;
  std::vector<double> eps;
  bool dropped = false;
};

struct SampleLog {
  std::size_t t = 0;
  double lambda = 0.0;
  bool dropped = false;
  double l_eps = 0.0;
  double l_reg = 0.0;
  double l_theta = 0.0;
};

struct StepLog {
  std::size_t epoch = 0;
  std::size_t step = 0;
  double l_eps = 0.0;    // batch means
  double l_reg = 0.0;
  double l_theta = 0.0;
  std::vector<SampleLog> samples;
};

// L_eps + rho * L_reg for one sample with the given draw.
ad::Var sample_loss(ad::Tape& tape, Denoiser& model, const TrainSample& sample,
                    const SampleDraw& draw, double rho, const NoiseSchedule& schedule,
                    SampleLog* log = nullptr);

// Draw order per sample: t, drop decision, noise.
SampleDraw draw_sample(std::size_t points, const NoiseSchedule& schedule, double drop_prob, Rng& rng);

struct StepControl {
  std::optional<bool> force_drop;
  std::optional<std::size_t> force_t;
};

StepLog train_step_base(Denoiser& model, AdamState& adam, std::span<const TrainSample> batch,
                        const TrainConfig& config, const NoiseSchedule& schedule, Rng& rng,
                        const StepControl& control = {});

// Every sample must carry fixed > 0 conditioning rows; the model must use
// point flags.
StepLog train_step_upsampler(Denoiser& model, AdamState& adam, std::span<const TrainSample> batch,
                             const TrainConfig& config, const NoiseSchedule& schedule, Rng& rng,
                             const StepControl& control = {});

enum class Stage { kAutoencoder, kBase, kUpsampler };
std::string to_string(Stage s);
// Command name of the stage ("train-ae", ...), used in dependency errors.
std::string command_name(Stage s);

std::filesystem::path checkpoint_path(const std::filesystem::path& dir, Stage s);
std::filesystem::path embeddings_path(const std::filesystem::path& dir);

struct TrainingOptions {
  std::filesystem::path data_root;
  std::filesystem::path checkpoint_dir;
  bool resume = false;
  // Stop after this many epochs in this call (0: run to the configured end).
  std::size_t max_epochs = 0;
  std::ostream* progress = nullptr;
};

struct TrainingResult {
  std::filesystem::path checkpoint;
  std::size_t epochs_completed = 0;
  std::vector<double> epoch_loss;  // epochs run in this call
};

TrainingResult run_training(Stage stage, const TrainConfig& config, const TrainingOptions& options);

// Inference-side loading. Missing files throw DependencyError naming the
// stage that produces them.
TrainConfig load_stage_config(const std::filesystem::path& dir, Stage s);
std::unique_ptr<Autoencoder> load_autoencoder(const std::filesystem::path& dir);
std::unique_ptr<Denoiser> load_denoiser(const std::filesystem::path& dir, Stage s);
std::map<std::string, ConditionEmbedding> load_embeddings(const std::filesystem::path& dir);

}  // namespace buildiff
