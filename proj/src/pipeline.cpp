#include "buildiff/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "buildiff/checkpoint.hpp"
#include "buildiff/cloud_io.hpp"
#include "buildiff/datagen.hpp"
#include "buildiff/diffusion.hpp"
#include "buildiff/error.hpp"
#include "buildiff/image_io.hpp"
#include "buildiff/kdtree.hpp"
#include "buildiff/kernels.hpp"

namespace buildiff {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::size_t kBruteForcePairs = std::size_t{1} << 20;

// Nearest reference row for every query row (xyz triples).
std::vector<std::int64_t> nearest_rows(const PointCloud& queries, const PointCloud& refs) {
  std::vector<std::int64_t> out(queries.size());
  if (queries.size() * refs.size() <= kBruteForcePairs) {
    std::vector<kernels::NearestHit> hits(queries.size());
    kernels::nearest(queries.flat(), refs.flat(), hits);
    for (std::size_t i = 0; i < hits.size(); ++i) out[i] = static_cast<std::int64_t>(hits[i].index);
    return out;
  }
  const KdTree tree(refs);
  const auto n = static_cast<std::ptrdiff_t>(queries.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i)
    out[static_cast<std::size_t>(i)] =
        static_cast<std::int64_t>(tree.nearest(queries.point(static_cast<std::size_t>(i))).index);
  return out;
}

// Mean over rows of the squared row norm of a (n x 3) variable.
ad::Var mean_sq_rows(ad::Var d) { return ad::scale(ad::reduce_mean(ad::mul(d, d)), 3.0); }

}  // namespace

ad::Var regularization_loss(ad::Tape& tape, const PointCloud& x0, ad::Var x0_hat, std::size_t t,
                            const NoiseSchedule& schedule) {
  schedule.check_step(t);
  if (x0_hat.shape().size() != 2 || x0_hat.shape()[1] != 3)
    throw std::invalid_argument("regularization_loss: expected (n x 3) reconstruction, got " +
                                ad::shape_str(x0_hat.shape()));
  if (x0_hat.shape()[0] != x0.size())
    throw std::invalid_argument("regularization_loss: point counts differ (" +
                                std::to_string(x0.size()) + " vs " +
                                std::to_string(x0_hat.shape()[0]) + ")");
  const double lambda = lambda_weight(t, schedule.steps());
  if (lambda == 0.0) return tape.constant(ad::Tensor::scalar(0.0));

  const std::size_t n = x0.size();
  const auto ref = project_footprint(x0).points;
  const auto pred = project_footprint(PointCloud::from_tensor(x0_hat.value())).points;

  std::vector<double> mask(3 * n);
  for (std::size_t i = 0; i < n; ++i) mask[3 * i] = mask[3 * i + 1] = 1.0;
  const auto pred_var = ad::mul(x0_hat, tape.constant(ad::Tensor::matrix(n, 3, std::move(mask))));
  const auto ref_var = tape.constant(ref.as_tensor());

  const auto pred_to_ref = nearest_rows(pred, ref);
  const auto ref_to_pred = nearest_rows(ref, pred);
  const auto forward = mean_sq_rows(ad::sub(pred_var, ad::gather_rows(ref_var, pred_to_ref)));
  const auto backward = mean_sq_rows(ad::sub(ref_var, ad::gather_rows(pred_var, ref_to_pred)));
  return ad::scale(ad::add(forward, backward), lambda);
}

SampleDraw draw_sample(std::size_t points, const NoiseSchedule& schedule, double drop_prob, Rng& rng) {
  SampleDraw d;
  d.t = static_cast<std::size_t>(rng.integer(1, static_cast<std::int64_t>(schedule.steps())));
  d.dropped = rng.bernoulli(drop_prob);
  d.eps = gaussian_noise(3 * points, rng);
  return d;
}

ad::Var sample_loss(ad::Tape& tape, Denoiser& model, const TrainSample& sample,
                    const SampleDraw& draw, double rho, const NoiseSchedule& schedule,
                    SampleLog* log) {
  if (!sample.x0 || !sample.cond) throw std::invalid_argument("sample_loss: incomplete sample");
  const PointCloud& x0 = *sample.x0;
  const std::size_t n = x0.size();
  const std::size_t k = sample.fixed;
  if (k >= n && k > 0) throw std::invalid_argument("sample_loss: no free points to denoise");

  auto xt = forward_noise(x0, draw.t, draw.eps, schedule);
  std::copy_n(x0.flat().begin(), 3 * k, xt.flat().begin());
  const auto xt_var = tape.constant(xt.as_tensor());
  const auto cond = draw.dropped ? ConditionEmbedding::dropped_condition() : *sample.cond;
  const auto eps_hat = model.forward(tape, xt_var, draw.t, cond, k);

  ad::Var l_eps;
  ad::Var x0_hat = reconstruct_x0(xt_var, eps_hat, draw.t, schedule);
  if (k == 0) {
    l_eps = ad::mse(eps_hat, tape.constant(ad::Tensor::matrix(n, 3, draw.eps)));
  } else {
    std::vector<std::int64_t> free_rows(n - k);
    std::iota(free_rows.begin(), free_rows.end(), static_cast<std::int64_t>(k));
    std::vector<double> eps_free(draw.eps.begin() + static_cast<std::ptrdiff_t>(3 * k), draw.eps.end());
    l_eps = ad::mse(ad::gather_rows(eps_hat, free_rows),
                    tape.constant(ad::Tensor::matrix(n - k, 3, std::move(eps_free))));
    // The conditioning rows of the reconstruction are the clean points.
    std::vector<std::int64_t> keep(n, -1);
    for (std::size_t i = k; i < n; ++i) keep[i] = static_cast<std::int64_t>(i);
    std::vector<double> fixed_rows(3 * n, 0.0);
    std::copy_n(x0.flat().begin(), 3 * k, fixed_rows.begin());
    x0_hat = ad::add(ad::gather_rows(x0_hat, keep),
                     tape.constant(ad::Tensor::matrix(n, 3, std::move(fixed_rows))));
  }
  const auto l_reg = regularization_loss(tape, x0, x0_hat, draw.t, schedule);
  const auto total = ad::add(l_eps, ad::scale(l_reg, rho));
  if (log) {
    log->t = draw.t;
    log->lambda = lambda_weight(draw.t, schedule.steps());
    log->dropped = draw.dropped;
    log->l_eps = l_eps.value().item();
    log->l_reg = l_reg.value().item();
    log->l_theta = total.value().item();
  }
  return total;
}

namespace {

StepLog train_step(Denoiser& model, AdamState& adam, std::span<const TrainSample> batch,
                   const TrainConfig& config, const NoiseSchedule& schedule, Rng& rng,
                   const StepControl& control) {
  if (batch.empty()) throw std::invalid_argument("train_step: empty batch");
  adam.lr = config.lr;
  ad::Tape tape;
  StepLog log;
  log.samples.resize(batch.size());
  ad::Var total;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    auto draw = draw_sample(batch[i].x0->size(), schedule, config.drop_prob, rng);
    if (control.force_t) draw.t = *control.force_t;
    if (control.force_drop) draw.dropped = *control.force_drop;
    const auto loss = sample_loss(tape, model, batch[i], draw, config.rho, schedule, &log.samples[i]);
    total = i == 0 ? loss : ad::add(total, loss);
    log.l_eps += log.samples[i].l_eps;
    log.l_reg += log.samples[i].l_reg;
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  const auto loss = ad::scale(total, inv);
  log.l_eps *= inv;
  log.l_reg *= inv;
  log.l_theta = loss.value().item();
  // Parameters unused by this batch (the null embedding when nothing was
  // dropped) still receive a zero gradient.
  for (auto* p : model.params().all()) tape.param(*p);
  if (!std::isfinite(log.l_theta)) {
    std::ostringstream msg;
    msg << "training loss is not finite (L_eps=" << log.l_eps << ", L_reg=" << log.l_reg << ", t=";
    for (std::size_t i = 0; i < log.samples.size(); ++i) msg << (i ? "," : "") << log.samples[i].t;
    msg << ")";
    throw NumericError(msg.str());
  }
  tape.backward(loss);
  adam_step(adam, model.params().all());
  log.step = adam.step;
  return log;
}

}  // namespace

StepLog train_step_base(Denoiser& model, AdamState& adam, std::span<const TrainSample> batch,
                        const TrainConfig& config, const NoiseSchedule& schedule, Rng& rng,
                        const StepControl& control) {
  for (const auto& s : batch)
    if (s.fixed != 0) throw std::invalid_argument("train_step_base: samples must not carry fixed rows");
  return train_step(model, adam, batch, config, schedule, rng, control);
}

StepLog train_step_upsampler(Denoiser& model, AdamState& adam, std::span<const TrainSample> batch,
                             const TrainConfig& config, const NoiseSchedule& schedule, Rng& rng,
                             const StepControl& control) {
  if (!model.config().point_flag)
    throw std::invalid_argument("train_step_upsampler: the model must use point flags");
  for (const auto& s : batch)
    if (s.fixed == 0) throw std::invalid_argument("train_step_upsampler: samples need conditioning rows");
  return train_step(model, adam, batch, config, schedule, rng, control);
}

// ---- stages ------------------------------------------------------------

std::string to_string(Stage s) {
  switch (s) {
    case Stage::kAutoencoder: return "ae";
    case Stage::kBase: return "base";
    case Stage::kUpsampler: return "upsampler";
  }
  return "?";
}

std::string command_name(Stage s) {
  switch (s) {
    case Stage::kAutoencoder: return "train-ae";
    case Stage::kBase: return "train-base";
    case Stage::kUpsampler: return "train-upsampler";
  }
  return "?";
}

fs::path checkpoint_path(const fs::path& dir, Stage s) { return dir / (to_string(s) + ".bdif"); }
fs::path embeddings_path(const fs::path& dir) { return dir / "embeddings.bdif"; }

namespace {

fs::path side_file(const fs::path& dir, Stage s, const char* ext) { return dir / (to_string(s) + ext); }

class DirectoryLock {
 public:
  explicit DirectoryLock(fs::path path) : path_(std::move(path)) {
    std::FILE* f = std::fopen(path_.c_str(), "wx");
    if (!f)
      throw InputError("checkpoint directory is in use (lock file " + path_.string() +
                       " exists); remove it if no training run is active");
    std::fclose(f);
  }
  ~DirectoryLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }
  DirectoryLock(const DirectoryLock&) = delete;
  DirectoryLock& operator=(const DirectoryLock&) = delete;

 private:
  fs::path path_;
};

void require_file(const fs::path& path, Stage producer) {
  if (!fs::exists(path))
    throw DependencyError("missing " + path.string() + ": stage '" + to_string(producer) +
                          "' has not been trained (run " + command_name(producer) + " first)");
}

bool is_state_entry(const std::string& name) {
  return name.rfind("adam.", 0) == 0 || name.rfind("meta.", 0) == 0;
}

void write_text_atomic(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw InputError("cannot write " + tmp.string());
    os << text;
  }
  fs::rename(tmp, path);
}

void save_stage(const fs::path& dir, Stage stage, const ad::ParameterSet& params,
                const AdamState& adam, std::size_t epoch, const TrainConfig& config,
                const Rng* rng) {
  auto entries = snapshot(params);
  const auto all = params.all();
  for (std::size_t i = 0; i < adam.m.size(); ++i) {
    entries.push_back({"adam.m." + all[i]->name, ad::Tensor(all[i]->value.shape(), adam.m[i])});
    entries.push_back({"adam.v." + all[i]->name, ad::Tensor(all[i]->value.shape(), adam.v[i])});
  }
  entries.push_back({"meta.epoch", ad::Tensor::scalar(static_cast<double>(epoch))});
  entries.push_back({"meta.adam_step", ad::Tensor::scalar(static_cast<double>(adam.step))});
  const fs::path path = checkpoint_path(dir, stage);
  const fs::path tmp = path.string() + ".tmp";
  write_checkpoint(tmp, entries);
  fs::rename(tmp, path);
  write_text_atomic(side_file(dir, stage, ".cfg"), format_config(config));
  if (rng) write_text_atomic(side_file(dir, stage, ".rng"), rng->state());
}

// Restores parameters and optimizer state; returns the completed epoch count.
std::size_t load_stage_state(const fs::path& dir, Stage stage, ad::ParameterSet& params,
                             AdamState& adam, Rng* rng) {
  const auto entries = read_checkpoint(checkpoint_path(dir, stage));
  restore(params, entries);
  std::map<std::string, const ad::Tensor*> by_name;
  for (const auto& e : entries) by_name[e.name] = &e.tensor;
  auto scalar = [&](const std::string& name) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw InputError("checkpoint lacks '" + name + "'");
    return it->second->item();
  };
  adam.step = static_cast<std::uint64_t>(scalar("meta.adam_step"));
  adam.m.clear();
  adam.v.clear();
  if (adam.step > 0) {
    for (const auto* p : params.all()) {
      auto m = by_name.find("adam.m." + p->name);
      auto v = by_name.find("adam.v." + p->name);
      if (m == by_name.end() || v == by_name.end())
        throw InputError("checkpoint lacks optimizer state for '" + p->name + "'");
      adam.m.push_back(m->second->vec());
      adam.v.push_back(v->second->vec());
    }
  }
  if (rng) {
    std::ifstream is(side_file(dir, stage, ".rng"));
    if (!is) throw InputError("missing RNG state " + side_file(dir, stage, ".rng").string());
    std::ostringstream ss;
    ss << is.rdbuf();
    rng->set_state(ss.str());
  }
  return static_cast<std::size_t>(scalar("meta.epoch"));
}

// Keys that may change between a checkpoint and its resumption.
bool resumable_key(const std::string& key) {
  return key.rfind("epochs_", 0) == 0 || key == "checkpoint_every";
}

void check_resume_config(const fs::path& dir, Stage stage, const TrainConfig& config) {
  const auto saved = load_config(side_file(dir, stage, ".cfg"));
  for (const auto& k : config_keys()) {
    if (resumable_key(k.name)) continue;
    if (k.get(saved) != k.get(config))
      throw DataMismatchError("cannot resume " + to_string(stage) + ": config key '" + k.name +
                              "' changed from " + k.get(saved) + " to " + k.get(config));
  }
}

DatasetManifest open_dataset(const fs::path& root) {
  const auto path = root / "manifest.json";
  if (!fs::exists(path)) throw InputError("no dataset manifest at " + path.string());
  return load_manifest(path);
}

std::ofstream open_log(const fs::path& dir, Stage stage, bool append) {
  std::ofstream os(side_file(dir, stage, ".log.jsonl"), append ? std::ios::app : std::ios::trunc);
  if (!os) throw InputError("cannot write training log in " + dir.string());
  return os;
}

std::uint64_t stage_seed(const TrainConfig& config, Stage stage, std::uint64_t purpose) {
  return Rng::derive(config.seed, (static_cast<std::uint64_t>(stage) << 8) | purpose).engine()();
}

TrainingResult train_autoencoder_stage(const TrainConfig& config, const TrainingOptions& options,
                                       const DatasetManifest& manifest) {
  const auto& dir = options.checkpoint_dir;
  if (manifest.image_size != config.image_size)
    throw DataMismatchError("dataset silhouettes are " + std::to_string(manifest.image_size) +
                            " px but image_size is " + std::to_string(config.image_size));
  std::vector<SilhouetteImage> images;
  for (const auto* e : manifest.split("train")) images.push_back(read_pgm(options.data_root / e->silhouette));
  if (images.empty()) throw InputError("dataset has no training silhouettes");

  Autoencoder model(config.autoencoder(), stage_seed(config, Stage::kAutoencoder, 0));
  AdamState adam;
  std::size_t start = 0;
  const bool resuming = options.resume && fs::exists(checkpoint_path(dir, Stage::kAutoencoder));
  if (resuming) {
    check_resume_config(dir, Stage::kAutoencoder, config);
    start = load_stage_state(dir, Stage::kAutoencoder, model.params(), adam, nullptr);
  }
  const std::size_t end =
      options.max_epochs ? std::min(config.epochs_ae, start + options.max_epochs) : config.epochs_ae;
  auto log = open_log(dir, Stage::kAutoencoder, resuming);

  TrainingResult result;
  AeTrainOptions ao;
  ao.epochs = end;
  ao.start_epoch = start;
  ao.lr = config.lr_ae;
  ao.batch_size = config.batch_size_ae;
  ao.seed = stage_seed(config, Stage::kAutoencoder, 1);
  ao.augment.rotate_prob = config.augment_rotate_prob;
  ao.augment.jitter = config.augment_jitter;
  ao.adam = &adam;
  ao.on_epoch = [&](std::size_t epoch, double loss) {
    log << json{{"epoch", epoch + 1}, {"loss", loss}}.dump() << '\n';
    if (options.progress)
      *options.progress << "ae epoch " << epoch + 1 << "/" << config.epochs_ae << " loss " << loss << '\n';
    if ((epoch + 1) % config.checkpoint_every == 0 || epoch + 1 == end)
      save_stage(dir, Stage::kAutoencoder, model.params(), adam, epoch + 1, config, nullptr);
  };
  result.epoch_loss = train_autoencoder(model, images, ao).epoch_loss;
  if (start == end) save_stage(dir, Stage::kAutoencoder, model.params(), adam, end, config, nullptr);
  result.epochs_completed = end;
  result.checkpoint = checkpoint_path(dir, Stage::kAutoencoder);

  if (end == config.epochs_ae) {
    // Freeze: cache embeddings of every silhouette in the dataset.
    std::vector<NamedTensor> cache(manifest.entries.size());
    const auto count = static_cast<std::ptrdiff_t>(manifest.entries.size());
    std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < count; ++i) {
      try {
        const auto& e = manifest.entries[static_cast<std::size_t>(i)];
        const auto z = model.encode(read_pgm(options.data_root / e.silhouette));
        cache[static_cast<std::size_t>(i)] = {e.id, ad::Tensor::matrix(1, z.dim(), z.values)};
      } catch (...) {
#pragma omp critical
        failure = std::current_exception();
      }
    }
    if (failure) std::rethrow_exception(failure);
    const fs::path tmp = embeddings_path(dir).string() + ".tmp";
    write_checkpoint(tmp, cache);
    fs::rename(tmp, embeddings_path(dir));
  }
  return result;
}

TrainingResult train_diffusion_stage(Stage stage, const TrainConfig& config,
                                     const TrainingOptions& options, const DatasetManifest& manifest) {
  const auto& dir = options.checkpoint_dir;
  const bool upsampler = stage == Stage::kUpsampler;
  require_file(checkpoint_path(dir, Stage::kAutoencoder), Stage::kAutoencoder);
  require_file(embeddings_path(dir), Stage::kAutoencoder);
  const auto ae_config = load_stage_config(dir, Stage::kAutoencoder);
  if (ae_config.embed_dim != config.embed_dim)
    throw DataMismatchError("conditioner embeds to d=" + std::to_string(ae_config.embed_dim) +
                            " but embed_dim is " + std::to_string(config.embed_dim));
  const auto embeddings = load_embeddings(dir);

  const std::size_t points = upsampler ? config.points_high : config.points;
  if (manifest.points < points)
    throw DataMismatchError("dataset clouds have " + std::to_string(manifest.points) +
                            " points, training needs " + std::to_string(points));
  std::vector<PointCloud> clouds;
  std::vector<const ConditionEmbedding*> conds;
  for (const auto* e : manifest.split("train")) {
    auto it = embeddings.find(e->id);
    if (it == embeddings.end())
      throw DataMismatchError("no cached embedding for '" + e->id + "'; rerun train-ae");
    clouds.push_back(read_bpc(options.data_root / e->cloud));
    if (clouds.back().size() < points)
      throw DataMismatchError("cloud " + e->cloud + " has " + std::to_string(clouds.back().size()) +
                              " points, training needs " + std::to_string(points));
    conds.push_back(&it->second);
  }
  if (clouds.empty()) throw InputError("dataset has no training clouds");

  const auto schedule = upsampler ? config.upsampler_schedule() : config.base_schedule();
  Denoiser model(upsampler ? config.upsampler_denoiser() : config.base_denoiser(),
                 stage_seed(config, stage, 0));
  AdamState adam;
  adam.lr = config.lr;
  Rng rng(stage_seed(config, stage, 1));
  std::size_t start = 0;
  const bool resuming = options.resume && fs::exists(checkpoint_path(dir, stage));
  if (resuming) {
    check_resume_config(dir, stage, config);
    start = load_stage_state(dir, stage, model.params(), adam, &rng);
  }
  const std::size_t epochs = upsampler ? config.epochs_upsampler : config.epochs_base;
  const std::size_t end = options.max_epochs ? std::min(epochs, start + options.max_epochs) : epochs;
  auto log = open_log(dir, stage, resuming);

  TrainingResult result;
  std::vector<std::size_t> order(clouds.size());
  for (std::size_t epoch = start; epoch < end; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle = Rng::derive(stage_seed(config, stage, 2), epoch);
    std::shuffle(order.begin(), order.end(), shuffle.engine());
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t first = 0; first < order.size(); first += config.batch_size) {
      const std::size_t last = std::min(order.size(), first + config.batch_size);
      std::vector<PointCloud> x0s;
      std::vector<TrainSample> batch;
      x0s.reserve(last - first);
      for (std::size_t b = first; b < last; ++b) {
        const auto& cloud = clouds[order[b]];
        auto x0 = select(cloud, random_subset(cloud.size(), points, rng.engine()()));
        if (upsampler && config.upsampler_conditioning == "fps") {
          auto idx = farthest_point_indices(x0, config.points, rng.engine()());
          std::vector<bool> taken(points, false);
          for (auto i : idx) taken[i] = true;
          for (std::size_t i = 0; i < points; ++i)
            if (!taken[i]) idx.push_back(i);
          x0 = select(x0, idx);
        }
        x0s.push_back(std::move(x0));
      }
      for (std::size_t b = first; b < last; ++b)
        batch.push_back({&x0s[b - first], conds[order[b]], upsampler ? config.points : 0});
      auto step = upsampler ? train_step_upsampler(model, adam, batch, config, schedule, rng)
                            : train_step_base(model, adam, batch, config, schedule, rng);
      step.epoch = epoch + 1;
      json samples = json::array();
      for (const auto& s : step.samples)
        samples.push_back({{"t", s.t}, {"lambda", s.lambda}, {"dropped", s.dropped}});
      log << json{{"epoch", step.epoch}, {"step", step.step}, {"L_eps", step.l_eps},
                  {"L_reg", step.l_reg}, {"L_theta", step.l_theta}, {"samples", samples}}
                 .dump()
          << '\n';
      loss_sum += step.l_theta;
      ++batches;
    }
    result.epoch_loss.push_back(loss_sum / static_cast<double>(batches));
    if (options.progress)
      *options.progress << to_string(stage) << " epoch " << epoch + 1 << "/" << epochs << " loss "
                        << result.epoch_loss.back() << '\n';
    if ((epoch + 1) % config.checkpoint_every == 0 || epoch + 1 == end)
      save_stage(dir, stage, model.params(), adam, epoch + 1, config, &rng);
  }
  if (start == end) save_stage(dir, stage, model.params(), adam, end, config, &rng);
  result.epochs_completed = end;
  result.checkpoint = checkpoint_path(dir, stage);
  return result;
}

}  // namespace

TrainingResult run_training(Stage stage, const TrainConfig& config, const TrainingOptions& options) {
  config.validate();
  std::error_code ec;
  fs::create_directories(options.checkpoint_dir, ec);
  if (ec)
    throw InputError("cannot create checkpoint directory " + options.checkpoint_dir.string() + ": " +
                     ec.message());
  // Dependencies are checked before taking the lock so the error names the stage.
  if (stage != Stage::kAutoencoder) {
    require_file(checkpoint_path(options.checkpoint_dir, Stage::kAutoencoder), Stage::kAutoencoder);
    if (stage == Stage::kUpsampler)
      require_file(checkpoint_path(options.checkpoint_dir, Stage::kBase), Stage::kBase);
  }
  const auto manifest = open_dataset(options.data_root);
  DirectoryLock lock(options.checkpoint_dir / "train.lock");
  if (stage == Stage::kAutoencoder) return train_autoencoder_stage(config, options, manifest);
  return train_diffusion_stage(stage, config, options, manifest);
}

TrainConfig load_stage_config(const fs::path& dir, Stage s) {
  const auto path = side_file(dir, s, ".cfg");
  require_file(path, s);
  return load_config(path);
}

std::unique_ptr<Autoencoder> load_autoencoder(const fs::path& dir) {
  const auto config = load_stage_config(dir, Stage::kAutoencoder);
  require_file(checkpoint_path(dir, Stage::kAutoencoder), Stage::kAutoencoder);
  auto model = std::make_unique<Autoencoder>(config.autoencoder(), 0);
  restore(model->params(), read_checkpoint(checkpoint_path(dir, Stage::kAutoencoder)));
  return model;
}

std::unique_ptr<Denoiser> load_denoiser(const fs::path& dir, Stage s) {
  if (s == Stage::kAutoencoder) throw std::invalid_argument("load_denoiser: not a diffusion stage");
  const auto config = load_stage_config(dir, s);
  require_file(checkpoint_path(dir, s), s);
  auto model = std::make_unique<Denoiser>(
      s == Stage::kUpsampler ? config.upsampler_denoiser() : config.base_denoiser(), 0);
  auto entries = read_checkpoint(checkpoint_path(dir, s));
  std::erase_if(entries, [](const NamedTensor& e) { return is_state_entry(e.name); });
  restore(model->params(), entries);
  return model;
}

std::map<std::string, ConditionEmbedding> load_embeddings(const fs::path& dir) {
  require_file(embeddings_path(dir), Stage::kAutoencoder);
  std::map<std::string, ConditionEmbedding> out;
  for (auto& e : read_checkpoint(embeddings_path(dir))) out[e.name] = {e.tensor.vec(), false};
  return out;
}

}  // namespace buildiff
