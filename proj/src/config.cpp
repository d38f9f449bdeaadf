#include "buildiff/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "buildiff/error.hpp"

namespace buildiff {

TrainConfig TrainConfig::paper() { return TrainConfig{}; }

TrainConfig TrainConfig::toy() {
  TrainConfig c;
  c.steps = 100;
  c.points = 256;
  c.embed_dim = 32;
  c.steps_upsampler = 50;
  c.points_high = 512;
  c.epochs_upsampler = 20;
  c.checkpoint_every = 10;
  // With T = 100 the 1000-step betas leave alpha_bar_T near 0.37, so sampling
  // would start far from anything seen in training. Scale them by 1000 / T.
  c.beta_first = 0.001;
  c.beta_last = 0.2;
  // At this coarse T, sqrt(beta_2) is larger than what the t = 1 step can
  // remove; the posterior variance keeps the last steps quiet.
  c.sigma_mode = SigmaMode::kPosterior;
  // Small data and a one-core budget: faster optimisation, longer runs.
  c.lr = 0.001;
  c.lr_ae = 0.001;
  c.epochs_ae = 100;
  c.epochs_base = 300;
  // Silhouettes here are always upright. Rotation consistency would make the
  // embedding blind to which side is up, which is where the roof shape shows.
  c.augment_rotate_prob = 0.0;
  return c;
}

void TrainConfig::validate() const {
  auto require = [](bool ok, const char* key, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("config: ") + key + " " + what);
  };
  require(steps >= 2, "steps", "must be >= 2");
  require(steps_upsampler >= 2, "steps_upsampler", "must be >= 2");
  require(beta_first > 0.0 && beta_first <= beta_last && beta_last < 1.0, "beta_first/beta_last",
          "must satisfy 0 < beta_first <= beta_last < 1");
  require(points >= 1, "points", "must be >= 1");
  require(points_high > points, "points_high", "must exceed points");
  require(embed_dim >= 2 && embed_dim % 2 == 0, "embed_dim", "must be even and >= 2");
  require(rho >= 0.0, "rho", "must be >= 0");
  require(drop_prob >= 0.0 && drop_prob <= 1.0, "drop_prob", "must lie in [0,1]");
  require(gamma >= 0.0, "gamma", "must be >= 0");
  require(lr > 0.0, "lr", "must be positive");
  require(lr_ae > 0.0, "lr_ae", "must be positive");
  require(batch_size >= 1, "batch_size", "must be >= 1");
  require(batch_size_ae >= 1, "batch_size_ae", "must be >= 1");
  require(image_size >= 8 && image_size % 8 == 0, "image_size", "must be a multiple of 8");
  require(upsampler_conditioning == "fps" || upsampler_conditioning == "random",
          "upsampler_conditioning", "must be fps or random");
  require(augment_rotate_prob >= 0.0 && augment_rotate_prob <= 1.0, "augment_rotate_prob",
          "must lie in [0,1]");
  require(augment_jitter >= 0.0, "augment_jitter", "must be >= 0");
  require(checkpoint_every >= 1, "checkpoint_every", "must be >= 1");
  require(point_hidden && point_features && global_features && decoder_hidden1 && decoder_hidden2,
          "denoiser widths", "must be positive");
  require(ae_channels1 && ae_channels2 && ae_channels3 && ae_projection_channels, "ae channels",
          "must be positive");
}

NoiseSchedule TrainConfig::base_schedule() const {
  return linear_beta_schedule(steps, beta_first, beta_last, sigma_mode);
}

NoiseSchedule TrainConfig::upsampler_schedule() const {
  return linear_beta_schedule(steps_upsampler, beta_first, beta_last, sigma_mode);
}

DenoiserConfig TrainConfig::base_denoiser() const {
  DenoiserConfig d;
  d.embed_dim = embed_dim;
  d.point_hidden = point_hidden;
  d.point_features = point_features;
  d.global_features = global_features;
  d.decoder_hidden1 = decoder_hidden1;
  d.decoder_hidden2 = decoder_hidden2;
  return d;
}

DenoiserConfig TrainConfig::upsampler_denoiser() const {
  auto d = base_denoiser();
  d.point_flag = true;
  return d;
}

AutoencoderConfig TrainConfig::autoencoder() const {
  AutoencoderConfig a;
  a.image_size = image_size;
  a.embed_dim = embed_dim;
  a.channels1 = ae_channels1;
  a.channels2 = ae_channels2;
  a.channels3 = ae_channels3;
  a.projection_channels = ae_projection_channels;
  a.stop_grad_augmented = stop_grad_augmented;
  return a;
}

namespace {

std::string fmt(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
  T v{};
  const char* first = text.data();
  const char* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last)
    throw InputError("config: invalid value '" + text + "' for " + key);
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw InputError("config: invalid boolean '" + text + "' for " + key);
}

template <class M>
ConfigKey key(const char* name, const char* help, M TrainConfig::*member) {
  ConfigKey k;
  k.name = name;
  k.help = help;
  k.get = [member](const TrainConfig& c) {
    if constexpr (std::is_same_v<M, double>) return fmt(c.*member);
    else if constexpr (std::is_same_v<M, bool>) return std::string(c.*member ? "true" : "false");
    else if constexpr (std::is_same_v<M, std::string>) return c.*member;
    else return std::to_string(c.*member);
  };
  k.set = [member, n = std::string(name)](TrainConfig& c, const std::string& v) {
    if constexpr (std::is_same_v<M, bool>) c.*member = parse_bool(n, v);
    else if constexpr (std::is_same_v<M, std::string>) c.*member = v;
    else c.*member = parse_number<M>(n, v);
  };
  return k;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> k;
    k.push_back(key("seed", "master random seed", &TrainConfig::seed));
    k.push_back(key("steps", "diffusion steps T of the base model", &TrainConfig::steps));
    k.push_back(key("beta_first", "beta at t=1", &TrainConfig::beta_first));
    k.push_back(key("beta_last", "beta at t=T", &TrainConfig::beta_last));
    ConfigKey sigma;
    sigma.name = "sigma_mode";
    sigma.help = "reverse-step variance: large (beta_t) or posterior";
    sigma.get = [](const TrainConfig& c) {
      return std::string(c.sigma_mode == SigmaMode::kLarge ? "large" : "posterior");
    };
    sigma.set = [](TrainConfig& c, const std::string& v) {
      if (v == "large") c.sigma_mode = SigmaMode::kLarge;
      else if (v == "posterior") c.sigma_mode = SigmaMode::kPosterior;
      else throw InputError("config: sigma_mode must be large or posterior, got '" + v + "'");
    };
    k.push_back(sigma);
    k.push_back(key("points", "points K generated by the base model", &TrainConfig::points));
    k.push_back(key("embed_dim", "embedding dimension d", &TrainConfig::embed_dim));
    k.push_back(key("rho", "weight of the footprint regularization loss", &TrainConfig::rho));
    k.push_back(key("drop_prob", "probability of dropping the image condition", &TrainConfig::drop_prob));
    k.push_back(key("gamma", "guidance scale", &TrainConfig::gamma));
    k.push_back(key("lr", "Adam learning rate for the diffusion models", &TrainConfig::lr));
    k.push_back(key("batch_size", "clouds per training step", &TrainConfig::batch_size));
    k.push_back(key("epochs_base", "training epochs of the base model", &TrainConfig::epochs_base));
    k.push_back(key("steps_upsampler", "diffusion steps of the upsampler", &TrainConfig::steps_upsampler));
    k.push_back(key("points_high", "points N of the upsampled cloud", &TrainConfig::points_high));
    k.push_back(key("epochs_upsampler", "training epochs of the upsampler", &TrainConfig::epochs_upsampler));
    k.push_back(key("upsampler_conditioning", "low-res conditioning during training: fps or random",
                    &TrainConfig::upsampler_conditioning));
    k.push_back(key("point_hidden", "denoiser first per-point layer width", &TrainConfig::point_hidden));
    k.push_back(key("point_features", "denoiser per-point feature width", &TrainConfig::point_features));
    k.push_back(key("global_features", "denoiser global feature width", &TrainConfig::global_features));
    k.push_back(key("decoder_hidden1", "denoiser decoder width 1", &TrainConfig::decoder_hidden1));
    k.push_back(key("decoder_hidden2", "denoiser decoder width 2", &TrainConfig::decoder_hidden2));
    k.push_back(key("image_size", "silhouette side length in pixels", &TrainConfig::image_size));
    k.push_back(key("epochs_ae", "auto-encoder training epochs", &TrainConfig::epochs_ae));
    k.push_back(key("lr_ae", "auto-encoder learning rate", &TrainConfig::lr_ae));
    k.push_back(key("batch_size_ae", "auto-encoder images per step", &TrainConfig::batch_size_ae));
    k.push_back(key("ae_channels1", "encoder channels after the first convolution", &TrainConfig::ae_channels1));
    k.push_back(key("ae_channels2", "encoder channels after the second convolution", &TrainConfig::ae_channels2));
    k.push_back(key("ae_channels3", "encoder channels after the third convolution", &TrainConfig::ae_channels3));
    k.push_back(key("ae_projection_channels", "channels before the linear projection",
                    &TrainConfig::ae_projection_channels));
    k.push_back(key("stop_grad_augmented", "treat the augmented embedding as a constant",
                    &TrainConfig::stop_grad_augmented));
    k.push_back(key("augment_rotate_prob", "probability of a 90 degree rotation", &TrainConfig::augment_rotate_prob));
    k.push_back(key("augment_jitter", "intensity jitter amplitude", &TrainConfig::augment_jitter));
    k.push_back(key("checkpoint_every", "epochs between checkpoints", &TrainConfig::checkpoint_every));
    return k;
  }();
  return keys;
}

const ConfigKey* find_config_key(const std::string& name) {
  for (const auto& k : config_keys())
    if (k.name == name) return &k;
  return nullptr;
}

void set_config_value(TrainConfig& config, const std::string& key, const std::string& value) {
  const auto* k = find_config_key(key);
  if (!k) throw InputError("config: unknown key '" + key + "'");
  k->set(config, value);
}

std::string format_config(const TrainConfig& config) {
  std::string out;
  for (const auto& k : config_keys()) out += k.name + " = " + k.get(config) + "\n";
  return out;
}

TrainConfig parse_config(const std::string& text, TrainConfig base) {
  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw InputError("config line " + std::to_string(lineno) + ": expected key = value");
    set_config_value(base, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return base;
}

TrainConfig load_config(const std::filesystem::path& path, TrainConfig base) {
  std::ifstream is(path);
  if (!is) throw InputError("cannot read config " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str(), std::move(base));
}

void save_config(const std::filesystem::path& path, const TrainConfig& config) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw InputError("cannot write config " + path.string());
  os << format_config(config);
}

}  // namespace buildiff
