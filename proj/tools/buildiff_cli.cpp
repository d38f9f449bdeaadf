// buildiff: dataset generation, stage training, sampling, evaluation, export.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <omp.h>

#include <CLI11.hpp>
#include <json.hpp>

#include "buildiff/cloud_io.hpp"
#include "buildiff/config.hpp"
#include "buildiff/datagen.hpp"
#include "buildiff/diffusion.hpp"
#include "buildiff/error.hpp"
#include "buildiff/image_io.hpp"
#include "buildiff/metrics.hpp"
#include "buildiff/pipeline.hpp"

namespace fs = std::filesystem;
using namespace buildiff;
using nlohmann::json;

namespace {

struct ConfigFlags {
  std::string preset = "paper";
  std::string file;
  std::map<std::string, std::string> values;

  void attach(CLI::App* cmd) {
    cmd->add_option("--preset", preset, "default values: paper or toy")
        ->check(CLI::IsMember({"paper", "toy"}))
        ->capture_default_str();
    cmd->add_option("--config", file, "key = value file applied on top of the preset");
    const auto defaults = TrainConfig::paper();
    for (const auto& k : config_keys()) {
      auto* opt = cmd->add_option_function<std::string>(
          "--" + k.name, [this, name = k.name](const std::string& v) { values[name] = v; },
          k.help + " (paper default " + k.get(defaults) + ")");
      opt->type_name(k.name == "sigma_mode" ? "MODE" : "VALUE");
    }
  }

  TrainConfig resolve() const {
    TrainConfig c = preset == "toy" ? TrainConfig::toy() : TrainConfig::paper();
    if (!file.empty()) c = load_config(file, c);
    for (const auto& [k, v] : values) set_config_value(c, k, v);
    return c;
  }
};

int run_gen_data(const fs::path& out, const DatasetConfig& config) {
  const auto manifest = build_dataset(config, out);
  std::size_t gable = 0;
  for (const auto& e : manifest.entries) gable += e.spec.roof == RoofType::kGable;
  std::cout << "wrote " << manifest.entries.size() << " buildings (" << config.train_count
            << " train, " << config.test_count << " test, " << gable << " gable) to "
            << out.string() << '\n';
  return 0;
}

int run_train(Stage stage, const TrainConfig& config, const fs::path& data, const fs::path& ckpt,
              bool resume, std::size_t max_epochs, bool quiet) {
  TrainingOptions options;
  options.data_root = data;
  options.checkpoint_dir = ckpt;
  options.resume = resume;
  options.max_epochs = max_epochs;
  options.progress = quiet ? nullptr : &std::cout;
  const auto result = run_training(stage, config, options);
  std::cout << to_string(stage) << ": " << result.epochs_completed << " epochs, checkpoint "
            << result.checkpoint.string() << '\n';
  return 0;
}

struct SampleArgs {
  fs::path checkpoints;
  fs::path image;
  std::string id;
  fs::path out;
  std::optional<double> gamma;
  std::uint64_t seed = 0;
  bool high_res = false;
  fs::path trace;
  std::size_t trace_stride = 10;
};

int run_sample(const SampleArgs& a) {
  const auto config = load_stage_config(a.checkpoints, Stage::kBase);
  auto base = load_denoiser(a.checkpoints, Stage::kBase);
  std::unique_ptr<Denoiser> up;
  TrainConfig up_config;
  if (a.high_res) {
    up_config = load_stage_config(a.checkpoints, Stage::kUpsampler);
    up = load_denoiser(a.checkpoints, Stage::kUpsampler);
  }
  ConditionEmbedding cond;
  if (!a.id.empty()) {
    const auto cache = load_embeddings(a.checkpoints);
    auto it = cache.find(a.id);
    if (it == cache.end()) throw InputError("no cached embedding for id '" + a.id + "'");
    cond = it->second;
  } else {
    const auto ae = load_autoencoder(a.checkpoints);
    cond = ae->encode(read_pgm(a.image));
  }
  const double gamma = a.gamma.value_or(config.gamma);

  SampleOptions so;
  so.gamma = gamma;
  so.seed = a.seed;
  so.trace_stride = a.trace.empty() ? 0 : a.trace_stride;
  const auto schedule = config.base_schedule();
  auto result = sample_base(*base, cond, config.points, schedule, so);
  std::size_t steps = schedule.steps();
  std::size_t calls = result.model_calls;
  PointCloud cloud = result.cloud;
  std::vector<std::pair<std::string, PointCloud>> trace;
  for (auto& [t, c] : result.trace.snapshots) trace.emplace_back("base_t" + std::to_string(t), c);

  if (a.high_res) {
    up->set_fixed_points(config.points);
    SampleOptions uo = so;
    uo.seed = Rng::derive(a.seed, 1).engine()();
    const auto up_schedule = up_config.upsampler_schedule();
    auto hr = sample_upsampled(*up, cond, cloud, up_config.points_high, up_schedule, uo);
    steps += up_schedule.steps();
    calls += hr.model_calls;
    cloud = hr.cloud;
    for (auto& [t, c] : hr.trace.snapshots) trace.emplace_back("upsampler_t" + std::to_string(t), c);
  }

  write_cloud(a.out, cloud);
  if (!a.trace.empty()) {
    fs::create_directories(a.trace);
    for (const auto& [name, c] : trace) write_ply(a.trace / (name + ".ply"), c);
  }
  std::cout << "seed " << a.seed << " gamma " << gamma << " steps " << steps << " model_calls "
            << calls << " points " << cloud.size() << " -> " << a.out.string() << '\n';
  return 0;
}

std::map<std::string, fs::path> list_clouds(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw InputError("not a directory: " + dir.string());
  std::map<std::string, fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto ext = e.path().extension().string();
    if (!e.is_regular_file() || (ext != ".ply" && ext != ".bpc" && ext != ".xyz")) continue;
    const auto id = e.path().stem().string();
    if (out.count(id)) throw InputError("duplicate id '" + id + "' in " + dir.string());
    out[id] = e.path();
  }
  return out;
}

int run_eval(const fs::path& pred_dir, const fs::path& ref_dir, const fs::path& report,
             const EvalOptions& options) {
  const auto preds = list_clouds(pred_dir);
  const auto refs = list_clouds(ref_dir);
  std::vector<std::string> missing;
  for (const auto& [id, p] : preds)
    if (!refs.count(id)) missing.push_back(id + " (no reference)");
  for (const auto& [id, p] : refs)
    if (!preds.count(id)) missing.push_back(id + " (no prediction)");
  if (!missing.empty()) {
    for (const auto& m : missing) std::cerr << "unmatched id: " << m << '\n';
    throw DataMismatchError(std::to_string(missing.size()) + " unmatched id(s)");
  }
  if (preds.empty()) throw InputError("no clouds found in " + pred_dir.string());

  std::vector<std::string> ids;
  for (const auto& [id, p] : preds) ids.push_back(id);
  std::vector<PairReport> reports(ids.size());
  int threads = omp_get_max_threads();
  if (const char* env = std::getenv("BUILDIFF_THREADS")) {
    const int cap = std::atoi(env);
    if (cap < 1) throw InputError("BUILDIFF_THREADS must be a positive integer");
    threads = std::min(threads, cap);
  }
  std::exception_ptr failure;
  const auto count = static_cast<std::ptrdiff_t>(ids.size());
#pragma omp parallel for schedule(dynamic) num_threads(threads)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    try {
      const auto& id = ids[static_cast<std::size_t>(i)];
      reports[static_cast<std::size_t>(i)] =
          evaluate_pair(read_cloud(preds.at(id)), read_cloud(refs.at(id)), options);
    } catch (...) {
#pragma omp critical
      failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);

  std::ofstream os;
  if (!report.empty()) {
    os.open(report, std::ios::trunc);
    if (!os) throw InputError("cannot write report " + report.string());
  }
  double cd = 0.0, emd_sum = 0.0, f1 = 0.0;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto& r = reports[i];
    cd += r.cd_scaled;
    emd_sum += r.emd_scaled;
    f1 += r.f1;
    if (os)
      os << json{{"id", ids[i]},          {"cd_x100", r.cd_scaled},     {"emd_x100", r.emd_scaled},
                 {"f1", r.f1},            {"n_pred", r.n_pred},         {"n_ref", r.n_ref},
                 {"emd_resampled", r.emd_resampled}}
                .dump()
         << '\n';
  }
  const double n = static_cast<double>(ids.size());
  std::cout << "pairs " << ids.size() << '\n';
  std::cout << "CD(x10^2)\tEMD(x10^2)\tF1\n";
  std::cout << cd / n << '\t' << emd_sum / n << '\t' << f1 / n << '\n';
  return 0;
}

int run_export(const fs::path& in, const fs::path& out) {
  const auto cloud = read_cloud(in);
  write_cloud(out, cloud);
  std::cout << "exported " << cloud.size() << " points to " << out.string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"buildiff: image-conditioned building point cloud diffusion"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate the procedural building dataset");
  fs::path gen_out;
  DatasetConfig dc;
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--seed", dc.seed, "random seed")->capture_default_str();
  gen->add_option("--train", dc.train_count, "training buildings")->capture_default_str();
  gen->add_option("--test", dc.test_count, "test buildings")->capture_default_str();
  gen->add_option("--gable-fraction", dc.gable_fraction, "share of gable roofs")->capture_default_str();
  gen->add_option("--hip-fraction", dc.hip_fraction, "share of hip roofs")->capture_default_str();
  gen->add_option("--l-shape-fraction", dc.l_shape_fraction, "share of L-shaped flat-roof footprints")
      ->capture_default_str();
  gen->add_option("--points", dc.points, "points per cloud")->capture_default_str();
  gen->add_option("--image-size", dc.image_size, "silhouette side length")->capture_default_str();

  // training stages
  struct TrainArgs {
    ConfigFlags flags;
    fs::path data, checkpoints;
    bool resume = false;
    bool quiet = false;
    std::size_t max_epochs = 0;
  };
  std::map<Stage, TrainArgs> train_args;
  std::map<Stage, CLI::App*> train_cmds;
  for (Stage s : {Stage::kAutoencoder, Stage::kBase, Stage::kUpsampler}) {
    auto& ta = train_args[s];
    const char* what = s == Stage::kAutoencoder ? "train the image auto-encoder"
                       : s == Stage::kBase      ? "train the base diffusion model"
                                                : "train the upsampler diffusion model";
    auto* cmd = app.add_subcommand(command_name(s), what);
    cmd->add_option("--data", ta.data, "dataset directory (from gen-data)")->required();
    cmd->add_option("--checkpoints", ta.checkpoints, "checkpoint directory")->required();
    cmd->add_flag("--resume", ta.resume, "continue from the checkpoint in the directory");
    cmd->add_option("--max-epochs", ta.max_epochs, "stop after this many epochs (0: all)")
        ->capture_default_str();
    cmd->add_flag("--quiet", ta.quiet, "no per-epoch progress");
    ta.flags.attach(cmd);
    train_cmds[s] = cmd;
  }

  // sample
  auto* sample = app.add_subcommand("sample", "generate a cloud conditioned on a silhouette");
  SampleArgs sa;
  double gamma_flag = 0.0;
  sample->add_option("--checkpoints", sa.checkpoints, "checkpoint directory")->required();
  auto* image_opt = sample->add_option("--image", sa.image, "conditioning silhouette (PGM)");
  auto* id_opt = sample->add_option("--id", sa.id, "use the cached embedding of a dataset id");
  image_opt->excludes(id_opt);
  sample->add_option("--out", sa.out, "output cloud (.ply, .xyz or .bpc)")->required();
  auto* gamma_opt = sample->add_option("--gamma", gamma_flag, "guidance scale (default: trained config, 4)");
  sample->add_option("--seed", sa.seed, "sampling seed")->capture_default_str();
  sample->add_flag("--high-res", sa.high_res, "run the upsampler after the base model");
  sample->add_option("--trace", sa.trace, "directory for intermediate clouds");
  sample->add_option("--trace-stride", sa.trace_stride, "steps between trace snapshots")->capture_default_str();

  // eval
  auto* eval = app.add_subcommand("eval", "compare predicted and reference clouds by id");
  fs::path pred_dir, ref_dir, report;
  EvalOptions eo;
  std::string emd_mode = "auto";
  eval->add_option("--pred", pred_dir, "directory of predicted clouds")->required();
  eval->add_option("--ref", ref_dir, "directory of reference clouds")->required();
  eval->add_option("--report", report, "per-pair JSON lines output");
  eval->add_option("--emd-mode", emd_mode, "exact, approx or auto")
      ->check(CLI::IsMember({"exact", "approx", "auto"}))
      ->capture_default_str();
  eval->add_option("--tau", eo.tau, "F1 threshold on squared distance")->capture_default_str();
  eval->add_flag("--normalize", eo.normalize, "normalize both clouds to the unit cube first");
  eval->add_option("--seed", eo.seed, "seed for EMD subsampling")->capture_default_str();

  // export
  auto* exp = app.add_subcommand("export", "convert a cloud between PLY, XYZ and BPC");
  fs::path exp_in, exp_out;
  exp->add_option("--in", exp_in, "input cloud")->required();
  exp->add_option("--out", exp_out, "output cloud")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(ErrorKind::kInput);
  }

  try {
    if (gen->parsed()) return run_gen_data(gen_out, dc);
    for (auto& [stage, cmd] : train_cmds)
      if (cmd->parsed()) {
        auto& ta = train_args[stage];
        return run_train(stage, ta.flags.resolve(), ta.data, ta.checkpoints, ta.resume,
                         ta.max_epochs, ta.quiet);
      }
    if (sample->parsed()) {
      if (sa.image.empty() && sa.id.empty()) throw InputError("sample needs --image or --id");
      if (gamma_opt->count()) sa.gamma = gamma_flag;
      return run_sample(sa);
    }
    if (eval->parsed()) {
      eo.emd_mode = parse_emd_mode(emd_mode);
      return run_eval(pred_dir, ref_dir, report, eo);
    }
    if (exp->parsed()) return run_export(exp_in, exp_out);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(e.kind());
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(ErrorKind::kInput);
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return static_cast<int>(ErrorKind::kInternal);
  }
  return static_cast<int>(ErrorKind::kInternal);
}
