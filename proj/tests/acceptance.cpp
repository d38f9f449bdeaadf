// Acceptance checks, one line per criterion:
//   acceptance [--criterion N] [--cli PATH] [--work DIR]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include "analytic.hpp"
#include "buildiff/assignment.hpp"
#include "buildiff/config.hpp"
#include "buildiff/datagen.hpp"
#include "buildiff/diffusion.hpp"
#include "buildiff/metrics.hpp"
#include "buildiff/pipeline.hpp"
#include "buildiff/schedule.hpp"

using namespace buildiff;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Context {
  fs::path cli;
  fs::path work;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(4);
  os << v;
  return os.str();
}

PointCloud random_cloud(std::size_t n, Rng& rng) {
  std::vector<double> xyz(3 * n);
  for (auto& v : xyz) v = rng.uniform(-1.0, 1.0);
  return PointCloud(std::move(xyz));
}

Outcome variance_recursion() {
  const auto t0 = Clock::now();
  const auto s = linear_beta_schedule(1000, 0.0001, 0.02);
  double v = 0.0, worst = 0.0;
  for (std::size_t t = 1; t <= 1000; ++t) {
    v = s.alpha(t) * v + s.beta(t);
    worst = std::max(worst, std::abs(v - (1.0 - s.alpha_bar(t))));
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-12 && secs < 1.0, "max error " + fmt(worst) + ", " + fmt(secs) + " s"};
}

Outcome forward_inversion() {
  const auto t0 = Clock::now();
  const auto s = linear_beta_schedule(1000, 0.0001, 0.02);
  Rng rng(2);
  double worst = 0.0;
  for (int c = 0; c < 1000; ++c) {
    const auto n = static_cast<std::size_t>(rng.integer(1, 64));
    const auto t = static_cast<std::size_t>(rng.integer(1, 1000));
    const auto x0 = random_cloud(n, rng);
    const auto eps = gaussian_noise(3 * n, rng);
    const auto back = reconstruct_x0(forward_noise(x0, t, eps, s), t, eps, s);
    for (std::size_t i = 0; i < 3 * n; ++i) worst = std::max(worst, std::abs(back.flat()[i] - x0.flat()[i]));
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-10 && secs < 5.0, "max error " + fmt(worst) + ", " + fmt(secs) + " s"};
}

Outcome guidance_identity() {
  const auto s = linear_beta_schedule(200, 0.0001, 0.02);
  buildiff::testing::ConditionedPredictor model;
  const ConditionEmbedding cond{{0.3, -0.1}, false};
  SampleOptions o;
  o.gamma = 0.0;
  o.seed = 17;
  const auto guided = sample_base(model, cond, 16, s, o);
  Rng rng(17);
  PointCloud x(gaussian_noise(48, rng));
  for (std::size_t t = 200; t >= 1; --t) {
    const auto eps = model.predict(x, t, cond);
    const auto z = t > 1 ? gaussian_noise(48, rng) : std::vector<double>{};
    x = ancestral_step(x, t, eps, z, s);
  }
  const bool same = guided.cloud == x && guided.model_calls == 200;

  Rng r(5);
  bool exact = true;
  for (int i = 0; i < 1000; ++i) {
    const std::vector<double> c{r.normal(), r.normal()}, u{r.normal(), r.normal()};
    const auto g = guided_epsilon(c, u, 4.0);
    for (int k = 0; k < 2; ++k) exact = exact && g[k] == (1.0 + 4.0) * c[k] - 4.0 * u[k];
  }
  return {same && exact, std::string("gamma=0 bitwise ") + (same ? "yes" : "no") +
                             ", (1+4)ec-4eu exact " + (exact ? "yes" : "no")};
}

// Per-coordinate mean and standard deviation over chains.
void chain_moments(const std::vector<PointCloud>& chains, std::size_t coord, double& mean, double& sd) {
  mean = 0.0;
  for (const auto& c : chains) mean += c.flat()[coord];
  mean /= static_cast<double>(chains.size());
  double v = 0.0;
  for (const auto& c : chains) v += std::pow(c.flat()[coord] - mean, 2);
  sd = std::sqrt(v / static_cast<double>(chains.size()));
}

Outcome point_mass() {
  const auto t0 = Clock::now();
  const auto s = linear_beta_schedule(1000, 0.0001, 0.02);
  const std::vector<Point3> target{{0.4, -0.7, 0.2}};
  buildiff::testing::PointMassPredictor model(PointCloud::from_points(target), s);
  const std::vector<ConditionEmbedding> conds(1000);
  const auto chains = sample_base_chains(model, conds, 1, s, 4.0, 11);
  double worst_mean = 0.0, worst_sd = 0.0;
  for (std::size_t k = 0; k < 3; ++k) {
    double m, sd;
    chain_moments(chains, k, m, sd);
    worst_mean = std::max(worst_mean, std::abs(m - target[0][k]));
    worst_sd = std::max(worst_sd, sd);
  }
  const double secs = seconds_since(t0);
  return {worst_mean < 0.05 && worst_sd < 0.05 && secs < 120.0,
          "mean error " + fmt(worst_mean) + ", std " + fmt(worst_sd) + ", " + fmt(secs) + " s"};
}

Outcome gaussian_target() {
  const auto t0 = Clock::now();
  const auto s = linear_beta_schedule(1000, 0.0001, 0.02);
  const Point3 mu{0.3, -0.5, 0.1};
  const double var = 0.25, sigma = 0.5;
  buildiff::testing::GaussianPredictor model(mu, var, s);
  SampleOptions o;
  o.seed = 5;
  const auto r = sample_base(model, {}, 10000, s, o);
  double worst_mean = 0.0, worst_var = 0.0;
  for (std::size_t k = 0; k < 3; ++k) {
    double m = 0.0, v = 0.0;
    for (std::size_t i = 0; i < r.cloud.size(); ++i) m += r.cloud.point(i)[k];
    m /= 10000.0;
    for (std::size_t i = 0; i < r.cloud.size(); ++i) v += std::pow(r.cloud.point(i)[k] - m, 2);
    v /= 9999.0;
    worst_mean = std::max(worst_mean, std::abs(m - mu[k]) / sigma);
    worst_var = std::max(worst_var, std::abs(v - var) / var);
  }
  const double secs = seconds_since(t0);
  return {worst_mean <= 0.02 && worst_var <= 0.10 && secs < 300.0,
          "mean error " + fmt(100 * worst_mean) + "% of sigma, variance error " +
              fmt(100 * worst_var) + "%, " + fmt(secs) + " s"};
}

Outcome full_loss_gradient() {
  DenoiserConfig dc;
  dc.embed_dim = 8;
  dc.point_hidden = 8;
  dc.point_features = 8;
  dc.global_features = 8;
  dc.decoder_hidden1 = 8;
  dc.decoder_hidden2 = 8;
  Denoiser m(dc, 3);
  Rng rng(4);
  // The output layer starts at zero; random weights exercise every path.
  for (auto* p : m.params().all())
    for (auto& v : p->value.data()) v = 0.4 * rng.normal();
  const auto s = linear_beta_schedule(1000, 0.0001, 0.02);
  const auto x0 = random_cloud(8, rng);
  ConditionEmbedding cond;
  for (int i = 0; i < 8; ++i) cond.values.push_back(rng.normal());
  SampleDraw draw;
  draw.t = 120;  // lambda(120) = 0.75
  draw.eps = gaussian_noise(24, rng);
  const TrainSample sample{&x0, &cond, 0};
  const double rho = 0.001;
  SampleLog log;
  {
    ad::Tape tape;
    for (auto* p : m.params().all()) tape.param(*p);
    tape.backward(sample_loss(tape, m, sample, draw, rho, s, &log));
  }
  std::vector<double> analytic, numeric;
  for (auto* p : m.params().all()) analytic.insert(analytic.end(), p->grad.begin(), p->grad.end());
  auto all = m.params().all();
  for (const auto& g : ad::finite_diff_grad(
           [&] {
             ad::Tape tape;
             return sample_loss(tape, m, sample, draw, rho, s).value().item();
           },
           all, 1e-6))
    numeric.insert(numeric.end(), g.begin(), g.end());
  const double err = ad::relative_error(analytic, numeric);
  return {err < 1e-6 && log.l_reg > 0.0,
          "relative error " + fmt(err) + " over " + std::to_string(analytic.size()) +
              " parameters, L_reg " + fmt(log.l_reg)};
}

double sq(const Point3& a, const Point3& b) {
  return (a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1]) + (a[2] - b[2]) * (a[2] - b[2]);
}

Outcome metric_oracles() {
  Rng rng(8);
  double cd_err = 0.0, emd_err = 0.0, approx_err = 0.0;
  bool f1_ok = true;
  for (int c = 0; c < 60; ++c) {
    const auto na = static_cast<std::size_t>(rng.integer(1, 16)), nb = static_cast<std::size_t>(rng.integer(1, 16));
    const auto a = random_cloud(na, rng), b = random_cloud(nb, rng);
    auto one = [](const PointCloud& x, const PointCloud& y) {
      double total = 0;
      for (std::size_t i = 0; i < x.size(); ++i) {
        double best = 1e300;
        for (std::size_t j = 0; j < y.size(); ++j) best = std::min(best, sq(x.point(i), y.point(j)));
        total += best;
      }
      return total / static_cast<double>(x.size());
    };
    cd_err = std::max(cd_err, std::abs(chamfer(a, b) - (one(a, b) + one(b, a))));

    const double tau = 0.05;
    auto covered = [&](const PointCloud& x, const PointCloud& y) {
      double hit = 0;
      for (std::size_t i = 0; i < x.size(); ++i) {
        bool any = false;
        for (std::size_t j = 0; j < y.size(); ++j) any = any || sq(x.point(i), y.point(j)) <= tau;
        hit += any;
      }
      return 100.0 * hit / static_cast<double>(x.size());
    };
    const double p = covered(a, b), r = covered(b, a);
    const double f1 = p + r > 0 ? 2 * p * r / (p + r) : 0.0;
    f1_ok = f1_ok && std::abs(fscore(a, b, tau) - f1) < 1e-12;
  }
  for (int c = 0; c < 40; ++c) {
    const auto n = static_cast<std::size_t>(rng.integer(1, 8));
    const auto a = random_cloud(n, rng), b = random_cloud(n, rng);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    double best = 1e300;
    do {
      double total = 0;
      for (std::size_t i = 0; i < n; ++i) total += std::sqrt(sq(a.point(i), b.point(perm[i])));
      best = std::min(best, total / static_cast<double>(n));
    } while (std::next_permutation(perm.begin(), perm.end()));
    emd_err = std::max(emd_err, std::abs(emd(a, b, EmdMode::kExact).value - best));
  }
  for (int c = 0; c < 3; ++c) {
    const auto a = random_cloud(256, rng), b = random_cloud(256, rng);
    const double exact = emd(a, b, EmdMode::kExact).value;
    approx_err = std::max(approx_err, std::abs(emd(a, b, EmdMode::kApprox).value - exact) / exact);
  }
  return {cd_err <= 1e-12 && emd_err <= 1e-10 && f1_ok && approx_err <= 0.02,
          "chamfer " + fmt(cd_err) + ", exact EMD " + fmt(emd_err) + ", F1 " +
              (f1_ok ? "exact" : "mismatch") + ", approx EMD " + fmt(100 * approx_err) + "%"};
}

Outcome lambda_table() {
  const std::size_t ts[] = {1, 2, 250, 251, 500, 501, 750, 751, 1000};
  const double want[] = {1, 0.75, 0.75, 0.5, 0.5, 0.25, 0.25, 0, 0};
  std::string got;
  bool ok = true;
  for (std::size_t i = 0; i < 9; ++i) {
    const double l = lambda_weight(ts[i], 1000);
    ok = ok && l == want[i];
    got += (i ? "," : "") + fmt(l);
  }
  return {ok, "lambda = (" + got + ")"};
}

Outcome upsampler_prefix() {
  DenoiserConfig dc;
  dc.embed_dim = 16;
  dc.point_flag = true;
  Denoiser m(dc, 9);
  Rng rng(3);
  for (auto& v : m.params().at("decoder.out.w").value.data()) v = 0.3 * rng.normal();
  const auto low = random_cloud(64, rng);
  m.set_fixed_points(64);
  ConditionEmbedding cond;
  for (int i = 0; i < 16; ++i) cond.values.push_back(rng.normal());
  const auto s = linear_beta_schedule(50, 0.0001, 0.02);
  SampleOptions o;
  o.seed = 4;
  const auto r = sample_upsampled(m, cond, low, 256, s, o);
  bool same = r.cloud.size() == 256;
  for (std::size_t i = 0; same && i < low.flat().size(); ++i) same = r.cloud.flat()[i] == low.flat()[i];
  bool moved = false;
  for (std::size_t i = low.flat().size(); i < r.cloud.flat().size(); ++i) moved = moved || r.cloud.flat()[i] != 0.0;
  return {same && moved, std::string("first 64 of 256 points ") + (same ? "bitwise equal" : "differ")};
}

Outcome toy_end_to_end(const Context& ctx) {
  const auto root = ctx.work / "criterion10";
  fs::remove_all(root);
  DatasetConfig dc;
  dc.train_count = 200;
  dc.test_count = 50;
  dc.seed = 1;
  const auto manifest = build_dataset(dc, root / "data");

  const auto config = TrainConfig::toy();
  TrainingOptions o;
  o.data_root = root / "data";
  o.checkpoint_dir = root / "ck";
  const auto t0 = Clock::now();
  run_training(Stage::kAutoencoder, config, o);
  run_training(Stage::kBase, config, o);
  const double minutes = seconds_since(t0) / 60.0;

  const auto test = manifest.split("test");
  const auto cache = load_embeddings(o.checkpoint_dir);
  std::vector<ConditionEmbedding> conds;
  for (const auto* e : test) conds.push_back(cache.at(e->id));
  auto match_rate = [&](const NoisePredictor& model) {
    const auto clouds = sample_base_chains(model, conds, config.points, config.base_schedule(), config.gamma, 123);
    std::size_t ok = 0;
    for (std::size_t i = 0; i < test.size(); ++i) {
      const bool gable = roof_oracle(normalize_unit_cube(clouds[i]).cloud) == RoofClass::kGable;
      ok += gable == (test[i]->spec.roof == RoofType::kGable);
    }
    return static_cast<double>(ok) / static_cast<double>(test.size());
  };
  const auto trained = load_denoiser(o.checkpoint_dir, Stage::kBase);
  const double rate = match_rate(*trained);
  const Denoiser untrained(config.base_denoiser(), 77);
  const double base_rate = match_rate(untrained);
  return {minutes <= 30.0 && rate >= 0.8 && std::abs(base_rate - 0.5) <= 0.2,
          "trained " + fmt(100 * rate) + "% vs untrained " + fmt(100 * base_rate) +
              "%, training " + fmt(minutes) + " min"};
}

Outcome drop_frequency() {
  DenoiserConfig dc;
  dc.embed_dim = 8;
  dc.point_hidden = 4;
  dc.point_features = 4;
  dc.global_features = 4;
  dc.decoder_hidden1 = 4;
  dc.decoder_hidden2 = 4;
  Denoiser m(dc, 1);
  TrainConfig cfg = TrainConfig::toy();
  const auto s = cfg.base_schedule();
  AdamState adam;
  Rng rng(21);
  const auto x0 = random_cloud(4, rng);
  const ConditionEmbedding cond{std::vector<double>(8, 0.5), false};
  const std::vector<TrainSample> batch(1, TrainSample{&x0, &cond, 0});
  std::size_t drops = 0;
  const std::size_t steps = 10000;
  for (std::size_t i = 0; i < steps; ++i) drops += train_step_base(m, adam, batch, cfg, s, rng).samples[0].dropped;
  const double f = static_cast<double>(drops) / static_cast<double>(steps);
  return {std::abs(f - 0.10) <= 0.01, "dropped " + std::to_string(drops) + " of " + std::to_string(steps)};
}

int shell(const std::string& cmd) {
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

Outcome cli_determinism(const Context& ctx) {
  if (ctx.cli.empty()) return {false, "no --cli given"};
  const std::string tiny =
      " --preset toy --steps 10 --points 32 --embed_dim 8 --point_hidden 8 --point_features 8"
      " --global_features 8 --decoder_hidden1 8 --decoder_hidden2 8 --image_size 16"
      " --ae_channels1 2 --ae_channels2 2 --ae_channels3 2 --ae_projection_channels 2"
      " --epochs_ae 2 --epochs_base 2 --steps_upsampler 10 --points_high 64 --epochs_upsampler 2"
      " --seed 9 --quiet";
  const std::vector<std::string> commands{
      "gen-data --out data --seed 7 --train 6 --test 2 --points 96 --image-size 16",
      "train-ae --data data --checkpoints ck" + tiny,
      "train-base --data data --checkpoints ck" + tiny,
      "train-upsampler --data data --checkpoints ck" + tiny,
      "sample --checkpoints ck --id b00006 --seed 3 --high-res --trace trace --trace-stride 5 --out pred/b00006.ply",
      "sample --checkpoints ck --image data/silhouettes/b00007.pgm --seed 3 --gamma 2 --out pred/b00007.xyz",
      "export --in data/clouds/b00006.bpc --out ref/b00006.ply",
      "export --in data/clouds/b00007.bpc --out ref/b00007.xyz",
      "eval --pred pred --ref ref --report report.jsonl --seed 2",
  };
  const auto root = ctx.work / "criterion12";
  fs::remove_all(root);
  for (const char* run : {"run1", "run2"}) {
    const auto dir = root / run;
    fs::create_directories(dir / "pred");
    fs::create_directories(dir / "ref");
    for (std::size_t i = 0; i < commands.size(); ++i) {
      const std::string cmd = "cd '" + dir.string() + "' && '" + fs::absolute(ctx.cli).string() + "' " +
                              commands[i] + " > stdout_" + std::to_string(i) + ".txt 2>&1";
      if (const int rc = shell(cmd); rc != 0)
        return {false, std::string(run) + ": '" + commands[i] + "' exited " + std::to_string(rc)};
    }
  }
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(root / "run1")) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), root / "run1");
    const auto other = root / "run2" / rel;
    if (!fs::exists(other) || slurp(e.path()) != slurp(other))
      return {false, "outputs differ: " + rel.string()};
    ++files;
  }
  std::size_t files2 = 0;
  for (const auto& e : fs::recursive_directory_iterator(root / "run2")) files2 += e.is_regular_file();
  return {files == files2 && files > 0,
          std::to_string(commands.size()) + " commands, " + std::to_string(files) + " files byte-identical"};
}

}  // namespace

int main(int argc, char** argv) {
  Context ctx;
  ctx.work = fs::temp_directory_path() / "buildiff_acceptance";
  int only = 0;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--criterion" && i + 1 < argc) only = std::atoi(argv[++i]);
    else if (a == "--cli" && i + 1 < argc) ctx.cli = argv[++i];
    else if (a == "--work" && i + 1 < argc) ctx.work = argv[++i];
    else {
      std::cerr << "usage: acceptance [--criterion N] [--cli PATH] [--work DIR]\n";
      return 3;
    }
  }
  fs::create_directories(ctx.work);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"schedule variance recursion", variance_recursion},
      {"forward / reconstruct inversion", forward_inversion},
      {"guidance with gamma = 0", guidance_identity},
      {"point-mass target recovery", point_mass},
      {"Gaussian target moments", gaussian_target},
      {"full loss gradient check", full_loss_gradient},
      {"metric oracles", metric_oracles},
      {"lambda table", lambda_table},
      {"upsampler keeps conditioning points", upsampler_prefix},
      {"toy end-to-end roof match", [&] { return toy_end_to_end(ctx); }},
      {"condition drop frequency", drop_frequency},
      {"CLI determinism", [&] { return cli_determinism(ctx); }},
  };
  if (only < 0 || only > static_cast<int>(criteria.size())) {
    std::cerr << "criterion must be 1.." << criteria.size() << '\n';
    return 3;
  }
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (only && static_cast<int>(i + 1) != only) continue;
    Outcome r;
    try {
      r = criteria[i].second();
    } catch (const std::exception& e) {
      r = {false, std::string("exception: ") + e.what()};
    }
    std::cout << "criterion " << i + 1 << " [" << criteria[i].first << "]: " << (r.pass ? "PASS" : "FAIL")
              << " (" << r.detail << ")" << std::endl;
    failures += !r.pass;
  }
  return failures ? 1 : 0;
}
