#include <cmath>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "buildiff/conditioner.hpp"
#include "buildiff/error.hpp"
#include "buildiff/image_io.hpp"
#include "buildiff/rng.hpp"

using namespace buildiff;
using ad::Tape;
namespace fs = std::filesystem;

namespace {

SilhouetteImage random_image(std::size_t side, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> px(side * side);
  for (auto& p : px) p = rng.uniform();
  return SilhouetteImage(side, side, std::move(px));
}

SilhouetteImage box_image(std::size_t side, std::size_t x0, std::size_t x1) {
  std::vector<double> px(side * side, 0.0);
  for (std::size_t y = side / 4; y < 3 * side / 4; ++y)
    for (std::size_t x = x0; x < x1; ++x) px[y * side + x] = 1.0;
  return SilhouetteImage(side, side, std::move(px));
}

AutoencoderConfig tiny() {
  AutoencoderConfig c;
  c.image_size = 8;
  c.embed_dim = 4;
  c.channels1 = 2;
  c.channels2 = 3;
  c.channels3 = 2;
  c.projection_channels = 2;
  return c;
}

}  // namespace

TEST(Image, ValidatesSize) {
  EXPECT_THROW(SilhouetteImage(2, 2, std::vector<double>(3)), std::invalid_argument);
}

TEST(Rotate, FourQuarterTurnsAreIdentity) {
  const auto img = random_image(6, 1);
  const auto r = rotate90(img);
  EXPECT_NE(r, img);
  EXPECT_EQ(rotate90(rotate90(rotate90(r))), img);
  // Counter-clockwise: the top-right pixel moves to the top-left.
  EXPECT_EQ(r.at(0, 0), img.at(5, 0));
  EXPECT_THROW(rotate90(SilhouetteImage(2, 3, std::vector<double>(6))), std::invalid_argument);
}

TEST(Augment, DeterministicBoundedAndShifted) {
  const auto img = random_image(8, 3);
  std::size_t rotated = 0;
  for (std::uint64_t s = 0; s < 400; ++s) {
    const auto a = augment(img, s);
    EXPECT_EQ(a, augment(img, s));
    for (double p : a.pixels()) {
      EXPECT_GE(p, 0.0);
      EXPECT_LE(p, 1.0);
    }
    // Without rotation every unclamped pixel moves by the same shift.
    AugmentOptions no_rot;
    no_rot.rotate_prob = 0.0;
    const auto b = augment(img, s, no_rot);
    double shift = 0;
    bool have = false;
    for (std::size_t i = 0; i < img.pixels().size(); ++i) {
      const double d = b.pixels()[i] - img.pixels()[i];
      if (b.pixels()[i] <= 0.0 || b.pixels()[i] >= 1.0) continue;
      if (!have) shift = d, have = true;
      EXPECT_NEAR(d, shift, 1e-12);
    }
    EXPECT_LE(std::abs(shift), 0.2);
    AugmentOptions rot_only;
    rot_only.rotate_prob = 0.5;
    rot_only.jitter = 0.0;
    if (augment(img, s, rot_only) != img) ++rotated;
  }
  EXPECT_GT(rotated, 150u);
  EXPECT_LT(rotated, 250u);
  AugmentOptions none;
  none.rotate_prob = 0.0;
  none.jitter = 0.0;
  EXPECT_EQ(augment(img, 5, none), img);
}

TEST(AeLoss, Examples) {
  Tape tape;
  const auto i = tape.constant(ad::Tensor::matrix(4, 1, {1, 0, 1, 0}));
  const auto r = tape.constant(ad::Tensor::matrix(4, 1, {0.5, 0.5, 0.5, 0.5}));
  const auto z = tape.constant(ad::Tensor::matrix(1, 2, {1, 2}));
  const auto za = tape.constant(ad::Tensor::matrix(1, 2, {1, 0}));
  EXPECT_DOUBLE_EQ(ae_loss(i, r, z, za).value().item(), 0.25 + 2.0);
  EXPECT_EQ(ae_loss(i, i, z, z).value().item(), 0.0);
}

TEST(AutoencoderTest, ShapesRangeAndDeterminism) {
  AutoencoderConfig c;
  c.image_size = 32;
  c.embed_dim = 16;
  const Autoencoder ae(c, 4);
  const auto img = random_image(32, 2);
  const auto z = ae.encode(img);
  ASSERT_EQ(z.dim(), 16u);
  EXPECT_FALSE(z.dropped);
  EXPECT_EQ(z.values, ae.encode(img).values);
  const auto rec = ae.decode(z);
  ASSERT_EQ(rec.width(), 32u);
  for (double p : rec.pixels()) {
    EXPECT_GT(p, 0.0);
    EXPECT_LT(p, 1.0);
  }
  EXPECT_THROW(ae.encode(random_image(16, 1)), std::invalid_argument);
}

TEST(AutoencoderTest, LossGradientMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    AutoencoderConfig c = tiny();
    c.stop_grad_augmented = seed == 2;
    Autoencoder ae(c, seed);
    // Zero biases put some activations exactly on the leaky-relu kink.
    Rng prng(seed + 50);
    for (auto* p : ae.params().all())
      for (auto& v : p->value.data()) v = 0.4 * prng.normal();
    const auto img = random_image(8, seed + 10), aug = random_image(8, seed + 20);
    // Under stop-grad z_aug is a constant, so the numeric side must hold it fixed too.
    ad::Tensor frozen;
    {
      Tape tape;
      frozen = ae.encode(tape, aug).value();
    }
    const auto loss = [&](Tape& tape) {
      const auto z = ae.encode(tape, img);
      const auto za = c.stop_grad_augmented ? tape.constant(frozen) : ae.encode(tape, aug);
      const auto target = tape.constant(ad::Tensor::matrix(64, 1, img.pixels()));
      return ae_loss(target, ae.decode(tape, z), z, za);
    };
    {
      Tape tape;
      for (auto* p : ae.params().all()) tape.param(*p);
      tape.backward(loss(tape));
    }
    std::vector<double> analytic, numeric;
    for (auto* p : ae.params().all()) analytic.insert(analytic.end(), p->grad.begin(), p->grad.end());
    auto all = ae.params().all();
    for (const auto& g : ad::finite_diff_grad(
             [&] {
               Tape tape;
               return loss(tape).value().item();
             },
             all, 1e-4))
      numeric.insert(numeric.end(), g.begin(), g.end());
    EXPECT_LT(ad::relative_error(analytic, numeric), 1e-6) << seed;
  }
}

TEST(AutoencoderTest, TrainingReducesLoss) {
  AutoencoderConfig c = tiny();
  c.image_size = 16;
  c.embed_dim = 8;
  Autoencoder ae(c, 1);
  const std::vector<SilhouetteImage> imgs{box_image(16, 2, 8), box_image(16, 6, 14),
                                          box_image(16, 1, 15), box_image(16, 4, 10)};
  AeTrainOptions o;
  o.epochs = 40;
  o.lr = 0.01;
  o.batch_size = 2;
  o.seed = 3;
  std::size_t calls = 0;
  o.on_epoch = [&](std::size_t, double) { ++calls; };
  const auto log = train_autoencoder(ae, imgs, o);
  ASSERT_EQ(log.epoch_loss.size(), 40u);
  EXPECT_EQ(calls, 40u);
  EXPECT_LT(log.epoch_loss.back(), 0.5 * log.epoch_loss.front());
}

TEST(Pgm, RoundTripQuantized) {
  const auto path = fs::temp_directory_path() / "buildiff_test.pgm";
  std::vector<double> px(12);
  for (std::size_t i = 0; i < 12; ++i) px[i] = static_cast<double>(i * 20) / 255.0;
  const SilhouetteImage img(4, 3, px);
  write_pgm(path, img);
  const auto back = read_pgm(path);
  EXPECT_EQ(back.width(), 4u);
  EXPECT_EQ(back.height(), 3u);
  for (std::size_t i = 0; i < 12; ++i) EXPECT_NEAR(back.pixels()[i], px[i], 1e-15);
  std::ifstream is(path, std::ios::binary);
  std::string magic;
  is >> magic;
  EXPECT_EQ(magic, "P5");
  fs::remove(path);
  EXPECT_THROW(read_pgm(path), InputError);
}
