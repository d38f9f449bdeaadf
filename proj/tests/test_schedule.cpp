#include <cmath>
#include <set>

#include <gtest/gtest.h>

#include "buildiff/schedule.hpp"

using namespace buildiff;

TEST(Schedule, Endpoints) {
  const auto s = linear_beta_schedule(1000, 0.0001, 0.02);
  EXPECT_EQ(s.steps(), 1000u);
  EXPECT_DOUBLE_EQ(s.beta(1), 0.0001);
  EXPECT_DOUBLE_EQ(s.beta(1000), 0.02);
  EXPECT_DOUBLE_EQ(s.alpha_bar(1), 0.9999);
  EXPECT_NEAR(s.beta(500), 0.0001 + 499.0 / 999.0 * (0.02 - 0.0001), 1e-18);
}

TEST(Schedule, Monotone) {
  const auto s = linear_beta_schedule(1000, 0.0001, 0.02);
  for (std::size_t t = 2; t <= 1000; ++t) {
    EXPECT_GT(s.beta(t), s.beta(t - 1));
    EXPECT_LT(s.alpha_bar(t), s.alpha_bar(t - 1));
    EXPECT_EQ(s.alpha_bar(t), s.alpha_bar(t - 1) * s.alpha(t));
  }
  EXPECT_GT(1.0 - s.alpha_bar(1000), 0.99);
  EXPECT_NEAR(1.0 - s.alpha_bar(1000), 0.99996, 1e-5);
}

TEST(Schedule, VarianceRecursion) {
  const auto s = linear_beta_schedule(1000, 0.0001, 0.02);
  double v = 0.0;
  for (std::size_t t = 1; t <= 1000; ++t) {
    v = s.alpha(t) * v + s.beta(t);
    EXPECT_NEAR(v, 1.0 - s.alpha_bar(t), 1e-12);
  }
}

TEST(Schedule, Sigmas) {
  const auto large = linear_beta_schedule(100, 0.0001, 0.02, SigmaMode::kLarge);
  const auto post = linear_beta_schedule(100, 0.0001, 0.02, SigmaMode::kPosterior);
  EXPECT_EQ(large.sigma(1), 0.0);
  EXPECT_EQ(post.sigma(1), 0.0);
  EXPECT_DOUBLE_EQ(large.sigma(50), std::sqrt(large.beta(50)));
  EXPECT_DOUBLE_EQ(post.sigma(50), std::sqrt(post.beta(50) * (1 - post.alpha_bar(49)) /
                                             (1 - post.alpha_bar(50))));
}

TEST(Schedule, RejectsBadBounds) {
  EXPECT_THROW(linear_beta_schedule(1, 0.0001, 0.02), std::invalid_argument);
  EXPECT_THROW(linear_beta_schedule(10, 0.0, 0.02), std::invalid_argument);
  EXPECT_THROW(linear_beta_schedule(10, 0.03, 0.02), std::invalid_argument);
  EXPECT_THROW(linear_beta_schedule(10, 0.01, 1.0), std::invalid_argument);
  const auto s = linear_beta_schedule(10, 0.0001, 0.02);
  EXPECT_THROW(s.check_step(0), std::out_of_range);
  EXPECT_THROW(s.check_step(11), std::out_of_range);
}

TEST(Lambda, PaperTable) {
  const std::size_t ts[] = {1, 2, 250, 251, 500, 501, 750, 751, 1000};
  const double want[] = {1, 0.75, 0.75, 0.5, 0.5, 0.25, 0.25, 0, 0};
  for (std::size_t i = 0; i < 9; ++i) EXPECT_EQ(lambda_weight(ts[i], 1000), want[i]) << ts[i];
  EXPECT_THROW(lambda_weight(0, 1000), std::out_of_range);
  EXPECT_THROW(lambda_weight(1001, 1000), std::out_of_range);
}

TEST(Lambda, NonincreasingWithFivePlateaus) {
  for (std::size_t T : {4u, 10u, 100u, 1000u, 999u}) {
    double prev = 2.0;
    std::set<double> values;
    for (std::size_t t = 1; t <= T; ++t) {
      const double l = lambda_weight(t, T);
      EXPECT_LE(l, prev);
      prev = l;
      values.insert(l);
    }
    EXPECT_EQ(lambda_weight(1, T), 1.0);
    EXPECT_EQ(lambda_weight(T, T), 0.0);
    if (T >= 8) EXPECT_EQ(values.size(), 5u) << T;
  }
}

TEST(Embedding, Definition) {
  const auto e0 = sinusoidal_embedding(0.0, 8);
  for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(e0[i], i % 2 == 0 ? 0.0 : 1.0);
  const auto e = sinusoidal_embedding(37.0, 128);
  for (std::size_t i = 0; i < 64; ++i) {
    const double f = std::pow(10000.0, 2.0 * static_cast<double>(i) / 128.0);
    EXPECT_DOUBLE_EQ(e[2 * i], std::sin(37.0 / f));
    EXPECT_DOUBLE_EQ(e[2 * i + 1], std::cos(37.0 / f));
  }
  EXPECT_THROW(sinusoidal_embedding(1.0, 7), std::invalid_argument);
}

TEST(Embedding, BoundedAndDistinct) {
  for (std::size_t t = 0; t < 1000; ++t) {
    const auto a = sinusoidal_embedding(static_cast<double>(t), 128);
    const auto b = sinusoidal_embedding(static_cast<double>(t + 1), 128);
    double d = 0;
    for (std::size_t i = 0; i < 128; ++i) {
      EXPECT_LE(std::abs(a[i]), 1.0);
      d += (a[i] - b[i]) * (a[i] - b[i]);
    }
    EXPECT_GT(d, 0.0);
  }
}
