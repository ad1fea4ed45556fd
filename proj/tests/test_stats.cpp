#include <random>

#include <gtest/gtest.h>

#include "teach/error.hpp"
#include "teach/stats.hpp"
#include "welch_reference.hpp"

using namespace teach;
using teach::testing::kWelchCases;

TEST(Welch, MatchesReferenceValues) {
  for (const auto& c : kWelchCases) {
    const WelchResult r = welch_t_test(c.a, c.b);
    EXPECT_NEAR(r.t, c.t, 1e-10 * std::abs(c.t));
    EXPECT_NEAR(r.df, c.df, 1e-10 * c.df);
    EXPECT_NEAR(r.p_value, c.p, 1e-8 * c.p);
  }
}

TEST(Welch, SwappingSamplesFlipsTheSign) {
  const auto& c = kWelchCases[0];
  const WelchResult ab = welch_t_test(c.a, c.b);
  const WelchResult ba = welch_t_test(c.b, c.a);
  EXPECT_DOUBLE_EQ(ab.t, -ba.t);
  EXPECT_DOUBLE_EQ(ab.p_value, ba.p_value);
}

TEST(Welch, EqualMeansGivePOne) {
  const std::vector<double> a = {1, 2, 3};
  const std::vector<double> b = {0, 2, 4};
  EXPECT_EQ(welch_t_test(a, b).p_value, 1.0);
}

TEST(Welch, OneConstantSampleIsFine) {
  const std::vector<double> a = {1, 1, 1, 1};
  const std::vector<double> b = {0.5, 1.5, 2.0, 2.5};
  const WelchResult r = welch_t_test(a, b);
  // With one variance zero df reduces to n_b - 1.
  EXPECT_NEAR(r.df, 3.0, 1e-12);
  EXPECT_GT(r.p_value, 0.0);
  EXPECT_LT(r.p_value, 1.0);
}

TEST(Welch, DegenerateSamples) {
  const std::vector<double> one = {1.0};
  const std::vector<double> two = {1.0, 2.0};
  const std::vector<double> flat = {0.5, 0.5, 0.5};
  for (auto [a, b] : {std::pair{one, two}, std::pair{flat, flat}}) {
    try {
      welch_t_test(a, b);
      FAIL();
    } catch (const TeachError& e) {
      EXPECT_EQ(std::string(e.what()).rfind("degenerate samples", 0), 0u);
    }
  }
}

TEST(Moments, MeanAndVariance) {
  const std::vector<double> v = {2, 4, 4, 4, 5, 5, 7, 9};
  EXPECT_DOUBLE_EQ(mean(v), 5.0);
  EXPECT_DOUBLE_EQ(sample_variance(v), 32.0 / 7.0);
  EXPECT_THROW(mean(std::vector<double>{}), TeachError);
}

TEST(Welch, IdenticalSamplesGivePOne) {
  const std::vector<double> a = {0.4, 0.7, 0.55, 0.9, 0.6};
  const WelchResult r = welch_t_test(a, a);
  EXPECT_EQ(r.t, 0.0);
  EXPECT_EQ(r.p_value, 1.0);
}

TEST(Welch, WellSeparatedNormalSamples) {
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> n0(0.0, 1.0), n3(3.0, 1.0);
  std::vector<double> a(100), b(100);
  for (double& v : a) v = n0(rng);
  for (double& v : b) v = n3(rng);
  EXPECT_LT(welch_t_test(a, b).p_value, 1e-10);
}
