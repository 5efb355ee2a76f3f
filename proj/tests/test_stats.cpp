#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <limits>

#include <boost/math/distributions/students_t.hpp>
#include <nlohmann/json.hpp>

#include "nlueval/rng.hpp"
#include "nlueval/stats.hpp"

using namespace nlueval;
using namespace nlueval::stats;

namespace {

nlohmann::json reference() {
  std::ifstream in(std::string(NLUEVAL_TEST_DIR) + "/data/welch_reference.json");
  return nlohmann::json::parse(in);
}

double boost_sf(double t, double dof) {
  return boost::math::cdf(boost::math::complement(boost::math::students_t_distribution<double>(dof), t));
}

}  // namespace

TEST(Welch, MatchesReferenceImplementation) {
  const auto ref = reference();
  ASSERT_EQ(ref.size(), 50u);
  for (const auto& c : ref) {
    const auto a = c["a"].get<std::vector<double>>();
    const auto b = c["b"].get<std::vector<double>>();
    const auto r = welch_t_one_tailed(a, b);
    EXPECT_NEAR(r.p_value, c["p"].get<double>(), 1e-6);
    EXPECT_NEAR(r.t, c["t"].get<double>(), 1e-9 * std::max(1.0, std::abs(c["t"].get<double>())));
    EXPECT_NEAR(r.dof, c["dof"].get<double>(), 1e-9 * c["dof"].get<double>());
  }
}

TEST(Welch, PatternedPairFromSpec) {
  const std::vector<double> base{0.80, 0.82, 0.78, 0.81, 0.79};
  std::vector<double> a, b;
  for (int rep = 0; rep < 2; ++rep) {
    for (double x : base) {
      a.push_back(x);
      b.push_back(x - 0.10);
    }
  }
  const auto want = reference()[0];
  EXPECT_NEAR(welch_t_one_tailed(a, b).p_value, want["p"].get<double>(), 1e-6);
}

TEST(Welch, StudentTailMatchesBoost) {
  Rng rng(1);
  for (int i = 0; i < 2000; ++i) {
    const double dof = 1.0 + 60.0 * rng.uniform();
    const double t = -12.0 + 24.0 * rng.uniform();
    const double want = boost_sf(t, dof);
    EXPECT_NEAR(student_t_sf(t, dof), want, 1e-10 * std::max(want, 1e-300) + 1e-300) << t << " " << dof;
  }
}

TEST(Welch, Conventions) {
  const std::vector<double> a{0.1, 0.3, 0.2, 0.4};
  EXPECT_EQ(welch_t_one_tailed(a, a).t, 0.0);
  EXPECT_EQ(welch_t_one_tailed(a, a).p_value, 0.5);
  const std::vector<double> flat{0.5, 0.5, 0.5};
  const std::vector<double> low{0.4, 0.4};
  EXPECT_EQ(welch_t_one_tailed(flat, flat).p_value, 0.5);
  EXPECT_EQ(welch_t_one_tailed(flat, low).p_value, 0.0);
  EXPECT_EQ(welch_t_one_tailed(low, flat).p_value, 1.0);
  EXPECT_THROW(welch_t_one_tailed(std::vector<double>{1.0}, a), Error);
}

TEST(Welch, SwapIsComplement) {
  Rng rng(2);
  for (int i = 0; i < 500; ++i) {
    std::vector<double> a(2 + rng.below(10)), b(2 + rng.below(10));
    for (auto& x : a) x = rng.uniform();
    for (auto& x : b) x = 0.2 + rng.uniform();
    const double p = welch_t_one_tailed(a, b).p_value;
    const double q = welch_t_one_tailed(b, a).p_value;
    EXPECT_NEAR(p + q, 1.0, 1e-12);
    EXPECT_GE(p, 0.0);
    EXPECT_LE(p, 1.0);
  }
}

TEST(Descriptive, Basics) {
  const std::vector<double> x{1.0, 2.0, 3.0, 4.0};
  EXPECT_EQ(mean(x), 2.5);
  EXPECT_DOUBLE_EQ(sample_variance(x), 5.0 / 3.0);
  EXPECT_DOUBLE_EQ(population_stddev(x), std::sqrt(1.25));
}

TEST(Pearson, KnownValues) {
  const std::vector<double> x{1, 2, 3, 4};
  EXPECT_DOUBLE_EQ(pearson(x, std::vector<double>{2, 4, 6, 8}), 1.0);
  EXPECT_DOUBLE_EQ(pearson(x, std::vector<double>{8, 6, 4, 2}), -1.0);
  EXPECT_THROW(pearson(x, std::vector<double>{1, 1, 1, 1}), Error);
}
