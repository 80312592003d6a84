#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "nsatp/error.hpp"
#include "nsatp/metrics.hpp"
#include "support.hpp"

using namespace nsatp;
using namespace nsatp::test;

namespace {

ErrorCode code_of(const std::vector<double>& raw) {
  try {
    ProbabilityVector pv(raw);
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "vector accepted";
  return ErrorCode::Config;
}

// Direct transcriptions of the three formulas, kept deliberately naive.
double naive_pd(std::vector<double> p) {
  std::sort(p.begin(), p.end(), std::greater<>());
  double s = 0.0;
  for (std::size_t i = 0; i + 1 < p.size(); ++i) s += (p[i] - p[i + 1]) / static_cast<double>(i + 1);
  return s;
}

double naive_pv(const std::vector<double>& p) {
  const double mean = 1.0 / static_cast<double>(p.size());
  double s = 0.0;
  for (double x : p) s += (x - mean) * (x - mean);
  return s;
}

double naive_pe(const std::vector<double>& p) {
  double s = 0.0;
  for (double x : p) {
    if (x > 0.0) s -= x * std::log(x);
  }
  return s;
}

std::vector<double> random_simplex(std::mt19937_64& gen, std::size_t n) {
  std::exponential_distribution<double> e(1.0);
  std::vector<double> v(n);
  double sum = 0.0;
  for (auto& x : v) sum += (x = e(gen));
  for (auto& x : v) x /= sum;
  return v;
}

}  // namespace

TEST(ProbabilityVector, AcceptsValidVectors) {
  EXPECT_NO_THROW(ProbabilityVector({0.5, 0.5}));
  EXPECT_NO_THROW(ProbabilityVector{kConfidentA});
  EXPECT_NO_THROW(ProbabilityVector({0.5, 0.5 + 0.9e-6}));
}

TEST(ProbabilityVector, RejectsInvalidVectors) {
  EXPECT_EQ(code_of({0.6, 0.6}), ErrorCode::SumOutOfTolerance);
  EXPECT_EQ(code_of({0.5, 0.5 + 2e-6}), ErrorCode::SumOutOfTolerance);
  EXPECT_EQ(code_of({1.0}), ErrorCode::TooShort);
  EXPECT_EQ(code_of({}), ErrorCode::TooShort);
  EXPECT_EQ(code_of({-0.2, 1.2}), ErrorCode::NegativeEntry);
  EXPECT_EQ(code_of({1.2, 0.0}), ErrorCode::SumOutOfTolerance);
  EXPECT_EQ(code_of({NAN, 1.0}), ErrorCode::NonFinite);
  EXPECT_EQ(code_of({INFINITY, 0.0}), ErrorCode::NonFinite);
}

TEST(ProbabilityVector, ArgmaxPrefersLowestIndexOnTies) {
  EXPECT_EQ(ProbabilityVector({0.25, 0.375, 0.375}).argmax(), 1u);
  EXPECT_EQ(ProbabilityVector(kConfidentB).argmax(), 4u);
}

TEST(ProbabilityDifference, BoundaryCases) {
  EXPECT_DOUBLE_EQ(probability_difference(ProbabilityVector(one_hot(10, 3))).value, 1.0);
  EXPECT_NEAR(probability_difference(ProbabilityVector(uniform_vector(10))).value, 0.0, 1e-15);
}

TEST(ProbabilityDifference, HandEvaluatedVectors) {
  EXPECT_NEAR(probability_difference(ProbabilityVector(kConfidentA)).value,
              0.63 + 0.17 / 2 + 0.01 / 3, 1e-12);
  EXPECT_NEAR(probability_difference(ProbabilityVector(kConfidentB)).value, 0.9325, 1e-12);
}

TEST(ProbabilityDifference, LeadingGap) {
  std::vector<double> sorted = kConfidentB;
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  EXPECT_NEAR(sorted[0] - sorted[1], 0.92, 1e-15);
}

TEST(ProbabilityVariance, Values) {
  EXPECT_NEAR(probability_variance(ProbabilityVector(uniform_vector(10))).value, 0.0, 1e-15);
  EXPECT_NEAR(probability_variance(ProbabilityVector(one_hot(10, 0))).value, 0.9, 1e-15);
  EXPECT_NEAR(probability_variance(ProbabilityVector(kConfidentA)).value, 0.5886, 1e-12);
  EXPECT_NEAR(probability_variance(ProbabilityVector(kConfidentB)).value, 0.8036, 1e-12);
}

TEST(ProbabilityEntropy, Values) {
  EXPECT_EQ(probability_entropy(ProbabilityVector(one_hot(10, 9))).value, 0.0);
  EXPECT_NEAR(probability_entropy(ProbabilityVector(uniform_vector(10))).value, std::log(10.0),
              1e-12);
  const double expected = -(0.95 * std::log(0.95) + 2 * 0.01 * std::log(0.01) +
                            0.03 * std::log(0.03));
  EXPECT_NEAR(probability_entropy(ProbabilityVector(kConfidentB)).value, expected, 1e-12);
  EXPECT_NEAR(expected, 0.246029, 1e-6);
}

TEST(Metrics, ComputeMetricDispatches) {
  const ProbabilityVector pv(kConfidentA);
  for (auto m : kAllMetrics) EXPECT_EQ(compute_metric(m, pv).metric, m);
  EXPECT_EQ(compute_metric(MetricKind::PV, pv).value, probability_variance(pv).value);
}

TEST(Metrics, ParseNames) {
  EXPECT_EQ(parse_metric("pd"), MetricKind::PD);
  EXPECT_EQ(parse_metric("PE"), MetricKind::PE);
  EXPECT_EQ(parse_metric("Pv"), MetricKind::PV);
  EXPECT_THROW(parse_metric("pz"), Error);
}

TEST(Metrics, AgreeWithNaiveFormulas) {
  std::mt19937_64 gen(20240611);
  for (int i = 0; i < 1000; ++i) {
    const auto raw = random_simplex(gen, 2 + static_cast<std::size_t>(gen() % 19));
    const ProbabilityVector pv(raw);
    ASSERT_NEAR(probability_difference(pv).value, naive_pd(raw), 1e-12);
    ASSERT_NEAR(probability_variance(pv).value, naive_pv(raw), 1e-12);
    ASSERT_NEAR(probability_entropy(pv).value, naive_pe(raw), 1e-12);
  }
}

TEST(Metrics, RangesAndPermutationInvariance) {
  std::mt19937_64 gen(99);
  for (int i = 0; i < 300; ++i) {
    const std::size_t n = 2 + gen() % 12;
    auto raw = random_simplex(gen, n);
    if (i % 5 == 0) raw = one_hot(n, gen() % n);
    const ProbabilityVector pv(raw);
    const double pd = probability_difference(pv).value;
    const double pvv = probability_variance(pv).value;
    const double pe = probability_entropy(pv).value;
    const double dn = static_cast<double>(n);
    EXPECT_GE(pd, 0.0);
    EXPECT_LE(pd, 1.0 + 1e-12);
    EXPECT_GE(pvv, 0.0);
    EXPECT_LE(pvv, (dn - 1) / dn + 1e-12);
    EXPECT_GE(pe, 0.0);
    EXPECT_LE(pe, std::log(dn) + 1e-12);

    std::shuffle(raw.begin(), raw.end(), gen);
    const ProbabilityVector shuffled(raw);
    EXPECT_NEAR(probability_difference(shuffled).value, pd, 1e-12);
    EXPECT_NEAR(probability_variance(shuffled).value, pvv, 1e-12);
    EXPECT_NEAR(probability_entropy(shuffled).value, pe, 1e-12);
  }
}

TEST(Metrics, ZeroExactlyAtTheExtremes) {
  EXPECT_GT(probability_difference(ProbabilityVector({0.5, 0.5 - 1e-7, 1e-7})).value, 0.0);
  EXPECT_GT(probability_variance(ProbabilityVector({0.5, 0.5 - 1e-7, 1e-7})).value, 0.0);
  EXPECT_GT(probability_entropy(ProbabilityVector({1.0 - 1e-9, 1e-9})).value, 0.0);
}
