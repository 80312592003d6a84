#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "nsatp/error.hpp"
#include "nsatp/prioritizer.hpp"
#include "nsatp/random.hpp"
#include "support.hpp"

using namespace nsatp;

namespace {

std::vector<ScoredExample> pd_scores(std::initializer_list<std::pair<ExampleId, double>> items) {
  std::vector<ScoredExample> out;
  for (const auto& [id, v] : items) out.push_back({id, {MetricKind::PD, v}});
  return out;
}

std::vector<ExampleId> order_of(const RankedList& r) {
  std::vector<ExampleId> ids;
  for (const auto& e : r.entries) ids.push_back(e.example_id);
  return ids;
}

}  // namespace

TEST(Rank, SortsAscending) {
  const auto r = rank(pd_scores({{0, 0.5}, {1, 0.2}, {2, 0.9}}), RankDirection::Ascending);
  EXPECT_EQ(order_of(r), (std::vector<ExampleId>{1, 0, 2}));
}

TEST(Rank, SortsDescending) {
  const auto r = rank(pd_scores({{0, 0.5}, {1, 0.2}, {2, 0.9}}), RankDirection::Descending);
  EXPECT_EQ(order_of(r), (std::vector<ExampleId>{2, 0, 1}));
}

TEST(Rank, BreaksTiesById) {
  EXPECT_EQ(order_of(rank(pd_scores({{1, 0.5}, {0, 0.5}}), RankDirection::Ascending)),
            (std::vector<ExampleId>{0, 1}));
  EXPECT_EQ(order_of(rank(pd_scores({{1, 0.5}, {0, 0.5}}), RankDirection::Descending)),
            (std::vector<ExampleId>{0, 1}));
}

TEST(Rank, FlatterVectorComesFirst) {
  const double a = probability_difference(ProbabilityVector(test::kConfidentA)).value;
  const double b = probability_difference(ProbabilityVector(test::kConfidentB)).value;
  const auto r = rank(pd_scores({{7, b}, {3, a}}), default_direction(MetricKind::PD));
  EXPECT_EQ(r.entries.front().example_id, 3u);
}

TEST(Rank, Errors) {
  try {
    rank({}, RankDirection::Ascending);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyInput);
  }
  try {
    rank(pd_scores({{1, 0.1}, {1, 0.2}}), RankDirection::Ascending);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DuplicateId);
  }
  std::vector<ScoredExample> mixed{{0, {MetricKind::PD, 0.1}}, {1, {MetricKind::PV, 0.1}}};
  EXPECT_THROW(rank(mixed, RankDirection::Ascending), Error);
}

TEST(Rank, IdempotentAndOrderIndependent) {
  std::mt19937_64 gen(5);
  std::vector<ScoredExample> scores;
  for (ExampleId i = 0; i < 200; ++i) {
    scores.push_back({i, {MetricKind::PE, static_cast<double>(gen() % 17) / 16.0}});
  }
  const auto first = rank(scores, RankDirection::Ascending);
  const auto again = rank(first.entries, RankDirection::Ascending);
  EXPECT_EQ(order_of(first), order_of(again));
  for (int t = 0; t < 5; ++t) {
    std::shuffle(scores.begin(), scores.end(), gen);
    EXPECT_EQ(order_of(rank(scores, RankDirection::Ascending)), order_of(first));
  }
  for (std::size_t i = 1; i < first.entries.size(); ++i) {
    EXPECT_LE(first.entries[i - 1].score.value, first.entries[i].score.value);
  }
}

TEST(DefaultDirection, AscendingForEveryMetric) {
  EXPECT_EQ(default_direction(MetricKind::PD), RankDirection::Ascending);
  EXPECT_EQ(default_direction(MetricKind::PV), RankDirection::Ascending);
  EXPECT_EQ(default_direction(MetricKind::PE), RankDirection::Ascending);
}

TEST(ParseDirection, Names) {
  EXPECT_EQ(parse_direction("asc"), RankDirection::Ascending);
  EXPECT_EQ(parse_direction("descending"), RankDirection::Descending);
  EXPECT_THROW(parse_direction("up"), Error);
}

TEST(SelectTop, TakesPrefix) {
  const auto r = rank(pd_scores({{0, 0.5}, {1, 0.2}, {2, 0.9}}), RankDirection::Ascending);
  EXPECT_EQ(select_top(r, 3), (std::vector<ExampleId>{1, 0, 2}));
  EXPECT_EQ(select_top(r, 1), (std::vector<ExampleId>{1}));
  EXPECT_EQ(select_top(r, 2), (std::vector<ExampleId>{1, 0}));
  try {
    select_top(r, 4);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::KTooLarge);
  }
}

TEST(SelectTop, PartitionsTheInput) {
  std::vector<ScoredExample> scores;
  for (ExampleId i = 0; i < 50; ++i) scores.push_back({i * 3, {MetricKind::PV, std::sin(i)}});
  const auto r = rank(scores, RankDirection::Ascending);
  const auto top = select_top(r, 20);
  std::multiset<ExampleId> all(top.begin(), top.end());
  for (std::size_t i = 20; i < r.entries.size(); ++i) all.insert(r.entries[i].example_id);
  std::multiset<ExampleId> expected;
  for (const auto& s : scores) expected.insert(s.example_id);
  EXPECT_EQ(all, expected);
}

TEST(RandomSelect, FullSampleIsPermutation) {
  const std::vector<ExampleId> ids{4, 8, 15, 16, 23, 42};
  auto picked = random_select(ids, ids.size(), 1);
  std::sort(picked.begin(), picked.end());
  EXPECT_EQ(picked, ids);
}

TEST(RandomSelect, DeterministicPerSeed) {
  std::vector<ExampleId> ids(100);
  std::iota(ids.begin(), ids.end(), 0);
  EXPECT_EQ(random_select(ids, 10, 77), random_select(ids, 10, 77));
  EXPECT_NE(random_select(ids, 10, 77), random_select(ids, 10, 78));
  const auto picked = random_select(ids, 30, 3);
  EXPECT_EQ(std::set<ExampleId>(picked.begin(), picked.end()).size(), 30u);
  EXPECT_THROW(random_select(ids, 101, 3), Error);
}

TEST(RandomSelect, SingleDrawIsUniform) {
  std::vector<ExampleId> ids(10);
  std::iota(ids.begin(), ids.end(), 0);
  std::vector<int> hist(10, 0);
  for (std::uint64_t s = 0; s < 10000; ++s) ++hist[random_select(ids, 1, derive_seed(s, "t"))[0]];
  // Binomial(10000, 0.1): sigma = 30; allow 5 sigma per bin.
  double chi2 = 0.0;
  for (int h : hist) {
    EXPECT_NEAR(h, 1000, 150);
    chi2 += (h - 1000.0) * (h - 1000.0) / 1000.0;
  }
  EXPECT_LT(chi2, 27.88);  // chi-square 9 dof, p = 0.001
}

TEST(WriteRankedCsv, Format) {
  const auto r = rank(pd_scores({{0, 0.5}, {1, 0.25}}), RankDirection::Ascending);
  std::ostringstream ss;
  write_ranked_csv(ss, r);
  EXPECT_EQ(ss.str(), "rank,example_id,metric,score\n1,1,pd,0.25\n2,0,pd,0.5\n");
}
