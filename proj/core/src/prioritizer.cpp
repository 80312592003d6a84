#include "nsatp/prioritizer.hpp"

#include <algorithm>
#include <ostream>
#include <string>
#include <unordered_set>

#include "nsatp/csv.hpp"
#include "nsatp/error.hpp"
#include "nsatp/random.hpp"

namespace nsatp {

std::string_view to_string(RankDirection direction) noexcept {
  return direction == RankDirection::Ascending ? "ascending" : "descending";
}

RankDirection parse_direction(std::string_view name) {
  if (name == "ascending" || name == "asc") return RankDirection::Ascending;
  if (name == "descending" || name == "desc") return RankDirection::Descending;
  throw Error(ErrorCode::Config, "unknown rank direction '" + std::string(name) + "'");
}

RankedList rank(std::span<const ScoredExample> scores, RankDirection direction) {
  if (scores.empty()) throw Error(ErrorCode::EmptyInput, "nothing to rank");

  const MetricKind metric = scores.front().score.metric;
  std::unordered_set<ExampleId> seen;
  seen.reserve(scores.size());
  for (const auto& s : scores) {
    if (s.score.metric != metric) {
      throw Error(ErrorCode::InvalidParameter, "cannot rank scores of different metrics together");
    }
    if (!seen.insert(s.example_id).second) {
      throw Error(ErrorCode::DuplicateId, "example id " + std::to_string(s.example_id));
    }
  }

  RankedList ranked{metric, direction, {scores.begin(), scores.end()}};
  std::sort(ranked.entries.begin(), ranked.entries.end(),
            [direction](const ScoredExample& a, const ScoredExample& b) {
              if (a.score.value != b.score.value) {
                return direction == RankDirection::Ascending ? a.score.value < b.score.value
                                                             : a.score.value > b.score.value;
              }
              return a.example_id < b.example_id;
            });
  return ranked;
}

RankDirection default_direction(MetricKind) noexcept { return RankDirection::Ascending; }

std::vector<ExampleId> select_top(const RankedList& ranked, std::size_t k) {
  if (k > ranked.entries.size()) {
    throw Error(ErrorCode::KTooLarge, "k = " + std::to_string(k) + " exceeds list length " +
                                          std::to_string(ranked.entries.size()));
  }
  std::vector<ExampleId> ids;
  ids.reserve(k);
  for (std::size_t i = 0; i < k; ++i) ids.push_back(ranked.entries[i].example_id);
  return ids;
}

std::vector<ExampleId> random_select(std::span<const ExampleId> ids, std::size_t k,
                                     std::uint64_t seed) {
  if (k > ids.size()) {
    throw Error(ErrorCode::KTooLarge, "k = " + std::to_string(k) + " exceeds population " +
                                          std::to_string(ids.size()));
  }
  Rng rng(seed);
  std::vector<ExampleId> picked;
  picked.reserve(k);
  for (std::size_t idx : rng.sample_indices(ids.size(), k)) picked.push_back(ids[idx]);
  return picked;
}

void write_ranked_csv(std::ostream& out, const RankedList& ranked) {
  out << "rank,example_id,metric,score\n";
  for (std::size_t i = 0; i < ranked.entries.size(); ++i) {
    const auto& e = ranked.entries[i];
    out << (i + 1) << ',' << e.example_id << ',' << to_string(ranked.metric) << ','
        << csv::format_double(e.score.value) << '\n';
  }
}

}  // namespace nsatp
