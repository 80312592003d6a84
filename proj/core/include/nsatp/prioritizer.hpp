#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string_view>
#include <vector>

#include "nsatp/metrics.hpp"

namespace nsatp {

using ExampleId = std::uint64_t;

struct ScoredExample {
  ExampleId example_id;
  SensitivityScore score;
};

enum class RankDirection { Ascending, Descending };

std::string_view to_string(RankDirection direction) noexcept;
/// Accepts "ascending"/"asc" and "descending"/"desc".
RankDirection parse_direction(std::string_view name);

struct RankedList {
  MetricKind metric;
  RankDirection direction;
  std::vector<ScoredExample> entries;
};

/// Sorts by score in `direction`, ties broken by ascending id.
///
/// Throws EmptyInput on an empty sequence, DuplicateId when an id repeats,
/// and InvalidParameter when scores of different metrics are mixed.
RankedList rank(std::span<const ScoredExample> scores, RankDirection direction);

/// Most sensitive first: every metric ranks ascending (smaller value means a
/// flatter probability vector, which attacks fool more easily).
RankDirection default_direction(MetricKind metric) noexcept;

std::vector<ExampleId> select_top(const RankedList& ranked, std::size_t k);

/// Uniform sample without replacement, fully determined by `seed`.
std::vector<ExampleId> random_select(std::span<const ExampleId> ids, std::size_t k,
                                     std::uint64_t seed);

/// `rank,example_id,metric,score` with a header row; rank is 1-based.
void write_ranked_csv(std::ostream& out, const RankedList& ranked);

}  // namespace nsatp
