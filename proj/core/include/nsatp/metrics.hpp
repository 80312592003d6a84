#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace nsatp {

/// Simplex tolerance on the sum of a probability vector. Loose enough to admit
/// single-precision softmax outputs coming from external models.
inline constexpr double kSimplexTolerance = 1e-6;

/// A validated softmax output: n >= 2 finite entries in [0, 1] summing to 1.
class ProbabilityVector {
 public:
  /// Validates `raw` and throws nsatp::Error (NegativeEntry,
  /// SumOutOfTolerance, TooShort, NonFinite) on violation.
  explicit ProbabilityVector(std::vector<double> raw);

  std::span<const double> values() const noexcept { return values_; }
  std::size_t size() const noexcept { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }

  /// Index of the largest entry; the lowest index wins ties.
  std::size_t argmax() const noexcept;

 private:
  std::vector<double> values_;
};

ProbabilityVector validate_probability_vector(std::vector<double> raw);

enum class MetricKind { PD, PE, PV };

inline constexpr MetricKind kAllMetrics[] = {MetricKind::PD, MetricKind::PE, MetricKind::PV};

std::string_view to_string(MetricKind metric) noexcept;
/// Accepts "pd", "pe", "pv" in any case.
MetricKind parse_metric(std::string_view name);

struct SensitivityScore {
  MetricKind metric;
  double value;
};

/// Weighted sum of gaps between consecutive entries sorted descending; the
/// gap after rank i carries weight 1/i.
SensitivityScore probability_difference(const ProbabilityVector& pv);

/// Sum of squared deviations from the mean 1/n, without dividing by n.
SensitivityScore probability_variance(const ProbabilityVector& pv);

/// Shannon entropy in nats, with 0 ln 0 = 0.
SensitivityScore probability_entropy(const ProbabilityVector& pv);

SensitivityScore compute_metric(MetricKind metric, const ProbabilityVector& pv);

}  // namespace nsatp
