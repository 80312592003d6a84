#include "nsatp/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <functional>
#include <string>

#include "nsatp/error.hpp"

namespace nsatp {

namespace {

// Entries this small contribute nothing to the entropy sum and would only
// produce denormal or non-finite intermediates.
constexpr double kEntropyFloor = 1e-300;

}  // namespace

ProbabilityVector::ProbabilityVector(std::vector<double> raw) : values_(std::move(raw)) {
  if (values_.size() < 2) {
    throw Error(ErrorCode::TooShort, "probability vector needs at least 2 entries, got " +
                                         std::to_string(values_.size()));
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < values_.size(); ++i) {
    const double v = values_[i];
    if (!std::isfinite(v)) {
      throw Error(ErrorCode::NonFinite, "entry " + std::to_string(i) + " is not finite");
    }
    if (v < 0.0) {
      throw Error(ErrorCode::NegativeEntry,
                  "entry " + std::to_string(i) + " = " + std::to_string(v));
    }
    if (v > 1.0 + kSimplexTolerance) {
      throw Error(ErrorCode::SumOutOfTolerance,
                  "entry " + std::to_string(i) + " exceeds 1: " + std::to_string(v));
    }
    sum += v;
  }
  if (std::abs(sum - 1.0) > kSimplexTolerance) {
    throw Error(ErrorCode::SumOutOfTolerance, "entries sum to " + std::to_string(sum));
  }
}

std::size_t ProbabilityVector::argmax() const noexcept {
  return static_cast<std::size_t>(std::max_element(values_.begin(), values_.end()) -
                                  values_.begin());
}

ProbabilityVector validate_probability_vector(std::vector<double> raw) {
  return ProbabilityVector(std::move(raw));
}

std::string_view to_string(MetricKind metric) noexcept {
  switch (metric) {
    case MetricKind::PD: return "pd";
    case MetricKind::PE: return "pe";
    case MetricKind::PV: return "pv";
  }
  return "?";
}

MetricKind parse_metric(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "pd") return MetricKind::PD;
  if (lower == "pe") return MetricKind::PE;
  if (lower == "pv") return MetricKind::PV;
  throw Error(ErrorCode::Config, "unknown metric '" + std::string(name) + "'");
}

SensitivityScore probability_difference(const ProbabilityVector& pv) {
  std::vector<double> sorted(pv.values().begin(), pv.values().end());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  double pd = 0.0;
  for (std::size_t i = 0; i + 1 < sorted.size(); ++i) {
    pd += (sorted[i] - sorted[i + 1]) / static_cast<double>(i + 1);
  }
  return {MetricKind::PD, pd};
}

SensitivityScore probability_variance(const ProbabilityVector& pv) {
  const double mean = 1.0 / static_cast<double>(pv.size());
  double pvar = 0.0;
  for (double p : pv.values()) pvar += (p - mean) * (p - mean);
  return {MetricKind::PV, pvar};
}

SensitivityScore probability_entropy(const ProbabilityVector& pv) {
  double h = 0.0;
  for (double p : pv.values()) {
    if (p > kEntropyFloor) h -= p * std::log(p);
  }
  // Entries within tolerance above 1 can push the sum slightly negative.
  return {MetricKind::PE, std::max(h, 0.0)};
}

SensitivityScore compute_metric(MetricKind metric, const ProbabilityVector& pv) {
  switch (metric) {
    case MetricKind::PD: return probability_difference(pv);
    case MetricKind::PE: return probability_entropy(pv);
    case MetricKind::PV: return probability_variance(pv);
  }
  throw Error(ErrorCode::InvalidParameter, "unknown metric");
}

}  // namespace nsatp
