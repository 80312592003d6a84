#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "nsatp/attack.hpp"
#include "nsatp/metrics.hpp"

namespace nsatp {

/// One example's metric value v and its effective adversarial ratio E.
struct EffTuple {
  double v = 0.0;
  double e = 0.0;
};

/// successes / trials over the outcomes of a single example.
double compute_eff(std::span<const AttackOutcome> outcomes);

inline constexpr std::string_view kExhaustedPolicy = "cap-as-count";

struct FMeasureReport {
  std::string method;
  double mean_count = 0.0;
  double exhausted_fraction = 0.0;
  std::size_t n = 0;
  std::size_t cap = 0;
  std::string policy{kExhaustedPolicy};
  /// Improvement over a baseline report, in percent, once one is attached.
  std::optional<double> inc;
};

/// Mean samples-to-first-success; exhausted entries count as `cap`.
FMeasureReport f_measure(std::span<const FirstSuccess> counts, std::size_t cap,
                         std::string method = {});

/// (R - A) / R * 100. Throws NonPositiveBaseline when R <= 0.
double improvement(double baseline, double candidate);

/// f(v) = a * exp(-b * v), fitted by least squares on z = ln E.
struct ExpFit {
  double a = 0.0;
  double b = 0.0;
  /// Pearson correlation of (v, ln E); 0 when either side is constant.
  double r = 0.0;
  std::size_t n_points = 0;
  /// Tuples dropped because E <= 0.
  std::size_t excluded = 0;

  double operator()(double v) const;
};

/// Throws TooFewPoints (< 3 positive-E tuples) or DegenerateX.
ExpFit fit_exponential(std::span<const EffTuple> tuples);

/// z = slope * v + intercept with slope = -b, intercept = ln a.
struct LinearForm {
  double slope = 0.0;
  double intercept = 0.0;
  double abs_derivative = 0.0;
};

LinearForm linearize(const ExpFit& fit);

enum class EffDMark { Best, Middle, Worst };

std::string_view to_string(EffDMark mark) noexcept;

struct EffDComparison {
  std::map<MetricKind, EffDMark> marks;
  /// Set when two or more |b| values are equal; tied metrics share the
  /// higher mark.
  bool tie = false;
};

/// Larger |b| is better. Needs exactly PD, PE and PV (MissingMetric).
EffDComparison eff_d_compare(const std::map<MetricKind, ExpFit>& fits);

/// Spearman rank correlation with average ranks for ties; 0 when either
/// side has no rank variance. Throws LengthMismatch or TooShort (< 3).
double spearman(std::span<const double> xs, std::span<const double> ys);

bool correlation_gate(const ExpFit& fit, double threshold = 0.95);

/// `count` evenly spaced points of the fitted curve over [lo, hi].
std::vector<std::pair<double, double>> sample_curve(const ExpFit& fit, double lo, double hi,
                                                    std::size_t count = 100);

}  // namespace nsatp
