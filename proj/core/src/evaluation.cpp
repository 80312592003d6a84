#include "nsatp/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "nsatp/error.hpp"

namespace nsatp {

namespace {

double pearson(std::span<const double> xs, std::span<const double> ys) {
  const auto n = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mx;
    const double dy = ys[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double compute_eff(std::span<const AttackOutcome> outcomes) {
  if (outcomes.empty()) throw Error(ErrorCode::EmptyInput, "no attack outcomes");
  const ExampleId id = outcomes.front().example_id;
  std::size_t successes = 0;
  for (const auto& o : outcomes) {
    if (o.example_id != id) {
      throw Error(ErrorCode::InvalidParameter, "outcomes span more than one example");
    }
    if (o.success) ++successes;
  }
  return static_cast<double>(successes) / static_cast<double>(outcomes.size());
}

FMeasureReport f_measure(std::span<const FirstSuccess> counts, std::size_t cap,
                         std::string method) {
  if (counts.empty()) throw Error(ErrorCode::EmptyInput, "no first-success counts");
  FMeasureReport report;
  report.method = std::move(method);
  report.cap = cap;
  report.n = counts.size();
  double total = 0.0;
  std::size_t exhausted = 0;
  for (const auto& c : counts) {
    if (c.exhausted) {
      total += static_cast<double>(cap);
      ++exhausted;
    } else {
      total += static_cast<double>(c.count);
    }
  }
  report.mean_count = total / static_cast<double>(counts.size());
  report.exhausted_fraction = static_cast<double>(exhausted) / static_cast<double>(counts.size());
  return report;
}

double improvement(double baseline, double candidate) {
  if (!(baseline > 0.0)) {
    throw Error(ErrorCode::NonPositiveBaseline, "baseline F-measure must be positive");
  }
  return (baseline - candidate) / baseline * 100.0;
}

double ExpFit::operator()(double v) const { return a * std::exp(-b * v); }

ExpFit fit_exponential(std::span<const EffTuple> tuples) {
  std::vector<double> vs, zs;
  std::size_t excluded = 0;
  for (const auto& t : tuples) {
    if (!std::isfinite(t.v)) throw Error(ErrorCode::NonFinite, "tuple with non-finite v");
    if (t.e > 0.0) {
      vs.push_back(t.v);
      zs.push_back(std::log(t.e));
    } else {
      ++excluded;
    }
  }
  if (vs.size() < 3) {
    throw Error(ErrorCode::TooFewPoints, std::to_string(vs.size()) + " tuples with E > 0 (" +
                                             std::to_string(excluded) + " excluded)");
  }
  const auto n = static_cast<double>(vs.size());
  const double mv = std::accumulate(vs.begin(), vs.end(), 0.0) / n;
  const double mz = std::accumulate(zs.begin(), zs.end(), 0.0) / n;
  double svv = 0.0, svz = 0.0;
  for (std::size_t i = 0; i < vs.size(); ++i) {
    svv += (vs[i] - mv) * (vs[i] - mv);
    svz += (vs[i] - mv) * (zs[i] - mz);
  }
  if (svv == 0.0) throw Error(ErrorCode::DegenerateX, "all tuples share the same v");
  const double slope = svz / svv;
  const double intercept = mz - slope * mv;

  ExpFit fit;
  fit.a = std::exp(intercept);
  fit.b = slope == 0.0 ? 0.0 : -slope;
  fit.r = pearson(vs, zs);
  fit.n_points = vs.size();
  fit.excluded = excluded;
  return fit;
}

LinearForm linearize(const ExpFit& fit) {
  return {fit.b == 0.0 ? 0.0 : -fit.b, std::log(fit.a), std::abs(fit.b)};
}

std::string_view to_string(EffDMark mark) noexcept {
  switch (mark) {
    case EffDMark::Best: return "Best";
    case EffDMark::Middle: return "Middle";
    case EffDMark::Worst: return "Worst";
  }
  return "?";
}

EffDComparison eff_d_compare(const std::map<MetricKind, ExpFit>& fits) {
  for (auto m : kAllMetrics) {
    if (!fits.contains(m)) {
      throw Error(ErrorCode::MissingMetric, "no fit for " + std::string(to_string(m)));
    }
  }
  std::vector<std::pair<MetricKind, double>> slopes;
  for (auto m : kAllMetrics) slopes.emplace_back(m, std::abs(fits.at(m).b));
  std::stable_sort(slopes.begin(), slopes.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });

  constexpr EffDMark by_position[] = {EffDMark::Best, EffDMark::Middle, EffDMark::Worst};
  EffDComparison out;
  for (std::size_t i = 0; i < slopes.size(); ++i) {
    std::size_t first = i;
    while (first > 0 && slopes[first - 1].second == slopes[i].second) --first;
    if (first != i) out.tie = true;
    out.marks[slopes[i].first] = by_position[first];
  }
  return out;
}

double spearman(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) {
    throw Error(ErrorCode::LengthMismatch, std::to_string(xs.size()) + " vs " +
                                               std::to_string(ys.size()) + " values");
  }
  if (xs.size() < 3) throw Error(ErrorCode::TooShort, "spearman needs at least 3 pairs");
  const auto rx = average_ranks(xs);
  const auto ry = average_ranks(ys);
  return pearson(rx, ry);
}

bool correlation_gate(const ExpFit& fit, double threshold) { return std::abs(fit.r) >= threshold; }

std::vector<std::pair<double, double>> sample_curve(const ExpFit& fit, double lo, double hi,
                                                    std::size_t count) {
  std::vector<std::pair<double, double>> points;
  points.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double v = count == 1 ? lo
                                : lo + (hi - lo) * static_cast<double>(i) /
                                           static_cast<double>(count - 1);
    points.emplace_back(v, fit(v));
  }
  return points;
}

}  // namespace nsatp
