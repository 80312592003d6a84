#include "nsatp/attack.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <string>

#include "nsatp/csv.hpp"
#include "nsatp/error.hpp"

namespace nsatp {

namespace {

void check_image(const ImageShape& shape) {
  if (shape.width < kBlockSize || shape.height < kBlockSize) {
    throw Error(ErrorCode::ImageTooSmall, "image is " + std::to_string(shape.width) + "x" +
                                              std::to_string(shape.height));
  }
}

struct Evaluation {
  double true_prob;
  int label;
};

Evaluation evaluate(const Example& ex, const ImageShape& shape, Oracle& oracle,
                    const Perturbation& p) {
  const auto pixels = apply_perturbation(ex, shape, p);
  const auto probs = oracle.predict(pixels, shape);
  const auto truth = static_cast<std::size_t>(ex.true_label);
  if (truth >= probs.size()) {
    throw Error(ErrorCode::LabelOutOfRange, "oracle returned " + std::to_string(probs.size()) +
                                                " classes for label " + std::to_string(truth));
  }
  return {probs[truth], static_cast<int>(probs.argmax())};
}

// Continuous DE coordinates to a block perturbation: anchors clamped and
// rounded, values clamped.
Perturbation decode(std::span<const double> genome, const ImageShape& shape) {
  const double max_x = static_cast<double>(shape.width - kBlockSize);
  const double max_y = static_cast<double>(shape.height - kBlockSize);
  Perturbation p;
  p.x = static_cast<std::size_t>(std::lround(std::clamp(genome[0], 0.0, max_x)));
  p.y = static_cast<std::size_t>(std::lround(std::clamp(genome[1], 0.0, max_y)));
  p.mode = Perturbation::Mode::Uniform;
  p.values.resize(shape.channels);
  for (std::size_t c = 0; c < shape.channels; ++c) p.values[c] = std::clamp(genome[2 + c], 0.0, 1.0);
  return p;
}

AttackOutcome make_outcome(const Example& ex, std::size_t trial, Perturbation p,
                           const Evaluation& e, std::size_t queries) {
  AttackOutcome o;
  o.example_id = ex.id;
  o.trial_index = trial;
  o.perturbation = std::move(p);
  o.predicted_label = e.label;
  o.success = e.label != ex.true_label;
  o.true_label_prob_after = e.true_prob;
  o.oracle_queries = queries;
  return o;
}

}  // namespace

std::vector<double> apply_perturbation(const Example& ex, const ImageShape& shape,
                                       const Perturbation& p) {
  if (ex.pixels.size() != shape.size()) {
    throw Error(ErrorCode::ShapeMismatch, "example pixels do not match the image shape");
  }
  check_image(shape);
  if (p.x > shape.width - kBlockSize || p.y > shape.height - kBlockSize) {
    throw Error(ErrorCode::AnchorOutOfBounds,
                "anchor (" + std::to_string(p.x) + ", " + std::to_string(p.y) + ")");
  }
  const std::size_t c_count = shape.channels;
  const std::size_t expected =
      p.mode == Perturbation::Mode::Uniform ? c_count : kBlockSize * kBlockSize * c_count;
  if (p.values.size() != expected) {
    throw Error(ErrorCode::InvalidParameter, "perturbation carries " +
                                                 std::to_string(p.values.size()) +
                                                 " values, expected " + std::to_string(expected));
  }

  std::vector<double> out = ex.pixels;
  for (std::size_t dy = 0; dy < kBlockSize; ++dy) {
    for (std::size_t dx = 0; dx < kBlockSize; ++dx) {
      for (std::size_t c = 0; c < c_count; ++c) {
        const double v = p.mode == Perturbation::Mode::Uniform
                             ? p.values[c]
                             : p.values[(dy * kBlockSize + dx) * c_count + c];
        out[shape.index(p.x + dx, p.y + dy, c)] = std::clamp(v, 0.0, 1.0);
      }
    }
  }
  return out;
}

Perturbation random_block_flip(const Example& ex, const ImageShape& shape, Rng& rng) {
  check_image(shape);
  if (ex.pixels.size() != shape.size()) {
    throw Error(ErrorCode::ShapeMismatch, "example pixels do not match the image shape");
  }
  const std::size_t cols = shape.width - kBlockSize + 1;
  const std::size_t rows = shape.height - kBlockSize + 1;
  const auto cell = static_cast<std::size_t>(rng.below(cols * rows));
  Perturbation p;
  p.x = cell % cols;
  p.y = cell / cols;
  p.mode = Perturbation::Mode::PerPixel;
  p.values.reserve(kBlockSize * kBlockSize * shape.channels);
  for (std::size_t dy = 0; dy < kBlockSize; ++dy) {
    for (std::size_t dx = 0; dx < kBlockSize; ++dx) {
      for (std::size_t c = 0; c < shape.channels; ++c) {
        p.values.push_back(1.0 - ex.pixels[shape.index(p.x + dx, p.y + dy, c)]);
      }
    }
  }
  return p;
}

std::vector<AttackOutcome> random_attack(const Example& ex, const ImageShape& shape,
                                         Oracle& oracle, std::size_t m, std::uint64_t seed) {
  if (m == 0) throw Error(ErrorCode::InvalidParameter, "random_attack needs at least one trial");
  Rng rng(seed);
  std::vector<AttackOutcome> outcomes;
  outcomes.reserve(m);
  for (std::size_t t = 0; t < m; ++t) {
    auto p = random_block_flip(ex, shape, rng);
    const auto e = evaluate(ex, shape, oracle, p);
    outcomes.push_back(make_outcome(ex, t, std::move(p), e, 1));
  }
  return outcomes;
}

void DeParams::validate() const {
  if (population_size < 4) {
    throw Error(ErrorCode::InvalidParameter, "DE population must be at least 4");
  }
  if (!(differential_weight > 0.0 && differential_weight <= 2.0)) {
    throw Error(ErrorCode::InvalidParameter, "DE differential weight must lie in (0, 2]");
  }
  if (!(crossover_rate >= 0.0 && crossover_rate <= 1.0)) {
    throw Error(ErrorCode::InvalidParameter, "DE crossover rate must lie in [0, 1]");
  }
}

AttackOutcome de_attack(const Example& ex, const ImageShape& shape, Oracle& oracle,
                        const DeParams& params) {
  params.validate();
  check_image(shape);

  const std::size_t dim = 2 + shape.channels;
  std::vector<double> lower(dim, 0.0);
  std::vector<double> upper(dim, 1.0);
  upper[0] = static_cast<double>(shape.width - kBlockSize);
  upper[1] = static_cast<double>(shape.height - kBlockSize);

  const std::size_t np = params.population_size;
  const std::size_t budget =
      params.max_queries > 0 ? params.max_queries : np * (params.max_generations + 1);

  Rng rng(params.seed);
  std::vector<std::vector<double>> population(np, std::vector<double>(dim));
  for (auto& member : population) {
    for (std::size_t d = 0; d < dim; ++d) member[d] = rng.uniform(lower[d], upper[d]);
  }

  std::vector<double> fitness(np, std::numeric_limits<double>::infinity());
  std::size_t queries = 0;
  std::size_t best = 0;
  Evaluation best_eval{std::numeric_limits<double>::infinity(), ex.true_label};

  for (std::size_t i = 0; i < np && queries < budget; ++i) {
    auto p = decode(population[i], shape);
    const auto e = evaluate(ex, shape, oracle, p);
    ++queries;
    fitness[i] = e.true_prob;
    if (e.label != ex.true_label) return make_outcome(ex, 0, std::move(p), e, queries);
    if (e.true_prob < best_eval.true_prob) {
      best = i;
      best_eval = e;
    }
  }

  std::vector<double> trial(dim);
  for (std::size_t gen = 0; queries < budget; ++gen) {
    if (params.max_queries == 0 && gen >= params.max_generations) break;
    for (std::size_t i = 0; i < np && queries < budget; ++i) {
      std::size_t a, b, c;
      do a = rng.below(np); while (a == i);
      do b = rng.below(np); while (b == i || b == a);
      do c = rng.below(np); while (c == i || c == a || c == b);
      const auto forced = static_cast<std::size_t>(rng.below(dim));
      for (std::size_t d = 0; d < dim; ++d) {
        if (d == forced || rng.uniform() < params.crossover_rate) {
          const double mutant = population[a][d] +
                                params.differential_weight * (population[b][d] - population[c][d]);
          trial[d] = std::clamp(mutant, lower[d], upper[d]);
        } else {
          trial[d] = population[i][d];
        }
      }
      auto p = decode(trial, shape);
      const auto e = evaluate(ex, shape, oracle, p);
      ++queries;
      if (e.label != ex.true_label) return make_outcome(ex, 0, std::move(p), e, queries);
      if (e.true_prob <= fitness[i]) {
        population[i] = trial;
        fitness[i] = e.true_prob;
        if (e.true_prob < best_eval.true_prob) {
          best = i;
          best_eval = e;
        }
      }
    }
  }
  return make_outcome(ex, 0, decode(population[best], shape), best_eval, queries);
}

AttackOutcome random_search_attack(const Example& ex, const ImageShape& shape, Oracle& oracle,
                                   std::size_t budget, std::uint64_t seed) {
  check_image(shape);
  if (budget == 0) throw Error(ErrorCode::InvalidParameter, "random search needs a positive budget");
  const std::size_t dim = 2 + shape.channels;
  std::vector<double> upper(dim, 1.0);
  upper[0] = static_cast<double>(shape.width - kBlockSize);
  upper[1] = static_cast<double>(shape.height - kBlockSize);

  Rng rng(seed);
  std::vector<double> genome(dim);
  Perturbation best_p;
  Evaluation best_eval{std::numeric_limits<double>::infinity(), ex.true_label};
  for (std::size_t q = 1; q <= budget; ++q) {
    for (std::size_t d = 0; d < dim; ++d) genome[d] = rng.uniform(0.0, upper[d]);
    auto p = decode(genome, shape);
    const auto e = evaluate(ex, shape, oracle, p);
    if (e.label != ex.true_label) return make_outcome(ex, 0, std::move(p), e, q);
    if (e.true_prob < best_eval.true_prob) {
      best_eval = e;
      best_p = std::move(p);
    }
  }
  return make_outcome(ex, 0, std::move(best_p), best_eval, budget);
}

std::string_view to_string(AttackKind kind) noexcept {
  return kind == AttackKind::Random ? "random" : "de";
}

AttackKind parse_attack_kind(std::string_view name) {
  if (name == "random") return AttackKind::Random;
  if (name == "de") return AttackKind::De;
  throw Error(ErrorCode::Config, "unknown attack kind '" + std::string(name) + "'");
}

FirstSuccess first_success_count(const Example& ex, const ImageShape& shape, Oracle& oracle,
                                 AttackKind generator, std::size_t cap, std::uint64_t seed,
                                 DeParams de) {
  if (cap == 0) throw Error(ErrorCode::InvalidParameter, "cap must be at least 1");
  if (generator == AttackKind::Random) {
    Rng rng(seed);
    for (std::size_t n = 1; n <= cap; ++n) {
      const auto p = random_block_flip(ex, shape, rng);
      if (evaluate(ex, shape, oracle, p).label != ex.true_label) return FirstSuccess::found(n);
    }
    return FirstSuccess::exhausted_at(cap);
  }
  de.seed = seed;
  de.max_queries = cap;
  const auto outcome = de_attack(ex, shape, oracle, de);
  return outcome.success ? FirstSuccess::found(outcome.oracle_queries)
                         : FirstSuccess::exhausted_at(cap);
}

void write_attack_header(std::ostream& out) {
  out << "example_id,trial,success,pred_label,true_prob_after,queries,x,y\n";
}

void write_attack_rows(std::ostream& out, std::span<const AttackOutcome> outcomes) {
  for (const auto& o : outcomes) {
    out << o.example_id << ',' << o.trial_index << ',' << (o.success ? 1 : 0) << ','
        << o.predicted_label << ',' << csv::format_double(o.true_label_prob_after) << ','
        << o.oracle_queries << ',' << o.perturbation.x << ',' << o.perturbation.y << '\n';
  }
}

}  // namespace nsatp
