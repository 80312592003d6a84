#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string_view>
#include <vector>

#include "nsatp/dataset.hpp"
#include "nsatp/oracle.hpp"
#include "nsatp/random.hpp"

namespace nsatp {

/// Side length of the square block every perturbation rewrites.
inline constexpr std::size_t kBlockSize = 2;

/// Rewrites the 2x2 block whose top-left corner is (x, y).
///
/// Uniform mode carries one value per channel, applied to all four pixels.
/// PerPixel mode carries 4 * channels values ordered (dy, dx, channel); this
/// is what an inversion flip produces.
struct Perturbation {
  enum class Mode { Uniform, PerPixel };

  std::size_t x = 0;
  std::size_t y = 0;
  Mode mode = Mode::Uniform;
  std::vector<double> values;
};

/// Copy of ex.pixels with the block rewritten (values clamped to [0, 1]).
/// Throws AnchorOutOfBounds or InvalidParameter (wrong value count).
std::vector<double> apply_perturbation(const Example& ex, const ImageShape& shape,
                                       const Perturbation& p);

/// Uniform anchor; every pixel of the block inverted (v -> 1 - v).
Perturbation random_block_flip(const Example& ex, const ImageShape& shape, Rng& rng);

struct AttackOutcome {
  ExampleId example_id = 0;
  std::size_t trial_index = 0;
  Perturbation perturbation;
  bool success = false;
  int predicted_label = 0;
  double true_label_prob_after = 0.0;
  std::size_t oracle_queries = 0;
};

/// m independent block flips, one oracle query each, in trial order.
std::vector<AttackOutcome> random_attack(const Example& ex, const ImageShape& shape,
                                         Oracle& oracle, std::size_t m, std::uint64_t seed);

struct DeParams {
  std::size_t population_size = 50;
  double differential_weight = 0.5;  // F
  double crossover_rate = 0.9;       // CR
  std::size_t max_generations = 30;
  std::uint64_t seed = 0;
  /// Hard cap on oracle evaluations; 0 means population * (generations + 1).
  std::size_t max_queries = 0;

  void validate() const;
};

/// Differential evolution (rand/1/bin) over (x, y, v_1..v_c), minimizing
/// the oracle's probability for the true label. Stops at the first candidate
/// that changes the argmax; otherwise returns the best candidate found.
AttackOutcome de_attack(const Example& ex, const ImageShape& shape, Oracle& oracle,
                        const DeParams& params);

/// Uniform random candidates over the same box as de_attack, same stopping
/// rule, `budget` evaluations. The baseline DE is judged against.
AttackOutcome random_search_attack(const Example& ex, const ImageShape& shape, Oracle& oracle,
                                   std::size_t budget, std::uint64_t seed);

enum class AttackKind { Random, De };

std::string_view to_string(AttackKind kind) noexcept;
AttackKind parse_attack_kind(std::string_view name);

/// 1-based index of the first successful sample, or exhausted.
struct FirstSuccess {
  std::size_t count = 0;
  bool exhausted = false;

  static FirstSuccess found(std::size_t n) { return {n, false}; }
  static FirstSuccess exhausted_at(std::size_t cap) { return {cap, true}; }
};

/// Generates samples one at a time until the first success: each random
/// flip, or each DE candidate evaluation, is one sample.
FirstSuccess first_success_count(const Example& ex, const ImageShape& shape, Oracle& oracle,
                                 AttackKind generator, std::size_t cap, std::uint64_t seed,
                                 DeParams de = {});

/// `example_id,trial,success,pred_label,true_prob_after,queries,x,y`
void write_attack_header(std::ostream& out);
void write_attack_rows(std::ostream& out, std::span<const AttackOutcome> outcomes);

}  // namespace nsatp
