#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <tuple>
#include <vector>

#include "wmlock/lesion_mask.hpp"
#include "wmlock/oracle.hpp"
#include "wmlock/raster.hpp"

namespace wmlock {

// Genome [alpha, x, y] plus its cached fitness.
struct Individual {
  int alpha = 255;
  int x = 0;
  int y = 0;
  std::optional<double> fitness;

  bool same_genome(const Individual& o) const noexcept {
    return alpha == o.alpha && x == o.x && y == o.y;
  }
};

enum class MutationKind {
  kBasinHopping,
  // Ablation: one unevaluated uniform perturbation instead of basin hopping.
  kRandom,
};

std::string_view to_string(MutationKind kind);
MutationKind parse_mutation_kind(std::string_view text);

struct EsConfig {
  int population = 50;
  int generations = 3;
  double crossover_rate = 0.9;
  int mutation_step = 10;
  int bh_iters = 3;
  int alpha_min = 100;
  int alpha_max = 255;
  std::uint64_t seed = 0;
  bool early_stop = true;
  // Reuse the fitness of an already-queried genome instead of querying again.
  bool fitness_cache = false;
  MutationKind mutation = MutationKind::kBasinHopping;

  // Throws ConfigError.
  void validate() const;
  // Upper bound on oracle queries for one attack:
  // Np * (1 + Ng * (N_iter + 1)) for basin hopping, Np * (1 + Ng) for random.
  std::uint64_t query_budget() const noexcept;
};

struct AttackResult {
  Individual best;
  bool success = false;
  int predicted = -1;          // class predicted on the best blended image
  ScoreVector best_scores;
  double initial_fitness = 0;  // best fitness of the initial population
  double final_fitness = 0;    // fitness of `best`
  std::uint64_t queries_used = 0;
  int generations_run = 0;
};

// Splits one seed into independent, reproducible streams.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

// Fitness oracle for one attack: f_t of the logo blended at a genome.
// Counts queries and remembers the first genome whose blended image is
// classified as something other than the target label.
class FitnessEvaluator {
 public:
  FitnessEvaluator(const RgbaImage& original, const WatermarkLogo& logo,
                   int label, ScoreOracle& oracle, bool cache);

  double operator()(const Individual& ind);

  RgbaImage render(const Individual& ind) const;
  std::uint64_t queries() const noexcept { return queries_; }

  // First evaluated genome that flipped the prediction, with its scores.
  const std::optional<std::pair<Individual, ScoreVector>>& first_flip() const noexcept {
    return first_flip_;
  }
  // Scores last seen for a genome, whether or not reuse is enabled.
  const ScoreVector* recorded(const Individual& ind) const;
  // Scores of the most recently evaluated genome or cache hit.
  const ScoreVector& last_scores() const noexcept { return last_scores_; }

 private:
  const RgbaImage& original_;
  const WatermarkLogo& logo_;
  int label_;
  ScoreOracle& oracle_;
  bool cache_enabled_;
  // Every scored genome; consulted for reuse only when cache_enabled_.
  std::map<std::tuple<int, int, int>, ScoreVector> cache_;
  std::uint64_t queries_ = 0;
  std::optional<std::pair<Individual, ScoreVector>> first_flip_;
  ScoreVector last_scores_;
};

using FitnessFn = std::function<double(const Individual&)>;

// Clamps alpha into bounds and projects (x, y) onto the nearest admissible
// position. Returns false when no admissible position exists.
bool repair(Individual& ind, const EsConfig& cfg, const ConstraintRegion& region);

std::vector<Individual> init_population(const EsConfig& cfg,
                                        const ConstraintRegion& region,
                                        std::vector<std::mt19937_64>& slot_rngs);
std::vector<Individual> init_population(const EsConfig& cfg,
                                        const ConstraintRegion& region,
                                        std::mt19937_64& rng);

// Greedy basin hopping from `parent` (whose fitness must be set): N_iter hops,
// each perturbing every gene by a uniform integer in [-s, s] around the
// current point; a hop is kept only if it strictly lowers the fitness.
Individual bh_mutate(const Individual& parent, const FitnessFn& fitness,
                     const EsConfig& cfg, const ConstraintRegion& region,
                     std::mt19937_64& rng);

// Single uniform perturbation, not evaluated.
Individual random_mutate(const Individual& parent, const EsConfig& cfg,
                         const ConstraintRegion& region, std::mt19937_64& rng);

// Gene-wise crossover: each gene comes from the mutant when u <= CR with
// u uniform in (0, 1]. The child is repaired into the region.
Individual crossover(const Individual& parent, const Individual& mutant, double cr,
                     std::mt19937_64& rng, const EsConfig* cfg = nullptr,
                     const ConstraintRegion* region = nullptr);

// Keeps the child when f(child) <= f(parent).
Individual select(const Individual& parent, Individual child, const FitnessFn& fitness);

// Minimizes scores[label] over logo placements inside `region`.
// `logo` must already be scaled to the host image.
AttackResult attack_image(const RgbaImage& original, int label, const WatermarkLogo& logo,
                          ScoreOracle& oracle, const ConstraintRegion& region,
                          const EsConfig& cfg);

}  // namespace wmlock
