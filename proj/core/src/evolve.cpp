#include "wmlock/evolve.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "wmlock/errors.hpp"

namespace wmlock {

namespace {

// Unwinds the search once a flipped prediction is found with early stop on.
struct EarlyStop {};

// Uniform double in (0, 1].
double open_closed_unit(std::mt19937_64& rng) {
  return static_cast<double>((rng() >> 11) + 1) * 0x1.0p-53;
}

}  // namespace

std::string_view to_string(MutationKind kind) {
  return kind == MutationKind::kBasinHopping ? "basin-hopping" : "random";
}

MutationKind parse_mutation_kind(std::string_view text) {
  if (text == "basin-hopping" || text == "bh") return MutationKind::kBasinHopping;
  if (text == "random") return MutationKind::kRandom;
  throw ConfigError("unknown mutation kind '" + std::string(text) + "'");
}

void EsConfig::validate() const {
  if (population < 1) throw ConfigError("population must be >= 1");
  if (generations < 0) throw ConfigError("generations must be >= 0");
  if (!(crossover_rate >= 0.0 && crossover_rate <= 1.0)) {
    throw ConfigError("crossover_rate must lie in [0, 1]");
  }
  if (mutation_step <= 0) throw ConfigError("mutation_step must be > 0");
  if (bh_iters < 0) throw ConfigError("bh_iters must be >= 0");
  if (alpha_min < 0 || alpha_max > 255 || alpha_min > alpha_max) {
    throw ConfigError("alpha bounds must satisfy 0 <= alpha_min <= alpha_max <= 255");
  }
}

std::uint64_t EsConfig::query_budget() const noexcept {
  const std::uint64_t per_generation =
      mutation == MutationKind::kBasinHopping ? static_cast<std::uint64_t>(bh_iters) + 1 : 1;
  return static_cast<std::uint64_t>(population) *
         (1 + static_cast<std::uint64_t>(generations) * per_generation);
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finalizer over the combined value.
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// ---------------------------------------------------------------------------

FitnessEvaluator::FitnessEvaluator(const RgbaImage& original, const WatermarkLogo& logo,
                                   int label, ScoreOracle& oracle, bool cache)
    : original_(original),
      logo_(logo),
      label_(label),
      oracle_(oracle),
      cache_enabled_(cache) {}

RgbaImage FitnessEvaluator::render(const Individual& ind) const {
  return blend(original_, logo_,
               Placement{ind.alpha, ind.x, ind.y, logo_.width(), logo_.height()});
}

double FitnessEvaluator::operator()(const Individual& ind) {
  const auto key = std::make_tuple(ind.alpha, ind.x, ind.y);
  if (cache_enabled_) {
    if (auto it = cache_.find(key); it != cache_.end()) {
      last_scores_ = it->second;
      return last_scores_.scores[label_];
    }
  }
  ScoreVector scores = oracle_.score(render(ind));
  ++queries_;
  if (!first_flip_ && predicted_class(scores) != label_) {
    Individual hit = ind;
    hit.fitness = scores.scores[label_];
    first_flip_.emplace(hit, scores);
  }
  cache_.insert_or_assign(key, scores);
  last_scores_ = std::move(scores);
  return last_scores_.scores[label_];
}

const ScoreVector* FitnessEvaluator::recorded(const Individual& ind) const {
  const auto it = cache_.find(std::make_tuple(ind.alpha, ind.x, ind.y));
  return it == cache_.end() ? nullptr : &it->second;
}

// ---------------------------------------------------------------------------

bool repair(Individual& ind, const EsConfig& cfg, const ConstraintRegion& region) {
  ind.alpha = std::clamp(ind.alpha, cfg.alpha_min, cfg.alpha_max);
  const auto pos = region.nearest_feasible(ind.x, ind.y);
  if (!pos) return false;
  ind.x = pos->first;
  ind.y = pos->second;
  return true;
}

std::vector<Individual> init_population(const EsConfig& cfg,
                                        const ConstraintRegion& region,
                                        std::vector<std::mt19937_64>& slot_rngs) {
  cfg.validate();
  if (slot_rngs.size() != static_cast<std::size_t>(cfg.population)) {
    throw ParameterError("need one RNG stream per population slot");
  }
  std::vector<Individual> pop;
  pop.reserve(slot_rngs.size());
  for (auto& rng : slot_rngs) {
    const auto [x, y] = region.sample_position(rng);
    std::uniform_int_distribution<int> alpha(cfg.alpha_min, cfg.alpha_max);
    pop.push_back(Individual{alpha(rng), x, y, std::nullopt});
  }
  return pop;
}

std::vector<Individual> init_population(const EsConfig& cfg,
                                        const ConstraintRegion& region,
                                        std::mt19937_64& rng) {
  std::vector<std::mt19937_64> slots;
  const std::uint64_t base = rng();
  for (int i = 0; i < cfg.population; ++i) slots.emplace_back(mix_seed(base, i));
  return init_population(cfg, region, slots);
}

namespace {

Individual perturb(const Individual& from, const EsConfig& cfg, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> step(-cfg.mutation_step, cfg.mutation_step);
  Individual cand = from;
  cand.alpha += step(rng);
  cand.x += step(rng);
  cand.y += step(rng);
  cand.fitness.reset();
  return cand;
}

}  // namespace

Individual bh_mutate(const Individual& parent, const FitnessFn& fitness,
                     const EsConfig& cfg, const ConstraintRegion& region,
                     std::mt19937_64& rng) {
  if (!parent.fitness) throw ParameterError("bh_mutate needs an evaluated parent");
  Individual current = parent;
  for (int hop = 0; hop < cfg.bh_iters; ++hop) {
    Individual cand = perturb(current, cfg, rng);
    if (!repair(cand, cfg, region)) continue;
    cand.fitness = fitness(cand);
    if (*cand.fitness < *current.fitness) current = cand;
  }
  return current;
}

Individual random_mutate(const Individual& parent, const EsConfig& cfg,
                         const ConstraintRegion& region, std::mt19937_64& rng) {
  Individual cand = perturb(parent, cfg, rng);
  if (!repair(cand, cfg, region)) return parent;
  return cand;
}

Individual crossover(const Individual& parent, const Individual& mutant, double cr,
                     std::mt19937_64& rng, const EsConfig* cfg,
                     const ConstraintRegion* region) {
  Individual child;
  child.alpha = open_closed_unit(rng) <= cr ? mutant.alpha : parent.alpha;
  child.x = open_closed_unit(rng) <= cr ? mutant.x : parent.x;
  child.y = open_closed_unit(rng) <= cr ? mutant.y : parent.y;
  if (cfg && region && !repair(child, *cfg, *region)) return parent;
  child.fitness.reset();
  return child;
}

Individual select(const Individual& parent, Individual child, const FitnessFn& fitness) {
  if (!parent.fitness) throw ParameterError("select needs an evaluated parent");
  if (!child.fitness) child.fitness = fitness(child);
  return *child.fitness <= *parent.fitness ? child : parent;
}

// ---------------------------------------------------------------------------

AttackResult attack_image(const RgbaImage& original, int label, const WatermarkLogo& logo,
                          ScoreOracle& oracle, const ConstraintRegion& region,
                          const EsConfig& cfg) {
  cfg.validate();
  if (label < 0 || label >= oracle.class_count()) {
    throw ParameterError("label " + std::to_string(label) + " outside the oracle's " +
                         std::to_string(oracle.class_count()) + " classes");
  }
  if (logo.width() != region.logo_w() || logo.height() != region.logo_h() ||
      original.width() != region.host_w() || original.height() != region.host_h()) {
    throw GeometryError("constraint region was built for different image or logo sizes");
  }

  std::vector<std::mt19937_64> rngs;
  rngs.reserve(static_cast<std::size_t>(cfg.population));
  for (int i = 0; i < cfg.population; ++i) rngs.emplace_back(mix_seed(cfg.seed, i));

  FitnessEvaluator eval(original, logo, label, oracle, cfg.fitness_cache);
  const FitnessFn fitness = [&](const Individual& ind) {
    const double f = eval(ind);
    if (cfg.early_stop && eval.first_flip()) throw EarlyStop{};
    return f;
  };

  AttackResult result;
  double initial = std::numeric_limits<double>::infinity();
  std::vector<Individual> pop;
  try {
    pop = init_population(cfg, region, rngs);
    for (auto& ind : pop) {
      ind.fitness = fitness(ind);
      initial = std::min(initial, *ind.fitness);
    }
    result.initial_fitness = initial;
    for (int g = 0; g < cfg.generations; ++g) {
      result.generations_run = g + 1;
      for (std::size_t i = 0; i < pop.size(); ++i) {
        const Individual mutant =
            cfg.mutation == MutationKind::kBasinHopping
                ? bh_mutate(pop[i], fitness, cfg, region, rngs[i])
                : random_mutate(pop[i], cfg, region, rngs[i]);
        Individual child = crossover(pop[i], mutant, cfg.crossover_rate, rngs[i], &cfg,
                                     &region);
        pop[i] = select(pop[i], std::move(child), fitness);
      }
    }
  } catch (const EarlyStop&) {
    const auto& [hit, scores] = *eval.first_flip();
    if (!std::isfinite(initial)) initial = *hit.fitness;
    result.initial_fitness = std::min(initial, *hit.fitness);
    result.best = hit;
    result.best_scores = scores;
    result.final_fitness = *hit.fitness;
    result.predicted = predicted_class(scores);
    result.success = true;
    result.queries_used = eval.queries();
    return result;
  }

  const auto best = std::min_element(pop.begin(), pop.end(), [](const auto& a, const auto& b) {
    return *a.fitness < *b.fitness;
  });
  result.best = *best;
  result.final_fitness = *best->fitness;
  result.best_scores = *eval.recorded(*best);
  result.predicted = predicted_class(result.best_scores);
  result.success = result.predicted != label;
  result.queries_used = eval.queries();
  return result;
}

}  // namespace wmlock
