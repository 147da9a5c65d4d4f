#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "wmlock/evolve.hpp"
#include "wmlock/oracle.hpp"
#include "wmlock/pipeline.hpp"

namespace wmlock {

struct LabeledDataset {
  std::filesystem::path root;
  std::vector<Sample> samples;  // sorted by image_id
  int class_count = 0;
  std::optional<std::filesystem::path> masks_dir;

  // Reads the labels CSV and checks every label and image file. Throws
  // ConfigError or IoError.
  static LabeledDataset load(const std::filesystem::path& root,
                             const std::filesystem::path& labels_csv, int class_count,
                             std::optional<std::filesystem::path> masks_dir = std::nullopt);
};

struct LoadedSample {
  std::string image_id;
  int label = 0;
  RgbaImage image;
  std::optional<BinaryMask> mask;
};

std::vector<LoadedSample> load_samples(const LabeledDataset& dataset, bool with_masks);

struct SampleFailure {
  std::string image_id;
  std::string error;
};

struct AccuracyReport {
  double accuracy = 0.0;
  std::size_t evaluated = 0;
  std::size_t correct = 0;
  std::vector<SampleFailure> failures;  // excluded from the ratio
};

// Fraction of samples whose predicted class equals the label. Throws
// UndefinedMetricError when no sample could be scored.
AccuracyReport accuracy(ScoreOracle& oracle, const std::vector<LoadedSample>& samples);

struct AsrReport {
  double asr = 0.0;
  std::size_t denominator = 0;  // samples classified correctly when clean
  std::size_t flipped = 0;      // ... and misclassified once locked
  std::vector<SampleFailure> failures;
};

// Among samples the oracle gets right on the clean image, the fraction whose
// locked image it gets wrong. `locked[i]` pairs with `clean[i]`. Throws
// UndefinedMetricError when the denominator is empty.
AsrReport asr(ScoreOracle& oracle, const std::vector<LoadedSample>& clean,
              const std::vector<RgbaImage>& locked);

// Counting core of asr(): predictions per sample, -1 for a failed query.
AsrReport asr_from_predictions(const std::vector<int>& labels,
                               const std::vector<int>& clean_pred,
                               const std::vector<int>& locked_pred);

// A named model for transfer experiments. `members` lists the names of the
// models an ensemble is built from; those targets are n/a for it.
struct NamedOracle {
  std::string name;
  OracleFactory factory;
  std::vector<std::string> members;
};

struct TransferMatrix {
  std::vector<std::string> sources;
  std::vector<std::string> targets;
  std::size_t kept = 0;                 // samples every model classifies correctly
  std::vector<std::size_t> successes;   // per source, successful attacks
  std::vector<double> source_asr;       // per source, successes / kept
  // cells[s][t]: fraction of the source's successful locked images that
  // target t misclassifies. nullopt marks n/a.
  std::vector<std::vector<std::optional<double>>> cells;
  std::vector<std::optional<double>> source_average;  // row means over defined cells
  std::vector<std::optional<double>> target_average;  // column means
  std::vector<std::string> attack_log;                // one JSON object per line

  std::string to_csv() const;
  std::string to_json() const;
};

TransferMatrix transfer_matrix(const std::vector<NamedOracle>& sources,
                               const std::vector<NamedOracle>& targets,
                               const std::vector<LoadedSample>& samples,
                               const WatermarkLogo& logo, const AttackSetup& setup,
                               int workers = 1);

struct ComparisonCell {
  std::optional<double> asr;
  std::size_t attacked = 0;
  std::size_t successes = 0;
  std::size_t infeasible = 0;
  double mean_final_fitness = 0.0;
};

// Rows: basin hopping, random mutation. Columns: constraint modes.
struct MutationComparison {
  std::vector<MutationKind> rows;
  std::vector<ConstraintMode> columns;
  std::size_t correct_clean = 0;
  std::vector<std::vector<ComparisonCell>> cells;
  std::vector<std::string> attack_log;

  const ComparisonCell& cell(MutationKind row, ConstraintMode column) const;
  std::string to_csv() const;
  std::string to_json() const;
};

MutationComparison compare_mutation(const std::vector<LoadedSample>& samples,
                                    const WatermarkLogo& logo, const OracleFactory& oracle,
                                    const AttackSetup& setup,
                                    const std::vector<ConstraintMode>& modes,
                                    int workers = 1);

}  // namespace wmlock
