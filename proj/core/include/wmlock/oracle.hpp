#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wmlock/raster.hpp"

namespace wmlock {

// Per-class confidences returned by an oracle. `scores[t]` is the quantity the
// attack minimizes for ground-truth class t.
struct ScoreVector {
  std::vector<double> scores;

  int class_count() const noexcept { return static_cast<int>(scores.size()); }
  friend bool operator==(const ScoreVector&, const ScoreVector&) = default;
};

// argmax with ties resolved toward the smallest index.
int predicted_class(const ScoreVector& v);

// Throws ParameterError on non-finite entries, or when `normalized` is set and
// the entries are negative or do not sum to 1 within 1e-6.
void check_scores(const ScoreVector& v, bool normalized);

enum class OracleKind { kToy, kExternal, kEnsemble };

struct InputSize {
  int width;
  int height;
};

// Black-box classifier. Images whose size differs from `input_size()` are
// resampled bilinearly before they reach the model. query_count() counts
// images scored through this handle.
class ScoreOracle {
 public:
  virtual ~ScoreOracle() = default;

  ScoreVector score(const RgbaImage& image);
  std::vector<ScoreVector> score_batch(std::span<const RgbaImage> images);

  virtual OracleKind kind() const noexcept = 0;
  virtual int class_count() const noexcept = 0;
  virtual std::optional<InputSize> input_size() const noexcept {
    return std::nullopt;
  }
  virtual bool normalized() const noexcept { return false; }

  const std::string& spec() const noexcept { return spec_; }
  std::uint64_t query_count() const noexcept { return queries_.load(); }

 protected:
  explicit ScoreOracle(std::string spec) : spec_(std::move(spec)) {}

  // Images arrive already resampled to input_size().
  virtual ScoreVector score_one(const RgbaImage& image) = 0;
  virtual std::vector<ScoreVector> score_many(std::span<const RgbaImage> images);

 private:
  RgbaImage fit_input(const RgbaImage& image) const;

  std::string spec_;
  std::atomic<std::uint64_t> queries_{0};
};

using OraclePtr = std::shared_ptr<ScoreOracle>;

// Binary classifier on mean RGB brightness m in [0, 1]: scores [1 - m, m].
class BrightnessOracle final : public ScoreOracle {
 public:
  BrightnessOracle() : ScoreOracle("toy:brightness") {}
  OracleKind kind() const noexcept override { return OracleKind::kToy; }
  int class_count() const noexcept override { return 2; }
  bool normalized() const noexcept override { return true; }

 protected:
  ScoreVector score_one(const RgbaImage& image) override;
};

// Linear classifier: logit_k = bias_k + sum over pixels and RGB channels of
// weight_k(x, y, c) * value / 255. Weights are built from rectangular patches
// over a W x H canvas, optionally followed by a softmax.
struct TemplatePatch {
  int class_index = 0;
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;
  double weight[3] = {0.0, 0.0, 0.0};
  // Weight profile inside the patch: flat, or a pyramid peaking at the centre
  // and falling linearly to `edge_fraction` of the weight at the border.
  bool pyramid = false;
  double edge_fraction = 0.0;
};

struct TemplateModel {
  int classes = 2;
  int width = 0;
  int height = 0;
  std::vector<double> bias;
  std::vector<TemplatePatch> patches;
  bool softmax = false;

  // Dense weights, [class][y][x][channel]; filled by build_weights().
  std::vector<double> weights;

  void build_weights();
  static TemplateModel from_json(const std::string& text);
  std::string to_json() const;
};

class TemplateOracle final : public ScoreOracle {
 public:
  explicit TemplateOracle(TemplateModel model, std::string spec = "toy:template");
  OracleKind kind() const noexcept override { return OracleKind::kToy; }
  int class_count() const noexcept override { return model_.classes; }
  std::optional<InputSize> input_size() const noexcept override {
    return InputSize{model_.width, model_.height};
  }
  bool normalized() const noexcept override { return model_.softmax; }
  const TemplateModel& model() const noexcept { return model_; }

  // Raw logits, before the optional softmax.
  std::vector<double> logits(const RgbaImage& image) const;

 protected:
  ScoreVector score_one(const RgbaImage& image) override;

 private:
  TemplateModel model_;
};

// Splits the image into a grid x grid tiling, takes each tile's mean
// luminance, and histograms the tile means into `classes` equal bins over
// [0, 1]; scores are the bin fractions.
class TiledHistogramOracle final : public ScoreOracle {
 public:
  TiledHistogramOracle(int classes, int grid);
  OracleKind kind() const noexcept override { return OracleKind::kToy; }
  int class_count() const noexcept override { return classes_; }
  bool normalized() const noexcept override { return true; }

 protected:
  ScoreVector score_one(const RgbaImage& image) override;

 private:
  int classes_;
  int grid_;
};

// Returns the same scores for every image.
class ConstantOracle final : public ScoreOracle {
 public:
  explicit ConstantOracle(std::vector<double> scores);
  OracleKind kind() const noexcept override { return OracleKind::kToy; }
  int class_count() const noexcept override {
    return static_cast<int>(scores_.size());
  }

 protected:
  ScoreVector score_one(const RgbaImage&) override { return ScoreVector{scores_}; }

 private:
  std::vector<double> scores_;
};

struct EnsembleMember {
  OraclePtr oracle;
  double weight = 1.0;
  std::string name;
};

// Weighted sum of member score vectors; weights are used as given.
class EnsembleOracle final : public ScoreOracle {
 public:
  // Throws ConfigError on an empty member list, negative weights or
  // mismatched class counts.
  explicit EnsembleOracle(std::vector<EnsembleMember> members,
                          std::string spec = "ensemble");
  OracleKind kind() const noexcept override { return OracleKind::kEnsemble; }
  int class_count() const noexcept override { return classes_; }
  const std::vector<EnsembleMember>& members() const noexcept { return members_; }

 protected:
  ScoreVector score_one(const RgbaImage& image) override;
  std::vector<ScoreVector> score_many(std::span<const RgbaImage> images) override;

 private:
  std::vector<EnsembleMember> members_;
  int classes_;
};

// Elementwise sum of beta_i * member_i over precomputed member scores.
ScoreVector ensemble_combine(std::span<const ScoreVector> member_scores,
                             std::span<const double> weights);

// Constructs an oracle from a spec string:
//   toy:brightness
//   toy:template:<path>            TemplateModel JSON
//   toy:histogram:<classes>:<grid>
//   toy:constant:<s0>,<s1>,...
//   proc:<command line>            external process over stdio
//   tcp:<host>:<port>              external server
//   ensemble:<path>                {"members":[{"oracle":..,"weight":..}]}
// Relative paths resolve against `base_dir`.
OraclePtr make_oracle(const std::string& spec,
                      const std::filesystem::path& base_dir = {});

// Builds a fresh oracle per call, for workers that must own their connection.
using OracleFactory = std::function<OraclePtr()>;
OracleFactory oracle_factory(const std::string& spec,
                             const std::filesystem::path& base_dir = {});
// Factory that hands out one shared, thread-safe oracle.
OracleFactory shared_oracle_factory(OraclePtr oracle);

}  // namespace wmlock
