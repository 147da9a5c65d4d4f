#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "wmlock/evolve.hpp"
#include "wmlock/lesion_mask.hpp"
#include "wmlock/raster.hpp"

namespace wmlock {

// Settings shared by everything that attacks images from a dataset.
struct AttackSetup {
  ConstraintMode mode = ConstraintMode::kWap;
  MaskConfig mask;
  EsConfig es;
  double scale = 4.0;  // logo scaling factor sl
};

struct PreparedAttack {
  WatermarkLogo scaled_logo;
  ConstraintRegion region;
};

// Scales the logo to the host and builds its placement constraint.
PreparedAttack prepare_attack(const RgbaImage& image, const std::optional<BinaryMask>& mask,
                              const WatermarkLogo& logo, const AttackSetup& setup);

// Per-image seed: independent of dataset order and worker scheduling.
std::uint64_t image_seed(std::uint64_t run_seed, std::string_view image_id);

struct Sample {
  std::string image_id;
  int label = 0;
};

// Reads a CSV with header "image_id,label". Throws ConfigError or IoError.
std::vector<Sample> load_labels_csv(const std::filesystem::path& path);

// Mask for an image from `masks_dir` (same file name), if a directory is given.
std::optional<BinaryMask> load_sample_mask(const std::optional<std::filesystem::path>& masks_dir,
                                           const std::string& image_id);

}  // namespace wmlock
