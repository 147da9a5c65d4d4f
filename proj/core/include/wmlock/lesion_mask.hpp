#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "wmlock/raster.hpp"

namespace wmlock {

// Row-major binary lesion mask.
class BinaryMask {
 public:
  BinaryMask(int width, int height);
  BinaryMask(int width, int height, std::vector<std::uint8_t> bits);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }

  bool get(int x, int y) const noexcept {
    return bits_[static_cast<std::size_t>(y) * width_ + x] != 0;
  }
  void set(int x, int y, bool v = true) noexcept {
    bits_[static_cast<std::size_t>(y) * width_ + x] = v ? 1 : 0;
  }
  std::size_t popcount() const noexcept;

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

 private:
  int width_;
  int height_;
  std::vector<std::uint8_t> bits_;
};

// Pixels with nonzero luminance (any nonzero RGB channel) are set.
BinaryMask mask_from_image(const RgbaImage& image);
BinaryMask load_mask_png(const std::filesystem::path& path);

// Axis-aligned box, half-open: columns [x, x + w), rows [y, y + h).
struct BBox {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;

  long area() const noexcept { return static_cast<long>(w) * h; }
  bool contains(int px, int py) const noexcept {
    return px >= x && px < x + w && py >= y && py < y + h;
  }
  friend auto operator<=>(const BBox&, const BBox&) = default;
};

struct MaskConfig {
  int kernel_size = 11;  // odd side of the square structuring element
  int dilate_iters = 10;
  long min_area = 50000;  // regions with area <= min_area are dropped
  double iou_merge_threshold = 0.5;

  // Throws ConfigError on an invalid field.
  void validate() const;
};

struct Region {
  int id = 0;  // 1-based, in raster order of each region's first pixel
  long area = 0;
  BBox box;
};

enum class ConstraintMode { kWap, kWsmIn, kWsmOut };

std::string_view to_string(ConstraintMode mode);
// Accepts "wap", "wsm-in", "wsm-out". Throws ConfigError otherwise.
ConstraintMode parse_constraint_mode(std::string_view text);

BinaryMask dilate(const BinaryMask& mask, const MaskConfig& cfg);

// 8-connected component labeling.
std::vector<Region> connected_regions(const BinaryMask& mask);

std::vector<Region> filter_small(std::vector<Region> regions, long min_area);

double iou(const BBox& a, const BBox& b);

// Smallest box covering both.
BBox union_box(const BBox& a, const BBox& b);

// Repeatedly replaces the first pair (in (x, y, w, h) order) whose IOU
// exceeds `gamma` with its union, until no pair does. Output is sorted.
std::vector<BBox> merge_boxes(std::vector<BBox> boxes, double gamma);

// Grows a lesion box up and left by the logo size, so that any logo whose
// top-left corner lies outside the result cannot overlap the lesion box.
BBox expand_for_logo(const BBox& box, int logo_w, int logo_h);

// Admissible top-left logo positions on a host image.
class ConstraintRegion {
 public:
  ConstraintRegion(ConstraintMode mode, std::vector<BBox> boxes, int host_w,
                   int host_h, int logo_w, int logo_h);

  ConstraintMode mode() const noexcept { return mode_; }
  const std::vector<BBox>& boxes() const noexcept { return boxes_; }
  const std::vector<BBox>& expanded() const noexcept { return expanded_; }
  int host_w() const noexcept { return host_w_; }
  int host_h() const noexcept { return host_h_; }
  int logo_w() const noexcept { return logo_w_; }
  int logo_h() const noexcept { return logo_h_; }

  // Largest admissible top-left coordinates (inclusive); negative when the
  // logo does not fit the host.
  int max_x() const noexcept { return host_w_ - logo_w_; }
  int max_y() const noexcept { return host_h_ - logo_h_; }

  bool contains(int x, int y) const noexcept;

  // Number of admissible positions, by enumeration.
  std::size_t feasible_count() const;
  bool feasible() const;

  // Uniform draw over the admissible set: rejection sampling over the valid
  // rectangle for up to 10,000 attempts, then exhaustive enumeration.
  // Throws InfeasibleConstraintError when the set is empty.
  std::pair<int, int> sample_position(std::mt19937_64& rng) const;

  // Admissible position closest to (x, y) in Chebyshev distance; ties are
  // broken by scanning each ring row-major. nullopt when none exists.
  std::optional<std::pair<int, int>> nearest_feasible(int x, int y) const;

  // {"boxes":[...],"expanded":[...],"mode":"wsm-out"}
  std::string to_json() const;

 private:
  bool in_valid_rect(int x, int y) const noexcept {
    return x >= 0 && y >= 0 && x <= max_x() && y <= max_y();
  }
  bool in_expanded(int x, int y) const noexcept;

  ConstraintMode mode_;
  std::vector<BBox> boxes_;
  std::vector<BBox> expanded_;
  int host_w_;
  int host_h_;
  int logo_w_;
  int logo_h_;
};

// dilate -> connected_regions -> filter_small -> merge_boxes -> expansion.
// Throws ConfigError for a WSM mode without a mask, and
// InfeasibleConstraintError when the resulting region admits no position.
ConstraintRegion build_constraint(const std::optional<BinaryMask>& mask,
                                  ConstraintMode mode, const MaskConfig& cfg,
                                  int host_w, int host_h, int logo_w,
                                  int logo_h);

// Merged (pre-expansion) lesion boxes for a mask.
std::vector<BBox> lesion_boxes(const BinaryMask& mask, const MaskConfig& cfg);

}  // namespace wmlock
