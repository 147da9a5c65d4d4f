#include "wmlock/lesion_mask.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numeric>

#include "json.hpp"
#include "wmlock/errors.hpp"
#include "wmlock/png_io.hpp"

namespace wmlock {

namespace {

constexpr int kRejectionAttempts = 10000;

// One-dimensional OR over a window of +-r along rows (horizontal) or columns.
std::vector<std::uint8_t> dilate_pass(const std::vector<std::uint8_t>& in,
                                      int w, int h, int r, bool horizontal) {
  std::vector<std::uint8_t> out(in.size(), 0);
  const int len = horizontal ? w : h;
  const int lines = horizontal ? h : w;
  std::vector<int> prefix(static_cast<std::size_t>(len) + 1);
  for (int line = 0; line < lines; ++line) {
    const auto idx = [&](int i) {
      return horizontal ? static_cast<std::size_t>(line) * w + i
                        : static_cast<std::size_t>(i) * w + line;
    };
    prefix[0] = 0;
    for (int i = 0; i < len; ++i) prefix[i + 1] = prefix[i] + (in[idx(i)] != 0);
    for (int i = 0; i < len; ++i) {
      const int lo = std::max(0, i - r);
      const int hi = std::min(len, i + r + 1);
      out[idx(i)] = prefix[hi] - prefix[lo] > 0 ? 1 : 0;
    }
  }
  return out;
}

int find_root(std::vector<int>& parent, int i) {
  while (parent[i] != i) {
    parent[i] = parent[parent[i]];
    i = parent[i];
  }
  return i;
}

}  // namespace

BinaryMask::BinaryMask(int width, int height)
    : width_(width), height_(height) {
  if (width < 1 || height < 1) {
    throw ParameterError("mask dimensions must be positive");
  }
  bits_.assign(static_cast<std::size_t>(width) * height, 0);
}

BinaryMask::BinaryMask(int width, int height, std::vector<std::uint8_t> bits)
    : BinaryMask(width, height) {
  if (bits.size() != bits_.size()) {
    throw ParameterError("mask bit count does not match dimensions");
  }
  for (auto& b : bits) b = b ? 1 : 0;
  bits_ = std::move(bits);
}

std::size_t BinaryMask::popcount() const noexcept {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), 1));
}

BinaryMask mask_from_image(const RgbaImage& image) {
  BinaryMask mask(image.width(), image.height());
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) {
      mask.set(x, y, image.at(x, y, 0) | image.at(x, y, 1) | image.at(x, y, 2));
    }
  }
  return mask;
}

BinaryMask load_mask_png(const std::filesystem::path& path) {
  return mask_from_image(load_png(path));
}

void MaskConfig::validate() const {
  if (kernel_size < 1 || kernel_size % 2 == 0) {
    throw ConfigError("kernel_size must be odd and >= 1, got " +
                      std::to_string(kernel_size));
  }
  if (dilate_iters < 0) throw ConfigError("dilate_iters must be >= 0");
  if (min_area < 0) throw ConfigError("min_area must be >= 0");
  if (!(iou_merge_threshold > 0.0 && iou_merge_threshold <= 1.0)) {
    throw ConfigError("iou_merge_threshold must lie in (0, 1]");
  }
}

std::string_view to_string(ConstraintMode mode) {
  switch (mode) {
    case ConstraintMode::kWap:
      return "wap";
    case ConstraintMode::kWsmIn:
      return "wsm-in";
    case ConstraintMode::kWsmOut:
      return "wsm-out";
  }
  return "?";
}

ConstraintMode parse_constraint_mode(std::string_view text) {
  if (text == "wap") return ConstraintMode::kWap;
  if (text == "wsm-in") return ConstraintMode::kWsmIn;
  if (text == "wsm-out") return ConstraintMode::kWsmOut;
  throw ConfigError("unknown constraint mode '" + std::string(text) +
                    "' (expected wap, wsm-in or wsm-out)");
}

BinaryMask dilate(const BinaryMask& mask, const MaskConfig& cfg) {
  cfg.validate();
  const int w = mask.width();
  const int h = mask.height();
  const int r = cfg.kernel_size / 2;
  std::vector<std::uint8_t> bits(static_cast<std::size_t>(w) * h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) bits[static_cast<std::size_t>(y) * w + x] = mask.get(x, y);
  }
  if (r > 0) {
    for (int it = 0; it < cfg.dilate_iters; ++it) {
      bits = dilate_pass(bits, w, h, r, true);
      bits = dilate_pass(bits, w, h, r, false);
    }
  }
  return BinaryMask(w, h, std::move(bits));
}

std::vector<Region> connected_regions(const BinaryMask& mask) {
  const int w = mask.width();
  const int h = mask.height();
  std::vector<int> label(static_cast<std::size_t>(w) * h, -1);
  std::vector<int> parent;

  // First pass: provisional labels from the four already-visited neighbours.
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!mask.get(x, y)) continue;
      int current = -1;
      constexpr int kNeighbours[4][2] = {{-1, -1}, {0, -1}, {1, -1}, {-1, 0}};
      for (const auto& d : kNeighbours) {
        const int nx = x + d[0];
        const int ny = y + d[1];
        if (nx < 0 || ny < 0 || nx >= w) continue;
        const int l = label[static_cast<std::size_t>(ny) * w + nx];
        if (l < 0) continue;
        if (current < 0) {
          current = find_root(parent, l);
        } else {
          const int a = find_root(parent, current);
          const int b = find_root(parent, l);
          if (a != b) parent[std::max(a, b)] = std::min(a, b);
          current = std::min(a, b);
        }
      }
      if (current < 0) {
        current = static_cast<int>(parent.size());
        parent.push_back(current);
      }
      label[static_cast<std::size_t>(y) * w + x] = current;
    }
  }

  // Second pass: resolve roots, number regions by first raster appearance.
  std::vector<int> region_of_root(parent.size(), -1);
  std::vector<Region> regions;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int l = label[static_cast<std::size_t>(y) * w + x];
      if (l < 0) continue;
      const int root = find_root(parent, l);
      int& idx = region_of_root[root];
      if (idx < 0) {
        idx = static_cast<int>(regions.size());
        regions.push_back(Region{idx + 1, 0, BBox{x, y, 1, 1}});
      }
      Region& r = regions[idx];
      ++r.area;
      const int x0 = std::min(r.box.x, x);
      const int y0 = std::min(r.box.y, y);
      const int x1 = std::max(r.box.x + r.box.w, x + 1);
      const int y1 = std::max(r.box.y + r.box.h, y + 1);
      r.box = BBox{x0, y0, x1 - x0, y1 - y0};
    }
  }
  return regions;
}

std::vector<Region> filter_small(std::vector<Region> regions, long min_area) {
  std::erase_if(regions, [min_area](const Region& r) { return r.area <= min_area; });
  return regions;
}

double iou(const BBox& a, const BBox& b) {
  const long ix = std::max(0, std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x));
  const long iy = std::max(0, std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y));
  const long inter = ix * iy;
  const long uni = a.area() + b.area() - inter;
  if (uni <= 0) return 0.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

BBox union_box(const BBox& a, const BBox& b) {
  const int x0 = std::min(a.x, b.x);
  const int y0 = std::min(a.y, b.y);
  const int x1 = std::max(a.x + a.w, b.x + b.w);
  const int y1 = std::max(a.y + a.h, b.y + b.h);
  return BBox{x0, y0, x1 - x0, y1 - y0};
}

std::vector<BBox> merge_boxes(std::vector<BBox> boxes, double gamma) {
  std::sort(boxes.begin(), boxes.end());
  bool merged = true;
  while (merged) {
    merged = false;
    for (std::size_t i = 0; i < boxes.size() && !merged; ++i) {
      for (std::size_t j = i + 1; j < boxes.size(); ++j) {
        if (iou(boxes[i], boxes[j]) > gamma) {
          const BBox u = union_box(boxes[i], boxes[j]);
          boxes.erase(boxes.begin() + static_cast<std::ptrdiff_t>(j));
          boxes[i] = u;
          std::sort(boxes.begin(), boxes.end());
          merged = true;
          break;
        }
      }
    }
  }
  return boxes;
}

BBox expand_for_logo(const BBox& b, int logo_w, int logo_h) {
  return BBox{std::max(0, b.x - logo_w), std::max(0, b.y - logo_h),
              b.w + std::min(logo_w, b.x), b.h + std::min(logo_h, b.y)};
}

ConstraintRegion::ConstraintRegion(ConstraintMode mode, std::vector<BBox> boxes,
                                   int host_w, int host_h, int logo_w,
                                   int logo_h)
    : mode_(mode),
      boxes_(std::move(boxes)),
      host_w_(host_w),
      host_h_(host_h),
      logo_w_(logo_w),
      logo_h_(logo_h) {
  if (host_w < 1 || host_h < 1 || logo_w < 1 || logo_h < 1) {
    throw ParameterError("constraint region needs positive host and logo sizes");
  }
  expanded_.reserve(boxes_.size());
  for (const BBox& b : boxes_) expanded_.push_back(expand_for_logo(b, logo_w, logo_h));
}

bool ConstraintRegion::in_expanded(int x, int y) const noexcept {
  return std::any_of(expanded_.begin(), expanded_.end(),
                     [x, y](const BBox& b) { return b.contains(x, y); });
}

bool ConstraintRegion::contains(int x, int y) const noexcept {
  if (!in_valid_rect(x, y)) return false;
  switch (mode_) {
    case ConstraintMode::kWap:
      return true;
    case ConstraintMode::kWsmIn:
      return in_expanded(x, y);
    case ConstraintMode::kWsmOut:
      return !in_expanded(x, y);
  }
  return false;
}

std::size_t ConstraintRegion::feasible_count() const {
  if (max_x() < 0 || max_y() < 0) return 0;
  if (mode_ == ConstraintMode::kWap) {
    return static_cast<std::size_t>(max_x() + 1) *
           static_cast<std::size_t>(max_y() + 1);
  }
  std::size_t n = 0;
  for (int y = 0; y <= max_y(); ++y) {
    for (int x = 0; x <= max_x(); ++x) n += contains(x, y);
  }
  return n;
}

bool ConstraintRegion::feasible() const {
  if (max_x() < 0 || max_y() < 0) return false;
  if (mode_ == ConstraintMode::kWap) return true;
  for (int y = 0; y <= max_y(); ++y) {
    for (int x = 0; x <= max_x(); ++x) {
      if (contains(x, y)) return true;
    }
  }
  return false;
}

std::pair<int, int> ConstraintRegion::sample_position(std::mt19937_64& rng) const {
  if (max_x() < 0 || max_y() < 0) {
    throw InfeasibleConstraintError("logo does not fit inside the image");
  }
  std::uniform_int_distribution<int> dx(0, max_x());
  std::uniform_int_distribution<int> dy(0, max_y());
  for (int attempt = 0; attempt < kRejectionAttempts; ++attempt) {
    const int x = dx(rng);
    const int y = dy(rng);
    if (contains(x, y)) return {x, y};
  }
  std::vector<std::pair<int, int>> cells;
  for (int y = 0; y <= max_y(); ++y) {
    for (int x = 0; x <= max_x(); ++x) {
      if (contains(x, y)) cells.emplace_back(x, y);
    }
  }
  if (cells.empty()) {
    throw InfeasibleConstraintError("constraint region " +
                                    std::string(to_string(mode_)) +
                                    " admits no logo position");
  }
  std::uniform_int_distribution<std::size_t> pick(0, cells.size() - 1);
  return cells[pick(rng)];
}

std::optional<std::pair<int, int>> ConstraintRegion::nearest_feasible(int x,
                                                                      int y) const {
  if (max_x() < 0 || max_y() < 0) return std::nullopt;
  if (contains(x, y)) return std::pair{x, y};
  const int reach = std::max({std::abs(x), std::abs(x - max_x()), std::abs(y),
                              std::abs(y - max_y())});
  for (int r = 1; r <= reach; ++r) {
    for (int dy = -r; dy <= r; ++dy) {
      const bool edge_row = dy == -r || dy == r;
      for (int dx = -r; dx <= r; dx += edge_row ? 1 : 2 * r) {
        if (contains(x + dx, y + dy)) return std::pair{x + dx, y + dy};
      }
    }
  }
  return std::nullopt;
}

std::string ConstraintRegion::to_json() const {
  const auto boxes_json = [](const std::vector<BBox>& bs) {
    nlohmann::json arr = nlohmann::json::array();
    for (const BBox& b : bs) arr.push_back({{"x", b.x}, {"y", b.y}, {"w", b.w}, {"h", b.h}});
    return arr;
  };
  nlohmann::json j;
  j["boxes"] = boxes_json(boxes_);
  j["expanded"] = boxes_json(expanded_);
  j["mode"] = std::string(to_string(mode_));
  return j.dump();
}

std::vector<BBox> lesion_boxes(const BinaryMask& mask, const MaskConfig& cfg) {
  cfg.validate();
  const auto regions = filter_small(connected_regions(dilate(mask, cfg)), cfg.min_area);
  std::vector<BBox> boxes;
  boxes.reserve(regions.size());
  for (const Region& r : regions) boxes.push_back(r.box);
  return merge_boxes(std::move(boxes), cfg.iou_merge_threshold);
}

ConstraintRegion build_constraint(const std::optional<BinaryMask>& mask,
                                  ConstraintMode mode, const MaskConfig& cfg,
                                  int host_w, int host_h, int logo_w,
                                  int logo_h) {
  cfg.validate();
  std::vector<BBox> boxes;
  if (mode != ConstraintMode::kWap) {
    if (!mask) {
      throw ConfigError("constraint mode " + std::string(to_string(mode)) +
                        " requires a lesion mask");
    }
    if (mask->width() != host_w || mask->height() != host_h) {
      throw GeometryError("mask size does not match the host image");
    }
    boxes = lesion_boxes(*mask, cfg);
    if (mode == ConstraintMode::kWsmIn && boxes.empty()) {
      throw InfeasibleConstraintError(
          "no lesion box survives filtering; wsm-in has nowhere to place the logo");
    }
  }
  ConstraintRegion region(mode, std::move(boxes), host_w, host_h, logo_w, logo_h);
  if (!region.feasible()) {
    throw InfeasibleConstraintError("constraint region " +
                                    std::string(to_string(mode)) +
                                    " admits no logo position");
  }
  return region;
}

}  // namespace wmlock
