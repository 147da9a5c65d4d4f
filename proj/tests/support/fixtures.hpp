#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "wmlock/evolve.hpp"
#include "wmlock/lesion_mask.hpp"
#include "wmlock/oracle.hpp"
#include "wmlock/raster.hpp"

namespace wmtest {

using namespace wmlock;

// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag);
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const noexcept { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// Solid opaque logo of the given colour.
WatermarkLogo solid_logo(int w, int h, std::uint8_t r = 255, std::uint8_t g = 255,
                         std::uint8_t b = 255, std::uint8_t a = 255);

RgbaImage random_image(int w, int h, std::mt19937_64& rng);

// Two-class template model with a "weak spot" per class: a logo-sized square
// whose pyramid-weighted brightness lowers that class's logit. Spots sit at
// spot_position(0) and spot_position(1).
struct SpotLayout {
  int size = 64;
  int logo = 16;
  std::pair<int, int> spot(int cls) const {
    return cls == 0 ? std::pair{size / 8, size / 8}
                    : std::pair{size - size / 8 - logo, size - size / 8 - logo};
  }
};
TemplateModel weak_spot_model(const SpotLayout& layout, double weight = 0.08);

// Procedural image whose correct class is `label`: each weak spot is filled
// with a flat grey, the label's spot darker so its logit wins. `hardness` in
// (0, 1) is the fraction of the full-opacity exact-overlap logit drop needed
// to flip the prediction. The rest of the image is noise the model ignores.
struct SpotImage {
  RgbaImage image;
  int label = 0;
  double hardness = 0.0;
  BinaryMask lesion;  // blob over the label's weak spot plus a decoy blob
};
SpotImage make_spot_image(const SpotLayout& layout, int label, double hardness,
                          std::mt19937_64& rng);
std::vector<SpotImage> make_spot_set(const SpotLayout& layout, int count, std::uint64_t seed,
                                     double hard_lo = 0.80, double hard_hi = 0.97);

// Writes <dir>/images/*.png, <dir>/labels.csv and <dir>/masks/*.png.
void write_spot_dataset(const std::filesystem::path& dir, const std::vector<SpotImage>& set);
std::string spot_image_id(std::size_t index);

// Mask configuration scaled for 64 x 64 fixtures.
MaskConfig small_mask_config();

// ---- independent brute-force references ---------------------------------

BinaryMask bf_dilate(const BinaryMask& mask, int kernel, int iters);
// Flood-fill labeling; regions ordered by their first pixel in raster order.
std::vector<Region> bf_regions(const BinaryMask& mask);
std::vector<Region> bf_filter(const std::vector<Region>& regions, long min_area);
// IOU by counting cells.
double bf_iou(const BBox& a, const BBox& b);
std::vector<BBox> bf_merge(std::vector<BBox> boxes, double gamma);
// Rectangle-overlap test by cell enumeration.
bool bf_overlaps(const BBox& a, const BBox& b);

// Minimum of scores[label] over every alpha in [alpha_lo, alpha_hi] and every
// position in the region.
double bf_min_fitness(const RgbaImage& host, int label, const WatermarkLogo& logo,
                      ScoreOracle& oracle, const ConstraintRegion& region, int alpha_lo,
                      int alpha_hi);

BinaryMask random_blob_mask(int w, int h, std::mt19937_64& rng);

}  // namespace wmtest
