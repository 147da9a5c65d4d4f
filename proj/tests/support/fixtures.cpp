#include "fixtures.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <limits>
#include <queue>

#include <unistd.h>

#include "wmlock/png_io.hpp"

namespace wmtest {

namespace fs = std::filesystem;

TempDir::TempDir(const std::string& tag) {
  static std::atomic<int> counter{0};
  path_ = fs::temp_directory_path() /
          ("wmlock-" + tag + "-" + std::to_string(::getpid()) + "-" +
           std::to_string(counter++));
  fs::remove_all(path_);
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

WatermarkLogo solid_logo(int w, int h, std::uint8_t r, std::uint8_t g, std::uint8_t b,
                         std::uint8_t a) {
  RgbaImage img(w, h);
  img.fill(r, g, b, a);
  return WatermarkLogo{img, "solid", "0"};
}

RgbaImage random_image(int w, int h, std::mt19937_64& rng) {
  RgbaImage img(w, h);
  std::uniform_int_distribution<int> d(0, 255);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = static_cast<std::uint8_t>(d(rng));
      img.at(x, y, 3) = 255;
    }
  return img;
}

TemplateModel weak_spot_model(const SpotLayout& layout, double weight) {
  TemplateModel m;
  m.classes = 2;
  m.width = layout.size;
  m.height = layout.size;
  m.bias = {0.0, 0.0};
  m.softmax = true;
  for (int cls = 0; cls < 2; ++cls) {
    TemplatePatch p;
    p.class_index = cls;
    std::tie(p.x, p.y) = layout.spot(cls);
    p.w = layout.logo;
    p.h = layout.logo;
    p.weight[0] = p.weight[1] = p.weight[2] = -weight;
    p.pyramid = true;
    p.edge_fraction = 0.1;
    m.patches.push_back(p);
  }
  m.build_weights();
  return m;
}

namespace {

void fill_rect(RgbaImage& img, int x0, int y0, int w, int h, std::uint8_t v) {
  for (int y = y0; y < y0 + h; ++y)
    for (int x = x0; x < x0 + w; ++x)
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = v;
}

void mask_ellipse(BinaryMask& m, double cx, double cy, double rx, double ry) {
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x) {
      const double dx = (x - cx) / rx;
      const double dy = (y - cy) / ry;
      if (dx * dx + dy * dy <= 1.0) m.set(x, y);
    }
}

}  // namespace

SpotImage make_spot_image(const SpotLayout& layout, int label, double hardness,
                          std::mt19937_64& rng) {
  SpotImage out{random_image(layout.size, layout.size, rng), label, hardness,
                BinaryMask(layout.size, layout.size)};
  const int dark = 40;
  const auto light = static_cast<std::uint8_t>(std::lround(dark + hardness * (255 - dark)));
  const auto [lx, ly] = layout.spot(label);
  const auto [ox, oy] = layout.spot(1 - label);
  fill_rect(out.image, lx, ly, layout.logo, layout.logo, dark);
  fill_rect(out.image, ox, oy, layout.logo, layout.logo, light);

  // lesion over the label's spot, and a decoy near the other corner
  const double half = layout.logo / 2.0;
  mask_ellipse(out.lesion, lx + half, ly + half, half + 1, half + 1);
  std::uniform_real_distribution<double> jitter(-2.0, 2.0);
  mask_ellipse(out.lesion, layout.size - ox - half + jitter(rng), oy + half + jitter(rng), 4, 3);
  return out;
}

std::vector<SpotImage> make_spot_set(const SpotLayout& layout, int count, std::uint64_t seed,
                                     double hard_lo, double hard_hi) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> hard(hard_lo, hard_hi);
  std::vector<SpotImage> set;
  for (int i = 0; i < count; ++i) {
    const int label = static_cast<int>(rng() % 2);
    set.push_back(make_spot_image(layout, label, hard(rng), rng));
  }
  return set;
}

std::string spot_image_id(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "img_%04zu.png", index);
  return buf;
}

void write_spot_dataset(const fs::path& dir, const std::vector<SpotImage>& set) {
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "masks");
  std::ofstream labels(dir / "labels.csv");
  labels << "image_id,label\n";
  for (std::size_t i = 0; i < set.size(); ++i) {
    const std::string id = spot_image_id(i);
    save_png(set[i].image, dir / "images" / id);
    RgbaImage m(set[i].lesion.width(), set[i].lesion.height());
    for (int y = 0; y < m.height(); ++y)
      for (int x = 0; x < m.width(); ++x) {
        const std::uint8_t v = set[i].lesion.get(x, y) ? 255 : 0;
        for (int c = 0; c < 3; ++c) m.at(x, y, c) = v;
        m.at(x, y, 3) = 255;
      }
    save_png(m, dir / "masks" / id);
    labels << id << "," << set[i].label << "\n";
  }
}

MaskConfig small_mask_config() {
  MaskConfig cfg;
  cfg.kernel_size = 3;
  cfg.dilate_iters = 1;
  cfg.min_area = 40;
  cfg.iou_merge_threshold = 0.5;
  return cfg;
}

// ---------------------------------------------------------------------------

BinaryMask bf_dilate(const BinaryMask& mask, int kernel, int iters) {
  const int r = kernel / 2;
  BinaryMask cur = mask;
  for (int it = 0; it < iters; ++it) {
    BinaryMask next(cur.width(), cur.height());
    for (int y = 0; y < cur.height(); ++y)
      for (int x = 0; x < cur.width(); ++x) {
        bool hit = false;
        for (int dy = -r; dy <= r && !hit; ++dy)
          for (int dx = -r; dx <= r && !hit; ++dx) {
            const int sx = x + dx, sy = y + dy;
            if (sx >= 0 && sy >= 0 && sx < cur.width() && sy < cur.height() && cur.get(sx, sy))
              hit = true;
          }
        next.set(x, y, hit);
      }
    cur = next;
  }
  return cur;
}

std::vector<Region> bf_regions(const BinaryMask& mask) {
  const int w = mask.width(), h = mask.height();
  std::vector<int> label(static_cast<std::size_t>(w) * h, 0);
  std::vector<Region> out;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!mask.get(x, y) || label[y * w + x] != 0) continue;
      const int id = static_cast<int>(out.size()) + 1;
      int x0 = x, y0 = y, x1 = x, y1 = y;
      long area = 0;
      std::queue<std::pair<int, int>> q;
      q.emplace(x, y);
      label[y * w + x] = id;
      while (!q.empty()) {
        const auto [cx, cy] = q.front();
        q.pop();
        ++area;
        x0 = std::min(x0, cx);
        y0 = std::min(y0, cy);
        x1 = std::max(x1, cx);
        y1 = std::max(y1, cy);
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const int nx = cx + dx, ny = cy + dy;
            if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
            if (!mask.get(nx, ny) || label[ny * w + nx] != 0) continue;
            label[ny * w + nx] = id;
            q.emplace(nx, ny);
          }
      }
      out.push_back(Region{id, area, BBox{x0, y0, x1 - x0 + 1, y1 - y0 + 1}});
    }
  return out;
}

std::vector<Region> bf_filter(const std::vector<Region>& regions, long min_area) {
  std::vector<Region> out;
  for (const auto& r : regions)
    if (r.area > min_area) out.push_back(r);
  return out;
}

double bf_iou(const BBox& a, const BBox& b) {
  const int x0 = std::min(a.x, b.x), y0 = std::min(a.y, b.y);
  const int x1 = std::max(a.x + a.w, b.x + b.w), y1 = std::max(a.y + a.h, b.y + b.h);
  long inter = 0, uni = 0;
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) {
      const bool ia = a.contains(x, y), ib = b.contains(x, y);
      inter += ia && ib;
      uni += ia || ib;
    }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

std::vector<BBox> bf_merge(std::vector<BBox> boxes, double gamma) {
  for (;;) {
    std::sort(boxes.begin(), boxes.end());
    bool merged = false;
    for (std::size_t i = 0; i < boxes.size() && !merged; ++i)
      for (std::size_t j = i + 1; j < boxes.size() && !merged; ++j) {
        if (bf_iou(boxes[i], boxes[j]) > gamma) {
          const BBox& a = boxes[i];
          const BBox& b = boxes[j];
          const int x0 = std::min(a.x, b.x), y0 = std::min(a.y, b.y);
          const BBox u{x0, y0, std::max(a.x + a.w, b.x + b.w) - x0,
                       std::max(a.y + a.h, b.y + b.h) - y0};
          boxes.erase(boxes.begin() + static_cast<std::ptrdiff_t>(j));
          boxes.erase(boxes.begin() + static_cast<std::ptrdiff_t>(i));
          boxes.push_back(u);
          merged = true;
        }
      }
    if (!merged) break;
  }
  std::sort(boxes.begin(), boxes.end());
  return boxes;
}

bool bf_overlaps(const BBox& a, const BBox& b) {
  for (int y = a.y; y < a.y + a.h; ++y)
    for (int x = a.x; x < a.x + a.w; ++x)
      if (b.contains(x, y)) return true;
  return false;
}

double bf_min_fitness(const RgbaImage& host, int label, const WatermarkLogo& logo,
                      ScoreOracle& oracle, const ConstraintRegion& region, int alpha_lo,
                      int alpha_hi) {
  double best = std::numeric_limits<double>::infinity();
  for (int a = alpha_lo; a <= alpha_hi; ++a)
    for (int y = 0; y <= region.max_y(); ++y)
      for (int x = 0; x <= region.max_x(); ++x) {
        if (!region.contains(x, y)) continue;
        const RgbaImage img = blend(host, logo, Placement{a, x, y, logo.width(), logo.height()});
        best = std::min(best, oracle.score(img).scores[static_cast<std::size_t>(label)]);
      }
  return best;
}

BinaryMask random_blob_mask(int w, int h, std::mt19937_64& rng) {
  BinaryMask m(w, h);
  std::uniform_int_distribution<int> blobs(0, 6);
  std::uniform_real_distribution<double> cx(0, w), cy(0, h), rad(1.0, 12.0);
  const int n = blobs(rng);
  for (int i = 0; i < n; ++i) {
    if (rng() % 2) {
      mask_ellipse(m, cx(rng), cy(rng), rad(rng), rad(rng));
    } else {
      const int x0 = static_cast<int>(cx(rng)), y0 = static_cast<int>(cy(rng));
      const int rw = static_cast<int>(rad(rng) * 2), rh = static_cast<int>(rad(rng) * 2);
      for (int y = y0; y < std::min(h, y0 + rh); ++y)
        for (int x = x0; x < std::min(w, x0 + rw); ++x) m.set(x, y);
    }
  }
  // hollow frames with a blob inside give separate regions with nested boxes
  if (rng() % 2) {
    const int fw = 14 + static_cast<int>(rng() % 20), fh = 14 + static_cast<int>(rng() % 20);
    const int fx = static_cast<int>(rng() % std::max(1, w - fw));
    const int fy = static_cast<int>(rng() % std::max(1, h - fh));
    for (int x = fx; x < std::min(w, fx + fw); ++x) {
      m.set(x, fy);
      if (fy + fh - 1 < h) m.set(x, fy + fh - 1);
    }
    for (int y = fy; y < std::min(h, fy + fh); ++y) {
      m.set(fx, y);
      if (fx + fw - 1 < w) m.set(fx + fw - 1, y);
    }
    const int bw = 2 + static_cast<int>(rng() % static_cast<unsigned>(fw - 12));
    const int bh = 2 + static_cast<int>(rng() % static_cast<unsigned>(fh - 12));
    for (int y = fy + 6; y < std::min(h, fy + 6 + bh); ++y)
      for (int x = fx + 6; x < std::min(w, fx + 6 + bw); ++x) m.set(x, y);
  }
  // interlocking brackets: two regions whose boxes overlap heavily
  if (rng() % 2) {
    const int g = 10;
    const int fw = 24 + static_cast<int>(rng() % 30), fh = 24 + static_cast<int>(rng() % 30);
    const int fx = static_cast<int>(rng() % std::max(1, w - fw));
    const int fy = static_cast<int>(rng() % std::max(1, h - fh));
    const int x1 = std::min(w, fx + fw), y1 = std::min(h, fy + fh);
    for (int x = fx; x < x1; ++x) m.set(x, fy);
    for (int y = fy; y < y1; ++y) m.set(fx, y);
    for (int x = fx + g; x < x1; ++x) m.set(x, y1 - 1);
    for (int y = fy + g; y < y1; ++y) m.set(x1 - 1, y);
  }
  std::uniform_int_distribution<int> salt(0, 40);
  const int specks = salt(rng);
  for (int i = 0; i < specks; ++i) m.set(static_cast<int>(rng() % w), static_cast<int>(rng() % h));
  return m;
}

}  // namespace wmtest
