#include "wmlock/pipeline.hpp"

#include <fstream>

#include "wmlock/errors.hpp"

namespace wmlock {

PreparedAttack prepare_attack(const RgbaImage& image, const std::optional<BinaryMask>& mask,
                              const WatermarkLogo& logo, const AttackSetup& setup) {
  WatermarkLogo scaled = scale_logo(logo, image.width(), image.height(), setup.scale);
  ConstraintRegion region =
      build_constraint(mask, setup.mode, setup.mask, image.width(), image.height(),
                       scaled.width(), scaled.height());
  return PreparedAttack{std::move(scaled), std::move(region)};
}

std::uint64_t image_seed(std::uint64_t run_seed, std::string_view image_id) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char c : image_id) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return mix_seed(run_seed, h);
}

std::vector<Sample> load_labels_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open labels file " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("labels file is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "image_id,label") {
    throw ConfigError("labels file must start with header 'image_id,label'");
  }
  std::vector<Sample> out;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.rfind(',');
    if (comma == std::string::npos || comma == 0) {
      throw ConfigError("labels line " + std::to_string(lineno) + " is malformed");
    }
    Sample s;
    s.image_id = line.substr(0, comma);
    try {
      std::size_t used = 0;
      s.label = std::stoi(line.substr(comma + 1), &used);
      if (used != line.size() - comma - 1) throw std::invalid_argument("trailing");
    } catch (const std::logic_error&) {
      throw ConfigError("labels line " + std::to_string(lineno) + " has a bad label");
    }
    if (s.label < 0) {
      throw ConfigError("labels line " + std::to_string(lineno) + " has a negative label");
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::optional<BinaryMask> load_sample_mask(const std::optional<std::filesystem::path>& masks_dir,
                                           const std::string& image_id) {
  if (!masks_dir) return std::nullopt;
  const auto path = *masks_dir / image_id;
  if (!std::filesystem::exists(path)) throw IoError("missing mask " + path.string());
  return load_mask_png(path);
}

}  // namespace wmlock
