#include "wmlock/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "json.hpp"
#include "wmlock/digest.hpp"
#include "wmlock/errors.hpp"
#include "wmlock/external_oracle.hpp"

namespace wmlock {

int predicted_class(const ScoreVector& v) {
  if (v.scores.empty()) throw ParameterError("empty score vector");
  int best = 0;
  for (int k = 1; k < v.class_count(); ++k) {
    if (v.scores[k] > v.scores[best]) best = k;
  }
  return best;
}

void check_scores(const ScoreVector& v, bool normalized) {
  double sum = 0.0;
  for (double s : v.scores) {
    if (!std::isfinite(s)) throw ParameterError("non-finite score");
    if (normalized && s < 0.0) throw ParameterError("negative normalized score");
    sum += s;
  }
  if (normalized && std::abs(sum - 1.0) > 1e-6) {
    throw ParameterError("normalized scores sum to " + std::to_string(sum));
  }
}

RgbaImage ScoreOracle::fit_input(const RgbaImage& image) const {
  const auto size = input_size();
  if (!size || (size->width == image.width() && size->height == image.height())) {
    return image;
  }
  return resize_bilinear(image, size->width, size->height);
}

ScoreVector ScoreOracle::score(const RgbaImage& image) {
  queries_.fetch_add(1);
  const auto size = input_size();
  ScoreVector v = (!size || (size->width == image.width() &&
                             size->height == image.height()))
                      ? score_one(image)
                      : score_one(fit_input(image));
  if (v.class_count() != class_count()) {
    throw OracleIoError("oracle returned " + std::to_string(v.class_count()) +
                        " scores, expected " + std::to_string(class_count()));
  }
  return v;
}

std::vector<ScoreVector> ScoreOracle::score_batch(std::span<const RgbaImage> images) {
  queries_.fetch_add(images.size());
  std::vector<RgbaImage> fitted;
  fitted.reserve(images.size());
  for (const auto& img : images) fitted.push_back(fit_input(img));
  auto out = score_many(fitted);
  if (out.size() != images.size()) {
    throw OracleIoError("batch returned " + std::to_string(out.size()) +
                        " results for " + std::to_string(images.size()) + " images");
  }
  for (const auto& v : out) {
    if (v.class_count() != class_count()) {
      throw OracleIoError("oracle returned a score vector of the wrong length");
    }
  }
  return out;
}

std::vector<ScoreVector> ScoreOracle::score_many(std::span<const RgbaImage> images) {
  std::vector<ScoreVector> out;
  out.reserve(images.size());
  for (const auto& img : images) out.push_back(score_one(img));
  return out;
}

ScoreVector BrightnessOracle::score_one(const RgbaImage& image) {
  const auto px = image.pixels();
  double sum = 0.0;
  for (std::size_t i = 0; i < px.size(); i += 4) sum += px[i] + px[i + 1] + px[i + 2];
  const double m = sum / (255.0 * 3.0 * static_cast<double>(px.size() / 4));
  return ScoreVector{{1.0 - m, m}};
}

// ---------------------------------------------------------------------------

void TemplateModel::build_weights() {
  if (classes < 2) throw ConfigError("template model needs at least 2 classes");
  if (width < 1 || height < 1) throw ConfigError("template model needs a positive canvas");
  if (bias.empty()) bias.assign(static_cast<std::size_t>(classes), 0.0);
  if (bias.size() != static_cast<std::size_t>(classes)) {
    throw ConfigError("template bias length must equal class count");
  }
  const std::size_t plane = static_cast<std::size_t>(width) * height * 3;
  if (weights.empty()) weights.assign(plane * classes, 0.0);
  if (weights.size() != plane * classes) {
    throw ConfigError("dense template weights have the wrong length");
  }
  for (const TemplatePatch& p : patches) {
    if (p.class_index < 0 || p.class_index >= classes) {
      throw ConfigError("template patch names an unknown class");
    }
    const double cx = p.x + (p.w - 1) / 2.0;
    const double cy = p.y + (p.h - 1) / 2.0;
    const double half_w = std::max(p.w / 2.0, 0.5);
    const double half_h = std::max(p.h / 2.0, 0.5);
    for (int y = std::max(0, p.y); y < std::min(height, p.y + p.h); ++y) {
      for (int x = std::max(0, p.x); x < std::min(width, p.x + p.w); ++x) {
        double profile = 1.0;
        if (p.pyramid) {
          const double d = std::max(std::abs(x - cx) / half_w, std::abs(y - cy) / half_h);
          profile = std::max(0.0, 1.0 - (1.0 - p.edge_fraction) * d);
        }
        const std::size_t base = plane * p.class_index +
                                 (static_cast<std::size_t>(y) * width + x) * 3;
        for (int c = 0; c < 3; ++c) weights[base + c] += p.weight[c] * profile;
      }
    }
  }
}

TemplateModel TemplateModel::from_json(const std::string& text) {
  TemplateModel m;
  try {
    const auto j = nlohmann::json::parse(text);
    m.classes = j.at("classes").get<int>();
    m.width = j.at("width").get<int>();
    m.height = j.at("height").get<int>();
    m.bias = j.value("bias", std::vector<double>{});
    m.softmax = j.value("softmax", false);
    m.weights = j.value("weights", std::vector<double>{});
    for (const auto& pj : j.value("patches", nlohmann::json::array())) {
      TemplatePatch p;
      p.class_index = pj.at("class").get<int>();
      p.x = pj.at("x").get<int>();
      p.y = pj.at("y").get<int>();
      p.w = pj.at("w").get<int>();
      p.h = pj.at("h").get<int>();
      const auto w = pj.at("weight").get<std::vector<double>>();
      if (w.size() != 3) throw ConfigError("patch weight must have 3 channels");
      std::copy(w.begin(), w.end(), p.weight);
      p.pyramid = pj.value("pyramid", false);
      p.edge_fraction = pj.value("edge_fraction", 0.0);
      m.patches.push_back(p);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad template model: ") + e.what());
  }
  m.build_weights();
  return m;
}

std::string TemplateModel::to_json() const {
  nlohmann::json j;
  j["classes"] = classes;
  j["width"] = width;
  j["height"] = height;
  j["bias"] = bias;
  j["softmax"] = softmax;
  j["patches"] = nlohmann::json::array();
  for (const TemplatePatch& p : patches) {
    j["patches"].push_back({{"class", p.class_index},
                            {"x", p.x},
                            {"y", p.y},
                            {"w", p.w},
                            {"h", p.h},
                            {"weight", {p.weight[0], p.weight[1], p.weight[2]}},
                            {"pyramid", p.pyramid},
                            {"edge_fraction", p.edge_fraction}});
  }
  return j.dump();
}

TemplateOracle::TemplateOracle(TemplateModel model, std::string spec)
    : ScoreOracle(std::move(spec)), model_(std::move(model)) {
  if (model_.weights.empty()) model_.build_weights();
}

std::vector<double> TemplateOracle::logits(const RgbaImage& image) const {
  if (image.width() != model_.width || image.height() != model_.height) {
    throw GeometryError("template oracle got an image of the wrong size");
  }
  const std::size_t plane = static_cast<std::size_t>(model_.width) * model_.height * 3;
  const auto px = image.pixels();
  std::vector<double> out(model_.bias);
  for (int k = 0; k < model_.classes; ++k) {
    const double* w = model_.weights.data() + plane * k;
    double acc = 0.0;
    std::size_t wi = 0;
    for (std::size_t i = 0; i < px.size(); i += 4, wi += 3) {
      acc += w[wi] * px[i] + w[wi + 1] * px[i + 1] + w[wi + 2] * px[i + 2];
    }
    out[k] += acc / 255.0;
  }
  return out;
}

ScoreVector TemplateOracle::score_one(const RgbaImage& image) {
  auto z = logits(image);
  if (model_.softmax) {
    const double mx = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double& v : z) sum += (v = std::exp(v - mx));
    for (double& v : z) v /= sum;
  }
  return ScoreVector{std::move(z)};
}

// ---------------------------------------------------------------------------

TiledHistogramOracle::TiledHistogramOracle(int classes, int grid)
    : ScoreOracle("toy:histogram:" + std::to_string(classes) + ":" +
                  std::to_string(grid)),
      classes_(classes),
      grid_(grid) {
  if (classes < 2 || grid < 1) {
    throw ConfigError("histogram oracle needs classes >= 2 and grid >= 1");
  }
}

ScoreVector TiledHistogramOracle::score_one(const RgbaImage& image) {
  std::vector<double> counts(static_cast<std::size_t>(classes_), 0.0);
  int tiles = 0;
  for (int ty = 0; ty < grid_; ++ty) {
    const int y0 = ty * image.height() / grid_;
    const int y1 = (ty + 1) * image.height() / grid_;
    for (int tx = 0; tx < grid_; ++tx) {
      const int x0 = tx * image.width() / grid_;
      const int x1 = (tx + 1) * image.width() / grid_;
      if (x1 <= x0 || y1 <= y0) continue;
      double sum = 0.0;
      for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) {
          sum += 0.299 * image.at(x, y, 0) + 0.587 * image.at(x, y, 1) +
                 0.114 * image.at(x, y, 2);
        }
      }
      const double mean = sum / (255.0 * (x1 - x0) * (y1 - y0));
      const int bin = std::min(classes_ - 1, static_cast<int>(mean * classes_));
      counts[static_cast<std::size_t>(bin)] += 1.0;
      ++tiles;
    }
  }
  for (double& c : counts) c /= tiles;
  return ScoreVector{std::move(counts)};
}

ConstantOracle::ConstantOracle(std::vector<double> scores)
    : ScoreOracle("toy:constant"), scores_(std::move(scores)) {
  if (scores_.size() < 2) throw ConfigError("constant oracle needs >= 2 scores");
}

// ---------------------------------------------------------------------------

ScoreVector ensemble_combine(std::span<const ScoreVector> member_scores,
                             std::span<const double> weights) {
  if (member_scores.empty() || member_scores.size() != weights.size()) {
    throw ParameterError("ensemble needs one weight per member score vector");
  }
  ScoreVector out{std::vector<double>(member_scores[0].scores.size(), 0.0)};
  for (std::size_t i = 0; i < member_scores.size(); ++i) {
    if (member_scores[i].scores.size() != out.scores.size()) {
      throw ParameterError("ensemble members disagree on class count");
    }
    for (std::size_t k = 0; k < out.scores.size(); ++k) {
      out.scores[k] += weights[i] * member_scores[i].scores[k];
    }
  }
  return out;
}

EnsembleOracle::EnsembleOracle(std::vector<EnsembleMember> members, std::string spec)
    : ScoreOracle(std::move(spec)), members_(std::move(members)) {
  if (members_.empty()) throw ConfigError("ensemble needs at least one member");
  classes_ = members_.front().oracle->class_count();
  for (std::size_t i = 0; i < members_.size(); ++i) {
    const auto& m = members_[i];
    if (!m.oracle) throw ConfigError("ensemble member " + std::to_string(i) + " is null");
    if (m.oracle->class_count() != classes_) {
      throw ConfigError("ensemble member " + std::to_string(i) +
                        " has a different class count");
    }
    if (!(m.weight >= 0.0) || !std::isfinite(m.weight)) {
      throw ConfigError("ensemble member " + std::to_string(i) +
                        " has a negative weight");
    }
  }
}

namespace {

[[noreturn]] void rethrow_member(std::size_t index) {
  try {
    throw;
  } catch (const OracleIoError& e) {
    throw OracleIoError("ensemble member " + std::to_string(index) + ": " + e.what(),
                        e.request_id());
  } catch (const std::exception& e) {
    throw OracleIoError("ensemble member " + std::to_string(index) + ": " + e.what());
  }
}

}  // namespace

ScoreVector EnsembleOracle::score_one(const RgbaImage& image) {
  std::vector<ScoreVector> parts;
  std::vector<double> weights;
  parts.reserve(members_.size());
  for (std::size_t i = 0; i < members_.size(); ++i) {
    try {
      parts.push_back(members_[i].oracle->score(image));
    } catch (...) {
      rethrow_member(i);
    }
    weights.push_back(members_[i].weight);
  }
  return ensemble_combine(parts, weights);
}

std::vector<ScoreVector> EnsembleOracle::score_many(std::span<const RgbaImage> images) {
  std::vector<std::vector<ScoreVector>> per_member;
  std::vector<double> weights;
  for (std::size_t i = 0; i < members_.size(); ++i) {
    try {
      per_member.push_back(members_[i].oracle->score_batch(images));
    } catch (...) {
      rethrow_member(i);
    }
    weights.push_back(members_[i].weight);
  }
  std::vector<ScoreVector> out;
  out.reserve(images.size());
  std::vector<ScoreVector> column(members_.size());
  for (std::size_t n = 0; n < images.size(); ++n) {
    for (std::size_t i = 0; i < members_.size(); ++i) column[i] = per_member[i][n];
    out.push_back(ensemble_combine(column, weights));
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

std::filesystem::path resolve(const std::filesystem::path& base,
                              const std::string& path) {
  std::filesystem::path p(path);
  if (p.is_relative() && !base.empty()) p = base / p;
  return p;
}

std::string read_text(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return std::string(bytes.begin(), bytes.end());
}

bool starts_with(const std::string& s, const char* prefix, std::string* rest) {
  const std::string p(prefix);
  if (s.rfind(p, 0) != 0) return false;
  *rest = s.substr(p.size());
  return true;
}

}  // namespace

OraclePtr make_oracle(const std::string& spec, const std::filesystem::path& base_dir) {
  std::string rest;
  if (spec == "toy:brightness") return std::make_shared<BrightnessOracle>();
  if (starts_with(spec, "toy:template:", &rest)) {
    return std::make_shared<TemplateOracle>(
        TemplateModel::from_json(read_text(resolve(base_dir, rest))), spec);
  }
  if (starts_with(spec, "toy:histogram:", &rest)) {
    const auto colon = rest.find(':');
    if (colon == std::string::npos) {
      throw ConfigError("toy:histogram spec needs <classes>:<grid>");
    }
    try {
      return std::make_shared<TiledHistogramOracle>(std::stoi(rest.substr(0, colon)),
                                                    std::stoi(rest.substr(colon + 1)));
    } catch (const std::logic_error&) {
      throw ConfigError("bad toy:histogram spec '" + spec + "'");
    }
  }
  if (starts_with(spec, "toy:constant:", &rest)) {
    std::vector<double> scores;
    std::stringstream ss(rest);
    std::string item;
    try {
      while (std::getline(ss, item, ',')) scores.push_back(std::stod(item));
    } catch (const std::logic_error&) {
      throw ConfigError("bad toy:constant spec '" + spec + "'");
    }
    return std::make_shared<ConstantOracle>(std::move(scores));
  }
  if (starts_with(spec, "proc:", &rest)) {
    return std::make_shared<ExternalOracle>(spawn_process_channel(rest), spec);
  }
  if (starts_with(spec, "tcp:", &rest)) {
    const auto colon = rest.rfind(':');
    if (colon == std::string::npos) throw ConfigError("tcp spec needs <host>:<port>");
    int port = 0;
    try {
      port = std::stoi(rest.substr(colon + 1));
    } catch (const std::logic_error&) {
      throw ConfigError("bad tcp port in '" + spec + "'");
    }
    return std::make_shared<ExternalOracle>(
        connect_tcp_channel(rest.substr(0, colon), port), spec);
  }
  if (starts_with(spec, "ensemble:", &rest)) {
    const auto path = resolve(base_dir, rest);
    std::vector<EnsembleMember> members;
    try {
      const auto j = nlohmann::json::parse(read_text(path));
      for (const auto& mj : j.at("members")) {
        const auto member_spec = mj.at("oracle").get<std::string>();
        members.push_back(EnsembleMember{make_oracle(member_spec, path.parent_path()),
                                         mj.value("weight", 1.0),
                                         mj.value("name", member_spec)});
      }
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("bad ensemble spec " + path.string() + ": " + e.what());
    }
    return std::make_shared<EnsembleOracle>(std::move(members), spec);
  }
  throw ConfigError("unknown oracle spec '" + spec + "'");
}

OracleFactory oracle_factory(const std::string& spec,
                             const std::filesystem::path& base_dir) {
  return [spec, base_dir] { return make_oracle(spec, base_dir); };
}

OracleFactory shared_oracle_factory(OraclePtr oracle) {
  return [oracle = std::move(oracle)] { return oracle; };
}

}  // namespace wmlock
