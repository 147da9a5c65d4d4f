#include "wmlock/keystore.hpp"

#include <algorithm>
#include <numeric>
#include <set>

#include "json.hpp"
#include "wmlock/digest.hpp"
#include "wmlock/errors.hpp"
#include "wmlock/parallel.hpp"
#include "wmlock/png_io.hpp"

namespace wmlock {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json entry_to_json(const KeyEntry& e) {
  json j;
  j["image_id"] = e.image_id;
  j["locked_hash"] = e.locked_hash;
  j["alpha"] = e.alpha;
  j["x"] = e.x;
  j["y"] = e.y;
  if (e.alpha_map) j["alpha_map"] = base64_encode(*e.alpha_map);
  if (e.residuals) {
    j["residuals"] = base64_encode(std::span<const std::uint8_t>(
        reinterpret_cast<const std::uint8_t*>(e.residuals->data()), e.residuals->size()));
  }
  return j;
}

KeyEntry entry_from_json(const json& j) {
  KeyEntry e;
  e.image_id = j.at("image_id").get<std::string>();
  e.locked_hash = j.at("locked_hash").get<std::string>();
  e.alpha = j.at("alpha").get<int>();
  e.x = j.at("x").get<int>();
  e.y = j.at("y").get<int>();
  if (j.contains("alpha_map")) {
    e.alpha_map = base64_decode(j["alpha_map"].get<std::string>());
  }
  if (j.contains("residuals")) {
    const auto raw = base64_decode(j["residuals"].get<std::string>());
    e.residuals.emplace(raw.size());
    std::transform(raw.begin(), raw.end(), e.residuals->begin(),
                   [](std::uint8_t b) { return static_cast<std::int8_t>(b); });
  }
  return e;
}

json attack_to_json(const AttackResult& r) {
  return json{{"alpha", r.best.alpha},
              {"x", r.best.x},
              {"y", r.best.y},
              {"success", r.success},
              {"predicted", r.predicted},
              {"scores", r.best_scores.scores},
              {"initial_fitness", r.initial_fitness},
              {"final_fitness", r.final_fitness},
              {"queries", r.queries_used},
              {"generations_run", r.generations_run}};
}

fs::path entry_path(const fs::path& dir, const std::string& image_id) {
  return dir / fs::path(image_id);
}

}  // namespace

// ---------------------------------------------------------------------------

std::string KeyFile::compute_dataset_hash() const {
  std::vector<std::string> digests;
  digests.reserve(entries.size());
  for (const KeyEntry& e : entries) digests.push_back(to_hex(sha256(entry_to_json(e).dump())));
  std::sort(digests.begin(), digests.end());
  std::string joined;
  for (const auto& d : digests) {
    joined += d;
    joined += '\n';
  }
  return to_hex(sha256(joined));
}

std::string KeyFile::to_json() const {
  json j;
  j["version"] = version;
  j["logo_id"] = logo_id;
  j["logo_hash"] = logo_hash;
  j["logo_scaled_w"] = logo_scaled_w;
  j["logo_scaled_h"] = logo_scaled_h;
  j["scale_factor"] = scale_factor;
  j["entries"] = json::array();
  for (const KeyEntry& e : entries) j["entries"].push_back(entry_to_json(e));
  j["dataset_hash"] = dataset_hash;
  return j.dump();
}

KeyFile KeyFile::from_json(const std::string& text) {
  KeyFile k;
  try {
    const json j = json::parse(text);
    k.version = j.at("version").get<int>();
    k.logo_id = j.at("logo_id").get<std::string>();
    k.logo_hash = j.at("logo_hash").get<std::string>();
    k.logo_scaled_w = j.at("logo_scaled_w").get<int>();
    k.logo_scaled_h = j.at("logo_scaled_h").get<int>();
    k.scale_factor = j.at("scale_factor").get<double>();
    for (const auto& ej : j.at("entries")) k.entries.push_back(entry_from_json(ej));
    k.dataset_hash = j.at("dataset_hash").get<std::string>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed key file: ") + e.what());
  } catch (const DecodeError& e) {
    throw ConfigError(std::string("malformed key file: ") + e.what());
  }
  if (k.version != 1) throw ConfigError("unsupported key version " + std::to_string(k.version));
  std::set<std::string> ids;
  for (const KeyEntry& e : k.entries) {
    if (!ids.insert(e.image_id).second) {
      throw ConfigError("key lists image '" + e.image_id + "' twice");
    }
  }
  return k;
}

void save_key(const KeyFile& key, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const std::string text = key.to_json();
  write_file_bytes(path, std::span<const std::uint8_t>(
                             reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

KeyFile load_key(const fs::path& path) {
  const auto bytes = read_file_bytes(path);
  return KeyFile::from_json(std::string(bytes.begin(), bytes.end()));
}

// ---------------------------------------------------------------------------

std::size_t LockReport::failures() const {
  return static_cast<std::size_t>(
      std::count_if(images.begin(), images.end(), [](const auto& r) { return !r.ok; }));
}

std::size_t LockReport::successes() const {
  return static_cast<std::size_t>(std::count_if(
      images.begin(), images.end(), [](const auto& r) { return r.ok && r.attack.success; }));
}

std::string LockReport::to_json() const {
  json arr = json::array();
  for (const ImageRecord& r : images) {
    json j{{"image_id", r.image_id}, {"label", r.label}, {"ok", r.ok}, {"seed", r.seed}};
    if (r.ok) {
      j["attack"] = attack_to_json(r.attack);
    } else {
      j["error_kind"] = r.error_kind;
      j["error"] = r.error;
    }
    arr.push_back(std::move(j));
  }
  return json{{"images", arr}, {"failures", failures()}, {"successes", successes()}}.dump(2);
}

LockOutput lock_dataset(const fs::path& input_dir, const std::vector<Sample>& samples,
                        const WatermarkLogo& logo, const OracleFactory& oracles,
                        const LockOptions& options, const fs::path& out_dir) {
  options.attack.es.validate();
  options.attack.mask.validate();
  if (options.attack.mode != ConstraintMode::kWap && !options.masks_dir) {
    throw ConfigError("constraint mode " + std::string(to_string(options.attack.mode)) +
                      " needs a masks directory");
  }
  if (!options.exact && options.attack.es.alpha_min > 254) {
    throw ConfigError("non-exact unlock needs alpha_min <= 254");
  }
  fs::create_directories(out_dir);

  std::vector<Sample> order = samples;
  std::sort(order.begin(), order.end(),
            [](const Sample& a, const Sample& b) { return a.image_id < b.image_id; });

  std::vector<ImageRecord> records(order.size());
  std::vector<std::optional<KeyEntry>> entries(order.size());
  std::vector<std::pair<int, int>> scaled_dims(order.size());
  const int workers = std::max(1, options.workers);
  std::vector<OraclePtr> worker_oracles(static_cast<std::size_t>(workers));

  parallel_for(order.size(), workers, [&](int w, std::size_t i) {
    const Sample& s = order[i];
    ImageRecord& rec = records[i];
    rec.image_id = s.image_id;
    rec.label = s.label;
    try {
      if (i > 0 && order[i - 1].image_id == s.image_id) {
        throw ConfigError("duplicate image id '" + s.image_id + "'");
      }
      auto& oracle = worker_oracles[static_cast<std::size_t>(w)];
      if (!oracle) oracle = oracles();

      const RgbaImage original = load_png(entry_path(input_dir, s.image_id));
      std::optional<BinaryMask> mask;
      if (options.attack.mode != ConstraintMode::kWap) {
        mask = load_sample_mask(options.masks_dir, s.image_id);
      }
      AttackSetup setup = options.attack;
      setup.es.seed = rec.seed = image_seed(options.attack.es.seed, s.image_id);
      if (!options.exact) setup.es.alpha_max = std::min(setup.es.alpha_max, 254);
      const PreparedAttack prep = prepare_attack(original, mask, logo, setup);
      rec.attack = attack_image(original, s.label, prep.scaled_logo, *oracle, prep.region,
                                setup.es);

      const Individual& best = rec.attack.best;
      const RgbaImage& logo_px = prep.scaled_logo.image;
      const RgbaImage locked =
          blend(original, prep.scaled_logo,
                Placement{best.alpha, best.x, best.y, logo_px.width(), logo_px.height()});
      const auto bytes = encode_png(locked);
      const fs::path out_path = entry_path(out_dir, s.image_id);
      if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
      write_file_bytes(out_path, bytes);

      KeyEntry entry;
      entry.image_id = s.image_id;
      entry.locked_hash = to_hex(sha256(bytes));
      entry.alpha = best.alpha;
      entry.x = best.x;
      entry.y = best.y;
      const auto amap = effective_alpha_map(logo_px, best.alpha);
      if (options.store_alpha_map) entry.alpha_map = amap;
      if (options.exact) {
        const RgbaImage recon = unblend_with_map(locked, logo_px, best.x, best.y, amap, true);
        std::vector<std::int8_t> residuals;
        residuals.reserve(amap.size() * 3);
        for (int q = 0; q < logo_px.height(); ++q) {
          for (int p = 0; p < logo_px.width(); ++p) {
            for (int c = 0; c < 3; ++c) {
              const int diff = original.at(best.x + p, best.y + q, c) -
                               recon.at(best.x + p, best.y + q, c);
              residuals.push_back(static_cast<std::int8_t>(static_cast<std::uint8_t>(diff & 0xff)));
            }
          }
        }
        entry.residuals = std::move(residuals);
      }
      entries[i] = std::move(entry);
      scaled_dims[i] = {logo_px.width(), logo_px.height()};
      rec.ok = true;
    } catch (const Error& e) {
      rec.error_kind = e.kind();
      rec.error = e.what();
    } catch (const std::exception& e) {
      rec.error_kind = "internal";
      rec.error = e.what();
    }
  });

  LockOutput out;
  out.key.logo_id = logo.logo_id;
  out.key.logo_hash = logo.content_hash;
  out.key.scale_factor = options.attack.scale;
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (!entries[i]) continue;
    if (out.key.entries.empty()) {
      out.key.logo_scaled_w = scaled_dims[i].first;
      out.key.logo_scaled_h = scaled_dims[i].second;
    }
    out.key.entries.push_back(std::move(*entries[i]));
  }
  out.key.dataset_hash = out.key.compute_dataset_hash();
  out.report.images = std::move(records);
  return out;
}

// ---------------------------------------------------------------------------

RgbaImage unlock_image(const RgbaImage& locked, const KeyEntry& entry,
                       const WatermarkLogo& logo, double scale, int* max_error_bound) {
  const WatermarkLogo scaled = scale_logo(logo, locked.width(), locked.height(), scale);
  const RgbaImage& logo_px = scaled.image;
  const std::size_t area = static_cast<std::size_t>(logo_px.width()) * logo_px.height();
  const std::vector<std::uint8_t> amap =
      entry.alpha_map ? *entry.alpha_map : effective_alpha_map(logo_px, entry.alpha);
  if (amap.size() != area) {
    throw ConfigError("entry " + entry.image_id + ": alpha map does not match logo area");
  }
  if (entry.residuals) {
    if (entry.residuals->size() != area * 3) {
      throw ConfigError("entry " + entry.image_id + ": residual block has the wrong length");
    }
    RgbaImage out = unblend_with_map(locked, logo_px, entry.x, entry.y, amap, true);
    std::size_t k = 0;
    for (int q = 0; q < logo_px.height(); ++q) {
      for (int p = 0; p < logo_px.width(); ++p) {
        for (int c = 0; c < 3; ++c) {
          auto& v = out.at(entry.x + p, entry.y + q, c);
          v = static_cast<std::uint8_t>(v + static_cast<std::uint8_t>((*entry.residuals)[k++]));
        }
      }
    }
    if (max_error_bound) *max_error_bound = 0;
    return out;
  }
  RgbaImage out = unblend_with_map(locked, logo_px, entry.x, entry.y, amap, false);
  if (max_error_bound) {
    int bound = 0;
    for (std::uint8_t a : amap) {
      if (a > 0) bound = std::max(bound, unblend_error_bound(a));
    }
    *max_error_bound = bound;
  }
  return out;
}

std::string UnlockReport::to_json() const {
  json arr = json::array();
  for (const auto& r : images) {
    arr.push_back({{"image_id", r.image_id},
                   {"exact", r.exact},
                   {"max_error_bound", r.max_error_bound}});
  }
  return json{{"images", arr}}.dump(2);
}

UnlockReport unlock_dataset(const fs::path& locked_dir, const KeyFile& key,
                            const WatermarkLogo& logo, const fs::path& out_dir) {
  if (logo.content_hash != key.logo_hash) {
    throw AuthorizationError("supplied logo does not match the key's logo hash");
  }
  if (key.compute_dataset_hash() != key.dataset_hash) {
    throw AuthorizationError("key integrity check failed: dataset_hash does not recompute");
  }
  std::vector<RgbaImage> locked;
  locked.reserve(key.entries.size());
  for (const KeyEntry& e : key.entries) {
    const fs::path path = entry_path(locked_dir, e.image_id);
    if (!fs::exists(path)) throw IoError("missing locked image '" + e.image_id + "'");
    const auto bytes = read_file_bytes(path);
    if (to_hex(sha256(bytes)) != e.locked_hash) {
      throw AuthorizationError("entry '" + e.image_id +
                               "': locked image does not match its recorded hash");
    }
    locked.push_back(decode_png(bytes));
  }

  UnlockReport report;
  fs::create_directories(out_dir);
  for (std::size_t i = 0; i < key.entries.size(); ++i) {
    const KeyEntry& e = key.entries[i];
    int bound = 0;
    const RgbaImage restored = unlock_image(locked[i], e, logo, key.scale_factor, &bound);
    const fs::path out_path = entry_path(out_dir, e.image_id);
    if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
    save_png(restored, out_path);
    report.images.push_back(UnlockRecord{e.image_id, e.residuals.has_value(), bound});
  }
  return report;
}

// ---------------------------------------------------------------------------

std::string_view to_string(EntryStatus status) {
  switch (status) {
    case EntryStatus::kOk:
      return "ok";
    case EntryStatus::kMissing:
      return "missing";
    case EntryStatus::kMismatch:
      return "mismatch";
  }
  return "?";
}

bool VerifyReport::passed() const {
  return logo_ok.value_or(true) && integrity_ok && ids_unique && failed_entries() == 0;
}

std::size_t VerifyReport::failed_entries() const {
  return static_cast<std::size_t>(std::count_if(
      entries.begin(), entries.end(), [](const auto& e) { return e.second != EntryStatus::kOk; }));
}

std::string VerifyReport::to_json() const {
  json arr = json::array();
  for (const auto& [id, status] : entries) {
    arr.push_back({{"image_id", id}, {"status", std::string(to_string(status))}});
  }
  json j{{"integrity_ok", integrity_ok},
         {"ids_unique", ids_unique},
         {"entries", arr},
         {"passed", passed()}};
  j["logo_ok"] = logo_ok ? json(*logo_ok) : json(nullptr);
  return j.dump(2);
}

VerifyReport verify_key(const KeyFile& key, const fs::path& locked_dir,
                        const WatermarkLogo* logo) {
  VerifyReport report;
  if (logo) report.logo_ok = logo->content_hash == key.logo_hash;
  report.integrity_ok = key.compute_dataset_hash() == key.dataset_hash;
  std::set<std::string> ids;
  report.ids_unique = true;
  for (const KeyEntry& e : key.entries) {
    report.ids_unique &= ids.insert(e.image_id).second;
    const fs::path path = entry_path(locked_dir, e.image_id);
    EntryStatus status = EntryStatus::kOk;
    if (!fs::is_regular_file(path)) {
      status = EntryStatus::kMissing;
    } else if (sha256_file_hex(path) != e.locked_hash) {
      status = EntryStatus::kMismatch;
    }
    report.entries.emplace_back(e.image_id, status);
  }
  return report;
}

}  // namespace wmlock
