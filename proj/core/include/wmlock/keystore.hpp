#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "wmlock/oracle.hpp"
#include "wmlock/pipeline.hpp"
#include "wmlock/raster.hpp"

namespace wmlock {

// Watermark parameters of one locked image.
struct KeyEntry {
  std::string image_id;
  std::string locked_hash;  // hex SHA-256 of the locked PNG bytes
  int alpha = 0;
  int x = 0;
  int y = 0;
  // Explicit effective alpha per footprint pixel, row-major.
  std::optional<std::vector<std::uint8_t>> alpha_map;
  // (original - reconstructed) mod 256 per footprint pixel and RGB channel,
  // stored as two's-complement bytes.
  std::optional<std::vector<std::int8_t>> residuals;

  friend bool operator==(const KeyEntry&, const KeyEntry&) = default;
};

// Per-user key document. Serialized as canonical JSON: sorted keys, no
// whitespace, byte arrays as base64.
struct KeyFile {
  int version = 1;
  std::string logo_id;
  std::string logo_hash;
  int logo_scaled_w = 0;
  int logo_scaled_h = 0;
  double scale_factor = 4.0;
  std::vector<KeyEntry> entries;
  std::string dataset_hash;

  // SHA-256 over the sorted per-entry digests.
  std::string compute_dataset_hash() const;
  std::string to_json() const;
  // Throws ConfigError on a malformed or inconsistent document.
  static KeyFile from_json(const std::string& text);

  friend bool operator==(const KeyFile&, const KeyFile&) = default;
};

void save_key(const KeyFile& key, const std::filesystem::path& path);
KeyFile load_key(const std::filesystem::path& path);

struct LockOptions {
  AttackSetup attack;
  std::optional<std::filesystem::path> masks_dir;
  // Store residuals so unlock is byte-exact. Without them alpha_max is capped
  // at 254 so the inverse blend stays defined.
  bool exact = true;
  bool store_alpha_map = false;
  int workers = 1;
};

struct ImageRecord {
  std::string image_id;
  int label = 0;
  bool ok = false;
  std::string error_kind;
  std::string error;
  std::uint64_t seed = 0;
  AttackResult attack;
};

struct LockReport {
  std::vector<ImageRecord> images;  // sorted by image_id
  std::size_t failures() const;
  std::size_t successes() const;
  std::string to_json() const;
};

struct LockOutput {
  KeyFile key;
  LockReport report;
};

// Attacks, blends and writes every sample to `out_dir` (same file names) and
// builds the key. Per-image failures are recorded and skipped.
LockOutput lock_dataset(const std::filesystem::path& input_dir,
                        const std::vector<Sample>& samples, const WatermarkLogo& logo,
                        const OracleFactory& oracles, const LockOptions& options,
                        const std::filesystem::path& out_dir);

struct UnlockRecord {
  std::string image_id;
  bool exact = false;
  int max_error_bound = 0;  // 0 when exact
};

struct UnlockReport {
  std::vector<UnlockRecord> images;
  std::string to_json() const;
};

// Checks the logo, key integrity and every locked file before writing
// anything, then reverses each watermark into `out_dir`. Throws
// AuthorizationError on any hash mismatch and IoError for missing files.
UnlockReport unlock_dataset(const std::filesystem::path& locked_dir, const KeyFile& key,
                            const WatermarkLogo& logo, const std::filesystem::path& out_dir);

// Restores one image from its locked pixels.
RgbaImage unlock_image(const RgbaImage& locked, const KeyEntry& entry,
                       const WatermarkLogo& logo, double scale, int* max_error_bound = nullptr);

enum class EntryStatus { kOk, kMissing, kMismatch };
std::string_view to_string(EntryStatus status);

struct VerifyReport {
  std::optional<bool> logo_ok;  // set when a logo was supplied
  bool integrity_ok = false;    // dataset_hash recomputes
  bool ids_unique = false;
  std::vector<std::pair<std::string, EntryStatus>> entries;

  bool passed() const;
  std::size_t failed_entries() const;
  std::string to_json() const;
};

// Read-only check of a key against a directory of locked images.
VerifyReport verify_key(const KeyFile& key, const std::filesystem::path& locked_dir,
                        const WatermarkLogo* logo = nullptr);

}  // namespace wmlock
