#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "wmlock/evolve.hpp"
#include "wmlock/lesion_mask.hpp"

namespace wmlock::cli {

enum ExitCode : int { kOk = 0, kPartial = 1, kUsage = 2 };

// Everything a subcommand can be configured with. Config files are JSON
// objects using these field names; command-line flags override them.
struct RunConfig {
  std::string input_dir;
  std::string labels;
  std::string logo;
  std::string oracle;
  std::string mode = "wap";
  std::string masks;
  std::string out_dir;
  std::string key;
  std::string locked_dir;
  std::string mask;  // single mask file (mask subcommand)
  std::string out;   // output file (mask subcommand)
  std::vector<std::string> sources;  // name=spec
  std::vector<std::string> targets;  // name=spec
  int workers = 1;
  bool exact = true;
  bool alpha_map = false;
  bool exact_unlock = false;
  double scale = 4.0;
  EsConfig es;
  MaskConfig mask_cfg;

  void merge_json(const std::string& text);
  std::string to_json() const;
};

// Runs one subcommand: lock, unlock, verify, mask, eval, transfer, compare.
// `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace wmlock::cli
