#include "cli.hpp"

#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "wmlock/digest.hpp"
#include "wmlock/errors.hpp"
#include "wmlock/harness.hpp"
#include "wmlock/keystore.hpp"
#include "wmlock/png_io.hpp"

namespace wmlock::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_text(const fs::path& path) {
  const auto bytes = read_file_bytes(path);
  return std::string(bytes.begin(), bytes.end());
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

void write_lines(const fs::path& path, const std::vector<std::string>& lines) {
  std::string text;
  for (const auto& l : lines) text += l + "\n";
  write_text(path, text);
}

}  // namespace

// ---------------------------------------------------------------------------

void RunConfig::merge_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    if (!j.is_object()) throw ConfigError("config file must hold a JSON object");
    const auto get = [&j](const char* name, auto& field) {
      if (j.contains(name)) field = j.at(name).get<std::decay_t<decltype(field)>>();
    };
    get("input_dir", input_dir);
    get("labels", labels);
    get("logo", logo);
    get("oracle", oracle);
    get("mode", mode);
    get("masks", masks);
    get("out_dir", out_dir);
    get("key", key);
    get("locked_dir", locked_dir);
    get("mask", mask);
    get("out", out);
    get("sources", sources);
    get("targets", targets);
    get("workers", workers);
    get("exact", exact);
    get("alpha_map", alpha_map);
    get("exact_unlock", exact_unlock);
    get("scale", scale);
    get("population", es.population);
    get("generations", es.generations);
    get("crossover_rate", es.crossover_rate);
    get("mutation_step", es.mutation_step);
    get("bh_iters", es.bh_iters);
    get("alpha_min", es.alpha_min);
    get("alpha_max", es.alpha_max);
    get("seed", es.seed);
    get("early_stop", es.early_stop);
    get("fitness_cache", es.fitness_cache);
    if (j.contains("mutation")) es.mutation = parse_mutation_kind(j["mutation"].get<std::string>());
    get("kernel_size", mask_cfg.kernel_size);
    get("dilate_iters", mask_cfg.dilate_iters);
    get("min_area", mask_cfg.min_area);
    get("iou_merge_threshold", mask_cfg.iou_merge_threshold);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad config file: ") + e.what());
  }
}

std::string RunConfig::to_json() const {
  json j;
  j["input_dir"] = input_dir;
  j["labels"] = labels;
  j["logo"] = logo;
  j["oracle"] = oracle;
  j["mode"] = mode;
  j["masks"] = masks;
  j["out_dir"] = out_dir;
  j["key"] = key;
  j["locked_dir"] = locked_dir;
  j["mask"] = mask;
  j["out"] = out;
  j["sources"] = sources;
  j["targets"] = targets;
  j["workers"] = workers;
  j["exact"] = exact;
  j["alpha_map"] = alpha_map;
  j["exact_unlock"] = exact_unlock;
  j["scale"] = scale;
  j["population"] = es.population;
  j["generations"] = es.generations;
  j["crossover_rate"] = es.crossover_rate;
  j["mutation_step"] = es.mutation_step;
  j["bh_iters"] = es.bh_iters;
  j["alpha_min"] = es.alpha_min;
  j["alpha_max"] = es.alpha_max;
  j["seed"] = es.seed;
  j["early_stop"] = es.early_stop;
  j["fitness_cache"] = es.fitness_cache;
  j["mutation"] = std::string(to_string(es.mutation));
  j["kernel_size"] = mask_cfg.kernel_size;
  j["dilate_iters"] = mask_cfg.dilate_iters;
  j["min_area"] = mask_cfg.min_area;
  j["iou_merge_threshold"] = mask_cfg.iou_merge_threshold;
  return j.dump(2);
}

// ---------------------------------------------------------------------------

namespace {

// Binds flags to a scratch config and copies only the flags actually given
// onto the effective config, so the command line overrides the config file.
class FlagSet {
 public:
  template <class Get>
  void option(CLI::App* app, const std::string& name, Get get, const std::string& desc) {
    CLI::Option* opt = app->add_option(name, get(scratch_), desc);
    setters_.emplace_back(opt, [this, get](RunConfig& dst) { get(dst) = get(scratch_); });
  }
  template <class Get>
  void flag(CLI::App* app, const std::string& name, Get get, const std::string& desc) {
    CLI::Option* opt = app->add_flag(name, get(scratch_), desc);
    setters_.emplace_back(opt, [this, get](RunConfig& dst) { get(dst) = get(scratch_); });
  }
  void mutation(CLI::App* app) {
    CLI::Option* opt = app->add_option("--mutation", mutation_, "basin-hopping or random");
    setters_.emplace_back(opt, [this](RunConfig& dst) {
      dst.es.mutation = parse_mutation_kind(mutation_);
    });
  }
  void apply(RunConfig& dst) const {
    for (const auto& [opt, set] : setters_) {
      if (opt->count() > 0) set(dst);
    }
  }

 private:
  RunConfig scratch_;
  std::string mutation_;
  std::vector<std::pair<CLI::Option*, std::function<void(RunConfig&)>>> setters_;
};

#define WMLOCK_FIELD(expr) [](RunConfig& c) -> auto& { return c.expr; }

void add_es_flags(FlagSet& f, CLI::App* app) {
  f.option(app, "--seed", WMLOCK_FIELD(es.seed), "run seed");
  f.option(app, "--population", WMLOCK_FIELD(es.population), "population size Np");
  f.option(app, "--generations", WMLOCK_FIELD(es.generations), "generations Ng");
  f.option(app, "--crossover-rate", WMLOCK_FIELD(es.crossover_rate), "crossover rate CR");
  f.option(app, "--mutation-step", WMLOCK_FIELD(es.mutation_step), "mutation step s");
  f.option(app, "--bh-iters", WMLOCK_FIELD(es.bh_iters), "basin-hopping hops per mutation");
  f.option(app, "--alpha-min", WMLOCK_FIELD(es.alpha_min), "lowest transparency");
  f.option(app, "--alpha-max", WMLOCK_FIELD(es.alpha_max), "highest transparency");
  f.flag(app, "--early-stop,!--no-early-stop", WMLOCK_FIELD(es.early_stop),
         "stop at the first misclassification");
  f.flag(app, "--fitness-cache,!--no-fitness-cache", WMLOCK_FIELD(es.fitness_cache),
         "reuse scores of repeated genomes");
  f.mutation(app);
  f.option(app, "--scale", WMLOCK_FIELD(scale), "logo scaling factor sl");
  f.option(app, "--workers", WMLOCK_FIELD(workers), "parallel images");
}

void add_mask_flags(FlagSet& f, CLI::App* app) {
  f.option(app, "--mode", WMLOCK_FIELD(mode), "wap, wsm-in or wsm-out");
  f.option(app, "--masks", WMLOCK_FIELD(masks), "directory of lesion masks");
  f.option(app, "--kernel-size", WMLOCK_FIELD(mask_cfg.kernel_size), "dilation kernel side");
  f.option(app, "--dilate-iters", WMLOCK_FIELD(mask_cfg.dilate_iters), "dilation iterations");
  f.option(app, "--min-area", WMLOCK_FIELD(mask_cfg.min_area), "region area threshold");
  f.option(app, "--iou-threshold", WMLOCK_FIELD(mask_cfg.iou_merge_threshold),
           "box merge IOU threshold");
}

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw ConfigError(std::string("missing required flag ") + flag);
}

void require_path(const std::string& value, const char* flag) {
  require(value, flag);
  if (!fs::exists(value)) {
    throw ConfigError(std::string(flag) + " path does not exist: " + value);
  }
}

ConstraintMode checked_mode(const RunConfig& cfg) {
  const ConstraintMode mode = parse_constraint_mode(cfg.mode);
  if (mode != ConstraintMode::kWap) {
    if (cfg.masks.empty()) {
      throw ConfigError("--mode " + cfg.mode + " requires --masks");
    }
    require_path(cfg.masks, "--masks");
  }
  return mode;
}

AttackSetup attack_setup(const RunConfig& cfg, ConstraintMode mode) {
  AttackSetup setup;
  setup.mode = mode;
  setup.es = cfg.es;
  setup.mask = cfg.mask_cfg;
  setup.scale = cfg.scale;
  setup.es.validate();
  setup.mask.validate();
  return setup;
}

// Builds one oracle now (so spec errors surface as config errors) and hands
// it to the first caller; later callers get their own instance.
OracleFactory checked_factory(const std::string& spec) {
  auto first = std::make_shared<OraclePtr>(make_oracle(spec));
  return [spec, first]() -> OraclePtr {
    if (*first) return std::exchange(*first, nullptr);
    return make_oracle(spec);
  };
}

NamedOracle named_oracle(const std::string& text) {
  const auto eq = text.find('=');
  NamedOracle n;
  n.name = eq == std::string::npos ? text : text.substr(0, eq);
  const std::string spec = eq == std::string::npos ? text : text.substr(eq + 1);
  const OraclePtr probe = make_oracle(spec);
  if (const auto* ens = dynamic_cast<const EnsembleOracle*>(probe.get())) {
    for (const auto& m : ens->members()) n.members.push_back(m.name);
  }
  n.factory = oracle_factory(spec);
  return n;
}

json with_config(const RunConfig& cfg, const std::string& report_json) {
  return json{{"config", json::parse(cfg.to_json())}, {"report", json::parse(report_json)}};
}

// ---------------------------------------------------------------------------

int cmd_lock(const RunConfig& cfg, std::ostream& out) {
  const ConstraintMode mode = checked_mode(cfg);
  require_path(cfg.input_dir, "--input-dir");
  require_path(cfg.labels, "--labels");
  require_path(cfg.logo, "--logo");
  require(cfg.oracle, "--oracle");
  require(cfg.out_dir, "--out-dir");
  require(cfg.key, "--key");
  LockOptions opts;
  opts.attack = attack_setup(cfg, mode);
  if (!cfg.masks.empty()) opts.masks_dir = cfg.masks;
  opts.exact = cfg.exact;
  opts.store_alpha_map = cfg.alpha_map;
  opts.workers = cfg.workers;

  const auto samples = load_labels_csv(cfg.labels);
  const WatermarkLogo logo = load_logo(cfg.logo);
  const LockOutput result =
      lock_dataset(cfg.input_dir, samples, logo, checked_factory(cfg.oracle), opts, cfg.out_dir);
  save_key(result.key, cfg.key);
  write_text(fs::path(cfg.out_dir) / "lock_report.json",
             with_config(cfg, result.report.to_json()).dump(2));

  out << "locked " << result.key.entries.size() << "/" << samples.size() << " images, "
      << result.report.successes() << " misclassified by the source oracle\n"
      << "key: " << cfg.key << "\n"
      << "dataset_hash: " << result.key.dataset_hash << "\n";
  for (const auto& r : result.report.images) {
    if (!r.ok) out << "  failed " << r.image_id << ": " << r.error << "\n";
  }
  return result.report.failures() == 0 ? kOk : kPartial;
}

int cmd_unlock(const RunConfig& cfg, std::ostream& out) {
  require_path(cfg.locked_dir, "--locked-dir");
  require_path(cfg.key, "--key");
  require_path(cfg.logo, "--logo");
  require(cfg.out_dir, "--out-dir");
  const KeyFile key = load_key(cfg.key);
  if (cfg.exact_unlock) {
    for (const auto& e : key.entries) {
      if (!e.residuals) throw ConfigError("--exact: key entry " + e.image_id + " has no residuals");
    }
  }
  const WatermarkLogo logo = load_logo(cfg.logo);
  const UnlockReport report = unlock_dataset(cfg.locked_dir, key, logo, cfg.out_dir);
  std::size_t exact = 0;
  int worst = 0;
  for (const auto& r : report.images) {
    exact += r.exact;
    worst = std::max(worst, r.max_error_bound);
  }
  out << "unlocked " << report.images.size() << " images (" << exact << " exact";
  if (exact < report.images.size()) out << ", max channel error bound " << worst;
  out << ") into " << cfg.out_dir << "\n";
  return kOk;
}

int cmd_verify(const RunConfig& cfg, std::ostream& out) {
  require_path(cfg.key, "--key");
  require_path(cfg.locked_dir, "--locked-dir");
  const KeyFile key = load_key(cfg.key);
  std::optional<WatermarkLogo> logo;
  if (!cfg.logo.empty()) {
    require_path(cfg.logo, "--logo");
    logo = load_logo(cfg.logo);
  }
  const VerifyReport report = verify_key(key, cfg.locked_dir, logo ? &*logo : nullptr);
  if (!cfg.out.empty()) write_text(cfg.out, report.to_json());
  if (report.logo_ok && !*report.logo_ok) out << "logo: mismatch\n";
  out << "integrity: " << (report.integrity_ok ? "ok" : "FAILED") << "\n";
  for (const auto& [id, status] : report.entries) {
    if (status != EntryStatus::kOk) out << "  " << id << ": " << to_string(status) << "\n";
  }
  out << (report.entries.size() - report.failed_entries()) << "/" << report.entries.size()
      << " entries verified\n";
  return report.passed() ? kOk : kPartial;
}

int cmd_mask(const RunConfig& cfg, std::ostream& out) {
  require_path(cfg.mask, "--mask");
  require_path(cfg.logo, "--logo");
  const ConstraintMode mode = parse_constraint_mode(cfg.mode);
  cfg.mask_cfg.validate();
  const BinaryMask mask = load_mask_png(cfg.mask);
  const WatermarkLogo logo = load_logo(cfg.logo);
  const ScaledSize size =
      scaled_logo_size(logo.width(), logo.height(), mask.width(), mask.height(), cfg.scale);
  try {
    const ConstraintRegion region = build_constraint(mask, mode, cfg.mask_cfg, mask.width(),
                                                     mask.height(), size.width, size.height);
    if (cfg.out.empty()) {
      out << region.to_json() << "\n";
    } else {
      write_text(cfg.out, region.to_json());
      out << region.boxes().size() << " lesion boxes, " << region.feasible_count()
          << " admissible positions; written to " << cfg.out << "\n";
    }
  } catch (const InfeasibleConstraintError& e) {
    out << "infeasible constraint: " << e.what() << "\n";
    return kPartial;
  }
  return kOk;
}

int cmd_eval(const RunConfig& cfg, std::ostream& out) {
  require_path(cfg.input_dir, "--input-dir");
  require_path(cfg.labels, "--labels");
  require(cfg.oracle, "--oracle");
  const OraclePtr oracle = make_oracle(cfg.oracle);
  const auto dataset = LabeledDataset::load(cfg.input_dir, cfg.labels, oracle->class_count());
  const auto samples = load_samples(dataset, false);
  json report;
  try {
    const AccuracyReport acc = accuracy(*oracle, samples);
    report["accuracy"] = acc.accuracy;
    report["accuracy_evaluated"] = acc.evaluated;
    out << "accuracy: " << acc.accuracy << " (" << acc.correct << "/" << acc.evaluated << ")\n";
    if (!cfg.locked_dir.empty()) {
      require_path(cfg.locked_dir, "--locked-dir");
      std::vector<RgbaImage> locked;
      for (const auto& s : samples) locked.push_back(load_png(fs::path(cfg.locked_dir) / s.image_id));
      const AsrReport a = asr(*oracle, samples, locked);
      report["asr"] = a.asr;
      report["asr_denominator"] = a.denominator;
      report["asr_flipped"] = a.flipped;
      out << "ASR: " << a.asr << " (" << a.flipped << "/" << a.denominator << ")\n";
    }
  } catch (const UndefinedMetricError& e) {
    out << "undefined metric: " << e.what() << "\n";
    return kPartial;
  }
  if (!cfg.out_dir.empty()) {
    write_text(fs::path(cfg.out_dir) / "report.json", with_config(cfg, report.dump()).dump(2));
  }
  return kOk;
}

int cmd_transfer(const RunConfig& cfg, std::ostream& out) {
  const ConstraintMode mode = checked_mode(cfg);
  require_path(cfg.input_dir, "--input-dir");
  require_path(cfg.labels, "--labels");
  require_path(cfg.logo, "--logo");
  require(cfg.out_dir, "--out-dir");
  if (cfg.sources.empty()) throw ConfigError("missing required flag --source");
  if (cfg.targets.empty()) throw ConfigError("missing required flag --target");
  const AttackSetup setup = attack_setup(cfg, mode);
  std::vector<NamedOracle> sources, targets;
  for (const auto& s : cfg.sources) sources.push_back(named_oracle(s));
  for (const auto& t : cfg.targets) targets.push_back(named_oracle(t));
  const int classes = sources.front().factory()->class_count();
  std::optional<fs::path> masks;
  if (!cfg.masks.empty()) masks = cfg.masks;
  const auto dataset = LabeledDataset::load(cfg.input_dir, cfg.labels, classes, masks);
  const auto samples = load_samples(dataset, mode != ConstraintMode::kWap);
  const WatermarkLogo logo = load_logo(cfg.logo);

  const TransferMatrix m = transfer_matrix(sources, targets, samples, logo, setup, cfg.workers);
  const fs::path dir(cfg.out_dir);
  write_text(dir / "matrix.csv", m.to_csv());
  write_text(dir / "report.json", with_config(cfg, m.to_json()).dump(2));
  write_lines(dir / "attacks.jsonl", m.attack_log);
  out << m.to_csv();
  return kOk;
}

int cmd_compare(const RunConfig& cfg, std::ostream& out) {
  require_path(cfg.input_dir, "--input-dir");
  require_path(cfg.labels, "--labels");
  require_path(cfg.logo, "--logo");
  require(cfg.oracle, "--oracle");
  require(cfg.out_dir, "--out-dir");
  std::vector<ConstraintMode> modes{ConstraintMode::kWap};
  std::optional<fs::path> masks;
  if (!cfg.masks.empty()) {
    require_path(cfg.masks, "--masks");
    masks = cfg.masks;
    modes.push_back(ConstraintMode::kWsmIn);
    modes.push_back(ConstraintMode::kWsmOut);
  }
  const AttackSetup setup = attack_setup(cfg, ConstraintMode::kWap);
  const OracleFactory factory = checked_factory(cfg.oracle);
  const OraclePtr probe = make_oracle(cfg.oracle);
  const auto dataset =
      LabeledDataset::load(cfg.input_dir, cfg.labels, probe->class_count(), masks);
  const auto samples = load_samples(dataset, masks.has_value());
  const WatermarkLogo logo = load_logo(cfg.logo);

  const MutationComparison c = compare_mutation(samples, logo, factory, setup, modes, cfg.workers);
  const fs::path dir(cfg.out_dir);
  write_text(dir / "matrix.csv", c.to_csv());
  write_text(dir / "report.json", with_config(cfg, c.to_json()).dump(2));
  write_lines(dir / "attacks.jsonl", c.attack_log);
  out << c.to_csv();
  return kOk;
}

}  // namespace

// ---------------------------------------------------------------------------

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"wmlock: adversarial watermark dataset locking", "wmlock"};
  app.require_subcommand(1);
  FlagSet flags;
  std::string config_path;

  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON config file; flags override it");
  };

  CLI::App* lock = app.add_subcommand("lock", "watermark a dataset and issue a key");
  add_common(lock);
  flags.option(lock, "--input-dir", WMLOCK_FIELD(input_dir), "directory of source PNGs");
  flags.option(lock, "--labels", WMLOCK_FIELD(labels), "CSV with header image_id,label");
  flags.option(lock, "--logo", WMLOCK_FIELD(logo), "watermark logo PNG");
  flags.option(lock, "--oracle", WMLOCK_FIELD(oracle), "source oracle spec");
  flags.option(lock, "--out-dir", WMLOCK_FIELD(out_dir), "directory for locked PNGs");
  flags.option(lock, "--key", WMLOCK_FIELD(key), "key file to write");
  flags.flag(lock, "--exact,!--no-exact", WMLOCK_FIELD(exact), "store residuals for exact unlock");
  flags.flag(lock, "--alpha-map", WMLOCK_FIELD(alpha_map), "store explicit alpha maps in the key");
  add_es_flags(flags, lock);
  add_mask_flags(flags, lock);

  CLI::App* unlock = app.add_subcommand("unlock", "remove watermarks with a key");
  add_common(unlock);
  flags.option(unlock, "--locked-dir", WMLOCK_FIELD(locked_dir), "directory of locked PNGs");
  flags.option(unlock, "--key", WMLOCK_FIELD(key), "key file");
  flags.option(unlock, "--logo", WMLOCK_FIELD(logo), "watermark logo PNG");
  flags.option(unlock, "--out-dir", WMLOCK_FIELD(out_dir), "directory for restored PNGs");
  flags.flag(unlock, "--exact", WMLOCK_FIELD(exact_unlock), "require byte-exact residuals");

  CLI::App* verify = app.add_subcommand("verify", "check a key against locked images");
  add_common(verify);
  flags.option(verify, "--key", WMLOCK_FIELD(key), "key file");
  flags.option(verify, "--locked-dir", WMLOCK_FIELD(locked_dir), "directory of locked PNGs");
  flags.option(verify, "--logo", WMLOCK_FIELD(logo), "optional logo PNG to check");
  flags.option(verify, "--out", WMLOCK_FIELD(out), "optional JSON report path");

  CLI::App* mask = app.add_subcommand("mask", "emit lesion boxes for one mask");
  add_common(mask);
  flags.option(mask, "--mask", WMLOCK_FIELD(mask), "lesion mask PNG");
  flags.option(mask, "--logo", WMLOCK_FIELD(logo), "watermark logo PNG");
  flags.option(mask, "--scale", WMLOCK_FIELD(scale), "logo scaling factor sl");
  flags.option(mask, "--out", WMLOCK_FIELD(out), "JSON output path (default stdout)");
  add_mask_flags(flags, mask);

  CLI::App* eval = app.add_subcommand("eval", "accuracy and ASR of an oracle");
  add_common(eval);
  flags.option(eval, "--input-dir", WMLOCK_FIELD(input_dir), "directory of clean PNGs");
  flags.option(eval, "--labels", WMLOCK_FIELD(labels), "CSV with header image_id,label");
  flags.option(eval, "--oracle", WMLOCK_FIELD(oracle), "oracle spec");
  flags.option(eval, "--locked-dir", WMLOCK_FIELD(locked_dir), "directory of locked PNGs");
  flags.option(eval, "--out-dir", WMLOCK_FIELD(out_dir), "optional report directory");

  CLI::App* transfer = app.add_subcommand("transfer", "source x target transfer matrix");
  add_common(transfer);
  flags.option(transfer, "--input-dir", WMLOCK_FIELD(input_dir), "directory of clean PNGs");
  flags.option(transfer, "--labels", WMLOCK_FIELD(labels), "CSV with header image_id,label");
  flags.option(transfer, "--logo", WMLOCK_FIELD(logo), "watermark logo PNG");
  flags.option(transfer, "--source", WMLOCK_FIELD(sources), "name=spec (repeatable)");
  flags.option(transfer, "--target", WMLOCK_FIELD(targets), "name=spec (repeatable)");
  flags.option(transfer, "--out-dir", WMLOCK_FIELD(out_dir), "report directory");
  add_es_flags(flags, transfer);
  add_mask_flags(flags, transfer);

  CLI::App* compare = app.add_subcommand("compare", "basin hopping vs random mutation");
  add_common(compare);
  flags.option(compare, "--input-dir", WMLOCK_FIELD(input_dir), "directory of clean PNGs");
  flags.option(compare, "--labels", WMLOCK_FIELD(labels), "CSV with header image_id,label");
  flags.option(compare, "--logo", WMLOCK_FIELD(logo), "watermark logo PNG");
  flags.option(compare, "--oracle", WMLOCK_FIELD(oracle), "oracle spec");
  flags.option(compare, "--masks", WMLOCK_FIELD(masks), "lesion masks (enables WSM columns)");
  flags.option(compare, "--out-dir", WMLOCK_FIELD(out_dir), "report directory");
  add_es_flags(flags, compare);
  flags.option(compare, "--kernel-size", WMLOCK_FIELD(mask_cfg.kernel_size), "dilation kernel side");
  flags.option(compare, "--dilate-iters", WMLOCK_FIELD(mask_cfg.dilate_iters), "dilation iterations");
  flags.option(compare, "--min-area", WMLOCK_FIELD(mask_cfg.min_area), "region area threshold");
  flags.option(compare, "--iou-threshold", WMLOCK_FIELD(mask_cfg.iou_merge_threshold),
               "box merge IOU threshold");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e, out, err);
    return rc == 0 ? kOk : kUsage;
  }

  const std::vector<std::pair<CLI::App*, int (*)(const RunConfig&, std::ostream&)>> commands{
      {lock, cmd_lock},         {unlock, cmd_unlock},   {verify, cmd_verify},
      {mask, cmd_mask},         {eval, cmd_eval},       {transfer, cmd_transfer},
      {compare, cmd_compare}};
  for (const auto& [sub, fn] : commands) {
    if (!sub->parsed()) continue;
    try {
      RunConfig cfg;
      if (!config_path.empty()) cfg.merge_json(read_text(config_path));
      flags.apply(cfg);
      return fn(cfg, out);
    } catch (const ConfigError& e) {
      err << "config error: " << e.what() << "\n";
      return kUsage;
    } catch (const Error& e) {
      err << e.kind() << " error: " << e.what() << "\n";
      return kPartial;
    } catch (const std::exception& e) {
      err << "error: " << e.what() << "\n";
      return kPartial;
    }
  }
  return kUsage;
}

}  // namespace wmlock::cli
