#include "wmlock/harness.hpp"

#include <algorithm>
#include <cstdio>
#include <set>
#include <sstream>

#include "json.hpp"
#include "wmlock/errors.hpp"
#include "wmlock/parallel.hpp"
#include "wmlock/png_io.hpp"

namespace wmlock {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string format_rate(const std::optional<double>& v) {
  if (!v) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", *v);
  return buf;
}

json optional_json(const std::optional<double>& v) {
  return v ? json(*v) : json(nullptr);
}

std::optional<double> mean_of(const std::vector<std::optional<double>>& values) {
  double sum = 0.0;
  int n = 0;
  for (const auto& v : values) {
    if (v) {
      sum += *v;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / n;
}

int predict_or_fail(ScoreOracle& oracle, const RgbaImage& image, const std::string& id,
                    std::vector<SampleFailure>& failures) {
  try {
    return predicted_class(oracle.score(image));
  } catch (const std::exception& e) {
    failures.push_back({id, e.what()});
    return -1;
  }
}

std::string log_line(std::string_view experiment, std::string_view model,
                     std::string_view mode, std::string_view mutation,
                     const LoadedSample& s, std::uint64_t seed, const AttackResult& r) {
  return json{{"experiment", experiment},
              {"model", model},
              {"mode", mode},
              {"mutation", mutation},
              {"image_id", s.image_id},
              {"label", s.label},
              {"seed", seed},
              {"alpha", r.best.alpha},
              {"x", r.best.x},
              {"y", r.best.y},
              {"success", r.success},
              {"predicted", r.predicted},
              {"initial_fitness", r.initial_fitness},
              {"final_fitness", r.final_fitness},
              {"queries", r.queries_used},
              {"generations_run", r.generations_run}}
      .dump();
}

}  // namespace

LabeledDataset LabeledDataset::load(const fs::path& root, const fs::path& labels_csv,
                                    int class_count, std::optional<fs::path> masks_dir) {
  LabeledDataset ds;
  ds.root = root;
  ds.class_count = class_count;
  ds.masks_dir = std::move(masks_dir);
  ds.samples = load_labels_csv(labels_csv);
  std::sort(ds.samples.begin(), ds.samples.end(),
            [](const Sample& a, const Sample& b) { return a.image_id < b.image_id; });
  std::set<std::string> seen;
  for (const Sample& s : ds.samples) {
    if (!seen.insert(s.image_id).second) {
      throw ConfigError("labels list '" + s.image_id + "' twice");
    }
    if (class_count > 0 && s.label >= class_count) {
      throw ConfigError("label " + std::to_string(s.label) + " of '" + s.image_id +
                        "' is outside [0, " + std::to_string(class_count) + ")");
    }
    if (!fs::is_regular_file(root / s.image_id)) {
      throw IoError("missing image " + (root / s.image_id).string());
    }
  }
  return ds;
}

std::vector<LoadedSample> load_samples(const LabeledDataset& dataset, bool with_masks) {
  std::vector<LoadedSample> out;
  out.reserve(dataset.samples.size());
  for (const Sample& s : dataset.samples) {
    LoadedSample ls{s.image_id, s.label, load_png(dataset.root / s.image_id), std::nullopt};
    if (with_masks) ls.mask = load_sample_mask(dataset.masks_dir, s.image_id);
    out.push_back(std::move(ls));
  }
  return out;
}

AccuracyReport accuracy(ScoreOracle& oracle, const std::vector<LoadedSample>& samples) {
  AccuracyReport r;
  for (const auto& s : samples) {
    const int p = predict_or_fail(oracle, s.image, s.image_id, r.failures);
    if (p < 0) continue;
    ++r.evaluated;
    r.correct += p == s.label;
  }
  if (r.evaluated == 0) throw UndefinedMetricError("accuracy over zero scored samples");
  r.accuracy = static_cast<double>(r.correct) / static_cast<double>(r.evaluated);
  return r;
}

AsrReport asr_from_predictions(const std::vector<int>& labels,
                               const std::vector<int>& clean_pred,
                               const std::vector<int>& locked_pred) {
  if (labels.size() != clean_pred.size() || labels.size() != locked_pred.size()) {
    throw ParameterError("asr needs one clean and one locked prediction per label");
  }
  AsrReport r;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (clean_pred[i] < 0 || clean_pred[i] != labels[i] || locked_pred[i] < 0) continue;
    ++r.denominator;
    r.flipped += locked_pred[i] != labels[i];
  }
  if (r.denominator == 0) {
    throw UndefinedMetricError("ASR is undefined: no sample is classified correctly when clean");
  }
  r.asr = static_cast<double>(r.flipped) / static_cast<double>(r.denominator);
  return r;
}

AsrReport asr(ScoreOracle& oracle, const std::vector<LoadedSample>& clean,
              const std::vector<RgbaImage>& locked) {
  if (clean.size() != locked.size()) {
    throw ParameterError("asr needs one locked image per sample");
  }
  std::vector<int> labels, clean_pred, locked_pred;
  std::vector<SampleFailure> failures;
  for (std::size_t i = 0; i < clean.size(); ++i) {
    labels.push_back(clean[i].label);
    const int c = predict_or_fail(oracle, clean[i].image, clean[i].image_id, failures);
    clean_pred.push_back(c);
    // Locked images only matter for correctly classified samples.
    locked_pred.push_back(c == clean[i].label
                              ? predict_or_fail(oracle, locked[i], clean[i].image_id, failures)
                              : -1);
  }
  AsrReport r = asr_from_predictions(labels, clean_pred, locked_pred);
  r.failures = std::move(failures);
  return r;
}

// ---------------------------------------------------------------------------

std::string TransferMatrix::to_csv() const {
  std::ostringstream out;
  out << "source";
  for (const auto& t : targets) out << ',' << t;
  out << ",source_asr,row_average\n";
  for (std::size_t s = 0; s < sources.size(); ++s) {
    out << sources[s];
    for (std::size_t t = 0; t < targets.size(); ++t) out << ',' << format_rate(cells[s][t]);
    out << ',' << format_rate(source_asr[s]) << ',' << format_rate(source_average[s]) << '\n';
  }
  out << "column_average";
  for (const auto& v : target_average) out << ',' << format_rate(v);
  out << ",,\n";
  return out.str();
}

std::string TransferMatrix::to_json() const {
  json rows = json::array();
  for (std::size_t s = 0; s < sources.size(); ++s) {
    json cells_j = json::object();
    for (std::size_t t = 0; t < targets.size(); ++t) cells_j[targets[t]] = optional_json(cells[s][t]);
    rows.push_back({{"source", sources[s]},
                    {"successes", successes[s]},
                    {"source_asr", source_asr[s]},
                    {"row_average", optional_json(source_average[s])},
                    {"targets", cells_j}});
  }
  json cols = json::object();
  for (std::size_t t = 0; t < targets.size(); ++t) cols[targets[t]] = optional_json(target_average[t]);
  return json{{"kept", kept}, {"rows", rows}, {"column_average", cols}}.dump(2);
}

TransferMatrix transfer_matrix(const std::vector<NamedOracle>& sources,
                               const std::vector<NamedOracle>& targets,
                               const std::vector<LoadedSample>& samples,
                               const WatermarkLogo& logo, const AttackSetup& setup,
                               int workers) {
  if (sources.empty() || targets.empty()) {
    throw ConfigError("transfer matrix needs at least one source and one target");
  }
  setup.es.validate();
  TransferMatrix m;
  for (const auto& s : sources) m.sources.push_back(s.name);
  for (const auto& t : targets) m.targets.push_back(t.name);

  std::vector<OraclePtr> source_oracles, target_oracles;
  for (const auto& s : sources) source_oracles.push_back(s.factory());
  for (const auto& t : targets) target_oracles.push_back(t.factory());

  // Only samples every model classifies correctly are attacked.
  std::vector<const LoadedSample*> kept;
  for (const auto& s : samples) {
    bool all_correct = true;
    for (auto* group : {&source_oracles, &target_oracles}) {
      for (auto& o : *group) {
        if (!all_correct) break;
        std::vector<SampleFailure> ignored;
        all_correct = predict_or_fail(*o, s.image, s.image_id, ignored) == s.label;
      }
    }
    if (all_correct) kept.push_back(&s);
  }
  m.kept = kept.size();

  const int n_workers = std::max(1, workers);
  for (std::size_t si = 0; si < sources.size(); ++si) {
    struct Outcome {
      std::optional<RgbaImage> locked;
      std::string log;
    };
    std::vector<Outcome> outcomes(kept.size());
    std::vector<OraclePtr> worker_oracles(static_cast<std::size_t>(n_workers));
    worker_oracles[0] = source_oracles[si];
    parallel_for(kept.size(), n_workers, [&](int w, std::size_t i) {
      const LoadedSample& s = *kept[i];
      try {
        auto& oracle = worker_oracles[static_cast<std::size_t>(w)];
        if (!oracle) oracle = sources[si].factory();
        AttackSetup local = setup;
        local.es.seed = image_seed(setup.es.seed, s.image_id);
        const PreparedAttack prep = prepare_attack(s.image, s.mask, logo, local);
        const AttackResult r =
            attack_image(s.image, s.label, prep.scaled_logo, *oracle, prep.region, local.es);
        outcomes[i].log = log_line("transfer", sources[si].name, to_string(setup.mode),
                                   to_string(setup.es.mutation), s, local.es.seed, r);
        if (r.success) {
          outcomes[i].locked = blend(s.image, prep.scaled_logo,
                                     Placement{r.best.alpha, r.best.x, r.best.y,
                                               prep.scaled_logo.width(),
                                               prep.scaled_logo.height()});
        }
      } catch (const std::exception& e) {
        outcomes[i].log = json{{"experiment", "transfer"},
                               {"model", sources[si].name},
                               {"image_id", s.image_id},
                               {"error", e.what()}}
                              .dump();
      }
    });

    std::size_t succ = 0;
    for (const auto& o : outcomes) {
      m.attack_log.push_back(o.log);
      succ += o.locked.has_value();
    }
    m.successes.push_back(succ);
    m.source_asr.push_back(kept.empty() ? 0.0
                                        : static_cast<double>(succ) / static_cast<double>(kept.size()));

    std::vector<std::optional<double>> row;
    for (std::size_t ti = 0; ti < targets.size(); ++ti) {
      const auto& members = sources[si].members;
      const bool not_applicable =
          targets[ti].name == sources[si].name ||
          std::find(members.begin(), members.end(), targets[ti].name) != members.end();
      if (not_applicable || succ == 0) {
        row.push_back(std::nullopt);
        continue;
      }
      std::size_t fooled = 0;
      for (std::size_t i = 0; i < kept.size(); ++i) {
        if (!outcomes[i].locked) continue;
        std::vector<SampleFailure> ignored;
        const int p = predict_or_fail(*target_oracles[ti], *outcomes[i].locked,
                                      kept[i]->image_id, ignored);
        fooled += p >= 0 && p != kept[i]->label;
      }
      row.push_back(static_cast<double>(fooled) / static_cast<double>(succ));
    }
    m.source_average.push_back(mean_of(row));
    m.cells.push_back(std::move(row));
  }
  for (std::size_t ti = 0; ti < targets.size(); ++ti) {
    std::vector<std::optional<double>> column;
    for (const auto& row : m.cells) column.push_back(row[ti]);
    m.target_average.push_back(mean_of(column));
  }
  return m;
}

// ---------------------------------------------------------------------------

const ComparisonCell& MutationComparison::cell(MutationKind row, ConstraintMode column) const {
  const auto r = std::find(rows.begin(), rows.end(), row);
  const auto c = std::find(columns.begin(), columns.end(), column);
  if (r == rows.end() || c == columns.end()) throw ParameterError("no such comparison cell");
  return cells[static_cast<std::size_t>(r - rows.begin())]
              [static_cast<std::size_t>(c - columns.begin())];
}

std::string MutationComparison::to_csv() const {
  std::ostringstream out;
  out << "mutation";
  for (auto c : columns) out << ',' << to_string(c);
  out << '\n';
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out << to_string(rows[r]);
    for (const auto& cell : cells[r]) out << ',' << format_rate(cell.asr);
    out << '\n';
  }
  return out.str();
}

std::string MutationComparison::to_json() const {
  json rows_j = json::array();
  for (std::size_t r = 0; r < rows.size(); ++r) {
    json cols = json::object();
    for (std::size_t c = 0; c < columns.size(); ++c) {
      const auto& cell = cells[r][c];
      cols[std::string(to_string(columns[c]))] = {{"asr", optional_json(cell.asr)},
                                                  {"attacked", cell.attacked},
                                                  {"successes", cell.successes},
                                                  {"infeasible", cell.infeasible},
                                                  {"mean_final_fitness", cell.mean_final_fitness}};
    }
    rows_j.push_back({{"mutation", std::string(to_string(rows[r]))}, {"modes", cols}});
  }
  return json{{"correct_clean", correct_clean}, {"rows", rows_j}}.dump(2);
}

MutationComparison compare_mutation(const std::vector<LoadedSample>& samples,
                                    const WatermarkLogo& logo, const OracleFactory& oracle,
                                    const AttackSetup& setup,
                                    const std::vector<ConstraintMode>& modes, int workers) {
  setup.es.validate();
  MutationComparison out;
  out.rows = {MutationKind::kBasinHopping, MutationKind::kRandom};
  out.columns = modes;

  OraclePtr main_oracle = oracle();
  std::vector<const LoadedSample*> correct;
  for (const auto& s : samples) {
    std::vector<SampleFailure> ignored;
    if (predict_or_fail(*main_oracle, s.image, s.image_id, ignored) == s.label) {
      correct.push_back(&s);
    }
  }
  out.correct_clean = correct.size();

  const int n_workers = std::max(1, workers);
  std::vector<OraclePtr> worker_oracles(static_cast<std::size_t>(n_workers));
  worker_oracles[0] = main_oracle;
  for (MutationKind kind : out.rows) {
    std::vector<ComparisonCell> row;
    for (ConstraintMode mode : modes) {
      struct Outcome {
        bool infeasible = false;
        bool attacked = false;
        bool success = false;
        double fitness = 0.0;
        std::string log;
      };
      std::vector<Outcome> outcomes(correct.size());
      parallel_for(correct.size(), n_workers, [&](int w, std::size_t i) {
        const LoadedSample& s = *correct[i];
        Outcome& o = outcomes[i];
        AttackSetup local = setup;
        local.mode = mode;
        local.es.mutation = kind;
        local.es.seed = image_seed(setup.es.seed, s.image_id);
        try {
          auto& orc = worker_oracles[static_cast<std::size_t>(w)];
          if (!orc) orc = oracle();
          const PreparedAttack prep = prepare_attack(s.image, s.mask, logo, local);
          const AttackResult r =
              attack_image(s.image, s.label, prep.scaled_logo, *orc, prep.region, local.es);
          o.attacked = true;
          o.success = r.success;
          o.fitness = r.final_fitness;
          o.log = log_line("compare", orc->spec(), to_string(mode), to_string(kind), s,
                           local.es.seed, r);
        } catch (const InfeasibleConstraintError& e) {
          o.infeasible = true;
          o.log = json{{"experiment", "compare"},
                       {"mode", to_string(mode)},
                       {"mutation", to_string(kind)},
                       {"image_id", s.image_id},
                       {"infeasible", e.what()}}
                      .dump();
        } catch (const std::exception& e) {
          o.log = json{{"experiment", "compare"},
                       {"mode", to_string(mode)},
                       {"mutation", to_string(kind)},
                       {"image_id", s.image_id},
                       {"error", e.what()}}
                      .dump();
        }
      });
      ComparisonCell cell;
      double fitness_sum = 0.0;
      for (const auto& o : outcomes) {
        out.attack_log.push_back(o.log);
        cell.infeasible += o.infeasible;
        if (!o.attacked) continue;
        ++cell.attacked;
        cell.successes += o.success;
        fitness_sum += o.fitness;
      }
      if (cell.attacked > 0) {
        cell.asr = static_cast<double>(cell.successes) / static_cast<double>(cell.attacked);
        cell.mean_final_fitness = fitness_sum / static_cast<double>(cell.attacked);
      }
      row.push_back(cell);
    }
    out.cells.push_back(std::move(row));
  }
  return out;
}

}  // namespace wmlock
