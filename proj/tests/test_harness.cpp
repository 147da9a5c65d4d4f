#include "doctest.h"
#include "fixtures.hpp"
#include "json.hpp"
#include "wmlock/errors.hpp"
#include "wmlock/harness.hpp"
#include "wmlock/pipeline.hpp"
#include "wmlock/png_io.hpp"

#include <fstream>
#include <sstream>

using namespace wmtest;
namespace fs = std::filesystem;

namespace {

const SpotLayout kLayout{32, 8};

// Model reading the spots at the two other corners.
TemplateModel mirrored_model() {
  TemplateModel m = weak_spot_model(kLayout);
  for (auto& p : m.patches) p.x = kLayout.size - p.x - kLayout.logo;
  m.weights.clear();
  m.build_weights();
  return m;
}

// Spot images that also carry the mirrored spots, so both models agree.
std::vector<LoadedSample> two_model_samples(int n, std::uint64_t seed) {
  auto set = make_spot_set(kLayout, n, seed, 0.4, 0.6);
  const TemplateModel mirror = mirrored_model();
  std::vector<LoadedSample> out;
  for (std::size_t i = 0; i < set.size(); ++i) {
    auto& img = set[i].image;
    for (const auto& p : mirror.patches) {
      const auto [sx, sy] = kLayout.spot(p.class_index);
      for (int y = 0; y < kLayout.logo; ++y)
        for (int x = 0; x < kLayout.logo; ++x)
          for (int c = 0; c < 3; ++c) img.at(p.x + x, p.y + y, c) = img.at(sx + x, sy + y, c);
    }
    out.push_back({spot_image_id(i), set[i].label, img, set[i].lesion});
  }
  return out;
}

AttackSetup quick_setup() {
  AttackSetup s;
  s.es.population = 8;
  s.es.generations = 3;
  s.es.seed = 5;
  s.mask = small_mask_config();
  return s;
}

NamedOracle named(const std::string& name, const TemplateModel& m) {
  return NamedOracle{name, [m] { return std::make_shared<TemplateOracle>(m); }, {}};
}

}  // namespace

TEST_CASE("asr counting") {
  std::vector<int> labels(120, 0), clean(120, 0), locked(120, 0);
  for (int i = 100; i < 120; ++i) clean[i] = 1;  // wrong when clean
  for (int i = 0; i < 72; ++i) locked[i] = 1;
  locked[110] = 1;
  auto r = asr_from_predictions(labels, clean, locked);
  CHECK(r.denominator == 100);
  CHECK(r.flipped == 72);
  CHECK(r.asr == doctest::Approx(0.72));
  CHECK(asr_from_predictions(labels, clean, clean).asr == 0.0);
  std::vector<int> all(120, 1);
  CHECK(asr_from_predictions(labels, clean, all).asr == 1.0);
  CHECK_THROWS_AS(asr_from_predictions(labels, all, all), UndefinedMetricError);
  locked[5] = -1;  // failed query on a locked image counts as not flipped
  CHECK(asr_from_predictions(labels, clean, locked).flipped == 71);
}

TEST_CASE("accuracy and asr with an oracle") {
  BrightnessOracle o;
  std::vector<LoadedSample> samples;
  std::vector<RgbaImage> locked;
  for (int i = 0; i < 10; ++i) {
    RgbaImage img(4, 4);
    const std::uint8_t v = i < 7 ? 10 : 240;  // dark -> class 0
    img.fill(v, v, v, 255);
    samples.push_back({"s" + std::to_string(i), i < 5 ? 0 : 1, img, std::nullopt});
    RgbaImage l(4, 4);
    const std::uint8_t lv = i < 3 ? 250 : v;
    l.fill(lv, lv, lv, 255);
    locked.push_back(l);
  }
  const auto acc = accuracy(o, samples);
  CHECK(acc.correct == 8);  // 0..4 right, 5,6 wrong, 7..9 right
  CHECK(acc.accuracy == doctest::Approx(0.8));
  const auto a = asr(o, samples, locked);
  CHECK(a.denominator == 8);
  CHECK(a.flipped == 3);
  CHECK_THROWS_AS(accuracy(o, {}), UndefinedMetricError);
}

TEST_CASE("transfer matrix layout and n/a cells") {
  const auto samples = two_model_samples(16, 3);
  const TemplateModel a = weak_spot_model(kLayout);
  const TemplateModel b = mirrored_model();
  const std::vector<NamedOracle> sources{named("A", a)};
  const std::vector<NamedOracle> targets{named("A", a), named("A_copy", a), named("B", b)};
  const auto m = transfer_matrix(sources, targets, samples, solid_logo(8, 8), quick_setup());
  CHECK(m.kept == 16);
  REQUIRE(m.successes[0] > 0);
  CHECK_FALSE(m.cells[0][0]);
  CHECK(*m.cells[0][1] == 1.0);
  CHECK(*m.cells[0][2] < *m.cells[0][1]);
  CHECK(m.attack_log.size() == 16);
  for (const auto& l : m.attack_log) CHECK(nlohmann::json::parse(l).contains("image_id"));

  const std::string csv = m.to_csv();
  std::istringstream in(csv);
  std::string header, row, footer;
  std::getline(in, header);
  std::getline(in, row);
  std::getline(in, footer);
  CHECK(header == "source,A,A_copy,B,source_asr,row_average");
  CHECK(row.rfind("A,n/a,1.000000,", 0) == 0);
  CHECK(footer.rfind("column_average,n/a,1.000000,", 0) == 0);

  const auto again = transfer_matrix(sources, targets, samples, solid_logo(8, 8), quick_setup(), 2);
  CHECK(again.to_csv() == csv);
  CHECK(nlohmann::json::parse(m.to_json())["kept"] == 16);
}

TEST_CASE("ensemble sources mark their members n/a") {
  const auto samples = two_model_samples(8, 4);
  const TemplateModel a = weak_spot_model(kLayout);
  const TemplateModel b = mirrored_model();
  NamedOracle ens{"ENS",
                  [a, b] {
                    return std::make_shared<EnsembleOracle>(std::vector<EnsembleMember>{
                        {std::make_shared<TemplateOracle>(a), 0.5, "A"},
                        {std::make_shared<TemplateOracle>(b), 0.5, "B"}});
                  },
                  {"A", "B"}};
  const auto m = transfer_matrix({ens}, {named("A", a), named("B", b), named("C", a)}, samples,
                                 solid_logo(8, 8), quick_setup());
  CHECK_FALSE(m.cells[0][0]);
  CHECK_FALSE(m.cells[0][1]);
  if (m.successes[0] > 0) CHECK(m.cells[0][2]);
}

TEST_CASE("transfer keeps only samples every model gets right") {
  auto samples = two_model_samples(6, 9);
  samples[0].label = 1 - samples[0].label;
  const TemplateModel a = weak_spot_model(kLayout);
  const auto m = transfer_matrix({named("A", a)}, {named("B", mirrored_model())}, samples,
                                 solid_logo(8, 8), quick_setup());
  CHECK(m.kept == 5);
  CHECK_THROWS_AS(transfer_matrix({}, {named("B", a)}, samples, solid_logo(8, 8), quick_setup()),
                  ConfigError);
}

TEST_CASE("mutation comparison layout") {
  const auto samples = two_model_samples(12, 6);
  const auto oracle = std::make_shared<TemplateOracle>(weak_spot_model(kLayout));
  const auto c = compare_mutation(samples, solid_logo(8, 8), shared_oracle_factory(oracle),
                                  quick_setup(),
                                  {ConstraintMode::kWap, ConstraintMode::kWsmIn, ConstraintMode::kWsmOut});
  CHECK(c.correct_clean == 12);
  const std::string csv = c.to_csv();
  CHECK(csv.rfind("mutation,wap,wsm-in,wsm-out\nbasin-hopping,", 0) == 0);
  CHECK(csv.find("\nrandom,") != std::string::npos);
  const auto& bh = c.cell(MutationKind::kBasinHopping, ConstraintMode::kWap);
  CHECK(bh.attacked + bh.infeasible == 12);
  CHECK(c.cell(MutationKind::kBasinHopping, ConstraintMode::kWsmOut).asr <= bh.asr);
  CHECK(c.attack_log.size() == 12u * 2 * 3);
}

TEST_CASE("zero generations makes both rows equal") {
  const auto samples = two_model_samples(12, 8);
  const auto oracle = std::make_shared<TemplateOracle>(weak_spot_model(kLayout));
  AttackSetup s = quick_setup();
  s.es.generations = 0;
  const auto c = compare_mutation(samples, solid_logo(8, 8), shared_oracle_factory(oracle), s,
                                  {ConstraintMode::kWap});
  CHECK(c.cell(MutationKind::kBasinHopping, ConstraintMode::kWap).asr ==
        c.cell(MutationKind::kRandom, ConstraintMode::kWap).asr);
}

TEST_CASE("infeasible images are counted per cell") {
  auto samples = two_model_samples(4, 10);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) samples[0].mask->set(x, y);
  const auto oracle = std::make_shared<TemplateOracle>(weak_spot_model(kLayout));
  const auto c = compare_mutation(samples, solid_logo(8, 8), shared_oracle_factory(oracle),
                                  quick_setup(), {ConstraintMode::kWsmOut});
  CHECK(c.cell(MutationKind::kBasinHopping, ConstraintMode::kWsmOut).infeasible == 1);
}

TEST_CASE("dataset loading") {
  TempDir dir("ds");
  write_spot_dataset(dir.path(), make_spot_set(kLayout, 4, 2));
  const auto ds = LabeledDataset::load(dir / "images", dir / "labels.csv", 2, dir / "masks");
  CHECK(ds.samples.size() == 4);
  const auto loaded = load_samples(ds, true);
  CHECK(loaded[0].mask);
  CHECK(loaded[0].image.width() == 32);
  CHECK_THROWS_AS(LabeledDataset::load(dir / "images", dir / "labels.csv", 1), ConfigError);
  std::ofstream(dir / "bad.csv") << "name,label\nx.png,0\n";
  CHECK_THROWS_AS(LabeledDataset::load(dir / "images", dir / "bad.csv", 2), ConfigError);
  std::ofstream(dir / "missing.csv") << "image_id,label\nnope.png,0\n";
  CHECK_THROWS_AS(LabeledDataset::load(dir / "images", dir / "missing.csv", 2), Error);
}
