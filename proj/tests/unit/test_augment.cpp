#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "../support/tempdir.hpp"
#include "auggen/augment/augment.hpp"
#include "auggen/dataset/image_io.hpp"
#include "auggen/generator/model.hpp"
#include "doctest.h"

using namespace auggen;
using namespace auggen::augment;
using auggen::testing::TempDir;
using generator::ConditionVector;

namespace {

// Pure stub: pixel k of a 1x2x2 image mixes the condition and the latent seed.
std::vector<Tensor> stub_generate(const std::vector<ConditionVector>& c, const std::vector<std::uint64_t>& s) {
  std::vector<Tensor> out;
  for (std::size_t n = 0; n < c.size(); ++n) {
    Tensor t({1, 2, 2});
    double acc = 0;
    for (std::size_t k = 0; k < c[n].size(); ++k) acc += c[n].values[k] * static_cast<double>(k + 1);
    for (std::size_t k = 0; k < 4; ++k) {
      t[k] = static_cast<float>(std::fmod(acc * 0.37 + static_cast<double>((s[n] >> (8 * k)) & 0xff) / 255.0, 2.0) - 1.0);
    }
    out.push_back(std::move(t));
  }
  return out;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

AugConfig config(int c, int n) {
  AugConfig cfg;
  cfg.classes = c;
  cfg.samples = n;
  cfg.pair_seed = 17;
  cfg.sample_seed = 23;
  cfg.batch = 4;
  return cfg;
}

const std::vector<int> kLs{0, 2, 3, 5, 6};

}  // namespace

TEST_CASE("generate_aug basics") {
  TempDir dir("aug");
  const auto r = generate_aug(stub_generate, 8, kLs, config(2, 3), dir / "a");
  CHECK(r.manifest.records.size() == 6);
  CHECK(r.manifest.class_count == 10);
  REQUIRE(r.recipes.size() == 2);
  CHECK(std::pair{r.recipes[0].i, r.recipes[0].j} != std::pair{r.recipes[1].i, r.recipes[1].j});
  std::set<int> classes;
  for (const auto& rec : r.manifest.records) {
    CHECK(rec.provenance == dataset::Provenance::aug);
    REQUIRE(rec.recipe_id.has_value());
    const auto& mix = r.recipes.at(*rec.recipe_id);
    CHECK(rec.class_id == mix.new_class);
    classes.insert(rec.class_id);
  }
  CHECK(classes == std::set<int>{8, 9});
  for (const auto& mix : r.recipes) {
    CHECK(mix.i < mix.j);
    CHECK(std::count(kLs.begin(), kLs.end(), mix.i) == 1);
    CHECK(std::count(kLs.begin(), kLs.end(), mix.j) == 1);
    CHECK(mix.alpha == 0.5);
    CHECK(mix.sample_seeds.size() == 3);
  }
  CHECK(load_recipes(dir / "a" / kRecipeFileName) == r.recipes);
  CHECK(dataset::load_manifest(dir / "a" / dataset::kManifestFileName).records == r.manifest.records);

  SUBCASE("class ids stay disjoint after merging with the source data") {
    dataset::DatasetManifest orig;
    orig.class_count = 8;
    for (int c = 0; c < 8; ++c) orig.records.push_back({static_cast<std::uint64_t>(c), c, dataset::Provenance::orig, {}, "x"});
    const auto merged = dataset::merge(orig, r.manifest);
    std::set<int> aug_ids, orig_ids;
    for (const auto& rec : merged.records) {
      (rec.provenance == dataset::Provenance::aug ? aug_ids : orig_ids).insert(rec.class_id);
    }
    for (int c : aug_ids) CHECK(orig_ids.count(c) == 0);
    CHECK(merged.records.size() == 14);
  }
}

TEST_CASE("generate_aug is deterministic down to the bytes") {
  TempDir dir("aug_det");
  const auto a = generate_aug(stub_generate, 8, kLs, config(3, 4), dir / "a");
  const auto b = generate_aug(stub_generate, 8, kLs, config(3, 4), dir / "b");
  CHECK(slurp(dir / "a" / dataset::kManifestFileName) == slurp(dir / "b" / dataset::kManifestFileName));
  CHECK(slurp(dir / "a" / kRecipeFileName) == slurp(dir / "b" / kRecipeFileName));
  for (const auto& rec : a.manifest.records) CHECK(slurp(a.manifest.image_path(rec)) == slurp(b.manifest.image_path(rec)));
  CHECK(pair_order(kLs, 17) == pair_order(kLs, 17));
  CHECK(pair_order(kLs, 17) != pair_order(kLs, 18));
  CHECK(pair_order(kLs, 17).size() == 10);
}

TEST_CASE("aug config validation") {
  AugConfig large = config(10000, 20);
  std::vector<int> big(200);
  for (int k = 0; k < 200; ++k) big[static_cast<std::size_t>(k)] = k;
  CHECK_NOTHROW(large.validate(big.size()));
  CHECK(large.expected_images() == 200000);
  CHECK_THROWS_AS(config(11, 2).validate(kLs.size()), InvalidArgument);
  CHECK_THROWS_AS(config(0, 2).validate(kLs.size()), InvalidArgument);
  CHECK_THROWS_AS(config(1, 0).validate(kLs.size()), InvalidArgument);
  CHECK_THROWS_AS(plan_recipes({1}, 8, config(1, 1)), InvalidArgument);
  CHECK_THROWS_AS(plan_recipes({1, 9}, 8, config(1, 1)), InvalidArgument);
  CHECK(plan_recipes(kLs, 8, config(10, 1)).size() == 10);

  auto probe = config(4, 1);
  probe.pair_offset = 6;
  const auto held = plan_recipes(kLs, 8, probe);
  const auto order = pair_order(kLs, 17);
  for (int r = 0; r < 4; ++r) CHECK(std::pair{held[r].i, held[r].j} == order[static_cast<std::size_t>(6 + r)]);
  probe.pair_offset = 7;
  CHECK_THROWS_AS(plan_recipes(kLs, 8, probe), InvalidArgument);
}

TEST_CASE("weight rules flow into recipes") {
  auto cfg = config(6, 1);
  cfg.rule = mixsearch::preset_weights(mixsearch::WeightPreset::random, {}, 41);
  const auto recipes = plan_recipes(kLs, 8, cfg);
  for (const auto& r : recipes) CHECK(std::pair{r.alpha, r.beta} == cfg.rule.weights(r.recipe_id));
  cfg.rule = mixsearch::preset_weights(mixsearch::WeightPreset::half_plus_plus, std::pair{0.7, 0.7}, 0);
  for (const auto& r : plan_recipes(kLs, 8, cfg)) CHECK(std::pair{r.alpha, r.beta} == std::pair{0.7, 0.7});
}

TEST_CASE("sweeps nest") {
  TempDir dir("aug_sweep");
  SUBCASE("doubling N keeps the class set and doubles the counts") {
    const auto s = sweep_aug(stub_generate, 8, kLs, config(2, 1), {{2, 1}, {2, 2}}, dir.path());
    REQUIRE(s.size() == 2);
    REQUIRE(s[0].result);
    REQUIRE(s[1].result);
    CHECK(s[0].result->manifest.class_ids() == s[1].result->manifest.class_ids());
    CHECK(s[1].result->manifest.records.size() == 2 * s[0].result->manifest.records.size());
  }
  SUBCASE("smaller runs are subsets of larger ones") {
    const auto s = sweep_aug(stub_generate, 8, kLs, config(1, 1), {{4, 2}, {4, 5}, {2, 5}}, dir.path());
    std::map<std::uint64_t, std::string> big;
    for (const auto& rec : s[1].result->manifest.records) big[rec.sample_id] = slurp(s[1].result->manifest.image_path(rec));
    for (int k : {0, 2}) {
      for (const auto& rec : s[static_cast<std::size_t>(k)].result->manifest.records) {
        REQUIRE(big.count(rec.sample_id) == 1);
        CHECK(big[rec.sample_id] == slurp(s[static_cast<std::size_t>(k)].result->manifest.image_path(rec)));
      }
    }
    CHECK(std::equal(s[2].result->recipes.begin(), s[2].result->recipes.end(), s[1].result->recipes.begin(),
                     [](const MixRecipe& a, const MixRecipe& b) { return a.i == b.i && a.j == b.j; }));
  }
  SUBCASE("a failing cell does not stop the sweep") {
    const auto s = sweep_aug(stub_generate, 8, kLs, config(1, 1), {{2, 1}, {50, 1}, {3, 1}}, dir.path());
    CHECK(s[0].result.has_value());
    CHECK_FALSE(s[1].result.has_value());
    CHECK(s[1].error.find("exceeds") != std::string::npos);
    CHECK(s[2].result.has_value());
  }
  SUBCASE("sweep determinism") {
    const auto a = sweep_aug(stub_generate, 8, kLs, config(1, 1), {{3, 2}}, dir / "x");
    const auto b = sweep_aug(stub_generate, 8, kLs, config(1, 1), {{3, 2}}, dir / "y");
    CHECK(a[0].result->recipes == b[0].result->recipes);
    CHECK(a[0].result->manifest.records == b[0].result->manifest.records);
  }
}

TEST_CASE("recipe table text form") {
  const auto recipes = plan_recipes(kLs, 8, config(3, 2));
  const auto text = recipes_to_text(recipes);
  CHECK(text.rfind("# recipe_id\ti\tj\talpha\tbeta\tnew_class\tsample_seeds\n", 0) == 0);
  CHECK(recipes_from_text(text) == recipes);
  CHECK_THROWS_AS(recipes_from_text("1\t2\n"), FormatError);
}

TEST_CASE("generate_aug with a real sampler") {
  generator::GeneratorConfig g;
  g.net.image_size = 8;
  g.net.base_channels = 4;
  g.net.emb_dim = 8;
  g.net.fourier_dim = 4;
  g.net.groups = 2;
  g.sampler.steps = 2;
  generator::DenoiserModel model(g, 8, 1);
  TempDir dir("aug_real");
  const auto gen = [&](const std::vector<ConditionVector>& c, const std::vector<std::uint64_t>& s) {
    return generator::generate(model, c, s, 3);
  };
  const auto r = generate_aug(gen, 8, kLs, config(2, 2), dir.path(), dataset::ImageFormat::png);
  CHECK(r.manifest.records.size() == 4);
  const auto images = dataset::load_images(r.manifest);
  CHECK(images.images.front().shape() == numerics::Shape{1, 8, 8});
}
