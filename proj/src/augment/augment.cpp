#include "auggen/augment/augment.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "auggen/dataset/image_io.hpp"
#include "auggen/error.hpp"
#include "auggen/generator/model.hpp"
#include "auggen/numerics/rng.hpp"

namespace auggen::augment {

using numerics::derive_seed;
using numerics::tag;

namespace {

std::vector<int> distinct(const std::vector<int>& ls) {
  std::vector<int> s = ls;
  std::sort(s.begin(), s.end());
  s.erase(std::unique(s.begin(), s.end()), s.end());
  return s;
}

}  // namespace

void AugConfig::validate(std::size_t ls_size) const {
  if (classes < 1) throw InvalidArgument("aug: C must be >= 1");
  if (samples < 1) throw InvalidArgument("aug: N must be >= 1");
  if (samples >= (1 << 20)) throw InvalidArgument("aug: N must be < 2^20");
  if (batch < 1) throw InvalidArgument("aug: batch must be >= 1");
  if (ls_size < 2) throw InvalidArgument("aug: L_s needs at least 2 classes");
  if (pair_offset < 0) throw InvalidArgument("aug: pair offset must be >= 0");
  const auto available = ls_size * (ls_size - 1) / 2;
  if (static_cast<std::size_t>(classes) + static_cast<std::size_t>(pair_offset) > available) {
    throw InvalidArgument("aug: C = " + std::to_string(classes) +
                          (pair_offset ? " after " + std::to_string(pair_offset) + " skipped pairs" : std::string()) +
                          " exceeds the " + std::to_string(available) + " distinct pairs of an L_s with " +
                          std::to_string(ls_size) + " classes");
  }
}

std::vector<std::pair<int, int>> pair_order(const std::vector<int>& ls, std::uint64_t pair_seed) {
  const auto s = distinct(ls);
  std::vector<std::pair<int, int>> all;
  for (std::size_t a = 0; a < s.size(); ++a) {
    for (std::size_t b = a + 1; b < s.size(); ++b) all.emplace_back(s[a], s[b]);
  }
  numerics::Rng rng(derive_seed(pair_seed, {tag("aug_pairs")}));
  std::shuffle(all.begin(), all.end(), rng.engine());
  return all;
}

std::vector<MixRecipe> plan_recipes(const std::vector<int>& ls, int source_class_count, const AugConfig& cfg) {
  const auto s = distinct(ls);
  cfg.validate(s.size());
  for (int c : s) {
    if (c < 0 || c >= source_class_count) throw InvalidArgument("aug: L_s class " + std::to_string(c) + " out of range");
  }
  const auto pairs = pair_order(s, cfg.pair_seed);
  std::vector<MixRecipe> out;
  for (int r = 0; r < cfg.classes; ++r) {
    MixRecipe m;
    m.recipe_id = static_cast<std::uint64_t>(r);
    std::tie(m.i, m.j) = pairs[static_cast<std::size_t>(cfg.pair_offset + r)];
    std::tie(m.alpha, m.beta) = cfg.rule.weights(m.recipe_id);
    m.new_class = source_class_count + r;
    const std::uint64_t rs = derive_seed(cfg.sample_seed, {tag("aug_recipe"), m.recipe_id});
    for (int n = 0; n < cfg.samples; ++n) m.sample_seeds.push_back(generator::latent_seed(rs, n));
    out.push_back(std::move(m));
  }
  return out;
}

AugResult generate_aug(const GenerateFn& generate, int source_class_count, const std::vector<int>& ls,
                       const AugConfig& cfg, const std::filesystem::path& out_dir, dataset::ImageFormat format) {
  AugResult res;
  res.recipes = plan_recipes(ls, source_class_count, cfg);
  auto& m = res.manifest;
  m.root = out_dir;
  m.class_count = source_class_count + cfg.classes;
  m.source_seed = cfg.sample_seed;
  m.notes.push_back("weights " + cfg.rule.describe());

  std::vector<generator::ConditionVector> conds;
  std::vector<std::uint64_t> seeds;
  std::vector<std::pair<std::size_t, int>> owner;  // (recipe index, sample index)
  auto flush = [&] {
    if (conds.empty()) return;
    const auto images = generate(conds, seeds);
    if (images.size() != conds.size()) throw ShapeError("generate_aug: generator returned the wrong image count");
    for (std::size_t k = 0; k < images.size(); ++k) {
      const auto& rec = res.recipes[owner[k].first];
      dataset::ManifestRecord r;
      r.sample_id = kAugIdBase + (rec.recipe_id << 20) + static_cast<std::uint64_t>(owner[k].second);
      r.class_id = rec.new_class;
      r.provenance = dataset::Provenance::aug;
      r.recipe_id = rec.recipe_id;
      char buf[80];
      std::snprintf(buf, sizeof(buf), "aug/c%06d/%014llu", rec.new_class, static_cast<unsigned long long>(r.sample_id));
      r.path = std::string(buf) + std::string(dataset::file_extension(format));
      dataset::write_image(m.root / r.path, images[k], format);
      m.records.push_back(std::move(r));
    }
    conds.clear();
    seeds.clear();
    owner.clear();
  };
  for (std::size_t r = 0; r < res.recipes.size(); ++r) {
    const auto& rec = res.recipes[r];
    const auto c = generator::mix_conditions(generator::one_hot(source_class_count, rec.i),
                                             generator::one_hot(source_class_count, rec.j), rec.alpha, rec.beta);
    for (int n = 0; n < cfg.samples; ++n) {
      conds.push_back(c);
      seeds.push_back(rec.sample_seeds[static_cast<std::size_t>(n)]);
      owner.emplace_back(r, n);
      if (conds.size() == cfg.batch) flush();
    }
  }
  flush();
  m.validate(true);
  dataset::save_manifest(m, out_dir / dataset::kManifestFileName);
  save_recipes(res.recipes, out_dir / kRecipeFileName);
  return res;
}

std::vector<SweepCell> sweep_aug(const GenerateFn& generate, int source_class_count, const std::vector<int>& ls,
                                 const AugConfig& base, const std::vector<std::pair<int, int>>& grid,
                                 const std::filesystem::path& out_dir, dataset::ImageFormat format) {
  std::vector<SweepCell> out;
  for (const auto& [c, n] : grid) {
    SweepCell cell;
    cell.classes = c;
    cell.samples = n;
    AugConfig cfg = base;
    cfg.classes = c;
    cfg.samples = n;
    try {
      cell.result = generate_aug(generate, source_class_count, ls, cfg,
                                 out_dir / ("C" + std::to_string(c) + "_N" + std::to_string(n)), format);
    } catch (const std::exception& e) {
      cell.error = e.what();
    }
    out.push_back(std::move(cell));
  }
  return out;
}

std::string recipes_to_text(const std::vector<MixRecipe>& recipes) {
  std::ostringstream out;
  out << "# recipe_id\ti\tj\talpha\tbeta\tnew_class\tsample_seeds\n";
  char buf[64];
  for (const auto& r : recipes) {
    out << r.recipe_id << '\t' << r.i << '\t' << r.j << '\t';
    std::snprintf(buf, sizeof(buf), "%.17g\t%.17g", r.alpha, r.beta);
    out << buf << '\t' << r.new_class << '\t';
    for (std::size_t k = 0; k < r.sample_seeds.size(); ++k) out << (k ? "," : "") << r.sample_seeds[k];
    out << '\n';
  }
  return out.str();
}

std::vector<MixRecipe> recipes_from_text(const std::string& text) {
  std::vector<MixRecipe> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    MixRecipe r;
    std::string seeds;
    ls >> r.recipe_id >> r.i >> r.j >> r.alpha >> r.beta >> r.new_class >> seeds;
    if (ls.fail()) throw FormatError("recipe table: bad line '" + line + "'");
    std::istringstream ss(seeds);
    std::string tok;
    while (std::getline(ss, tok, ',')) r.sample_seeds.push_back(std::stoull(tok));
    out.push_back(std::move(r));
  }
  return out;
}

void save_recipes(const std::vector<MixRecipe>& recipes, const std::filesystem::path& file) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file);
  if (!out) throw Error("cannot write " + file.string());
  out << recipes_to_text(recipes);
}

std::vector<MixRecipe> load_recipes(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw FormatError("cannot read " + file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return recipes_from_text(ss.str());
}

}  // namespace auggen::augment
