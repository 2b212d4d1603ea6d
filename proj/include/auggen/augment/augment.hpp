#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "auggen/dataset/manifest.hpp"
#include "auggen/generator/condition.hpp"
#include "auggen/mixsearch/search.hpp"

namespace auggen::augment {

using numerics::Tensor;

// One synthetic class: alpha * c_i + beta * c_j.
struct MixRecipe {
  std::uint64_t recipe_id = 0;
  int i = 0, j = 0;  // source class ids, i < j
  double alpha = 0, beta = 0;
  int new_class = 0;
  std::vector<std::uint64_t> sample_seeds;  // one latent seed per sample

  friend bool operator==(const MixRecipe&, const MixRecipe&) = default;
};

struct AugConfig {
  int classes = 32;  // C; large-scale runs use 10k-50k
  int samples = 10;  // N per mixed class
  mixsearch::WeightRule rule;
  std::uint64_t pair_seed = 0;
  std::uint64_t sample_seed = 0;
  std::size_t batch = 32;
  int pair_offset = 0;  // skip this many pairs of the seeded order (probe sets)

  // Throws when offset + C exceeds the unordered pairs available in an L_s of this size.
  void validate(std::size_t ls_size) const;
  long expected_images() const { return static_cast<long>(classes) * samples; }
};

inline constexpr std::uint64_t kAugIdBase = std::uint64_t{3} << 40;

// All unordered pairs of `ls` in the order fixed by `pair_seed`. Every run
// with the same seed takes a prefix of this list, so smaller C nests.
std::vector<std::pair<int, int>> pair_order(const std::vector<int>& ls, std::uint64_t pair_seed);

// Recipes without generation. New class ids start at `source_class_count`.
std::vector<MixRecipe> plan_recipes(const std::vector<int>& ls, int source_class_count, const AugConfig& cfg);

using GenerateFn = std::function<std::vector<Tensor>(const std::vector<generator::ConditionVector>&,
                                                     const std::vector<std::uint64_t>&)>;

struct AugResult {
  dataset::DatasetManifest manifest;
  std::vector<MixRecipe> recipes;
};

inline constexpr const char* kRecipeFileName = "recipes.tsv";

// Writes images, manifest and recipe table under out_dir.
AugResult generate_aug(const GenerateFn& generate, int source_class_count, const std::vector<int>& ls,
                       const AugConfig& cfg, const std::filesystem::path& out_dir,
                       dataset::ImageFormat format = dataset::ImageFormat::raw);

struct SweepCell {
  int classes = 0, samples = 0;
  std::optional<AugResult> result;
  std::string error;  // set when this cell failed
};

// One D^aug per (C, N), each in out_dir/"C<c>_N<n>". Failures stay local to their cell.
std::vector<SweepCell> sweep_aug(const GenerateFn& generate, int source_class_count, const std::vector<int>& ls,
                                 const AugConfig& base, const std::vector<std::pair<int, int>>& grid,
                                 const std::filesystem::path& out_dir,
                                 dataset::ImageFormat format = dataset::ImageFormat::raw);

std::string recipes_to_text(const std::vector<MixRecipe>& recipes);
std::vector<MixRecipe> recipes_from_text(const std::string& text);
void save_recipes(const std::vector<MixRecipe>& recipes, const std::filesystem::path& file);
std::vector<MixRecipe> load_recipes(const std::filesystem::path& file);

}  // namespace auggen::augment
