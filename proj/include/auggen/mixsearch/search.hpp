#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "auggen/generator/condition.hpp"
#include "auggen/numerics/tensor.hpp"

namespace auggen::mixsearch {

using numerics::Tensor;
using Embedding = std::vector<float>;  // unit norm

struct CellMeasure {
  double m_d_i = 0;  // mean over reps of m_d(e_i, e*)
  double m_d_j = 0;
  double m_d_mean = 0;  // m_d_i + m_d_j, in [0, 2]
  double m_s_mean = 0;  // mean over unordered rep pairs of m_s(e*_p, e*_q)
  double m_total = 0;   // m_d_mean + m_s_mean, in [-1, 3]
};

// Both terms are means, so m_total stays on a fixed scale whatever K is.
CellMeasure cell_measure(const std::vector<Embedding>& e_i, const std::vector<Embedding>& e_j,
                         const std::vector<Embedding>& e_star);

struct GridSpec {
  std::vector<double> weights = default_weights();
  int reps = 10;   // K
  int pairs = 16;  // P
  bool diagonal_only = true;
  std::uint64_t seed = 0;
  std::size_t batch = 32;  // generation chunk

  static std::vector<double> default_weights();  // 0.1, 0.2, ..., 1.1
  void validate() const;
  // (alpha, beta) cells in evaluation order: alpha-major, then beta.
  std::vector<std::pair<double, double>> cells() const;
};

struct GridCellResult {
  double alpha = 0, beta = 0;
  double m_d_i = 0, m_d_j = 0;
  double m_d_mean = 0, m_s_mean = 0, m_total = 0;
  std::vector<double> per_pair_total;
};

enum class SelectionPolicy { diagonal, full };
std::string_view to_string(SelectionPolicy p);
SelectionPolicy parse_selection_policy(std::string_view s);

struct SearchReport {
  std::vector<GridCellResult> cells;
  std::vector<std::pair<int, int>> pair_list;  // (i, j), i < j
  int reps = 0;
  std::uint64_t seed = 0;
  SelectionPolicy policy = SelectionPolicy::diagonal;
  std::pair<double, double> selected{0, 0};
  long images_generated = 0;
  long repro_images_cached = 0;  // generations avoided by reusing per-(pair, rep) repro images

  const GridCellResult* find(double alpha, double beta) const;
  // Cells with alpha == beta, ordered by alpha.
  std::vector<GridCellResult> diagonal() const;
};

// argmax m_total over the policy's candidates; ties go to the smaller
// alpha + beta, then the smaller alpha.
std::pair<double, double> select_weights(const SearchReport& report, SelectionPolicy policy);

// Everything the search needs from the trained models. Both must be pure
// functions of their arguments.
struct SearchBackend {
  // One image per (condition, latent seed).
  std::function<std::vector<Tensor>(const std::vector<generator::ConditionVector>&,
                                    const std::vector<std::uint64_t>&)>
      generate;
  // Unit embeddings, one per image.
  std::function<std::vector<Embedding>(const std::vector<Tensor>&)> embed;
  int class_count = 0;
};

// Latent seed shared by X^i, X^j and X* of pair p, repetition k.
std::uint64_t pair_latent_seed(std::uint64_t search_seed, int pair_index, int rep);

// P distinct unordered pairs from `ls` (with repeats only once every pair is used).
std::vector<std::pair<int, int>> draw_pairs(const std::vector<int>& ls, int count, std::uint64_t seed);

// Per-cell progress; index counts finished cells.
using CellCallback = std::function<void(std::size_t index, const GridCellResult&)>;

// `make_backend` is called once per worker; workers own their backend.
SearchReport grid_search(const std::function<SearchBackend()>& make_backend, const std::vector<int>& ls,
                         const GridSpec& spec, int jobs = 1, const CellCallback& on_cell = {});

// One line per cell, plus header lines with the selection and the pair list.
std::string report_to_text(const SearchReport& report);
SearchReport report_from_text(const std::string& text);
void save_report(const SearchReport& report, const std::filesystem::path& file);
SearchReport load_report(const std::filesystem::path& file);

// Heatmap with alpha on x, beta on y, color = m_total. Diagonal-only reports
// render the missing cells blank.
std::string heatmap_svg(const SearchReport& report);

// Per-mix weight rule used when generating D^aug.
enum class WeightPreset { half, full, random, half_plus_plus };
std::string_view to_string(WeightPreset p);
WeightPreset parse_weight_preset(std::string_view s);

inline const std::vector<double> kRandomWeightSet{0.1, 0.3, 0.5, 0.7, 0.9, 1.0, 1.1};

struct WeightRule {
  WeightPreset preset = WeightPreset::half;
  std::pair<double, double> fixed{0.5, 0.5};
  std::uint64_t seed = 0;

  // Weights for the mix with the given index.
  std::pair<double, double> weights(std::uint64_t mix_index) const;
  std::string describe() const;
};

// `selected` is required for half_plus_plus.
WeightRule preset_weights(WeightPreset preset, const std::optional<std::pair<double, double>>& selected,
                          std::uint64_t seed);

}  // namespace auggen::mixsearch
