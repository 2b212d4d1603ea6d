#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "../support/tempdir.hpp"
#include "auggen/mixsearch/backend.hpp"
#include "doctest.h"

using namespace auggen;
using namespace auggen::mixsearch;
using generator::ConditionVector;
using numerics::Rng;

namespace {

Embedding unit(std::vector<double> v) {
  double n = 0;
  for (double x : v) n += x * x;
  Embedding e;
  for (double x : v) e.push_back(static_cast<float>(x / std::sqrt(n)));
  return e;
}

Embedding random_unit(std::size_t d, Rng& rng) {
  std::vector<double> v(d);
  for (auto& x : v) x = rng.normal();
  return unit(v);
}

SearchReport fixture_report(const std::vector<std::pair<double, double>>& diag) {
  SearchReport r;
  for (auto [w, m] : diag) {
    GridCellResult c;
    c.alpha = c.beta = w;
    c.m_total = m;
    r.cells.push_back(c);
  }
  return r;
}

// Image = [condition values..., latent tag]; shape [1, 1, class_count + 1].
std::vector<Tensor> encode(const std::vector<ConditionVector>& conds, const std::vector<std::uint64_t>& seeds) {
  std::vector<Tensor> out;
  for (std::size_t n = 0; n < conds.size(); ++n) {
    Tensor t({1, 1, conds[n].size() + 1});
    for (std::size_t k = 0; k < conds[n].size(); ++k) t[k] = conds[n].values[k];
    t[conds[n].size()] = static_cast<float>(seeds[n] % 997);
    out.push_back(std::move(t));
  }
  return out;
}

// Emits a class-i image whatever the weights; class i is the smaller id.
SearchBackend ignore_weights_backend(int classes) {
  SearchBackend b;
  b.class_count = classes;
  b.generate = [](const std::vector<ConditionVector>& c, const std::vector<std::uint64_t>& s) {
    std::vector<ConditionVector> src;
    for (const auto& v : c) src.push_back(generator::one_hot(static_cast<int>(v.size()), v.support().front()));
    return encode(src, s);
  };
  b.embed = [classes](const std::vector<Tensor>& images) {
    std::vector<Embedding> out;
    for (const auto& img : images) {
      const auto c = static_cast<std::size_t>(std::max_element(img.data(), img.data() + classes) - img.data());
      Rng jitter(static_cast<std::uint64_t>(img[static_cast<std::size_t>(classes)]));
      std::vector<double> v(static_cast<std::size_t>(classes), 0.0);
      v[c] = 1.0;
      for (auto& x : v) x += 0.2 * jitter.normal();
      out.push_back(unit(v));
    }
    return out;
  };
  return b;
}

// e* = normalize((1 - t) e_0 + t e_1), t = beta / (alpha + beta), for two
// classes at the given angle.
SearchBackend interpolating_backend(double angle) {
  SearchBackend b;
  b.class_count = 2;
  b.generate = [](const std::vector<ConditionVector>& c, const std::vector<std::uint64_t>& s) { return encode(c, s); };
  b.embed = [angle](const std::vector<Tensor>& images) {
    std::vector<Embedding> out;
    for (const auto& img : images) {
      const double t = img[1] / (static_cast<double>(img[0]) + img[1]);
      out.push_back(unit({(1 - t) + t * std::cos(angle), t * std::sin(angle)}));
    }
    return out;
  };
  return b;
}

}  // namespace

TEST_CASE("cell_measure") {
  SUBCASE("hand-derived K=2 fixture") {
    const Embedding ei = unit({1, 0}), ej = unit({0, 1});
    const Embedding s = {static_cast<float>(std::numbers::sqrt2 / 2), static_cast<float>(std::numbers::sqrt2 / 2)};
    const auto m = cell_measure({ei, ei}, {ej, ej}, {s, s});
    CHECK(std::abs(m.m_d_mean - 2 * (1 - std::numbers::sqrt2 / 2)) < 1e-9);
    CHECK(std::abs(m.m_s_mean - 1.0) < 1e-9);
    CHECK(std::abs(m.m_total - 1.5857864376269049) < 1e-9);
  }
  SUBCASE("e* equal to e_i and orthogonal to e_j") {
    const Embedding ei = {1, 0, 0}, ej = {0, 1, 0};
    const auto m = cell_measure({ei, ei, ei}, {ej, ej, ej}, {ei, ei, ei});
    CHECK(m.m_d_i == 0);
    CHECK(m.m_d_j == 1);
    CHECK(m.m_s_mean == 1);
    CHECK(m.m_total == 2);
  }
  SUBCASE("mutually orthogonal e*") {
    const Embedding a = {1, 0, 0}, b = {0, 1, 0}, c = {0, 0, 1};
    CHECK(cell_measure({a, a, a}, {b, b, b}, {a, b, c}).m_s_mean == 0);
  }
  SUBCASE("bounds over random embeddings") {
    Rng rng(1);
    for (int trial = 0; trial < 200; ++trial) {
      const int k = 2 + trial % 9;
      std::vector<Embedding> ei, ej, es;
      for (int r = 0; r < k; ++r) {
        ei.push_back(random_unit(5, rng));
        ej.push_back(random_unit(5, rng));
        es.push_back(random_unit(5, rng));
      }
      const auto m = cell_measure(ei, ej, es);
      CHECK((m.m_d_mean >= 0 && m.m_d_mean <= 2));
      CHECK((m.m_s_mean >= -1 && m.m_s_mean <= 1));
      CHECK((m.m_total >= -1 && m.m_total <= 3));
      CHECK(m.m_total == m.m_d_mean + m.m_s_mean);
    }
  }
  SUBCASE("errors") {
    const Embedding a = {1, 0};
    CHECK_THROWS_AS(cell_measure({a}, {a}, {a}), InvalidArgument);
    CHECK_THROWS_AS(cell_measure({a, a}, {a}, {a, a}), InvalidArgument);
  }
}

TEST_CASE("grid spec") {
  GridSpec s;
  REQUIRE(s.weights.size() == 11);
  CHECK(s.weights.front() == 0.1);
  CHECK(s.weights[6] == 0.7);
  CHECK(s.weights.back() == 1.1);
  CHECK(s.cells().size() == 11);
  s.diagonal_only = false;
  CHECK(s.cells().size() == 121);
  CHECK(s.cells()[1] == std::pair{0.1, 0.2});
  CHECK_NOTHROW(s.validate());
  s.reps = 1;
  CHECK_THROWS_AS(s.validate(), InvalidArgument);
  s.reps = 2;
  s.weights = {0.05};
  CHECK_THROWS_AS(s.validate(), InvalidArgument);
  s.weights = {0.5, 0.5};
  CHECK_THROWS_AS(s.validate(), InvalidArgument);
}

TEST_CASE("select_weights") {
  SUBCASE("CASIA diagonal") {
    const auto r = fixture_report({{0.5, 1.48}, {0.7, 1.58}, {1.0, 1.53}});
    CHECK(select_weights(r, SelectionPolicy::diagonal) == std::pair{0.7, 0.7});
    auto d = r.diagonal();
    std::sort(d.begin(), d.end(), [](const auto& a, const auto& b) { return a.m_total < b.m_total; });
    CHECK(d[0].alpha == 0.5);
    CHECK(d[1].alpha == 1.0);
    CHECK(d[2].alpha == 0.7);
  }
  SUBCASE("WebFace cells") {
    const auto r = fixture_report({{0.5, 0.6068}, {0.7, 0.7256}, {0.8, 0.7390}, {1.0, 0.7230}});
    CHECK(select_weights(r, SelectionPolicy::diagonal) == std::pair{0.8, 0.8});
  }
  SUBCASE("single cell") {
    CHECK(select_weights(fixture_report({{0.3, -0.2}}), SelectionPolicy::diagonal) == std::pair{0.3, 0.3});
  }
  SUBCASE("ties go to the smaller weights") {
    const auto r = fixture_report({{0.8, 1.5}, {0.6, 1.5}, {0.2, 1.0}});
    CHECK(select_weights(r, SelectionPolicy::diagonal) == std::pair{0.6, 0.6});
    auto full = r;
    full.cells.push_back({0.6, 0.4, 0, 0, 0, 0, 1.5, {}});
    full.cells.push_back({0.4, 0.6, 0, 0, 0, 0, 1.5, {}});
    CHECK(select_weights(full, SelectionPolicy::full) == std::pair{0.4, 0.6});
    CHECK(select_weights(full, SelectionPolicy::diagonal) == std::pair{0.6, 0.6});
  }
  SUBCASE("off-diagonal only counts under the full policy") {
    auto r = fixture_report({{0.5, 1.0}});
    r.cells.push_back({0.5, 0.9, 0, 0, 0, 0, 2.0, {}});
    CHECK(select_weights(r, SelectionPolicy::diagonal) == std::pair{0.5, 0.5});
    CHECK(select_weights(r, SelectionPolicy::full) == std::pair{0.5, 0.9});
  }
  SUBCASE("empty") {
    CHECK_THROWS_AS(select_weights(SearchReport{}, SelectionPolicy::full), InvalidArgument);
  }
}

TEST_CASE("draw_pairs") {
  const std::vector<int> ls{4, 1, 9, 7};
  const auto a = draw_pairs(ls, 6, 3);
  CHECK(a == draw_pairs(ls, 6, 3));
  CHECK(std::set(a.begin(), a.end()).size() == 6);
  for (auto [i, j] : a) {
    CHECK(i < j);
    CHECK(std::count(ls.begin(), ls.end(), i) == 1);
  }
  CHECK(draw_pairs(ls, 6, 4) != a);
  const auto many = draw_pairs(ls, 14, 3);
  CHECK(many.size() == 14);
  CHECK(std::set(many.begin(), many.begin() + 6).size() == 6);
  CHECK_THROWS_AS(draw_pairs({2, 2}, 1, 0), InvalidArgument);
}

TEST_CASE("grid search on stub pipelines") {
  GridSpec spec;
  spec.reps = 4;
  spec.pairs = 5;
  spec.seed = 12;
  SUBCASE("weights ignored: i side vanishes, all cells equal") {
    spec.diagonal_only = false;
    spec.weights = {0.1, 0.5, 0.9, 1.1};
    const auto r = grid_search([] { return ignore_weights_backend(6); }, {0, 1, 2, 3, 4, 5}, spec);
    REQUIRE(r.cells.size() == 16);
    for (const auto& c : r.cells) {
      CHECK(c.m_d_i == 0);
      CHECK(c.m_total == r.cells.front().m_total);
      CHECK(c.per_pair_total.size() == 5);
    }
    CHECK(r.selected == std::pair{0.1, 0.1});
    CHECK(r.images_generated == 20 * 18);
    CHECK(r.repro_images_cached == 40 * 15);
  }
  SUBCASE("interpolating stub, near-antipodal classes: m_d peaks near equal weights") {
    spec.diagonal_only = false;
    const auto r = grid_search([] { return interpolating_backend(170 * std::numbers::pi / 180); }, {0, 1}, spec);
    const GridCellResult* best = &r.cells.front();
    for (const auto& c : r.cells) {
      if (c.m_d_mean > best->m_d_mean) best = &c;
    }
    CHECK(std::abs(best->beta / (best->alpha + best->beta) - 0.5) <= 0.05);
    CHECK(r.find(0.7, 0.7)->m_d_mean > r.find(0.1, 1.1)->m_d_mean + 0.5);
    CHECK(r.find(0.7, 0.7)->m_d_mean > r.find(1.1, 0.3)->m_d_mean + 0.5);
  }
  SUBCASE("interpolating stub, orthogonal classes: m_d dips on the diagonal") {
    spec.diagonal_only = false;
    const auto r = grid_search([] { return interpolating_backend(std::numbers::pi / 2); }, {0, 1}, spec);
    double worst = 3;
    for (const auto& c : r.cells) worst = std::min(worst, c.m_d_mean);
    for (const auto& c : r.cells) {
      if (c.alpha == c.beta) CHECK(c.m_d_mean == doctest::Approx(worst).epsilon(1e-6));
    }
  }
  SUBCASE("pairs are fixed across cells and reports are reproducible") {
    const auto make = [] { return ignore_weights_backend(8); };
    const std::vector<int> ls{0, 1, 2, 3, 4, 5, 6, 7};
    const auto a = grid_search(make, ls, spec, 1);
    const auto b = grid_search(make, ls, spec, 3);
    CHECK(report_to_text(a) == report_to_text(b));
    CHECK(a.pair_list == draw_pairs(ls, 5, numerics::derive_seed(12, {numerics::tag("pairs")})));
  }
  SUBCASE("progress callback sees every cell") {
    std::size_t seen = 0;
    grid_search([] { return ignore_weights_backend(3); }, {0, 1, 2}, spec, 2,
                [&](std::size_t, const GridCellResult&) { ++seen; });
    CHECK(seen == 11);
  }
  SUBCASE("numerical failures name the cell") {
    auto bad = [] {
      auto b = ignore_weights_backend(3);
      b.generate = [g = b.generate](const std::vector<ConditionVector>& c, const std::vector<std::uint64_t>& s) {
        if (c.front().is_one_hot()) return g(c, s);
        throw NumericalError("sampler", "nan");
        return g(c, s);
      };
      return b;
    };
    try {
      grid_search(bad, {0, 1, 2}, spec);
      FAIL("expected an error");
    } catch (const NumericalError& e) {
      CHECK(std::string(e.what()).find("grid cell (0.10, 0.10)") != std::string::npos);
    }
  }
  SUBCASE("too few classes") {
    CHECK_THROWS_AS(grid_search([] { return ignore_weights_backend(3); }, {1}, spec), InvalidArgument);
  }
}

TEST_CASE("report serialization") {
  GridSpec spec;
  spec.reps = 3;
  spec.pairs = 2;
  spec.diagonal_only = false;
  spec.weights = {0.3, 0.7};
  const auto r = grid_search([] { return interpolating_backend(2.0); }, {0, 1}, spec);
  const auto text = report_to_text(r);
  const auto back = report_from_text(text);
  CHECK(report_to_text(back) == text);
  CHECK(back.selected == r.selected);
  CHECK(back.cells.size() == 4);
  CHECK(back.pair_list == r.pair_list);
  CHECK_THROWS_AS(report_from_text("0.1\t0.1\n"), FormatError);

  const auto svg = heatmap_svg(r);
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("</svg>") != std::string::npos);
  std::size_t rects = 0;
  for (auto p = svg.find("<rect x="); p != std::string::npos; p = svg.find("<rect x=", p + 1)) ++rects;
  CHECK(rects == 4);
  CHECK(svg.find("stroke=\"red\"") != std::string::npos);

  testing::TempDir dir("grid");
  save_report(r, dir / "grid.tsv");
  CHECK(report_to_text(load_report(dir / "grid.tsv")) == text);
}

TEST_CASE("weight presets") {
  CHECK(preset_weights(WeightPreset::half, {}, 0).weights(5) == std::pair{0.5, 0.5});
  CHECK(preset_weights(WeightPreset::full, {}, 0).weights(5) == std::pair{1.0, 1.0});
  CHECK(preset_weights(WeightPreset::half_plus_plus, std::pair{0.7, 0.7}, 0).weights(2) == std::pair{0.7, 0.7});
  CHECK_THROWS_AS(preset_weights(WeightPreset::half_plus_plus, {}, 0), InvalidArgument);
  const auto rnd = preset_weights(WeightPreset::random, {}, 41);
  std::set<double> seen;
  bool varies = false;
  for (std::uint64_t k = 0; k < 200; ++k) {
    const auto w = rnd.weights(k);
    CHECK(w == preset_weights(WeightPreset::random, {}, 41).weights(k));
    CHECK(std::count(kRandomWeightSet.begin(), kRandomWeightSet.end(), w.first) == 1);
    CHECK(std::count(kRandomWeightSet.begin(), kRandomWeightSet.end(), w.second) == 1);
    seen.insert(w.first);
    varies |= w != rnd.weights(0);
  }
  CHECK(seen.size() == 7);
  CHECK(varies);
  CHECK(parse_weight_preset("half_plus_plus") == WeightPreset::half_plus_plus);
  CHECK_THROWS_AS(parse_weight_preset("double"), InvalidArgument);
}

TEST_CASE("grid search over real models is independent of worker count") {
  generator::GeneratorConfig g;
  g.net.image_size = 8;
  g.net.base_channels = 4;
  g.net.emb_dim = 8;
  g.net.fourier_dim = 4;
  g.net.groups = 2;
  g.sampler.steps = 3;
  const generator::DenoiserModel gen(g, 4, 1);
  discriminator::BackboneConfig bb;
  bb.image_size = 8;
  bb.width = 4;
  bb.embedding_dim = 8;
  const discriminator::EmbeddingModel f(bb, 4, {}, 2);
  GridSpec spec;
  spec.reps = 2;
  spec.pairs = 3;
  spec.weights = {0.3, 0.7, 1.1};
  spec.batch = 5;
  const auto factory = model_backend_factory(gen, f, spec.batch);
  const auto a = grid_search(factory, {0, 1, 2, 3}, spec, 1);
  const auto b = grid_search(factory, {0, 1, 2, 3}, spec, 2);
  CHECK(report_to_text(a) == report_to_text(b));
  for (const auto& c : a.cells) CHECK((c.m_total >= -1 && c.m_total <= 3));
}
