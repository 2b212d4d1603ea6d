#include "auggen/mixsearch/search.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "auggen/discriminator/head.hpp"
#include "auggen/error.hpp"
#include "auggen/numerics/rng.hpp"

namespace auggen::mixsearch {

using numerics::derive_seed;
using numerics::Rng;
using numerics::tag;

CellMeasure cell_measure(const std::vector<Embedding>& e_i, const std::vector<Embedding>& e_j,
                         const std::vector<Embedding>& e_star) {
  const std::size_t k = e_star.size();
  if (k < 2) throw InvalidArgument("cell_measure: need at least 2 repetitions");
  if (e_i.size() != k || e_j.size() != k) throw InvalidArgument("cell_measure: embedding lists must align");
  CellMeasure m;
  for (std::size_t r = 0; r < k; ++r) {
    m.m_d_i += discriminator::m_d(e_i[r], e_star[r]);
    m.m_d_j += discriminator::m_d(e_j[r], e_star[r]);
  }
  m.m_d_i /= static_cast<double>(k);
  m.m_d_j /= static_cast<double>(k);
  m.m_d_mean = m.m_d_i + m.m_d_j;
  double s = 0;
  for (std::size_t p = 0; p < k; ++p) {
    for (std::size_t q = p + 1; q < k; ++q) s += discriminator::m_s(e_star[p], e_star[q]);
  }
  m.m_s_mean = s / (static_cast<double>(k * (k - 1)) / 2.0);
  m.m_total = m.m_d_mean + m.m_s_mean;
  return m;
}

std::vector<double> GridSpec::default_weights() {
  std::vector<double> w;
  for (int k = 1; k <= 11; ++k) w.push_back(k / 10.0);
  return w;
}

void GridSpec::validate() const {
  if (weights.empty()) throw InvalidArgument("grid: empty weight set");
  for (double w : weights) {
    if (!(w >= generator::kMinMixWeight - 1e-12 && w <= generator::kMaxMixWeight + 1e-12)) {
      throw InvalidArgument("grid: weight " + std::to_string(w) + " outside [0.1, 1.1]");
    }
  }
  if (std::set<double>(weights.begin(), weights.end()).size() != weights.size()) {
    throw InvalidArgument("grid: duplicate weights");
  }
  if (reps < 2) throw InvalidArgument("grid: K must be >= 2");
  if (pairs < 1) throw InvalidArgument("grid: P must be >= 1");
  if (batch < 1) throw InvalidArgument("grid: batch must be >= 1");
}

std::vector<std::pair<double, double>> GridSpec::cells() const {
  std::vector<double> w = weights;
  std::sort(w.begin(), w.end());
  std::vector<std::pair<double, double>> out;
  for (double a : w) {
    if (diagonal_only) {
      out.emplace_back(a, a);
      continue;
    }
    for (double b : w) out.emplace_back(a, b);
  }
  return out;
}

std::string_view to_string(SelectionPolicy p) { return p == SelectionPolicy::diagonal ? "diagonal" : "full"; }

SelectionPolicy parse_selection_policy(std::string_view s) {
  if (s == "diagonal") return SelectionPolicy::diagonal;
  if (s == "full") return SelectionPolicy::full;
  throw InvalidArgument("unknown selection policy '" + std::string(s) + "'");
}

const GridCellResult* SearchReport::find(double alpha, double beta) const {
  for (const auto& c : cells) {
    if (std::abs(c.alpha - alpha) < 1e-9 && std::abs(c.beta - beta) < 1e-9) return &c;
  }
  return nullptr;
}

std::vector<GridCellResult> SearchReport::diagonal() const {
  std::vector<GridCellResult> out;
  for (const auto& c : cells) {
    if (c.alpha == c.beta) out.push_back(c);
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.alpha < b.alpha; });
  return out;
}

std::pair<double, double> select_weights(const SearchReport& report, SelectionPolicy policy) {
  const GridCellResult* best = nullptr;
  for (const auto& c : report.cells) {
    if (policy == SelectionPolicy::diagonal && c.alpha != c.beta) continue;
    if (best == nullptr || c.m_total > best->m_total) {
      best = &c;
    } else if (c.m_total == best->m_total) {
      const double s = c.alpha + c.beta, bs = best->alpha + best->beta;
      if (s < bs || (s == bs && c.alpha < best->alpha)) best = &c;
    }
  }
  if (best == nullptr) throw InvalidArgument("select_weights: empty candidate set");
  return {best->alpha, best->beta};
}

std::uint64_t pair_latent_seed(std::uint64_t search_seed, int pair_index, int rep) {
  return derive_seed(search_seed, {tag("pair_latent"), static_cast<std::uint64_t>(pair_index),
                                   static_cast<std::uint64_t>(rep)});
}

std::vector<std::pair<int, int>> draw_pairs(const std::vector<int>& ls, int count, std::uint64_t seed) {
  std::vector<int> s = ls;
  std::sort(s.begin(), s.end());
  s.erase(std::unique(s.begin(), s.end()), s.end());
  if (s.size() < 2) throw InvalidArgument("draw_pairs: need at least 2 distinct classes");
  std::vector<std::pair<int, int>> all;
  for (std::size_t a = 0; a < s.size(); ++a) {
    for (std::size_t b = a + 1; b < s.size(); ++b) all.emplace_back(s[a], s[b]);
  }
  Rng rng(seed);
  std::vector<std::pair<int, int>> out;
  while (static_cast<int>(out.size()) < count) {
    auto round = all;
    std::shuffle(round.begin(), round.end(), rng.engine());
    for (const auto& p : round) {
      if (static_cast<int>(out.size()) == count) break;
      out.push_back(p);
    }
  }
  return out;
}

namespace {

struct ReproEmbeddings {
  // [pair][rep]
  std::vector<std::vector<Embedding>> e_i, e_j;
};

ReproEmbeddings embed_repro(SearchBackend& backend, const std::vector<std::pair<int, int>>& pairs, int reps,
                            std::uint64_t seed) {
  std::vector<generator::ConditionVector> conds;
  std::vector<std::uint64_t> seeds;
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    for (int side = 0; side < 2; ++side) {
      const int c = side == 0 ? pairs[p].first : pairs[p].second;
      for (int k = 0; k < reps; ++k) {
        conds.push_back(generator::one_hot(backend.class_count, c));
        seeds.push_back(pair_latent_seed(seed, static_cast<int>(p), k));
      }
    }
  }
  const auto e = backend.embed(backend.generate(conds, seeds));
  ReproEmbeddings r;
  std::size_t n = 0;
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    r.e_i.emplace_back(e.begin() + static_cast<std::ptrdiff_t>(n), e.begin() + static_cast<std::ptrdiff_t>(n + reps));
    n += static_cast<std::size_t>(reps);
    r.e_j.emplace_back(e.begin() + static_cast<std::ptrdiff_t>(n), e.begin() + static_cast<std::ptrdiff_t>(n + reps));
    n += static_cast<std::size_t>(reps);
  }
  return r;
}

GridCellResult evaluate_cell(SearchBackend& backend, const ReproEmbeddings& repro,
                             const std::vector<std::pair<int, int>>& pairs, int reps, std::uint64_t seed,
                             double alpha, double beta) {
  std::vector<generator::ConditionVector> conds;
  std::vector<std::uint64_t> seeds;
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    const auto c = generator::mix_conditions(generator::one_hot(backend.class_count, pairs[p].first),
                                             generator::one_hot(backend.class_count, pairs[p].second), alpha, beta);
    for (int k = 0; k < reps; ++k) {
      conds.push_back(c);
      seeds.push_back(pair_latent_seed(seed, static_cast<int>(p), k));
    }
  }
  const auto e = backend.embed(backend.generate(conds, seeds));
  if (e.size() != conds.size()) throw ShapeError("grid_search: backend returned the wrong number of embeddings");
  GridCellResult cell;
  cell.alpha = alpha;
  cell.beta = beta;
  const auto np = static_cast<double>(pairs.size());
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    const std::vector<Embedding> star(e.begin() + static_cast<std::ptrdiff_t>(p * reps),
                                      e.begin() + static_cast<std::ptrdiff_t>((p + 1) * reps));
    const auto m = cell_measure(repro.e_i[p], repro.e_j[p], star);
    cell.m_d_i += m.m_d_i / np;
    cell.m_d_j += m.m_d_j / np;
    cell.m_d_mean += m.m_d_mean / np;
    cell.m_s_mean += m.m_s_mean / np;
    cell.per_pair_total.push_back(m.m_total);
  }
  double total = 0;
  for (double t : cell.per_pair_total) total += t;
  cell.m_total = total / np;
  return cell;
}

}  // namespace

SearchReport grid_search(const std::function<SearchBackend()>& make_backend, const std::vector<int>& ls,
                         const GridSpec& spec, int jobs, const CellCallback& on_cell) {
  spec.validate();
  if (jobs < 1) throw InvalidArgument("grid_search: jobs must be >= 1");
  SearchReport report;
  report.seed = spec.seed;
  report.reps = spec.reps;
  report.policy = spec.diagonal_only ? SelectionPolicy::diagonal : SelectionPolicy::full;
  report.pair_list = draw_pairs(ls, spec.pairs, derive_seed(spec.seed, {tag("pairs")}));

  std::vector<SearchBackend> backends;
  backends.push_back(make_backend());
  const ReproEmbeddings repro = embed_repro(backends[0], report.pair_list, spec.reps, spec.seed);

  const auto coords = spec.cells();
  const auto workers = static_cast<std::size_t>(std::min<std::size_t>(static_cast<std::size_t>(jobs), coords.size()));
  for (std::size_t w = 1; w < workers; ++w) backends.push_back(make_backend());
  std::vector<GridCellResult> cells(coords.size());
  std::vector<std::exception_ptr> errors(workers);
  std::mutex progress;
  std::size_t done = 0;
  auto run = [&](std::size_t w) {
    try {
      for (std::size_t c = w; c < coords.size(); c += workers) {
        const auto [a, b] = coords[c];
        try {
          cells[c] = evaluate_cell(backends[w], repro, report.pair_list, spec.reps, spec.seed, a, b);
        } catch (const NumericalError& e) {
          char where[64];
          std::snprintf(where, sizeof(where), "grid cell (%.2f, %.2f)", a, b);
          throw NumericalError(where, e.what());
        }
        std::lock_guard lock(progress);
        if (on_cell) on_cell(done, cells[c]);
        ++done;
      }
    } catch (...) {
      errors[w] = std::current_exception();
    }
  };
  if (workers == 1) {
    run(0);
  } else {
    std::vector<std::thread> threads;
    for (std::size_t w = 0; w < workers; ++w) threads.emplace_back(run, w);
    for (auto& t : threads) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  report.cells = std::move(cells);
  const long per_cell = static_cast<long>(spec.pairs) * spec.reps;
  report.images_generated = per_cell * (static_cast<long>(coords.size()) + 2);
  report.repro_images_cached = 2 * per_cell * (static_cast<long>(coords.size()) - 1);
  report.selected = select_weights(report, report.policy);
  return report;
}

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::string report_to_text(const SearchReport& r) {
  std::ostringstream out;
  out << "# auggen-grid 1\n";
  out << "# seed " << r.seed << "\n# reps " << r.reps << "\n# policy " << to_string(r.policy) << "\n";
  out << "# selected " << fmt(r.selected.first) << ' ' << fmt(r.selected.second) << "\n";
  out << "# images_generated " << r.images_generated << "\n# repro_images_cached " << r.repro_images_cached << "\n";
  for (const auto& [i, j] : r.pair_list) out << "# pair " << i << ' ' << j << "\n";
  out << "# alpha\tbeta\tm_d_i\tm_d_j\tm_d_mean\tm_s_mean\tm_total\tper_pair_total\n";
  for (const auto& c : r.cells) {
    out << fmt(c.alpha) << '\t' << fmt(c.beta) << '\t' << fmt(c.m_d_i) << '\t' << fmt(c.m_d_j) << '\t'
        << fmt(c.m_d_mean) << '\t' << fmt(c.m_s_mean) << '\t' << fmt(c.m_total) << '\t';
    for (std::size_t k = 0; k < c.per_pair_total.size(); ++k) out << (k ? "," : "") << fmt(c.per_pair_total[k]);
    out << '\n';
  }
  return out.str();
}

SearchReport report_from_text(const std::string& text) {
  SearchReport r;
  std::istringstream in(text);
  std::string line;
  bool header = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    if (line[0] == '#') {
      std::string hash, key;
      ls >> hash >> key;
      if (key == "auggen-grid") header = true;
      else if (key == "seed") ls >> r.seed;
      else if (key == "reps") ls >> r.reps;
      else if (key == "policy") {
        std::string p;
        ls >> p;
        r.policy = parse_selection_policy(p);
      } else if (key == "selected") ls >> r.selected.first >> r.selected.second;
      else if (key == "images_generated") ls >> r.images_generated;
      else if (key == "repro_images_cached") ls >> r.repro_images_cached;
      else if (key == "pair") {
        std::pair<int, int> p;
        ls >> p.first >> p.second;
        r.pair_list.push_back(p);
      }
      if (ls.fail()) throw FormatError("grid report: bad header line '" + line + "'");
      continue;
    }
    GridCellResult c;
    std::string per_pair;
    ls >> c.alpha >> c.beta >> c.m_d_i >> c.m_d_j >> c.m_d_mean >> c.m_s_mean >> c.m_total;
    if (ls.fail()) throw FormatError("grid report: bad cell line '" + line + "'");
    ls >> per_pair;
    std::istringstream pp(per_pair);
    std::string tok;
    while (std::getline(pp, tok, ',')) {
      if (!tok.empty()) c.per_pair_total.push_back(std::stod(tok));
    }
    r.cells.push_back(std::move(c));
  }
  if (!header) throw FormatError("grid report: missing '# auggen-grid 1' header");
  return r;
}

void save_report(const SearchReport& report, const std::filesystem::path& file) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file);
  if (!out) throw Error("cannot write " + file.string());
  out << report_to_text(report);
}

SearchReport load_report(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw FormatError("cannot read " + file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return report_from_text(ss.str());
}

namespace {

// Piecewise-linear approximation of the viridis map.
std::string color_for(double t) {
  static const double stops[][3] = {
      {68, 1, 84}, {59, 82, 139}, {33, 145, 140}, {94, 201, 98}, {253, 231, 37}};
  t = std::clamp(t, 0.0, 1.0) * 4.0;
  const int k = std::min(3, static_cast<int>(t));
  const double f = t - k;
  char buf[16];
  std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", static_cast<int>(std::lround(stops[k][0] + f * (stops[k + 1][0] - stops[k][0]))),
                static_cast<int>(std::lround(stops[k][1] + f * (stops[k + 1][1] - stops[k][1]))),
                static_cast<int>(std::lround(stops[k][2] + f * (stops[k + 1][2] - stops[k][2]))));
  return buf;
}

}  // namespace

std::string heatmap_svg(const SearchReport& r) {
  std::set<double> ws;
  for (const auto& c : r.cells) {
    ws.insert(c.alpha);
    ws.insert(c.beta);
  }
  const std::vector<double> w(ws.begin(), ws.end());
  const int n = static_cast<int>(w.size());
  const int cell = 44, left = 60, top = 30;
  const int width = left + n * cell + 20, height = top + n * cell + 60;
  double lo = 0, hi = 1;
  if (!r.cells.empty()) {
    lo = hi = r.cells.front().m_total;
    for (const auto& c : r.cells) {
      lo = std::min(lo, c.m_total);
      hi = std::max(hi, c.m_total);
    }
  }
  auto index = [&](double v) { return static_cast<int>(std::lower_bound(w.begin(), w.end(), v) - w.begin()); };
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
    << "\" font-family=\"sans-serif\" font-size=\"10\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  char buf[160];
  for (const auto& c : r.cells) {
    const int x = left + index(c.alpha) * cell;
    const int y = top + (n - 1 - index(c.beta)) * cell;
    const double t = hi > lo ? (c.m_total - lo) / (hi - lo) : 0.5;
    std::snprintf(buf, sizeof(buf), "<rect x=\"%d\" y=\"%d\" width=\"%d\" height=\"%d\" fill=\"%s\"", x, y, cell, cell,
                  color_for(t).c_str());
    s << buf;
    if (c.alpha == r.selected.first && c.beta == r.selected.second) s << " stroke=\"red\" stroke-width=\"3\"";
    s << "/>\n";
    std::snprintf(buf, sizeof(buf), "<text x=\"%d\" y=\"%d\" text-anchor=\"middle\" fill=\"%s\">%.3f</text>\n",
                  x + cell / 2, y + cell / 2 + 4, t > 0.6 ? "black" : "white", c.m_total);
    s << buf;
  }
  for (int k = 0; k < n; ++k) {
    std::snprintf(buf, sizeof(buf), "<text x=\"%d\" y=\"%d\" text-anchor=\"middle\">%.1f</text>\n",
                  left + k * cell + cell / 2, top + n * cell + 14, w[static_cast<std::size_t>(k)]);
    s << buf;
    std::snprintf(buf, sizeof(buf), "<text x=\"%d\" y=\"%d\" text-anchor=\"end\">%.1f</text>\n", left - 6,
                  top + (n - 1 - k) * cell + cell / 2 + 4, w[static_cast<std::size_t>(k)]);
    s << buf;
  }
  std::snprintf(buf, sizeof(buf), "<text x=\"%d\" y=\"%d\" text-anchor=\"middle\">alpha</text>\n",
                left + n * cell / 2, top + n * cell + 34);
  s << buf;
  std::snprintf(buf, sizeof(buf),
                "<text x=\"16\" y=\"%d\" text-anchor=\"middle\" transform=\"rotate(-90 16 %d)\">beta</text>\n",
                top + n * cell / 2, top + n * cell / 2);
  s << buf;
  std::snprintf(buf, sizeof(buf), "<text x=\"%d\" y=\"18\">m_total, selected (%.1f, %.1f)</text>\n", left,
                r.selected.first, r.selected.second);
  s << buf << "</svg>\n";
  return s.str();
}

std::string_view to_string(WeightPreset p) {
  switch (p) {
    case WeightPreset::half: return "half";
    case WeightPreset::full: return "full";
    case WeightPreset::random: return "random";
    case WeightPreset::half_plus_plus: return "half_plus_plus";
  }
  return "?";
}

WeightPreset parse_weight_preset(std::string_view s) {
  for (auto p : {WeightPreset::half, WeightPreset::full, WeightPreset::random, WeightPreset::half_plus_plus}) {
    if (s == to_string(p)) return p;
  }
  throw InvalidArgument("unknown weight preset '" + std::string(s) + "'");
}

std::pair<double, double> WeightRule::weights(std::uint64_t mix_index) const {
  if (preset != WeightPreset::random) return fixed;
  Rng rng(derive_seed(seed, {tag("mix_weights"), mix_index}));
  const double a = kRandomWeightSet[rng.index(kRandomWeightSet.size())];
  const double b = kRandomWeightSet[rng.index(kRandomWeightSet.size())];
  return {a, b};
}

std::string WeightRule::describe() const {
  char buf[96];
  if (preset == WeightPreset::random) {
    std::snprintf(buf, sizeof(buf), "random{0.1,0.3,0.5,0.7,0.9,1.0,1.1} seed %llu",
                  static_cast<unsigned long long>(seed));
  } else {
    std::snprintf(buf, sizeof(buf), "%s (%.2f, %.2f)", std::string(to_string(preset)).c_str(), fixed.first,
                  fixed.second);
  }
  return buf;
}

WeightRule preset_weights(WeightPreset preset, const std::optional<std::pair<double, double>>& selected,
                          std::uint64_t seed) {
  WeightRule r;
  r.preset = preset;
  r.seed = seed;
  switch (preset) {
    case WeightPreset::half: r.fixed = {0.5, 0.5}; break;
    case WeightPreset::full: r.fixed = {1.0, 1.0}; break;
    case WeightPreset::random: r.fixed = {0, 0}; break;
    case WeightPreset::half_plus_plus:
      if (!selected) throw InvalidArgument("half_plus_plus needs a completed grid search");
      r.fixed = *selected;
      break;
  }
  return r;
}

}  // namespace auggen::mixsearch
