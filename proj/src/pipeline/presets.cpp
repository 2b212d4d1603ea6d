#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "auggen/augment/augment.hpp"
#include "auggen/evalbench/evaluate.hpp"
#include "auggen/numerics/rng.hpp"
#include "auggen/pipeline/format.hpp"
#include "auggen/pipeline/pipeline.hpp"
#include "auggen/pipeline/report.hpp"

namespace auggen::pipeline {

namespace fs = std::filesystem;
using numerics::derive_seed;
using numerics::tag;

namespace {

void put(const fs::path& file, const std::string& text) {
  fs::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary);
  if (!out) throw Error("cannot write " + file.string());
  out << text;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

// Shared state of one preset run: base artifacts and the evaluation protocol
// of the eval stage, so baseline rows match eval/eval.csv.
struct PresetContext {
  Pipeline& p;
  fs::path dir;
  dataset::DatasetManifest orig;
  dataset::DatasetManifest heldout;
  evalbench::EvalConfig ec;
  std::vector<evalbench::EvalReport> all;  // every evaluated model, for cells.json
  std::vector<std::string> errors;

  PresetContext(Pipeline& pl, fs::path d)
      : p(pl), dir(std::move(d)), orig(pl.manifest("synth-data", "orig")), heldout(pl.manifest("synth-data", "heldout")) {
    ec = p.config().eval.eval;
    ec.seed = p.stage_seed("eval");
  }

  // One model per preset seed, each scored on the held-out identities. An
  // exception fails only this cell; the reason lands in errors.txt.
  std::vector<evalbench::EvalReport> cell(const std::string& key, const std::function<dataset::DatasetManifest()>& data) {
    std::vector<evalbench::EvalReport> out;
    try {
      const auto train = data();
      for (std::uint64_t s : p.config().presets.seeds) {
        p.log("  " + key + " seed " + std::to_string(s));
        auto m = p.train_cached(train, s, dir / "models");
        auto r = evalbench::evaluate(m, heldout, ec, key, "heldout");
        r.seed = s;
        out.push_back(r);
      }
    } catch (const std::exception& e) {
      errors.push_back(key + ": " + e.what());
      p.log("  " + key + " FAILED: " + e.what());
      return {};
    }
    all.insert(all.end(), out.begin(), out.end());
    return out;
  }

  augment::AugConfig aug_config() const {
    // Same pair order and latent seeds as make-aug, so matching cells reproduce D^aug.
    const std::uint64_t s = p.stage_seed("make-aug");
    augment::AugConfig a;
    a.classes = p.config().auggen.classes;
    a.samples = p.config().auggen.samples;
    a.pair_seed = derive_seed(s, {tag("pairs")});
    a.sample_seed = derive_seed(s, {tag("samples")});
    a.batch = p.config().auggen.batch;
    a.rule = weights(mixsearch::parse_weight_preset(p.config().auggen.weights));
    return a;
  }

  mixsearch::WeightRule weights(mixsearch::WeightPreset preset) const {
    const auto grid = mixsearch::load_report(p.stage_dir("grid-search") / "report.txt");
    return mixsearch::preset_weights(preset, grid.selected, derive_seed(p.stage_seed("make-aug"), {tag("weights")}));
  }

  void finish(const std::string& name, const Table& t) {
    put(dir / (name + ".csv"), t.to_csv());
    put(dir / (name + ".txt"), t.to_text());
    put(dir / "cells.json", all.empty() ? std::string("[]\n") : evalbench::eval_json(all));
    if (!errors.empty()) {
      std::string e;
      for (const auto& x : errors) e += x + "\n";
      put(dir / "errors.txt", e);
    }
  }
};

std::vector<const evalbench::EvalReport*> ptrs(const std::vector<evalbench::EvalReport>& v) {
  std::vector<const evalbench::EvalReport*> out;
  for (const auto& r : v) out.push_back(&r);
  return out;
}

std::vector<std::string> row_cells(const std::vector<evalbench::EvalReport>& reports, const std::vector<double>& fprs) {
  if (reports.empty()) return std::vector<std::string>(fprs.size() + 2, "FAILED");
  return score_cells(ptrs(reports), fprs);
}

// Target used for single-number summaries: 1e-2 when configured, else the middle one.
double primary_fpr(const std::vector<double>& fprs) {
  for (double f : fprs)
    if (std::abs(f - 1e-2) < 1e-12) return f;
  return fprs[fprs.size() / 2];
}

std::optional<double> mean_tar(const std::vector<evalbench::EvalReport>& reports, double fpr) {
  if (reports.empty()) return std::nullopt;
  std::vector<double> v;
  for (const auto& r : reports) v.push_back(r.tar_at(fpr).value_or(0));
  return mean_std(v).mean;
}

}  // namespace

void Pipeline::preset_mixing(const fs::path& dir) {
  PresetContext ctx(*this, dir);
  const auto& fprs = cfg_.eval.eval.fpr_targets;
  auto g = generator_model();
  const auto ls = mixing_classes();
  const long nr = static_cast<long>(ctx.orig.records.size());

  Table t;
  t.header = {"Syn #Class × #Sample", "n^s", "n^r"};
  for (auto& c : tar_columns(cfg_.eval.eval.benchmark, fprs)) t.header.push_back(c);
  t.header.push_back("CV");
  t.header.push_back("TR1");

  auto base = ctx.cell("0", [&] { return ctx.orig; });
  std::vector<std::string> row{"0", "0", format_count(nr)};
  for (auto& c : row_cells(base, fprs)) row.push_back(c);
  t.rows.push_back(row);

  std::vector<std::pair<int, int>> grid;
  for (int c : cfg_.presets.sweep_classes)
    for (int n : cfg_.presets.sweep_samples) grid.emplace_back(c, n);
  const auto gen = [&g, b = cfg_.auggen.batch](const std::vector<generator::ConditionVector>& c,
                                               const std::vector<std::uint64_t>& s) {
    return generator::generate(g, c, s, b);
  };
  log("  generating " + std::to_string(grid.size()) + " augmentation sets");
  const auto sweep = augment::sweep_aug(gen, ctx.orig.class_count, ls, ctx.aug_config(), grid, dir / "data",
                                        cfg_.dataset.format);
  for (const auto& cell : sweep) {
    const std::string key = "Ours " + mix_key(cell.classes, cell.samples);
    std::vector<evalbench::EvalReport> reps;
    if (cell.result) {
      reps = ctx.cell(key, [&] { return dataset::merge(ctx.orig, cell.result->manifest); });
    } else {
      ctx.errors.push_back(key + ": " + cell.error);
    }
    std::vector<std::string> r{key, format_count(static_cast<long>(cell.classes) * cell.samples), format_count(nr)};
    for (auto& c : row_cells(reps, fprs)) r.push_back(c);
    t.rows.push_back(r);
  }
  ctx.finish("mixing-sweep", t);
}

void Pipeline::preset_weighting(const fs::path& dir) {
  PresetContext ctx(*this, dir);
  const auto& fprs = cfg_.eval.eval.fpr_targets;
  auto g = generator_model();
  const auto ls = mixing_classes();
  const auto grid = mixsearch::load_report(stage_dir("grid-search") / "report.txt");
  const auto gen = [&g, b = cfg_.auggen.batch](const std::vector<generator::ConditionVector>& c,
                                               const std::vector<std::uint64_t>& s) {
    return generator::generate(g, c, s, b);
  };

  Table t;
  t.header = {"C Weight Method", "n^s", "n^r"};
  for (auto& c : tar_columns(cfg_.eval.eval.benchmark, fprs)) t.header.push_back(c);
  t.header.push_back("CV");
  t.header.push_back("TR1");
  t.header.push_back("m^total");

  using mixsearch::WeightPreset;
  const std::vector<std::pair<WeightPreset, std::string>> rows{{WeightPreset::half, "W/ Half"},
                                                                {WeightPreset::full, "W/ Full"},
                                                                {WeightPreset::random, "W/ Random"},
                                                                {WeightPreset::half_plus_plus, "W/ Half++"}};
  for (const auto& [preset, name] : rows) {
    auto a = ctx.aug_config();
    a.rule = ctx.weights(preset);
    const std::string sub = std::string(mixsearch::to_string(preset));
    // Trained on D^aug alone (n^r = 0); mixed classes re-indexed from 0.
    auto reps = ctx.cell(name, [&] {
      const auto res = augment::generate_aug(gen, ctx.orig.class_count, ls, a, dir / "data" / sub, cfg_.dataset.format);
      return dataset::subset_classes(res.manifest, res.manifest.class_ids());
    });
    std::vector<std::string> r{name, format_count(a.expected_images()), "0"};
    for (auto& c : row_cells(reps, fprs)) r.push_back(c);
    std::string mt = "N/A";
    if (preset != WeightPreset::random)
      if (const auto* c = grid.find(a.rule.fixed.first, a.rule.fixed.second)) mt = fmt("%.2f", c->m_total);
    r.push_back(mt);
    t.rows.push_back(r);
  }
  ctx.finish("weighting-ablation", t);
}

void Pipeline::preset_real_vs_synth(const fs::path& dir) {
  PresetContext ctx(*this, dir);
  const auto& fprs = cfg_.eval.eval.fpr_targets;
  auto g = generator_model();
  const auto ls = mixing_classes();
  const long nr = static_cast<long>(ctx.orig.records.size());
  const auto gen = [&g, b = cfg_.auggen.batch](const std::vector<generator::ConditionVector>& c,
                                               const std::vector<std::uint64_t>& s) {
    return generator::generate(g, c, s, b);
  };
  const double pf = primary_fpr(fprs);

  Table t;
  t.header = {"Syn #Class × #Sample", "n^r", "n^s"};
  for (auto& c : tar_columns(cfg_.eval.eval.benchmark, fprs)) t.header.push_back(c);
  t.header.push_back("CV");
  t.header.push_back("TR1");
  t.header.push_back("Ratio");

  struct Point {
    std::string key;
    double ratio = 1;
    std::optional<double> tar;
    bool real = false;
  };
  std::vector<Point> pts;

  auto add = [&](const std::string& key, const std::string& nr_cell, long ns, double ratio,
                 const std::vector<evalbench::EvalReport>& reps, bool real) {
    std::vector<std::string> r{key, nr_cell, format_count(ns)};
    for (auto& c : row_cells(reps, fprs)) r.push_back(c);
    r.push_back(format_ratio(ratio));
    t.rows.push_back(r);
    pts.push_back({key + (real ? " (+" + nr_cell + ")" : ""), ratio, mean_tar(reps, pf), real});
  };

  add("0", format_count(nr), 0, 1.0, ctx.cell("0", [&] { return ctx.orig; }), true);

  const auto sweep = augment::sweep_aug(gen, ctx.orig.class_count, ls, ctx.aug_config(), cfg_.presets.real_vs_synth_aug,
                                        dir / "data", cfg_.dataset.format);
  for (const auto& cell : sweep) {
    const std::string key = mix_key(cell.classes, cell.samples);
    std::vector<evalbench::EvalReport> reps;
    if (cell.result)
      reps = ctx.cell(key, [&] { return dataset::merge(ctx.orig, cell.result->manifest); });
    else
      ctx.errors.push_back(key + ": " + cell.error);
    add(key, format_count(nr), static_cast<long>(cell.classes) * cell.samples, 1.0, reps, false);
  }

  const auto extra = manifest("synth-data", "extra");
  const auto extra_ids = extra.class_ids();
  for (int k : cfg_.presets.real_vs_synth_extra) {
    const std::vector<int> ids(extra_ids.begin(), extra_ids.begin() + std::min<std::size_t>(k, extra_ids.size()));
    const auto more = dataset::subset_classes(extra, ids);
    const long added = static_cast<long>(more.records.size());
    const std::string nr_cell = format_count(nr) + " + " + format_count(added);
    auto reps = ctx.cell("0 (" + nr_cell + ")", [&] { return dataset::merge(ctx.orig, more); });
    add("0", nr_cell, 0, static_cast<double>(nr + added) / nr, reps, true);
  }

  // How much of the gain from extra real identities the synthetic rows recover.
  std::vector<std::pair<double, double>> curve;  // (ratio, tar) of real rows, baseline first
  for (const auto& pt : pts)
    if (pt.real && pt.tar) curve.emplace_back(pt.ratio, *pt.tar);
  std::sort(curve.begin(), curve.end());
  Json summary{{"fpr", evalbench::fpr_key(pf)}, {"rows", Json::array()}};
  std::ostringstream txt;
  txt << "TAR@" << evalbench::fpr_key(pf) << " means over seeds\n";
  const std::optional<double> base = pts.front().tar;
  double best_real = base.value_or(0);
  for (const auto& pt : pts)
    if (pt.real && pt.tar) best_real = std::max(best_real, *pt.tar);
  if (base) summary["baseline_tar"] = *base;
  summary["best_real_tar"] = best_real;
  for (const auto& pt : pts) {
    if (pt.real) continue;
    Json row{{"key", pt.key}};
    txt << pt.key << ": ";
    if (!pt.tar || !base) {
      txt << "FAILED\n";
      row["tar"] = nullptr;
      summary["rows"].push_back(row);
      continue;
    }
    row["tar"] = *pt.tar;
    const double gain = *pt.tar - *base;
    const double room = best_real - *base;
    std::optional<double> closed;
    if (room > 0) closed = gain / room;
    // Real-data ratio reaching the same TAR, by linear interpolation along the real rows.
    std::optional<double> equiv;
    for (std::size_t i = 0; i + 1 < curve.size(); ++i) {
      const auto [r0, t0] = curve[i];
      const auto [r1, t1] = curve[i + 1];
      if ((*pt.tar >= t0 && *pt.tar <= t1) || (*pt.tar <= t0 && *pt.tar >= t1)) {
        equiv = t1 == t0 ? r0 : r0 + (*pt.tar - t0) / (t1 - t0) * (r1 - r0);
        break;
      }
    }
    txt << fmt("%.2f", 100 * *pt.tar) << " (baseline " << fmt("%.2f", 100 * *base) << ", best real "
        << fmt("%.2f", 100 * best_real) << ")";
    if (closed) {
      txt << ", gap closed " << fmt("%.0f", 100 * *closed) << "%";
      row["gap_closed"] = *closed;
    } else {
      row["gap_closed"] = nullptr;
    }
    if (equiv) {
      txt << ", matches real Ratio " << format_ratio(*equiv);
      row["equivalent_ratio"] = *equiv;
    } else {
      row["equivalent_ratio"] = nullptr;
    }
    txt << "\n";
    summary["rows"].push_back(row);
  }
  put(dir / "summary.txt", txt.str());
  put(dir / "summary.json", summary.dump(1) + "\n");
  ctx.finish("real-vs-synth", t);
}

void Pipeline::preset_correlation(const fs::path& dir) {
  PresetContext ctx(*this, dir);
  const auto& fprs = cfg_.eval.eval.fpr_targets;
  const double pf = primary_fpr(fprs);
  auto g = generator_model();
  auto oracle = oracle_model();
  const auto ls = mixing_classes();
  const auto real = evalbench::embed_manifest(oracle, ctx.orig);
  const auto gen = [&g, b = cfg_.auggen.batch](const std::vector<generator::ConditionVector>& c,
                                               const std::vector<std::uint64_t>& s) {
    return generator::generate(g, c, s, b);
  };

  const std::string tar_col = cfg_.eval.eval.benchmark + "-" + evalbench::fpr_key(pf);
  Table t;
  t.header = {"alpha", "beta", "n^s", "n^r", "FD", "Precision", "Recall", "Coverage", tar_col};
  std::vector<double> tar, fd, prec, rec, cov;
  for (auto [a, b] : cfg_.presets.correlation_weights) {
    auto ac = ctx.aug_config();
    ac.rule = mixsearch::preset_weights(mixsearch::WeightPreset::half_plus_plus, std::pair{a, b}, 0);
    char sub[48];
    std::snprintf(sub, sizeof(sub), "a%.2f_b%.2f", a, b);
    std::optional<evalbench::GenMetricsReport> gm;
    auto reps = ctx.cell(std::string("(") + fmt("%.2f", a) + ", " + fmt("%.2f", b) + ")", [&] {
      const auto res = augment::generate_aug(gen, ctx.orig.class_count, ls, ac, dir / "data" / sub, cfg_.dataset.format);
      gm = evalbench::gen_metrics(real, evalbench::embed_manifest(oracle, res.manifest), cfg_.eval.k, "oracle", sub);
      return dataset::merge(ctx.orig, res.manifest);
    });
    std::vector<std::string> r{fmt("%.2f", a), fmt("%.2f", b), format_count(ac.expected_images()),
                               format_count(static_cast<long>(ctx.orig.records.size()))};
    const auto m = mean_tar(reps, pf);
    if (gm && m) {
      r.insert(r.end(), {fmt("%.4f", gm->fd), fmt("%.4f", gm->precision), fmt("%.4f", gm->recall),
                         fmt("%.4f", gm->coverage), percent_cell([&] {
                           std::vector<double> v;
                           for (const auto& x : reps) v.push_back(x.tar_at(pf).value_or(0));
                           return v;
                         }())});
      tar.push_back(*m);
      fd.push_back(gm->fd);
      prec.push_back(gm->precision);
      rec.push_back(gm->recall);
      cov.push_back(gm->coverage);
    } else {
      r.insert(r.end(), 5, "FAILED");
    }
    t.rows.push_back(r);
  }

  Table corr;
  corr.header = {"metric", "n", "pearson", "spearman"};
  for (auto [name, xs] : {std::pair{"FD", &fd}, std::pair{"Precision", &prec}, std::pair{"Recall", &rec},
                          std::pair{"Coverage", &cov}}) {
    std::vector<std::string> row{name, std::to_string(xs->size()), "undefined", "undefined"};
    if (xs->size() >= 3) {
      const auto c = evalbench::correlation(*xs, tar);
      if (c.pearson) row[2] = fmt("%.4f", *c.pearson);
      if (c.spearman) row[3] = fmt("%.4f", *c.spearman);
    }
    corr.rows.push_back(row);
    evalbench::write_scatter_csv(*xs, tar, name, tar_col, dir / ("scatter_" + std::string(name) + ".csv"));
  }
  put(dir / "correlations.csv", corr.to_csv());
  ctx.finish("metrics-correlation", t);
}

}  // namespace auggen::pipeline
