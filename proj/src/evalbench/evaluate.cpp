#include "auggen/evalbench/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <json.hpp>

#include "auggen/error.hpp"
#include "auggen/numerics/rng.hpp"

namespace auggen::evalbench {

using numerics::derive_seed;
using numerics::tag;

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

std::string fmt_opt(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

}  // namespace

PairList draw_verification_pairs(const std::vector<int>& labels, std::uint64_t seed, const PairCounts& counts) {
  if (counts.max_genuine_per_identity < 0) throw InvalidArgument("pairs: genuine cap must be >= 0");
  std::map<int, std::vector<std::size_t>> by_id;
  for (std::size_t i = 0; i < labels.size(); ++i) by_id[labels[i]].push_back(i);
  if (by_id.size() < 2) throw InvalidArgument("pairs: need at least two identities");
  PairList out;
  for (const auto& [id, rows] : by_id) {
    if (rows.size() < 2) {
      out.warnings.push_back("identity " + std::to_string(id) + " has a single sample; no genuine pairs");
      continue;
    }
    std::vector<Pair> all;
    for (std::size_t a = 0; a < rows.size(); ++a) {
      for (std::size_t b = a + 1; b < rows.size(); ++b) all.emplace_back(rows[a], rows[b]);
    }
    const auto cap = static_cast<std::size_t>(counts.max_genuine_per_identity);
    if (cap > 0 && all.size() > cap) {
      numerics::Rng rng(derive_seed(seed, {tag("genuine"), static_cast<std::uint64_t>(id)}));
      std::shuffle(all.begin(), all.end(), rng.engine());
      all.resize(cap);
      std::sort(all.begin(), all.end());
    }
    out.genuine.insert(out.genuine.end(), all.begin(), all.end());
  }
  if (out.genuine.empty()) throw InvalidArgument("pairs: no identity has two samples");

  const std::size_t n = labels.size();
  std::size_t same = 0;
  for (const auto& [id, rows] : by_id) same += rows.size() * (rows.size() - 1) / 2;
  const std::size_t cross = n * (n - 1) / 2 - same;
  const std::size_t want = counts.impostor ? counts.impostor : out.genuine.size();
  if (want >= cross) {
    for (std::size_t a = 0; a < n; ++a) {
      for (std::size_t b = a + 1; b < n; ++b) {
        if (labels[a] != labels[b]) out.impostor.emplace_back(a, b);
      }
    }
    if (want > cross) {
      out.warnings.push_back("only " + std::to_string(cross) + " impostor pairs exist; " + std::to_string(want) +
                             " requested");
    }
  } else {
    numerics::Rng rng(derive_seed(seed, {tag("impostor")}));
    std::set<Pair> seen;
    while (out.impostor.size() < want) {
      std::size_t a = rng.index(n), b = rng.index(n);
      if (labels[a] == labels[b]) continue;
      if (a > b) std::swap(a, b);
      if (seen.emplace(a, b).second) out.impostor.emplace_back(a, b);
    }
  }
  return out;
}

ScoreSet score_pairs(const Features& feats, const PairList& pairs) {
  const auto rows = static_cast<std::size_t>(feats.rows());
  const auto cos = [&](const Pair& p) {
    if (p.first >= rows || p.second >= rows) throw InvalidArgument("score_pairs: pair index out of range");
    const auto a = feats.row(static_cast<Eigen::Index>(p.first));
    const auto b = feats.row(static_cast<Eigen::Index>(p.second));
    return std::clamp(a.dot(b) / (a.norm() * b.norm()), -1.0, 1.0);
  };
  ScoreSet s;
  for (const auto& p : pairs.genuine) s.genuine.push_back(cos(p));
  for (const auto& p : pairs.impostor) s.impostor.push_back(cos(p));
  s.validate();
  return s;
}

Features embed_manifest(discriminator::EmbeddingModel& model, const dataset::DatasetManifest& manifest,
                        std::vector<int>* labels) {
  const auto data = dataset::load_images(manifest);
  const numerics::Tensor e = model.embed_all(data.images);
  const auto d = static_cast<Eigen::Index>(model.embedding_dim());
  Features f(static_cast<Eigen::Index>(data.size()), d);
  for (Eigen::Index r = 0; r < f.rows(); ++r) {
    double n2 = 0;
    for (Eigen::Index c = 0; c < d; ++c) {
      f(r, c) = e[static_cast<std::size_t>(r * d + c)];
      n2 += f(r, c) * f(r, c);
    }
    if (!(n2 > 0) || !std::isfinite(n2)) throw NumericalError("embed_manifest", "degenerate embedding");
    f.row(r) /= std::sqrt(n2);
  }
  if (labels) *labels = data.labels;
  return f;
}

ScoreSet verification_scores(discriminator::EmbeddingModel& model, const dataset::DatasetManifest& heldout,
                             std::uint64_t seed, const PairCounts& counts, std::vector<std::string>* warnings,
                             const dataset::DatasetManifest* exclude) {
  if (exclude) {
    std::set<std::uint64_t> ids;
    for (const auto& r : exclude->records) ids.insert(r.sample_id);
    for (const auto& r : heldout.records) {
      if (ids.count(r.sample_id)) throw InvalidArgument("verification: held-out sample also used for training");
    }
  }
  std::vector<int> labels;
  const Features f = embed_manifest(model, heldout, &labels);
  const auto pairs = draw_verification_pairs(labels, seed, counts);
  if (warnings) warnings->insert(warnings->end(), pairs.warnings.begin(), pairs.warnings.end());
  return score_pairs(f, pairs);
}

std::pair<dataset::DatasetManifest, dataset::DatasetManifest> gallery_probe_split(const dataset::DatasetManifest& m) {
  dataset::DatasetManifest gallery = m, probes = m;
  gallery.records.clear();
  probes.records.clear();
  std::map<int, std::uint64_t> first;
  for (const auto& r : m.records) {
    auto it = first.find(r.class_id);
    if (it == first.end() || r.sample_id < it->second) first[r.class_id] = r.sample_id;
  }
  for (const auto& r : m.records) (first.at(r.class_id) == r.sample_id ? gallery : probes).records.push_back(r);
  return {gallery, probes};
}

double rank1(discriminator::EmbeddingModel& model, const dataset::DatasetManifest& gallery,
             const dataset::DatasetManifest& probes) {
  std::vector<int> gl, pl;
  const Features g = embed_manifest(model, gallery, &gl);
  const Features p = embed_manifest(model, probes, &pl);
  return rank1(g, gl, p, pl);
}

FeatureDynamics feature_dynamics(discriminator::EmbeddingModel& model, const dataset::DatasetManifest& manifest) {
  std::vector<int> labels;
  const Features f = embed_manifest(model, manifest, &labels);
  return feature_dynamics(f, labels);
}

void EvalConfig::validate() const {
  if (fpr_targets.empty()) throw InvalidArgument("eval: no FPR targets");
  for (double t : fpr_targets) {
    if (!(t > 0 && t <= 1)) throw InvalidArgument("eval: FPR targets must lie in (0, 1]");
  }
  if (folds < 2) throw InvalidArgument("eval: folds must be >= 2");
  if (benchmark.empty() || benchmark.find_first_of(",\n") != std::string::npos) {
    throw InvalidArgument("eval: bad benchmark prefix");
  }
}

std::optional<double> EvalReport::tar_at(double fpr) const {
  for (const auto& p : tar) {
    if (std::abs(p.fpr_target - fpr) <= 1e-12 * fpr) return p.tar;
  }
  return std::nullopt;
}

EvalReport evaluate(discriminator::EmbeddingModel& model, const dataset::DatasetManifest& heldout,
                    const EvalConfig& cfg, const std::string& model_id, const std::string& dataset_id) {
  cfg.validate();
  EvalReport rep;
  rep.model_id = model_id;
  rep.dataset_id = dataset_id;
  rep.seed = cfg.seed;
  rep.benchmark = cfg.benchmark;
  std::vector<int> labels;
  const Features f = embed_manifest(model, heldout, &labels);
  const auto pairs = draw_verification_pairs(labels, derive_seed(cfg.seed, {tag("pairs")}), cfg.pairs);
  rep.warnings = pairs.warnings;
  const ScoreSet scores = score_pairs(f, pairs);
  rep.genuine_pairs = scores.genuine.size();
  rep.impostor_pairs = scores.impostor.size();
  auto tar = tar_at_fpr(scores, cfg.fpr_targets);
  rep.tar = std::move(tar.points);
  rep.warnings.insert(rep.warnings.end(), tar.warnings.begin(), tar.warnings.end());
  rep.cv = cv_accuracy(assign_folds(scores, cfg.folds, cfg.seed), cfg.folds);

  // Rank-1 over the same embeddings: one gallery sample per identity.
  std::map<int, std::pair<std::uint64_t, Eigen::Index>> first;
  for (std::size_t i = 0; i < heldout.records.size(); ++i) {
    const auto& r = heldout.records[i];
    auto it = first.find(r.class_id);
    if (it == first.end() || r.sample_id < it->second.first) first[r.class_id] = {r.sample_id, static_cast<Eigen::Index>(i)};
  }
  std::vector<Eigen::Index> g_rows, p_rows;
  std::vector<int> g_lab, p_lab;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool is_gallery = first.at(labels[i]).second == static_cast<Eigen::Index>(i);
    (is_gallery ? g_rows : p_rows).push_back(static_cast<Eigen::Index>(i));
    (is_gallery ? g_lab : p_lab).push_back(labels[i]);
  }
  if (!p_rows.empty()) rep.rank1 = rank1(f(g_rows, Eigen::all), g_lab, f(p_rows, Eigen::all), p_lab);
  return rep;
}

std::string eval_csv(const std::vector<EvalReport>& reports) {
  std::ostringstream out;
  if (reports.empty()) return {};
  const auto& ref = reports.front();
  out << "model,dataset,seed";
  for (const auto& p : ref.tar) out << ',' << ref.benchmark << '-' << fpr_key(p.fpr_target);
  out << ",CV-mean,CV-std,TR1,M-Inter,M-Intra,S-Intra,genuine_pairs,impostor_pairs\n";
  for (const auto& r : reports) {
    if (r.tar.size() != ref.tar.size() || r.benchmark != ref.benchmark) {
      throw InvalidArgument("eval_csv: reports use different FPR targets");
    }
    out << r.model_id << ',' << r.dataset_id << ',' << r.seed;
    for (std::size_t k = 0; k < r.tar.size(); ++k) {
      if (r.tar[k].fpr_target != ref.tar[k].fpr_target) throw InvalidArgument("eval_csv: reports use different FPR targets");
      out << ',' << fmt(r.tar[k].tar);
    }
    out << ',' << fmt(r.cv.mean) << ',' << fmt(r.cv.std) << ',' << fmt_opt(r.rank1);
    if (r.dynamics) {
      out << ',' << format_dynamics_row(*r.dynamics);
    } else {
      out << ",,,";
    }
    out << ',' << r.genuine_pairs << ',' << r.impostor_pairs << '\n';
  }
  return out.str();
}

std::string eval_json(const std::vector<EvalReport>& reports) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& r : reports) {
    nlohmann::ordered_json j;
    j["model"] = r.model_id;
    j["dataset"] = r.dataset_id;
    j["seed"] = r.seed;
    j["benchmark"] = r.benchmark;
    j["tar"] = nlohmann::ordered_json::array();
    for (const auto& p : r.tar) {
      j["tar"].push_back({{"fpr", p.fpr_target},
                          {"threshold", std::isfinite(p.threshold) ? nlohmann::ordered_json(p.threshold) : nullptr},
                          {"achieved_fpr", p.achieved_fpr},
                          {"tar", p.tar}});
    }
    j["cv"] = {{"mean", r.cv.mean}, {"std", r.cv.std}, {"folds", r.cv.fold_accuracy}};
    j["rank1"] = r.rank1 ? nlohmann::ordered_json(*r.rank1) : nullptr;
    if (r.dynamics) {
      j["dynamics"] = {{"m_inter", r.dynamics->m_inter}, {"m_intra", r.dynamics->m_intra}, {"s_intra", r.dynamics->s_intra}};
    } else {
      j["dynamics"] = nullptr;
    }
    j["genuine_pairs"] = r.genuine_pairs;
    j["impostor_pairs"] = r.impostor_pairs;
    j["warnings"] = r.warnings;
    arr.push_back(std::move(j));
  }
  return arr.dump(2) + "\n";
}

std::vector<EvalReport> eval_from_json(const std::string& text) {
  std::vector<EvalReport> out;
  try {
    for (const auto& j : nlohmann::json::parse(text)) {
      EvalReport r;
      r.model_id = j.at("model");
      r.dataset_id = j.at("dataset");
      r.seed = j.at("seed");
      r.benchmark = j.at("benchmark");
      for (const auto& p : j.at("tar")) {
        TarPoint t;
        t.fpr_target = p.at("fpr");
        t.threshold = p.at("threshold").is_null() ? -std::numeric_limits<double>::infinity() : p.at("threshold").get<double>();
        t.achieved_fpr = p.at("achieved_fpr");
        t.tar = p.at("tar");
        r.tar.push_back(t);
      }
      r.cv.mean = j.at("cv").at("mean");
      r.cv.std = j.at("cv").at("std");
      r.cv.fold_accuracy = j.at("cv").at("folds").get<std::vector<double>>();
      if (!j.at("rank1").is_null()) r.rank1 = j.at("rank1").get<double>();
      if (!j.at("dynamics").is_null()) {
        const auto& d = j.at("dynamics");
        r.dynamics = FeatureDynamics{d.at("m_inter"), d.at("m_intra"), d.at("s_intra")};
      }
      r.genuine_pairs = j.at("genuine_pairs");
      r.impostor_pairs = j.at("impostor_pairs");
      r.warnings = j.at("warnings").get<std::vector<std::string>>();
      out.push_back(std::move(r));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("eval report: ") + e.what());
  }
  return out;
}

GenMetricsReport gen_metrics(const Features& real, const Features& gen, int k, const std::string& extractor_id,
                             const std::string& dataset_id) {
  GenMetricsReport r;
  r.fd = frechet_distance(real, gen);
  const auto pr = precision_recall(real, gen, k);
  r.precision = pr.precision;
  r.recall = pr.recall;
  r.coverage = coverage(real, gen, k);
  r.k = k;
  r.extractor_id = extractor_id;
  r.dataset_id = dataset_id;
  r.real_count = static_cast<std::size_t>(real.rows());
  r.gen_count = static_cast<std::size_t>(gen.rows());
  return r;
}

std::string gen_metrics_csv(const std::vector<GenMetricsReport>& reports) {
  std::ostringstream out;
  out << "dataset,extractor,k,FD,Precision,Recall,Coverage,real_count,gen_count\n";
  for (const auto& r : reports) {
    out << r.dataset_id << ',' << r.extractor_id << ',' << r.k << ',' << fmt(r.fd) << ',' << fmt(r.precision) << ','
        << fmt(r.recall) << ',' << fmt(r.coverage) << ',' << r.real_count << ',' << r.gen_count << '\n';
  }
  return out.str();
}

std::string gen_metrics_json(const std::vector<GenMetricsReport>& reports) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& r : reports) {
    arr.push_back({{"dataset", r.dataset_id},
                   {"extractor", r.extractor_id},
                   {"k", r.k},
                   {"fd", r.fd},
                   {"precision", r.precision},
                   {"recall", r.recall},
                   {"coverage", r.coverage},
                   {"real_count", r.real_count},
                   {"gen_count", r.gen_count}});
  }
  return arr.dump(2) + "\n";
}

std::vector<GenMetricsReport> gen_metrics_from_json(const std::string& text) {
  std::vector<GenMetricsReport> out;
  try {
    for (const auto& j : nlohmann::json::parse(text)) {
      GenMetricsReport r;
      r.dataset_id = j.at("dataset");
      r.extractor_id = j.at("extractor");
      r.k = j.at("k");
      r.fd = j.at("fd");
      r.precision = j.at("precision");
      r.recall = j.at("recall");
      r.coverage = j.at("coverage");
      r.real_count = j.at("real_count");
      r.gen_count = j.at("gen_count");
      out.push_back(std::move(r));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("gen metrics report: ") + e.what());
  }
  return out;
}

std::vector<std::pair<double, double>> roc_curve(const ScoreSet& scores, std::size_t max_points) {
  if (scores.genuine.empty() || scores.impostor.empty()) throw InvalidArgument("roc: empty score list");
  std::vector<double> imp = scores.impostor, gen = scores.genuine;
  std::sort(imp.begin(), imp.end(), std::greater<>());
  std::sort(gen.begin(), gen.end(), std::greater<>());
  std::vector<std::pair<double, double>> pts{{0.0, 0.0}};
  const std::size_t stride = std::max<std::size_t>(1, imp.size() / std::max<std::size_t>(1, max_points));
  std::size_t g = 0;
  for (std::size_t i = 0; i < imp.size(); i += stride) {
    while (g < gen.size() && gen[g] > imp[i]) ++g;
    pts.emplace_back(static_cast<double>(i) / static_cast<double>(imp.size()),
                     static_cast<double>(g) / static_cast<double>(gen.size()));
  }
  pts.emplace_back(1.0, 1.0);
  return pts;
}

}  // namespace auggen::evalbench
