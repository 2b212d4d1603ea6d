#include "auggen/evalbench/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <random>

#include "auggen/error.hpp"
#include "auggen/numerics/rng.hpp"

namespace auggen::evalbench {

namespace {

void check_scores(const std::vector<double>& v, const char* what) {
  for (double s : v) {
    if (!std::isfinite(s) || s < -1.0 || s > 1.0) {
      throw InvalidArgument(std::string("score set: ") + what + " score outside [-1, 1]");
    }
  }
}

double dist_sq(const Features& a, Eigen::Index i, const Features& b, Eigen::Index j) {
  double s = 0;
  for (Eigen::Index d = 0; d < a.cols(); ++d) {
    const double t = a(i, d) - b(j, d);
    s += t * t;
  }
  return s;
}

void check_sets(const Features& real, const Features& gen, int k) {
  if (k < 1) throw InvalidArgument("k must be >= 1");
  if (real.cols() != gen.cols()) throw InvalidArgument("feature dimension mismatch");
  if (real.rows() < k + 1 || gen.rows() < k + 1) throw InvalidArgument("each set needs at least k + 1 points");
}

// Any point of `from` within the ball of some point of `balls`.
double inside_fraction(const Features& from, const Features& balls, const std::vector<double>& radii) {
  std::size_t hit = 0;
  for (Eigen::Index i = 0; i < from.rows(); ++i) {
    for (Eigen::Index j = 0; j < balls.rows(); ++j) {
      if (dist_sq(from, i, balls, j) <= radii[static_cast<std::size_t>(j)]) {
        ++hit;
        break;
      }
    }
  }
  return static_cast<double>(hit) / static_cast<double>(from.rows());
}

Features unit_rows(const Features& f) {
  Features out = f;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const double n = out.row(i).norm();
    if (!(n > 0) || !std::isfinite(n)) throw InvalidArgument("zero or non-finite feature row " + std::to_string(i));
    out.row(i) /= n;
  }
  return out;
}

double pearson_raw(const std::vector<double>& x, const std::vector<double>& y, bool& ok) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  ok = sxx > 0 && syy > 0;
  return ok ? std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0) : 0.0;
}

std::vector<double> average_ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t s = 0; s < idx.size();) {
    std::size_t e = s;
    while (e + 1 < idx.size() && v[idx[e + 1]] == v[idx[s]]) ++e;
    const double rank = 0.5 * static_cast<double>(s + e) + 1.0;
    for (std::size_t t = s; t <= e; ++t) r[idx[t]] = rank;
    s = e + 1;
  }
  return r;
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()));
  const Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

void ScoreSet::validate() const {
  check_scores(genuine, "genuine");
  check_scores(impostor, "impostor");
}

TarResult tar_at_fpr(const ScoreSet& scores, const std::vector<double>& fpr_targets) {
  if (scores.genuine.empty() || scores.impostor.empty()) throw InvalidArgument("tar_at_fpr: empty score list");
  if (fpr_targets.empty()) throw InvalidArgument("tar_at_fpr: no FPR targets");
  scores.validate();
  std::vector<double> imp = scores.impostor;
  std::sort(imp.begin(), imp.end(), std::greater<>());
  const std::size_t n = imp.size();
  const double nd = static_cast<double>(n);
  TarResult res;
  for (double target : fpr_targets) {
    if (!(target >= 0.0 && target <= 1.0)) throw InvalidArgument("tar_at_fpr: target outside [0, 1]");
    if (target > 0 && nd < 1.0 / target) {
      char buf[128];
      std::snprintf(buf, sizeof(buf), "only %zu impostor scores for FPR target %g", n, target);
      res.warnings.emplace_back(buf);
    }
    // Largest impostor count a with a / n <= target.
    std::size_t a = static_cast<std::size_t>(std::floor(target * nd));
    while (a + 1 <= n && static_cast<double>(a + 1) / nd <= target) ++a;
    while (a > 0 && static_cast<double>(a) / nd > target) --a;
    TarPoint p;
    p.fpr_target = target;
    p.threshold = a >= n ? -std::numeric_limits<double>::infinity() : imp[a];
    const auto above = [&](const std::vector<double>& v) {
      return static_cast<double>(std::count_if(v.begin(), v.end(), [&](double s) { return s > p.threshold; })) /
             static_cast<double>(v.size());
    };
    p.achieved_fpr = above(scores.impostor);
    p.tar = above(scores.genuine);
    res.points.push_back(p);
  }
  return res;
}

std::vector<LabeledScore> assign_folds(const ScoreSet& scores, int folds, std::uint64_t seed) {
  if (folds < 2) throw InvalidArgument("cv: folds must be >= 2");
  std::vector<LabeledScore> out;
  for (double s : scores.genuine) out.push_back({s, true, 0});
  for (double s : scores.impostor) out.push_back({s, false, 0});
  std::vector<std::size_t> order(out.size());
  std::iota(order.begin(), order.end(), 0);
  numerics::Rng rng(numerics::derive_seed(seed, {numerics::tag("folds")}));
  std::shuffle(order.begin(), order.end(), rng.engine());
  for (std::size_t k = 0; k < order.size(); ++k) out[order[k]].fold = static_cast<int>(k % static_cast<std::size_t>(folds));
  return out;
}

CvAccuracy cv_accuracy(const std::vector<LabeledScore>& scores, int folds) {
  if (folds < 2) throw InvalidArgument("cv: folds must be >= 2");
  std::vector<std::size_t> per_fold(static_cast<std::size_t>(folds), 0);
  for (const auto& s : scores) {
    if (s.fold < 0 || s.fold >= folds) throw InvalidArgument("cv: fold label out of range");
    if (!std::isfinite(s.score)) throw InvalidArgument("cv: non-finite score");
    ++per_fold[static_cast<std::size_t>(s.fold)];
  }
  for (int f = 0; f < folds; ++f) {
    if (per_fold[static_cast<std::size_t>(f)] == 0) throw InvalidArgument("cv: fold " + std::to_string(f) + " has no pairs");
  }
  CvAccuracy res;
  for (int f = 0; f < folds; ++f) {
    std::vector<LabeledScore> train;
    for (const auto& s : scores) {
      if (s.fold != f) train.push_back(s);
    }
    std::sort(train.begin(), train.end(), [](const auto& a, const auto& b) { return a.score < b.score; });
    // Sweep thresholds upward; at threshold train[k].score everything from k on is accepted.
    std::size_t gen_total = 0;
    for (const auto& s : train) gen_total += s.genuine;
    std::size_t gen_below = 0, imp_below = 0;
    double best_acc = -1, best_t = 0;
    for (std::size_t k = 0; k <= train.size(); ++k) {
      if (k == 0 || k == train.size() || train[k].score != train[k - 1].score) {
        // Any threshold in (previous score, train[k].score] gives this split; take the midpoint.
        const double inf = std::numeric_limits<double>::infinity();
        const double t = k == 0 ? -inf : k == train.size() ? inf : 0.5 * (train[k - 1].score + train[k].score);
        const double acc = static_cast<double>(gen_total - gen_below + imp_below) / static_cast<double>(train.size());
        if (acc > best_acc) {
          best_acc = acc;
          best_t = t;
        }
      }
      if (k < train.size()) (train[k].genuine ? gen_below : imp_below) += 1;
    }
    std::size_t correct = 0, total = 0;
    for (const auto& s : scores) {
      if (s.fold != f) continue;
      ++total;
      correct += (s.score >= best_t) == s.genuine;
    }
    res.fold_accuracy.push_back(static_cast<double>(correct) / static_cast<double>(total));
    res.fold_threshold.push_back(best_t);
  }
  const double n = static_cast<double>(folds);
  res.mean = std::accumulate(res.fold_accuracy.begin(), res.fold_accuracy.end(), 0.0) / n;
  double var = 0;
  for (double a : res.fold_accuracy) var += (a - res.mean) * (a - res.mean);
  res.std = std::sqrt(var / n);
  return res;
}

double rank1(const Features& gallery, const std::vector<int>& gallery_labels, const Features& probes,
             const std::vector<int>& probe_labels) {
  if (static_cast<std::size_t>(gallery.rows()) != gallery_labels.size() ||
      static_cast<std::size_t>(probes.rows()) != probe_labels.size()) {
    throw InvalidArgument("rank1: labels do not match feature rows");
  }
  if (gallery.cols() != probes.cols()) throw InvalidArgument("rank1: feature dimension mismatch");
  if (probes.rows() == 0) throw InvalidArgument("rank1: no probes");
  std::vector<int> ids = gallery_labels;
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  const Features g = unit_rows(gallery);
  Features templates = Features::Zero(static_cast<Eigen::Index>(ids.size()), gallery.cols());
  for (Eigen::Index r = 0; r < g.rows(); ++r) {
    const auto t = std::lower_bound(ids.begin(), ids.end(), gallery_labels[static_cast<std::size_t>(r)]) - ids.begin();
    templates.row(t) += g.row(r);
  }
  templates = unit_rows(templates);
  const Features p = unit_rows(probes);
  std::size_t hit = 0;
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    const int want = probe_labels[static_cast<std::size_t>(r)];
    if (!std::binary_search(ids.begin(), ids.end(), want)) {
      throw InvalidArgument("rank1: probe identity " + std::to_string(want) + " missing from gallery");
    }
    Eigen::Index best = 0;
    double best_cos = -std::numeric_limits<double>::infinity();
    for (Eigen::Index t = 0; t < templates.rows(); ++t) {
      const double c = p.row(r).dot(templates.row(t));
      if (c > best_cos) {
        best_cos = c;
        best = t;
      }
    }
    hit += ids[static_cast<std::size_t>(best)] == want;
  }
  return static_cast<double>(hit) / static_cast<double>(p.rows());
}

FeatureDynamics feature_dynamics(const Features& feats, const std::vector<int>& labels) {
  if (static_cast<std::size_t>(feats.rows()) != labels.size()) throw InvalidArgument("feature_dynamics: label count mismatch");
  std::map<int, int> counts;
  for (int c : labels) ++counts[c];
  for (const auto& [c, n] : counts) {
    if (n < 2) throw InvalidArgument("feature_dynamics: class " + std::to_string(c) + " has a single sample");
  }
  if (counts.size() < 2) throw InvalidArgument("feature_dynamics: need at least two classes");
  const Features u = unit_rows(feats);
  double inter = 0, intra = 0, intra_sq = 0;
  std::size_t n_inter = 0, n_intra = 0;
  for (Eigen::Index i = 0; i < u.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < u.rows(); ++j) {
      const double c = u.row(i).dot(u.row(j));
      if (labels[static_cast<std::size_t>(i)] == labels[static_cast<std::size_t>(j)]) {
        intra += c;
        intra_sq += c * c;
        ++n_intra;
      } else {
        inter += std::abs(c);
        ++n_inter;
      }
    }
  }
  FeatureDynamics d;
  d.m_inter = inter / static_cast<double>(n_inter);
  d.m_intra = intra / static_cast<double>(n_intra);
  d.s_intra = std::sqrt(std::max(0.0, intra_sq / static_cast<double>(n_intra) - d.m_intra * d.m_intra));
  return d;
}

std::string format_dynamics_row(const FeatureDynamics& d) {
  char buf[96];
  std::snprintf(buf, sizeof(buf), "%.4f,%.5f,%.5f", d.m_inter, d.m_intra, d.s_intra);
  return buf;
}

Moments moments(const Features& feats) {
  if (feats.rows() < 2) throw InvalidArgument("moments: need at least two samples");
  Moments m;
  m.mean = feats.colwise().mean().transpose();
  const Features c = feats.rowwise() - m.mean.transpose();
  m.cov = (c.transpose() * c) / static_cast<double>(feats.rows() - 1);
  return m;
}

double frechet_distance(const Moments& a, const Moments& b, double eps) {
  const auto d = a.mean.size();
  if (b.mean.size() != d || a.cov.rows() != d || b.cov.rows() != d) throw InvalidArgument("frechet_distance: dimension mismatch");
  Eigen::MatrixXd sa = a.cov, sb = b.cov;
  const auto min_eig = [](const Eigen::MatrixXd& m) {
    return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(m, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
  };
  if (min_eig(sa) < eps || min_eig(sb) < eps) {
    sa.diagonal().array() += eps;
    sb.diagonal().array() += eps;
  }
  const Eigen::MatrixXd ra = psd_sqrt(sa);
  const Eigen::MatrixXd inner = ra * sb * ra;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (inner + inner.transpose()), Eigen::EigenvaluesOnly);
  const double tr_sqrt = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  const double fd = (a.mean - b.mean).squaredNorm() + sa.trace() + sb.trace() - 2.0 * tr_sqrt;
  if (!std::isfinite(fd)) throw NumericalError("frechet_distance", "non-finite result");
  return std::max(0.0, fd);
}

double frechet_distance(const Features& a, const Features& b, double eps) {
  if (a.cols() != b.cols()) throw InvalidArgument("frechet_distance: dimension mismatch");
  return frechet_distance(moments(a), moments(b), eps);
}

std::vector<double> knn_radii_sq(const Features& set, int k) {
  if (k < 1 || set.rows() < k + 1) throw InvalidArgument("knn radii: need at least k + 1 points");
  std::vector<double> radii(static_cast<std::size_t>(set.rows()));
  std::vector<double> d;
  for (Eigen::Index i = 0; i < set.rows(); ++i) {
    d.clear();
    for (Eigen::Index j = 0; j < set.rows(); ++j) {
      if (j != i) d.push_back(dist_sq(set, i, set, j));
    }
    std::nth_element(d.begin(), d.begin() + (k - 1), d.end());
    radii[static_cast<std::size_t>(i)] = d[static_cast<std::size_t>(k - 1)];
  }
  return radii;
}

PrecisionRecall precision_recall(const Features& real, const Features& gen, int k) {
  check_sets(real, gen, k);
  return {inside_fraction(gen, real, knn_radii_sq(real, k)), inside_fraction(real, gen, knn_radii_sq(gen, k))};
}

double coverage(const Features& real, const Features& gen, int k) {
  check_sets(real, gen, k);
  const auto radii = knn_radii_sq(real, k);
  std::size_t hit = 0;
  for (Eigen::Index i = 0; i < real.rows(); ++i) {
    for (Eigen::Index j = 0; j < gen.rows(); ++j) {
      if (dist_sq(real, i, gen, j) <= radii[static_cast<std::size_t>(i)]) {
        ++hit;
        break;
      }
    }
  }
  return static_cast<double>(hit) / static_cast<double>(real.rows());
}

Correlation correlation(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw InvalidArgument("correlation: length mismatch");
  if (x.size() < 3) throw InvalidArgument("correlation: need at least 3 points");
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i]) || !std::isfinite(y[i])) throw InvalidArgument("correlation: non-finite value");
  }
  Correlation c;
  c.n = x.size();
  bool ok = false;
  const double p = pearson_raw(x, y, ok);
  if (ok) c.pearson = p;
  const double s = pearson_raw(average_ranks(x), average_ranks(y), ok);
  if (ok) c.spearman = s;
  return c;
}

void write_scatter_csv(const std::vector<double>& x, const std::vector<double>& y, const std::string& x_name,
                       const std::string& y_name, const std::filesystem::path& file) {
  if (x.size() != y.size()) throw InvalidArgument("scatter: length mismatch");
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file);
  if (!out) throw Error("cannot write " + file.string());
  out << x_name << ',' << y_name << '\n';
  char buf[64];
  for (std::size_t i = 0; i < x.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g\n", x[i], y[i]);
    out << buf;
  }
}

std::string fpr_key(double fpr) {
  if (!(fpr > 0)) throw InvalidArgument("fpr_key: FPR must be positive");
  const int e = static_cast<int>(std::floor(std::log10(fpr) + 1e-12));
  const double m = fpr / std::pow(10.0, e);
  char buf[48];
  if (std::abs(m - std::round(m)) < 1e-9) {
    std::snprintf(buf, sizeof(buf), "%de%d", static_cast<int>(std::round(m)), e);
  } else {
    std::snprintf(buf, sizeof(buf), "%g", fpr);
  }
  return buf;
}

}  // namespace auggen::evalbench
