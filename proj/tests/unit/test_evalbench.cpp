#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>

#include "../support/tempdir.hpp"
#include "auggen/dataset/toy.hpp"
#include "auggen/evalbench/evaluate.hpp"
#include "doctest.h"

using namespace auggen;
using namespace auggen::evalbench;
using auggen::testing::TempDir;

namespace {

// Exhaustive sweep: candidate thresholds are the midpoints of the sorted
// unique scores plus one value below and one above everything; accept s >= t.
double oracle_tar(const ScoreSet& s, double target) {
  std::vector<double> all = s.genuine;
  all.insert(all.end(), s.impostor.begin(), s.impostor.end());
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());
  std::vector<double> cand{all.front() - 1.0};
  for (std::size_t k = 0; k + 1 < all.size(); ++k) cand.push_back(0.5 * (all[k] + all[k + 1]));
  cand.push_back(all.back() + 1.0);
  for (double t : cand) {
    const double fpr = static_cast<double>(std::count_if(s.impostor.begin(), s.impostor.end(), [&](double v) { return v >= t; })) /
                       static_cast<double>(s.impostor.size());
    if (fpr <= target) {
      return static_cast<double>(std::count_if(s.genuine.begin(), s.genuine.end(), [&](double v) { return v >= t; })) /
             static_cast<double>(s.genuine.size());
    }
  }
  return 0;
}

// Quantized scores so ties are common.
ScoreSet random_scores(std::mt19937_64& rng, std::size_t ng, std::size_t ni) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const auto q = [&](double shift) { return std::clamp(std::round((u(rng) * 0.6 + shift) * 20.0) / 20.0, -1.0, 1.0); };
  ScoreSet s;
  for (std::size_t k = 0; k < ng; ++k) s.genuine.push_back(q(0.3));
  for (std::size_t k = 0; k < ni; ++k) s.impostor.push_back(q(-0.1));
  return s;
}

// Enumerates midpoints between adjacent training scores (accept s >= t), keeps
// the most accurate one with the lowest value, scores the held fold.
std::vector<double> oracle_cv(const std::vector<LabeledScore>& s, int folds) {
  std::vector<double> out;
  for (int f = 0; f < folds; ++f) {
    std::vector<double> train;
    for (const auto& x : s) {
      if (x.fold != f) train.push_back(x.score);
    }
    std::sort(train.begin(), train.end());
    train.erase(std::unique(train.begin(), train.end()), train.end());
    std::vector<double> cand{-std::numeric_limits<double>::infinity()};
    for (std::size_t k = 0; k + 1 < train.size(); ++k) cand.push_back(0.5 * (train[k] + train[k + 1]));
    cand.push_back(std::numeric_limits<double>::infinity());
    double best = -1, best_t = 0;
    for (double t : cand) {
      int ok = 0, n = 0;
      for (const auto& x : s) {
        if (x.fold == f) continue;
        ++n;
        ok += (x.score >= t) == x.genuine;
      }
      if (static_cast<double>(ok) / n > best) {
        best = static_cast<double>(ok) / n;
        best_t = t;
      }
    }
    int ok = 0, n = 0;
    for (const auto& x : s) {
      if (x.fold != f) continue;
      ++n;
      ok += (x.score >= best_t) == x.genuine;
    }
    out.push_back(static_cast<double>(ok) / n);
  }
  return out;
}

Features random_features(std::mt19937_64& rng, int n, int d, double shift = 0.0) {
  std::normal_distribution<double> g;
  Features f(n, d);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) f(i, j) = g(rng) + shift;
  }
  return f;
}

double oracle_dist_sq(const Features& a, int i, const Features& b, int j) {
  double s = 0;
  for (int d = 0; d < a.cols(); ++d) s += (a(i, d) - b(j, d)) * (a(i, d) - b(j, d));
  return s;
}

double oracle_radius_sq(const Features& s, int i, int k) {
  std::vector<double> d;
  for (int j = 0; j < s.rows(); ++j) {
    if (j != i) d.push_back(oracle_dist_sq(s, i, s, j));
  }
  std::sort(d.begin(), d.end());
  return d[static_cast<std::size_t>(k - 1)];
}

// Fraction of `pts` lying in some ball of `centers` (radius from `radius_set`).
double oracle_inside(const Features& pts, const Features& centers, int k) {
  int hit = 0;
  for (int i = 0; i < pts.rows(); ++i) {
    bool in = false;
    for (int j = 0; j < centers.rows() && !in; ++j) in = oracle_dist_sq(pts, i, centers, j) <= oracle_radius_sq(centers, j, k);
    hit += in;
  }
  return static_cast<double>(hit) / static_cast<double>(pts.rows());
}

double oracle_coverage(const Features& real, const Features& gen, int k) {
  int hit = 0;
  for (int i = 0; i < real.rows(); ++i) {
    const double r = oracle_radius_sq(real, i, k);
    bool in = false;
    for (int j = 0; j < gen.rows() && !in; ++j) in = oracle_dist_sq(real, i, gen, j) <= r;
    hit += in;
  }
  return static_cast<double>(hit) / static_cast<double>(real.rows());
}

FeatureDynamics oracle_dynamics(const Features& f, const std::vector<int>& labels) {
  std::vector<double> intra, inter;
  for (int i = 0; i < f.rows(); ++i) {
    for (int j = 0; j < f.rows(); ++j) {
      if (i == j) continue;
      const double c = f.row(i).dot(f.row(j)) / (f.row(i).norm() * f.row(j).norm());
      (labels[static_cast<std::size_t>(i)] == labels[static_cast<std::size_t>(j)] ? intra : inter).push_back(c);
    }
  }
  FeatureDynamics d;
  for (double c : inter) d.m_inter += std::abs(c) / static_cast<double>(inter.size());
  for (double c : intra) d.m_intra += c / static_cast<double>(intra.size());
  for (double c : intra) d.s_intra += (c - d.m_intra) * (c - d.m_intra) / static_cast<double>(intra.size());
  d.s_intra = std::sqrt(d.s_intra);
  return d;
}

int oracle_rank1_hits(const Features& g, const std::vector<int>& gl, const Features& p, const std::vector<int>& pl) {
  std::map<int, Eigen::RowVectorXd> t;
  for (int i = 0; i < g.rows(); ++i) {
    auto& v = t.try_emplace(gl[static_cast<std::size_t>(i)], Eigen::RowVectorXd::Zero(g.cols())).first->second;
    v += g.row(i) / g.row(i).norm();
  }
  int hits = 0;
  for (int i = 0; i < p.rows(); ++i) {
    int best = -1;
    double bc = -2;
    for (const auto& [id, v] : t) {
      const double c = p.row(i).dot(v) / (p.row(i).norm() * v.norm());
      if (c > bc) {
        bc = c;
        best = id;
      }
    }
    hits += best == pl[static_cast<std::size_t>(i)];
  }
  return hits;
}

}  // namespace

TEST_CASE("tar_at_fpr") {
  SUBCASE("worked example") {
    const ScoreSet s{{0.9, 0.8, 0.7, 0.6}, {0.5, 0.4, 0.3, 0.2, 0.1}};
    const auto r = tar_at_fpr(s, {0.2});
    REQUIRE(r.points.size() == 1);
    CHECK(r.points[0].threshold >= 0.4);
    CHECK(r.points[0].threshold < 0.5);
    CHECK(r.points[0].achieved_fpr == 0.2);
    CHECK(r.points[0].tar == 1.0);
  }
  SUBCASE("separated scores give TAR 1 at every reachable target") {
    const ScoreSet s{{0.9, 0.95}, {0.1, 0.2, 0.3}};
    for (const auto& p : tar_at_fpr(s, {0.0, 1.0 / 3, 0.5, 1.0}).points) CHECK(p.tar == 1.0);
  }
  SUBCASE("target zero sits above the largest impostor") {
    const ScoreSet s{{0.9, 0.5, 0.2}, {0.1, 0.6}};
    const auto p = tar_at_fpr(s, {0.0}).points[0];
    CHECK(p.threshold == 0.6);
    CHECK(p.achieved_fpr == 0.0);
    CHECK(p.tar == doctest::Approx(1.0 / 3));
  }
  SUBCASE("matches the exhaustive sweep and is monotone") {
    std::mt19937_64 rng(5);
    const std::vector<double> targets{0.0, 0.01, 0.05, 0.1, 0.2, 0.25, 1.0 / 3, 0.5, 0.9, 1.0};
    for (int fixture = 0; fixture < 40; ++fixture) {
      const auto s = random_scores(rng, 1 + rng() % 32, 1 + rng() % 32);
      const auto r = tar_at_fpr(s, targets);
      for (std::size_t k = 0; k < targets.size(); ++k) {
        CHECK(r.points[k].tar == oracle_tar(s, targets[k]));
        CHECK(r.points[k].achieved_fpr <= targets[k]);
        if (k) CHECK(r.points[k].tar >= r.points[k - 1].tar);
      }
    }
  }
  SUBCASE("errors and warnings") {
    CHECK_THROWS_AS(tar_at_fpr({{}, {0.1}}, {0.1}), InvalidArgument);
    CHECK_THROWS_AS(tar_at_fpr({{0.1}, {}}, {0.1}), InvalidArgument);
    CHECK_THROWS_AS(tar_at_fpr({{1.5}, {0.1}}, {0.1}), InvalidArgument);
    CHECK_THROWS_AS(tar_at_fpr({{0.5}, {0.1}}, {1.5}), InvalidArgument);
    CHECK(tar_at_fpr({{0.5}, {0.1, 0.2}}, {0.01}).warnings.size() == 1);
  }
}

TEST_CASE("cv_accuracy") {
  SUBCASE("perfect separation") {
    ScoreSet s;
    for (int k = 0; k < 20; ++k) {
      s.genuine.push_back(0.5 + k * 0.01);
      s.impostor.push_back(-0.5 + k * 0.01);
    }
    const auto r = cv_accuracy(assign_folds(s, 10, 1), 10);
    CHECK(r.mean == 1.0);
    CHECK(r.std == 0.0);
  }
  SUBCASE("hand-built two-fold fixture") {
    const std::vector<LabeledScore> s{{0.9, true, 0}, {0.6, true, 0}, {0.5, false, 0}, {0.2, false, 0},
                                      {0.8, true, 1}, {0.3, true, 1}, {0.4, false, 1}, {0.1, false, 1}};
    const auto r = cv_accuracy(s, 2);
    // Fold 0 is judged at 0.2 (best split of fold 1 lies in (0.1, 0.3]), fold 1 at 0.55.
    CHECK(r.fold_threshold == std::vector<double>{0.2, 0.55});
    CHECK(r.fold_accuracy == std::vector<double>{0.5, 0.75});
    CHECK(r.mean == 0.625);
    CHECK(r.std == 0.125);
  }
  SUBCASE("matches enumeration on random fixtures") {
    std::mt19937_64 rng(9);
    for (int fixture = 0; fixture < 20; ++fixture) {
      const int folds = 2 + static_cast<int>(rng() % 4);
      const auto s = assign_folds(random_scores(rng, 10 + rng() % 20, 10 + rng() % 20), folds, rng());
      CHECK(cv_accuracy(s, folds).fold_accuracy == oracle_cv(s, folds));
    }
  }
  SUBCASE("indistinguishable distributions sit near chance") {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(-1, 1);
    ScoreSet s;
    for (int k = 0; k < 400; ++k) {
      s.genuine.push_back(u(rng));
      s.impostor.push_back(u(rng));
    }
    const auto folded = assign_folds(s, 10, 3);
    const double acc = cv_accuracy(folded, 10).mean;
    // Permutation reference: shuffle the labels and average the same statistic.
    double perm = 0;
    for (int p = 0; p < 10; ++p) {
      auto shuffled = folded;
      std::vector<bool> labels;
      for (const auto& x : shuffled) labels.push_back(x.genuine);
      std::shuffle(labels.begin(), labels.end(), rng);
      for (std::size_t k = 0; k < shuffled.size(); ++k) shuffled[k].genuine = labels[k];
      perm += cv_accuracy(shuffled, 10).mean / 10;
    }
    CHECK(std::abs(acc - 0.5) < 0.06);
    CHECK(std::abs(acc - perm) < 0.06);
  }
  SUBCASE("fold layout") {
    const auto folded = assign_folds({{0.1, 0.2, 0.3}, {0.0, -0.1}}, 2, 4);
    std::map<int, int> sizes;
    for (const auto& x : folded) ++sizes[x.fold];
    CHECK(sizes[0] == 3);
    CHECK(sizes[1] == 2);
    CHECK(folded.size() == 5);
    const auto again = assign_folds({{0.1, 0.2, 0.3}, {0.0, -0.1}}, 2, 4);
    for (std::size_t k = 0; k < 5; ++k) CHECK(again[k].fold == folded[k].fold);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(cv_accuracy({{0.1, true, 0}, {0.2, false, 0}}, 2), InvalidArgument);
    CHECK_THROWS_AS(cv_accuracy({{0.1, true, 0}}, 1), InvalidArgument);
    CHECK_THROWS_AS(cv_accuracy({{0.1, true, 3}}, 2), InvalidArgument);
  }
}

TEST_CASE("verification pairs") {
  SUBCASE("two identities with two samples each") {
    const auto p = draw_verification_pairs({0, 0, 1, 1}, 1, {0, 10});
    CHECK(p.genuine == std::vector<Pair>{{0, 1}, {2, 3}});
    CHECK(p.impostor.size() == 4);
    CHECK(p.warnings.size() == 1);
  }
  SUBCASE("sampled impostors are distinct cross-identity pairs and repeatable") {
    std::vector<int> labels;
    for (int c = 0; c < 6; ++c) labels.insert(labels.end(), 5, c);
    const auto p = draw_verification_pairs(labels, 7, {3, 40});
    CHECK(p.genuine.size() == 18);
    CHECK(p.impostor.size() == 40);
    CHECK(std::set<Pair>(p.impostor.begin(), p.impostor.end()).size() == 40);
    for (const auto& [a, b] : p.impostor) {
      CHECK(a < b);
      CHECK(labels[a] != labels[b]);
    }
    for (const auto& [a, b] : p.genuine) CHECK(labels[a] == labels[b]);
    const auto q = draw_verification_pairs(labels, 7, {3, 40});
    CHECK(q.genuine == p.genuine);
    CHECK(q.impostor == p.impostor);
    CHECK(draw_verification_pairs(labels, 8, {3, 40}).impostor != p.impostor);
    CHECK(draw_verification_pairs(labels, 7, {}).impostor.size() == 60);
  }
  SUBCASE("singletons and degenerate inputs") {
    const auto p = draw_verification_pairs({0, 0, 1}, 1, {});
    CHECK(p.genuine.size() == 1);
    CHECK(p.warnings.size() == 1);
    CHECK_THROWS_AS(draw_verification_pairs({0, 0}, 1, {}), InvalidArgument);
    CHECK_THROWS_AS(draw_verification_pairs({0, 1}, 1, {}), InvalidArgument);
  }
  SUBCASE("scores are bounded cosines") {
    std::mt19937_64 rng(3);
    const Features f = random_features(rng, 12, 5);
    std::vector<int> labels;
    for (int k = 0; k < 12; ++k) labels.push_back(k % 3);
    const auto s = score_pairs(f, draw_verification_pairs(labels, 1, {}));
    for (double v : s.genuine) CHECK(std::abs(v) <= 1.0);
    const auto scaled = score_pairs(3.5 * f, draw_verification_pairs(labels, 1, {}));
    for (std::size_t k = 0; k < s.impostor.size(); ++k) CHECK(scaled.impostor[k] == doctest::Approx(s.impostor[k]).epsilon(1e-14));
  }
}

TEST_CASE("rank1") {
  SUBCASE("probes equal to the gallery") {
    std::mt19937_64 rng(1);
    const Features g = random_features(rng, 5, 8);
    CHECK(rank1(g, {0, 1, 2, 3, 4}, g, {0, 1, 2, 3, 4}) == 1.0);
  }
  SUBCASE("orthogonal gallery with perturbed probes") {
    const Features g = Features::Identity(4, 4);
    Features p = g + 0.01 * Features::Ones(4, 4);
    CHECK(rank1(g, {7, 8, 9, 10}, p, {7, 8, 9, 10}) == 1.0);
  }
  SUBCASE("hand-set three-identity fixture") {
    Features g(4, 2), p(4, 2);
    g << 1, 0, 0, 1, -1, 0.2, -1, -0.2;  // identity 2 has two gallery images
    p << 0.9, 0.5, 0.4, 0.9, -0.8, 0.1, 0.1, 1;
    const std::vector<int> gl{0, 1, 2, 2}, pl{0, 1, 2, 0};
    CHECK(rank1(g, gl, p, pl) == 0.75);
    CHECK(rank1(g, gl, p, pl) * 4 == oracle_rank1_hits(g, gl, p, pl));
  }
  SUBCASE("random fixtures against the exhaustive oracle") {
    std::mt19937_64 rng(11);
    for (int fixture = 0; fixture < 20; ++fixture) {
      const int ids = 2 + static_cast<int>(rng() % 5);
      const Features g = random_features(rng, ids * 2, 4);
      const Features p = random_features(rng, 30, 4);
      std::vector<int> gl, pl;
      for (int k = 0; k < ids * 2; ++k) gl.push_back(k % ids);
      for (int k = 0; k < 30; ++k) pl.push_back(static_cast<int>(rng() % static_cast<unsigned>(ids)));
      CHECK(rank1(g, gl, p, pl) * 30 == doctest::Approx(oracle_rank1_hits(g, gl, p, pl)));
    }
  }
  SUBCASE("unknown probe identity") {
    CHECK_THROWS_AS(rank1(Features::Identity(2, 2), {0, 1}, Features::Identity(2, 2), {0, 5}), InvalidArgument);
  }
}

TEST_CASE("feature_dynamics") {
  SUBCASE("identical pairs in orthogonal classes") {
    Features f(6, 3);
    f << 1, 0, 0, 1, 0, 0, 0, 2, 0, 0, 2, 0, 0, 0, 1, 0, 0, 1;
    const auto d = feature_dynamics(f, {0, 0, 1, 1, 2, 2});
    CHECK(d.m_inter == 0.0);
    CHECK(d.m_intra == 1.0);
    CHECK(d.s_intra == 0.0);
  }
  SUBCASE("two classes of two 2-D embeddings") {
    Features f(4, 2);
    f << 1, 0, 0.6, 0.8, 0, 1, -0.6, 0.8;
    const auto d = feature_dynamics(f, {0, 0, 1, 1});
    CHECK(d.m_intra == doctest::Approx(0.7).epsilon(1e-14));
    CHECK(d.s_intra == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(d.m_inter == doctest::Approx(0.42).epsilon(1e-14));
  }
  SUBCASE("random fixtures against pairwise enumeration") {
    std::mt19937_64 rng(4);
    for (int fixture = 0; fixture < 25; ++fixture) {
      const int n = 4 + static_cast<int>(rng() % 60);
      const int classes = 2 + static_cast<int>(rng() % 4);
      std::vector<int> labels;
      for (int k = 0; k < n; ++k) labels.push_back(k % classes);
      if (n < 2 * classes) continue;
      const Features f = random_features(rng, n, 3 + static_cast<int>(rng() % 6));
      const auto d = feature_dynamics(f, labels);
      const auto o = oracle_dynamics(f, labels);
      CHECK(std::abs(d.m_inter - o.m_inter) < 1e-12);
      CHECK(std::abs(d.m_intra - o.m_intra) < 1e-12);
      CHECK(std::abs(d.s_intra - o.s_intra) < 1e-12);
      CHECK(d.m_inter >= 0.0);
      CHECK(d.m_inter <= 1.0);
      CHECK(d.s_intra >= 0.0);
      const auto scaled = feature_dynamics(2.5 * f, labels);
      CHECK(std::abs(scaled.m_intra - d.m_intra) < 1e-12);
    }
  }
  SUBCASE("row rendering") {
    CHECK(format_dynamics_row({0.0672, 0.49065, 0.13499}) == "0.0672,0.49065,0.13499");
    CHECK(format_dynamics_row({0.0664, 0.54917, 0.12807}) == "0.0664,0.54917,0.12807");
  }
  SUBCASE("single-sample class is named") {
    try {
      feature_dynamics(Features::Identity(3, 3), {0, 0, 4});
      FAIL("expected an error");
    } catch (const InvalidArgument& e) {
      CHECK(std::string(e.what()).find("class 4") != std::string::npos);
    }
  }
}

TEST_CASE("frechet_distance") {
  std::mt19937_64 rng(6);
  SUBCASE("identical sets") {
    const Features a = random_features(rng, 40, 5);
    CHECK(frechet_distance(a, a) <= 2e-6 * 5);
    const Features few = random_features(rng, 3, 5);  // singular covariance
    CHECK(frechet_distance(few, few) <= 2e-6 * 5);
  }
  SUBCASE("mean shift with shared covariance") {
    const Features a = random_features(rng, 50, 4);
    Eigen::RowVectorXd d(4);
    d << 0.5, -1, 2, 0.25;
    const Features b = a.rowwise() + d;
    CHECK(frechet_distance(a, b) == doctest::Approx(d.squaredNorm()).epsilon(1e-9));
  }
  SUBCASE("univariate Gaussians on exact moments") {
    Moments a{Eigen::VectorXd::Constant(1, 0.0), Eigen::MatrixXd::Constant(1, 1, 1.0)};
    Moments b{Eigen::VectorXd::Constant(1, 1.0), Eigen::MatrixXd::Constant(1, 1, 4.0)};
    CHECK(std::abs(frechet_distance(a, b) - 2.0) < 1e-6);
  }
  SUBCASE("commuting covariances match the closed form") {
    for (int fixture = 0; fixture < 20; ++fixture) {
      const int d = 2 + static_cast<int>(rng() % 6);
      const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(random_features(rng, d, d)).householderQ();
      std::uniform_real_distribution<double> u(0.1, 3.0);
      Eigen::VectorXd da(d), db(d), ma(d), mb(d);
      for (int k = 0; k < d; ++k) {
        da(k) = u(rng);
        db(k) = u(rng);
        ma(k) = u(rng);
        mb(k) = u(rng);
      }
      const Moments a{ma, q * da.asDiagonal() * q.transpose()};
      const Moments b{mb, q * db.asDiagonal() * q.transpose()};
      const double expect = (ma - mb).squaredNorm() + (da.cwiseSqrt() - db.cwiseSqrt()).squaredNorm();
      CHECK(std::abs(frechet_distance(a, b) - expect) < 1e-6);
      CHECK(std::abs(frechet_distance(b, a) - expect) < 1e-6);
    }
  }
  SUBCASE("symmetry and errors") {
    const Features a = random_features(rng, 30, 3), b = random_features(rng, 25, 3, 0.7);
    CHECK(frechet_distance(a, b) == doctest::Approx(frechet_distance(b, a)).epsilon(1e-10));
    CHECK(frechet_distance(a, b) >= 0.0);
    CHECK_THROWS_AS(frechet_distance(a, random_features(rng, 30, 4)), InvalidArgument);
  }
}

TEST_CASE("precision, recall and coverage") {
  std::mt19937_64 rng(8);
  SUBCASE("identical sets") {
    const Features a = random_features(rng, 20, 3);
    const auto pr = precision_recall(a, a);
    CHECK(pr.precision == 1.0);
    CHECK(pr.recall == 1.0);
    CHECK(coverage(a, a) == 1.0);
  }
  SUBCASE("far apart sets") {
    const Features a = random_features(rng, 20, 3), b = random_features(rng, 20, 3, 100.0);
    const auto pr = precision_recall(a, b);
    CHECK(pr.precision == 0.0);
    CHECK(pr.recall == 0.0);
    CHECK(coverage(a, b) == 0.0);
  }
  SUBCASE("16-point 2-D fixture") {
    Features real(16, 2), gen(16, 2);
    for (int k = 0; k < 16; ++k) {
      real(k, 0) = k % 4;
      real(k, 1) = k / 4;
      gen(k, 0) = 0.7 * (k % 4) + 2.5;
      gen(k, 1) = 0.9 * (k / 4) + 0.3 * (k % 2);
    }
    const auto pr = precision_recall(real, gen, 3);
    CHECK(pr.precision == oracle_inside(gen, real, 3));
    CHECK(pr.recall == oracle_inside(real, gen, 3));
    CHECK(coverage(real, gen, 3) == oracle_coverage(real, gen, 3));
    CHECK(pr.precision > 0.0);
    CHECK(pr.precision < 1.0);
  }
  SUBCASE("random fixtures match brute force exactly") {
    for (int fixture = 0; fixture < 25; ++fixture) {
      const int k = 1 + static_cast<int>(rng() % 5);
      const int nr = k + 1 + static_cast<int>(rng() % 40), ng = k + 1 + static_cast<int>(rng() % 40);
      const int d = 1 + static_cast<int>(rng() % 4);
      const Features real = random_features(rng, nr, d), gen = random_features(rng, ng, d, 0.5 * (fixture % 3));
      const auto pr = precision_recall(real, gen, k);
      CHECK(pr.precision == oracle_inside(gen, real, k));
      CHECK(pr.recall == oracle_inside(real, gen, k));
      CHECK(coverage(real, gen, k) == oracle_coverage(real, gen, k));
    }
  }
  SUBCASE("duplicates give zero radii that only hold exact matches") {
    Features real(4, 1), gen(4, 1);
    real << 1, 1, 1, 1;
    gen << 1, 1, 2, 2;
    const auto pr = precision_recall(real, gen, 1);
    CHECK(pr.precision == 0.5);
    CHECK(pr.recall == 1.0);
    CHECK(coverage(real, gen, 1) == 1.0);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(precision_recall(Features::Zero(3, 2), Features::Zero(3, 2), 3), InvalidArgument);
    CHECK_THROWS_AS(coverage(Features::Zero(5, 2), Features::Zero(5, 3), 3), InvalidArgument);
  }
}

TEST_CASE("correlation") {
  CHECK(*correlation({1, 2, 3, 4}, {3, 5, 7, 9}).pearson == doctest::Approx(1.0));
  CHECK(*correlation({1, 2, 3, 4}, {10, 1, 0.5, -3}).spearman == -1.0);
  const auto c = correlation({1, 2, 3, 4, 5}, {2, 1, 4, 3, 5});
  CHECK(*c.pearson == doctest::Approx(0.8).epsilon(1e-14));
  CHECK(*c.spearman == doctest::Approx(0.8).epsilon(1e-14));
  // Spearman uses average ranks: x ranks {1, 2.5, 2.5, 4, 5}.
  const auto t = correlation({1, 2, 2, 4, 100}, {1, 3, 2, 4, 5});
  const double rx[] = {1, 2.5, 2.5, 4, 5}, ry[] = {1, 3, 2, 4, 5};
  double sxy = 0, sxx = 0, syy = 0;
  for (int k = 0; k < 5; ++k) {
    sxy += (rx[k] - 3) * (ry[k] - 3);
    sxx += (rx[k] - 3) * (rx[k] - 3);
    syy += (ry[k] - 3) * (ry[k] - 3);
  }
  CHECK(*t.spearman == doctest::Approx(sxy / std::sqrt(sxx * syy)).epsilon(1e-14));
  CHECK(*t.pearson < *t.spearman);
  CHECK_FALSE(correlation({1, 1, 1}, {1, 2, 3}).pearson.has_value());
  CHECK_FALSE(correlation({1, 1, 1}, {1, 2, 3}).spearman.has_value());
  CHECK_THROWS_AS(correlation({1, 2}, {1, 2}), InvalidArgument);
  CHECK_THROWS_AS(correlation({1, 2, 3}, {1, 2}), InvalidArgument);

  TempDir dir("corr");
  write_scatter_csv({1, 2}, {0.5, 0.25}, "FD", "accuracy", dir / "s.csv");
  std::ifstream in(dir / "s.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "FD,accuracy");
}

TEST_CASE("fpr keys and report formats") {
  CHECK(fpr_key(1e-2) == "1e-2");
  CHECK(fpr_key(0.1) == "1e-1");
  CHECK(fpr_key(1e-3) == "1e-3");
  CHECK(fpr_key(5e-3) == "5e-3");
  CHECK(fpr_key(1e-6) == "1e-6");

  EvalReport r;
  r.model_id = "M_orig";
  r.dataset_id = "heldout";
  r.seed = 41;
  r.tar = {{0.1, 0.2, 0.1, 0.9}, {0.01, 0.5, 0.01, 0.7}, {0.001, 0.8, 0.0, 0.4}};
  r.cv.mean = 0.93;
  r.cv.std = 0.01;
  r.cv.fold_accuracy = {0.92, 0.94};
  r.rank1 = 0.8;
  r.dynamics = FeatureDynamics{0.0672, 0.49065, 0.13499};
  const auto csv = eval_csv({r});
  CHECK(csv.rfind("model,dataset,seed,B-1e-1,B-1e-2,B-1e-3,CV-mean,CV-std,TR1,M-Inter,M-Intra,S-Intra", 0) == 0);
  CHECK(csv.find("0.0672,0.49065,0.13499") != std::string::npos);
  const auto back = eval_from_json(eval_json({r}));
  REQUIRE(back.size() == 1);
  CHECK(back[0].tar_at(0.01) == 0.7);
  CHECK(back[0].dynamics->m_intra == 0.49065);
  CHECK(back[0].rank1 == 0.8);
  CHECK(eval_json(back) == eval_json({r}));
  CHECK_THROWS_AS(eval_from_json("[{}]"), FormatError);

  GenMetricsReport g{1.5, 0.7, 0.6, 0.8, 3, "oracle-v1", "repro", 100, 100};
  CHECK(gen_metrics_csv({g}).rfind("dataset,extractor,k,FD,Precision,Recall,Coverage", 0) == 0);
  CHECK(gen_metrics_json(gen_metrics_from_json(gen_metrics_json({g}))) == gen_metrics_json({g}));
}

TEST_CASE("roc curve") {
  std::mt19937_64 rng(12);
  const auto s = random_scores(rng, 50, 80);
  const auto roc = roc_curve(s);
  CHECK(roc.front() == std::pair{0.0, 0.0});
  CHECK(roc.back() == std::pair{1.0, 1.0});
  for (std::size_t k = 1; k < roc.size(); ++k) {
    CHECK(roc[k].first >= roc[k - 1].first);
    CHECK(roc[k].second >= roc[k - 1].second);
  }
}

TEST_CASE("evaluate a model on held-out identities") {
  TempDir dir("eval");
  dataset::ToyIdentitySpec spec;
  spec.num_classes = 4;
  spec.samples_per_class = 6;
  spec.image_size = 16;
  const auto m = dataset::synth_toy_dataset(spec, 3, dir.path());
  discriminator::BackboneConfig b;
  b.image_size = 16;
  b.width = 4;
  b.embedding_dim = 8;
  discriminator::EmbeddingModel model(b, 4, {}, 1);
  EvalConfig cfg;
  cfg.seed = 5;
  cfg.folds = 3;
  cfg.pairs = {0, 100};
  const auto r = evaluate(model, m, cfg, "M", "toy");
  CHECK(r.genuine_pairs == 60);
  CHECK(r.impostor_pairs == 100);
  REQUIRE(r.tar.size() == 3);
  CHECK(r.tar[0].tar >= r.tar[1].tar);
  CHECK(r.tar[1].tar >= r.tar[2].tar);
  CHECK(r.rank1.has_value());
  CHECK(*r.rank1 >= 0.0);
  CHECK(*r.rank1 <= 1.0);
  CHECK(r.cv.mean >= 0.0);
  CHECK(eval_json({evaluate(model, m, cfg, "M", "toy")}) == eval_json({r}));
  CHECK_FALSE(r.warnings.empty());  // 100 impostors cannot support 1e-3

  const auto [gallery, probes] = gallery_probe_split(m);
  CHECK(gallery.records.size() == 4);
  CHECK(probes.records.size() == 20);
  CHECK(rank1(model, gallery, probes) == *r.rank1);

  std::vector<std::string> warn;
  const auto s = verification_scores(model, m, 1, {}, &warn);
  CHECK(s.genuine.size() == 60);
  CHECK_THROWS_AS(verification_scores(model, m, 1, {}, nullptr, &m), InvalidArgument);
  const auto d = feature_dynamics(model, m);
  CHECK(d.m_inter >= 0.0);
}
