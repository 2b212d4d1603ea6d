#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace auggen::evalbench {

// Rows are samples.
using Features = Eigen::MatrixXd;

// Cosine scores of genuine (same identity) and impostor pairs.
struct ScoreSet {
  std::vector<double> genuine;
  std::vector<double> impostor;

  void validate() const;  // scores finite and in [-1, 1]
};

struct TarPoint {
  double fpr_target = 0;
  double threshold = 0;     // a pair is accepted when its score is strictly above this
  double achieved_fpr = 0;  // impostor fraction above the threshold
  double tar = 0;
};

struct TarResult {
  std::vector<TarPoint> points;  // one per target, in the order requested
  std::vector<std::string> warnings;
};

// Per target: the loosest threshold whose impostor accept rate does not
// exceed the target, and the genuine accept rate there.
TarResult tar_at_fpr(const ScoreSet& scores, const std::vector<double>& fpr_targets);

struct LabeledScore {
  double score = 0;
  bool genuine = false;
  int fold = 0;
};

// Folds interleave a seeded shuffle of all pairs, so sizes differ by at most one.
std::vector<LabeledScore> assign_folds(const ScoreSet& scores, int folds, std::uint64_t seed);

struct CvAccuracy {
  double mean = 0;
  double std = 0;  // population std across folds
  std::vector<double> fold_accuracy;
  std::vector<double> fold_threshold;
};

// Threshold picked on the other folds (maximum accuracy, lowest on ties,
// midway between adjacent training scores; accept when score >= threshold),
// accuracy measured on the held fold.
CvAccuracy cv_accuracy(const std::vector<LabeledScore>& scores, int folds);

// Each probe goes to its most similar gallery template (mean of that
// identity's unit embeddings, renormalized). Ties go to the lower identity.
double rank1(const Features& gallery, const std::vector<int>& gallery_labels, const Features& probes,
             const std::vector<int>& probe_labels);

struct FeatureDynamics {
  double m_inter = 0;  // mean |cos| over cross-class pairs
  double m_intra = 0;  // mean cos over within-class pairs
  double s_intra = 0;  // population std of within-class cos
};

FeatureDynamics feature_dynamics(const Features& feats, const std::vector<int>& labels);

// Fixed-point rendering of the three values, e.g. "0.0672,0.49065,0.13499".
std::string format_dynamics_row(const FeatureDynamics& d);

struct Moments {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;  // unbiased
};

Moments moments(const Features& feats);

// |mu_a - mu_b|^2 + Tr(S_a + S_b - 2 (S_a S_b)^(1/2)). When either covariance
// is near singular both get eps * I added.
double frechet_distance(const Moments& a, const Moments& b, double eps = 1e-6);
double frechet_distance(const Features& a, const Features& b, double eps = 1e-6);

// k-NN manifold estimators. Radii come from the k-th nearest neighbour
// within the same set, self excluded. Distances are compared squared.
struct PrecisionRecall {
  double precision = 0;
  double recall = 0;
};
PrecisionRecall precision_recall(const Features& real, const Features& gen, int k = 3);
double coverage(const Features& real, const Features& gen, int k = 3);

// Squared k-th neighbour distance per row, self excluded.
std::vector<double> knn_radii_sq(const Features& set, int k);

struct Correlation {
  std::size_t n = 0;
  std::optional<double> pearson;   // empty when either side has zero variance
  std::optional<double> spearman;  // ranks average over ties
};

Correlation correlation(const std::vector<double>& x, const std::vector<double>& y);

// "x,y" rows under a header naming both columns.
void write_scatter_csv(const std::vector<double>& x, const std::vector<double>& y, const std::string& x_name,
                       const std::string& y_name, const std::filesystem::path& file);

// "1e-2" for 0.01, "5e-3" for 0.005.
std::string fpr_key(double fpr);

}  // namespace auggen::evalbench
