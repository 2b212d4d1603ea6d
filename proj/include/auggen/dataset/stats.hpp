#pragma once

#include <map>
#include <string>
#include <vector>

#include "auggen/dataset/manifest.hpp"

namespace auggen::dataset {

struct ClassStats {
  std::map<int, int> counts;  // class id -> samples
  double min = 0, p25 = 0, median = 0, p75 = 0, max = 0;
  long total = 0;
};

// Percentiles use linear interpolation between order statistics.
ClassStats class_stats(const DatasetManifest& manifest);
ClassStats class_stats_from_counts(const std::map<int, int>& counts);

double percentile(std::vector<double> values, double q);

// "min / 25% / 50% / 75% / max", e.g. "2 / 18 / 27 / 48 / 802".
std::string format_percentile_row(const ClassStats& stats);

enum class LsPolicy { above_median, all };
LsPolicy parse_ls_policy(const std::string& s);

// Classes eligible for mixing. above_median keeps classes whose count is
// strictly greater than the median; ties with the median are excluded.
// Classes with fewer than 2 samples are never eligible.
std::vector<int> select_ls(const DatasetManifest& manifest, LsPolicy policy);
std::vector<int> select_ls(const std::map<int, int>& counts, LsPolicy policy);

}  // namespace auggen::dataset
