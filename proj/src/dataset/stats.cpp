#include "auggen/dataset/stats.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace auggen::dataset {

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw InvalidArgument("percentile of empty set");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

ClassStats class_stats_from_counts(const std::map<int, int>& counts) {
  if (counts.empty()) throw InvalidArgument("class_stats: empty manifest");
  ClassStats s;
  s.counts = counts;
  std::vector<double> v;
  for (const auto& [c, n] : counts) {
    v.push_back(n);
    s.total += n;
  }
  s.min = percentile(v, 0.0);
  s.p25 = percentile(v, 0.25);
  s.median = percentile(v, 0.5);
  s.p75 = percentile(v, 0.75);
  s.max = percentile(v, 1.0);
  return s;
}

ClassStats class_stats(const DatasetManifest& manifest) {
  std::map<int, int> counts;
  for (const auto& r : manifest.records) ++counts[r.class_id];
  return class_stats_from_counts(counts);
}

std::string format_percentile_row(const ClassStats& stats) {
  auto fmt = [](double v) {
    std::ostringstream os;
    if (v == std::round(v)) {
      os << static_cast<long long>(v);
    } else {
      os << v;
    }
    return os.str();
  };
  return fmt(stats.min) + " / " + fmt(stats.p25) + " / " + fmt(stats.median) + " / " +
         fmt(stats.p75) + " / " + fmt(stats.max);
}

LsPolicy parse_ls_policy(const std::string& s) {
  if (s == "above_median") return LsPolicy::above_median;
  if (s == "all") return LsPolicy::all;
  throw InvalidArgument("unknown L_s policy: " + s);
}

std::vector<int> select_ls(const std::map<int, int>& counts, LsPolicy policy) {
  const ClassStats stats = class_stats_from_counts(counts);
  std::vector<int> out;
  for (const auto& [c, n] : counts) {
    if (n < 2) continue;
    if (policy == LsPolicy::above_median && !(n > stats.median)) continue;
    out.push_back(c);
  }
  if (out.empty() && policy == LsPolicy::above_median) {
    throw InvalidArgument(
        "no class has more samples than the median (" + std::to_string(stats.median) +
        "); counts are (near) uniform, use the 'all' policy instead");
  }
  return out;
}

std::vector<int> select_ls(const DatasetManifest& manifest, LsPolicy policy) {
  return select_ls(class_stats(manifest).counts, policy);
}

}  // namespace auggen::dataset
