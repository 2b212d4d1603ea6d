#pragma once

#include <string>
#include <vector>

namespace auggen::generator {

// Dense class-condition vector of length class_count. One-hot for the
// training classes; alpha * c_i + beta * c_j for a mixed class.
struct ConditionVector {
  std::vector<float> values;

  std::size_t size() const { return values.size(); }
  // Indices of the nonzero entries, ascending.
  std::vector<int> support() const;
  bool is_one_hot() const;
  std::string describe() const;  // "c[3]=1" or "c[3]=0.7,c[7]=0.7"
  friend bool operator==(const ConditionVector&, const ConditionVector&) = default;
};

inline constexpr double kMinMixWeight = 0.1;
inline constexpr double kMaxMixWeight = 1.1;

ConditionVector one_hot(int class_count, int index);

// c* = alpha * c_i + beta * c_j. Weights must lie in [0.1, 1.1] unless
// allow_boundary is set (tests may use 0 and 1 to recover a source class).
ConditionVector mix_conditions(const ConditionVector& c_i, const ConditionVector& c_j, double alpha, double beta,
                               bool allow_boundary = false);

}  // namespace auggen::generator
