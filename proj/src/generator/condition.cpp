#include "auggen/generator/condition.hpp"

#include <cmath>
#include <sstream>

#include "auggen/error.hpp"

namespace auggen::generator {

std::vector<int> ConditionVector::support() const {
  std::vector<int> out;
  for (std::size_t k = 0; k < values.size(); ++k)
    if (values[k] != 0.0f) out.push_back(static_cast<int>(k));
  return out;
}

bool ConditionVector::is_one_hot() const {
  const auto s = support();
  return s.size() == 1 && values[static_cast<std::size_t>(s[0])] == 1.0f;
}

std::string ConditionVector::describe() const {
  std::ostringstream os;
  bool first = true;
  for (int k : support()) {
    os << (first ? "" : ",") << "c[" << k << "]=" << values[static_cast<std::size_t>(k)];
    first = false;
  }
  return first ? "c=0" : os.str();
}

ConditionVector one_hot(int class_count, int index) {
  if (class_count < 1 || index < 0 || index >= class_count) {
    throw InvalidArgument("one_hot: class " + std::to_string(index) + " outside [0, " + std::to_string(class_count) + ")");
  }
  ConditionVector c;
  c.values.assign(static_cast<std::size_t>(class_count), 0.0f);
  c.values[static_cast<std::size_t>(index)] = 1.0f;
  return c;
}

ConditionVector mix_conditions(const ConditionVector& c_i, const ConditionVector& c_j, double alpha, double beta,
                               bool allow_boundary) {
  if (!c_i.is_one_hot() || !c_j.is_one_hot()) throw InvalidArgument("mix_conditions: sources must be one-hot");
  if (c_i.size() != c_j.size()) throw InvalidArgument("mix_conditions: class counts differ");
  const int i = c_i.support()[0], j = c_j.support()[0];
  if (i == j) throw InvalidArgument("mix_conditions: cannot mix class " + std::to_string(i) + " with itself");
  auto in_range = [&](double w) {
    if (!std::isfinite(w)) return false;
    if (allow_boundary) return w >= 0.0 && w <= kMaxMixWeight + 1e-9;
    return w >= kMinMixWeight - 1e-9 && w <= kMaxMixWeight + 1e-9;
  };
  if (!in_range(alpha) || !in_range(beta)) {
    throw InvalidArgument("mix_conditions: weights (" + std::to_string(alpha) + ", " + std::to_string(beta) +
                          ") outside [0.1, 1.1]");
  }
  ConditionVector c;
  c.values.assign(c_i.size(), 0.0f);
  c.values[static_cast<std::size_t>(i)] = static_cast<float>(alpha);
  c.values[static_cast<std::size_t>(j)] = static_cast<float>(beta);
  return c;
}

}  // namespace auggen::generator
