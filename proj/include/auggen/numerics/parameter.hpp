#pragma once

#include <string>
#include <utility>
#include <vector>

#include "auggen/numerics/tensor.hpp"

namespace auggen::numerics {

// A trainable tensor with its gradient slot.
template <typename Real>
struct Parameter {
  std::string name;
  BasicTensor<Real> value;
  BasicTensor<Real> grad;
  bool has_grad = false;

  Parameter() = default;
  Parameter(std::string n, BasicTensor<Real> v)
      : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

  void zero_grad() {
    grad.fill(Real{0});
    has_grad = false;
  }
};

template <typename Real>
using ParamList = std::vector<Parameter<Real>*>;

// Ordered name -> tensor snapshot. Used for checkpoints and the EMA shadow.
template <typename Real>
class BasicParameterSet {
 public:
  using Entry = std::pair<std::string, BasicTensor<Real>>;

  void add(std::string name, BasicTensor<Real> value) {
    if (find(name) != nullptr) throw InvalidArgument("duplicate parameter name: " + name);
    entries_.emplace_back(std::move(name), std::move(value));
  }

  const BasicTensor<Real>* find(const std::string& name) const {
    for (const auto& [n, t] : entries_) {
      if (n == name) return &t;
    }
    return nullptr;
  }
  BasicTensor<Real>* find(const std::string& name) {
    for (auto& [n, t] : entries_) {
      if (n == name) return &t;
    }
    return nullptr;
  }
  const BasicTensor<Real>& at(const std::string& name) const {
    const auto* t = find(name);
    if (t == nullptr) throw InvalidArgument("unknown parameter: " + name);
    return *t;
  }

  std::size_t size() const noexcept { return entries_.size(); }
  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.second.size();
    return n;
  }
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }
  Entry& operator[](std::size_t i) { return entries_[i]; }
  const Entry& operator[](std::size_t i) const { return entries_[i]; }

  static BasicParameterSet snapshot(const ParamList<Real>& params) {
    BasicParameterSet set;
    for (const auto* p : params) set.add(p->name, p->value);
    return set;
  }

  // Copies values into live parameters, matching by name and shape.
  void load_into(const ParamList<Real>& params) const {
    if (params.size() != entries_.size()) {
      throw ShapeError("parameter count mismatch: set has " + std::to_string(entries_.size()) +
                       ", model has " + std::to_string(params.size()));
    }
    for (auto* p : params) {
      const auto& t = at(p->name);
      require_shape(t, p->value.shape(), "load " + p->name);
      p->value = t;
    }
  }

  friend bool operator==(const BasicParameterSet& a, const BasicParameterSet& b) {
    return a.entries_ == b.entries_;
  }

 private:
  std::vector<Entry> entries_;
};

using ParameterSet = BasicParameterSet<float>;

}  // namespace auggen::numerics
