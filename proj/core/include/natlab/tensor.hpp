#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "natlab/common.hpp"

namespace natlab {

using Shape = std::vector<int>;

inline int64_t numel(const Shape& s) {
  int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

// Dense row-major tensor value. T is float or double; the whole numeric
// stack is instantiated for both so training runs in 32-bit while the
// gradient-verification suite runs in 64-bit.
template <class T>
struct TensorData {
  Shape shape;
  std::vector<T> v;

  TensorData() = default;
  explicit TensorData(Shape s, T fill = T(0))
      : shape(std::move(s)), v(static_cast<size_t>(numel(shape)), fill) {}
  TensorData(Shape s, std::vector<T> values) : shape(std::move(s)), v(std::move(values)) {
    check(static_cast<int64_t>(v.size()) == numel(shape), "tensor data size ", v.size(),
          " does not match shape ", shape_str(shape));
  }

  int64_t size() const { return static_cast<int64_t>(v.size()); }
  T* data() { return v.data(); }
  const T* data() const { return v.data(); }

  T& at(int64_t i) { return v[static_cast<size_t>(i)]; }
  const T& at(int64_t i) const { return v[static_cast<size_t>(i)]; }

  template <class U>
  TensorData<U> cast() const {
    TensorData<U> out;
    out.shape = shape;
    out.v.resize(v.size());
    for (size_t i = 0; i < v.size(); ++i) out.v[i] = static_cast<U>(v[i]);
    return out;
  }
};

// Named tensor collection preserving insertion order (iteration order is
// part of the determinism contract: parameter updates, checkpoint layout
// and norm computations all walk it front to back).
template <class T>
class TensorMap {
public:
  using Item = std::pair<std::string, TensorData<T>>;

  TensorData<T>& emplace(const std::string& name, TensorData<T> data) {
    check(!index_.count(name), "duplicate tensor name '", name, "'");
    index_[name] = items_.size();
    items_.emplace_back(name, std::move(data));
    return items_.back().second;
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  TensorData<T>& at(const std::string& name) {
    auto it = index_.find(name);
    check(it != index_.end(), "unknown tensor '", name, "'");
    return items_[it->second].second;
  }
  const TensorData<T>& at(const std::string& name) const {
    auto it = index_.find(name);
    check(it != index_.end(), "unknown tensor '", name, "'");
    return items_[it->second].second;
  }

  size_t size() const { return items_.size(); }
  auto begin() { return items_.begin(); }
  auto end() { return items_.end(); }
  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }

  int64_t total_elements() const {
    int64_t n = 0;
    for (const auto& [name, t] : items_) n += t.size();
    return n;
  }

  // Order-sensitive fingerprint over names, shapes and raw values.
  uint64_t fingerprint() const {
    uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& [name, t] : items_) {
      h = fnv1a(name, h);
      h = fnv1a(t.shape.data(), t.shape.size() * sizeof(int), h);
      h = fnv1a(t.v.data(), t.v.size() * sizeof(T), h);
    }
    return h;
  }

  template <class U>
  TensorMap<U> cast() const {
    TensorMap<U> out;
    for (const auto& [name, t] : items_) out.emplace(name, t.template cast<U>());
    return out;
  }

private:
  std::vector<Item> items_;
  std::unordered_map<std::string, size_t> index_;
};

}  // namespace natlab
