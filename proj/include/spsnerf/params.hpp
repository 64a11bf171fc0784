#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace spsnerf {

// One named dense array with its gradient and Adam moment buffers.
template <class Real>
struct ParamArray {
  std::string name;
  std::vector<std::uint32_t> shape;
  std::vector<Real> value, grad, m1, m2;

  std::size_t size() const { return value.size(); }
};

// Ordered collection of named parameter arrays. Order is creation order and
// is part of the checkpoint byte layout, so it must stay deterministic.
template <class Real>
struct ParamStoreT {
  std::vector<ParamArray<Real>> arrays;
  std::unordered_map<std::string, std::size_t> index;
  std::int64_t step = 0;  // completed optimizer updates

  ParamArray<Real>& add(const std::string& name, std::vector<std::uint32_t> shape) {
    if (index.count(name)) throw std::invalid_argument("ParamStore: duplicate array " + name);
    std::size_t n = 1;
    for (auto s : shape) n *= s;
    ParamArray<Real> a;
    a.name = name;
    a.shape = std::move(shape);
    a.value.assign(n, Real(0));
    a.grad.assign(n, Real(0));
    a.m1.assign(n, Real(0));
    a.m2.assign(n, Real(0));
    index[name] = arrays.size();
    arrays.push_back(std::move(a));
    return arrays.back();
  }

  bool has(const std::string& name) const { return index.count(name) != 0; }

  ParamArray<Real>& at(const std::string& name) {
    auto it = index.find(name);
    if (it == index.end()) throw std::out_of_range("ParamStore: no array " + name);
    return arrays[it->second];
  }
  const ParamArray<Real>& at(const std::string& name) const {
    auto it = index.find(name);
    if (it == index.end()) throw std::out_of_range("ParamStore: no array " + name);
    return arrays[it->second];
  }

  void zero_grad() {
    for (auto& a : arrays) std::fill(a.grad.begin(), a.grad.end(), Real(0));
  }

  std::size_t total_size() const {
    std::size_t n = 0;
    for (auto& a : arrays) n += a.size();
    return n;
  }

  template <class R2>
  ParamStoreT<R2> cast() const {
    ParamStoreT<R2> out;
    out.step = step;
    for (auto& a : arrays) {
      auto& b = out.add(a.name, a.shape);
      for (std::size_t i = 0; i < a.size(); ++i) {
        b.value[i] = R2(a.value[i]);
        b.m1[i] = R2(a.m1[i]);
        b.m2[i] = R2(a.m2[i]);
      }
    }
    return out;
  }
};

using ParamStore = ParamStoreT<float>;

}  // namespace spsnerf
