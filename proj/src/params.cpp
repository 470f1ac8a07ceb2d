#include "nasrec/params.hpp"

#include <cstring>

namespace nasrec {

const char* to_string(ParamKind kind) {
  switch (kind) {
    case ParamKind::kWeight: return "weight";
    case ParamKind::kBias: return "bias";
    case ParamKind::kNorm: return "norm";
    case ParamKind::kEmbedding: return "embedding";
  }
  return "unknown";
}

template <typename Real>
Parameter<Real>& ParamStore<Real>::add(std::string name, ParamKind kind, Tensor<Real> value) {
  if (index_.count(name)) throw Error("duplicate parameter '" + name + "'");
  Parameter<Real> p;
  p.name = name;
  p.kind = kind;
  p.grad = Tensor<Real>(value.shape());
  p.accum = Tensor<Real>(value.shape());
  p.value = std::move(value);
  index_.emplace(std::move(name), params_.size());
  params_.push_back(std::move(p));
  return params_.back();
}

template <typename Real>
Parameter<Real>* ParamStore<Real>::find(const std::string& name) {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &params_[it->second];
}

template <typename Real>
const Parameter<Real>* ParamStore<Real>::find(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &params_[it->second];
}

template <typename Real>
Parameter<Real>& ParamStore<Real>::get(const std::string& name) {
  if (auto* p = find(name)) return *p;
  throw Error("missing parameter '" + name + "'");
}

template <typename Real>
const Parameter<Real>& ParamStore<Real>::get(const std::string& name) const {
  if (const auto* p = find(name)) return *p;
  throw Error("missing parameter '" + name + "'");
}

template <typename Real>
void ParamStore<Real>::zero_grad() {
  for (auto& p : params_) {
    if (p.touched) {
      p.grad.fill(Real(0));
      p.touched = false;
    }
  }
}

template <typename Real>
void ParamStore<Real>::set_trainable(const std::function<bool(const Parameter<Real>&)>& pred) {
  for (auto& p : params_) p.trainable = pred(p);
}

template <typename Real>
std::size_t ParamStore<Real>::total_elements() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

template <typename Real>
std::uint64_t ParamStore<Real>::hash(const std::function<bool(const Parameter<Real>&)>& pred) const {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const void* data, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  };
  for (const auto& p : params_) {
    if (pred && !pred(p)) continue;
    mix(p.name.data(), p.name.size());
    mix(p.value.data().data(), p.value.size() * sizeof(Real));
  }
  return h;
}

template class ParamStore<float>;
template class ParamStore<double>;

}  // namespace nasrec
