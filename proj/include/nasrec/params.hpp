#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <string>
#include <unordered_map>

#include "nasrec/tensor.hpp"

namespace nasrec {

enum class ParamKind { kWeight, kBias, kNorm, kEmbedding };

const char* to_string(ParamKind kind);

template <typename Real>
struct Parameter {
  std::string name;
  ParamKind kind = ParamKind::kWeight;
  Tensor<Real> value;
  Tensor<Real> grad;
  // Adagrad sum of squared gradients.
  Tensor<Real> accum;
  bool trainable = true;
  // Set when a backward pass wrote into grad since the last zero_grad().
  bool touched = false;
};

// Named parameter collection. Element addresses are stable across insertion,
// so graphs may hold Parameter pointers while the store grows.
template <typename Real>
class ParamStore {
 public:
  Parameter<Real>& add(std::string name, ParamKind kind, Tensor<Real> value);

  Parameter<Real>* find(const std::string& name);
  const Parameter<Real>* find(const std::string& name) const;
  Parameter<Real>& get(const std::string& name);
  const Parameter<Real>& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::size_t size() const { return params_.size(); }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  void zero_grad();
  void set_trainable(const std::function<bool(const Parameter<Real>&)>& pred);
  std::size_t total_elements() const;

  // FNV-1a over names and raw values of the parameters accepted by `pred`.
  std::uint64_t hash(const std::function<bool(const Parameter<Real>&)>& pred = {}) const;

  template <typename Other>
  ParamStore<Other> cast() const {
    ParamStore<Other> out;
    for (const auto& p : params_) {
      auto& q = out.add(p.name, p.kind, p.value.template cast<Other>());
      q.accum = p.accum.template cast<Other>();
      q.trainable = p.trainable;
    }
    return out;
  }

 private:
  std::deque<Parameter<Real>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

extern template class ParamStore<float>;
extern template class ParamStore<double>;

}  // namespace nasrec
