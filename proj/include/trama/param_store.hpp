#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace trama::nn {

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using ParamId = std::size_t;

template <typename T>
struct Parameter {
  std::string name;
  Matrix<T> value;
  Matrix<T> grad;
  Matrix<T> adam_m;
  Matrix<T> adam_v;
};

/// Named trainable tensors with one gradient slot and Adam moments each.
///
/// A frozen store (used for target networks) participates in forward passes
/// as constants: the tape never routes gradients into it.
template <typename T>
class ParamStore {
 public:
  ParamId add(std::string name, Matrix<T> init);

  ParamId id(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  Parameter<T>& at(ParamId id) { return params_.at(id); }
  const Parameter<T>& at(ParamId id) const { return params_.at(id); }
  Matrix<T>& value(ParamId id) { return params_.at(id).value; }
  const Matrix<T>& value(ParamId id) const { return params_.at(id).value; }

  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  void zero_grad();
  bool grads_populated() const { return grads_populated_; }
  void mark_grads_populated() { grads_populated_ = true; }

  std::int64_t step_count() const { return step_count_; }
  void set_step_count(std::int64_t s) { step_count_ = s; }

  bool frozen() const { return frozen_; }
  void set_frozen(bool f) { frozen_ = f; }

  /// Copies values by name for every parameter of `src` whose name starts
  /// with one of `prefixes` (all parameters when empty).
  void copy_values_from(const ParamStore& src, const std::vector<std::string>& prefixes = {});

  /// Same names and values at another precision; gradients and moments reset.
  template <typename U>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    for (const auto& p : params_) out.add(p.name, p.value.template cast<U>());
    out.set_step_count(step_count_);
    out.set_frozen(frozen_);
    return out;
  }

 private:
  std::vector<Parameter<T>> params_;
  std::unordered_map<std::string, ParamId> index_;
  std::int64_t step_count_ = 0;
  bool grads_populated_ = false;
  bool frozen_ = false;
};

bool has_prefix(const std::string& name, const std::vector<std::string>& prefixes);

extern template class ParamStore<float>;
extern template class ParamStore<double>;

}  // namespace trama::nn
