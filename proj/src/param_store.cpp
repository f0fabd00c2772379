#include "trama/param_store.hpp"

#include "trama/errors.hpp"

namespace trama::nn {

bool has_prefix(const std::string& name, const std::vector<std::string>& prefixes) {
  if (prefixes.empty()) return true;
  for (const auto& p : prefixes) {
    if (name.compare(0, p.size(), p) == 0) return true;
  }
  return false;
}

template <typename T>
ParamId ParamStore<T>::add(std::string name, Matrix<T> init) {
  if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
  const ParamId id = params_.size();
  Parameter<T> p;
  p.grad = Matrix<T>::Zero(init.rows(), init.cols());
  p.adam_m = Matrix<T>::Zero(init.rows(), init.cols());
  p.adam_v = Matrix<T>::Zero(init.rows(), init.cols());
  p.value = std::move(init);
  p.name = name;
  params_.push_back(std::move(p));
  index_.emplace(std::move(name), id);
  return id;
}

template <typename T>
ParamId ParamStore<T>::id(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
  return it->second;
}

template <typename T>
std::size_t ParamStore<T>::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

template <typename T>
void ParamStore<T>::zero_grad() {
  for (auto& p : params_) p.grad.setZero();
  grads_populated_ = false;
}

template <typename T>
void ParamStore<T>::copy_values_from(const ParamStore& src, const std::vector<std::string>& prefixes) {
  for (const auto& p : src.params_) {
    if (!has_prefix(p.name, prefixes)) continue;
    auto& dst = params_.at(id(p.name));
    if (dst.value.rows() != p.value.rows() || dst.value.cols() != p.value.cols()) {
      throw ConfigError("shape mismatch copying parameter " + p.name);
    }
    dst.value = p.value;
  }
}

template class ParamStore<float>;
template class ParamStore<double>;

}  // namespace trama::nn
