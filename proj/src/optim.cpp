#include "trama/optim.hpp"

#include <cmath>

#include "trama/errors.hpp"

namespace trama::nn {

template <typename T>
void adam_step(ParamStore<T>& params, const AdamConfig& cfg) {
  if (!params.grads_populated()) throw PreconditionError("adam_step: gradients not populated");
  const auto step = params.step_count() + 1;
  const T lr = static_cast<T>(cfg.lr);
  const T b1 = static_cast<T>(cfg.beta1);
  const T b2 = static_cast<T>(cfg.beta2);
  const T eps = static_cast<T>(cfg.eps);
  const T c1 = static_cast<T>(1.0 - std::pow(cfg.beta1, static_cast<double>(step)));
  const T c2 = static_cast<T>(1.0 - std::pow(cfg.beta2, static_cast<double>(step)));
  for (auto& p : params) {
    p.adam_m = b1 * p.adam_m + (T(1) - b1) * p.grad;
    p.adam_v = b2 * p.adam_v + (T(1) - b2) * p.grad.cwiseAbs2();
    p.value.array() -= lr * (p.adam_m.array() / c1) / ((p.adam_v.array() / c2).sqrt() + eps);
  }
  params.zero_grad();
  params.set_step_count(step);
}

template <typename T>
double clip_grad_norm(ParamStore<T>& params, double max_norm, const std::vector<std::string>& prefixes) {
  double sq = 0.0;
  for (const auto& p : params) {
    if (has_prefix(p.name, prefixes)) sq += static_cast<double>(p.grad.squaredNorm());
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const T f = static_cast<T>(max_norm / norm);
    for (auto& p : params) {
      if (has_prefix(p.name, prefixes)) p.grad *= f;
    }
  }
  return norm;
}

template void adam_step<float>(ParamStore<float>&, const AdamConfig&);
template void adam_step<double>(ParamStore<double>&, const AdamConfig&);
template double clip_grad_norm<float>(ParamStore<float>&, double, const std::vector<std::string>&);
template double clip_grad_norm<double>(ParamStore<double>&, double, const std::vector<std::string>&);

}  // namespace trama::nn
