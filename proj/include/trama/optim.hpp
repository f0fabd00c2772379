#pragma once

#include <string>
#include <vector>

#include "trama/param_store.hpp"

namespace trama::nn {

struct AdamConfig {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam update of every parameter, then zeroes gradients and
/// advances the store's step counter. Throws PreconditionError when no
/// backward pass populated gradients since the last step.
template <typename T>
void adam_step(ParamStore<T>& params, const AdamConfig& cfg);

/// Rescales gradients of parameters matching `prefixes` so their joint L2
/// norm is at most `max_norm`. Returns the norm before clipping.
template <typename T>
double clip_grad_norm(ParamStore<T>& params, double max_norm, const std::vector<std::string>& prefixes = {});

}  // namespace trama::nn
