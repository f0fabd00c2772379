#pragma once

#include <functional>

#include "trama/tape.hpp"

namespace trama::nn {

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  Eigen::Index worst_entry = -1;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// Compares the tape gradient of `loss_fn` against central differences for
/// every entry of every parameter:
///   max |analytic - cd| / (|analytic| + |cd| + 1e-12).
/// Stop-gradient values and discrete choices are frozen at their analytic-pass
/// values, so straight-through and stop-gradient paths are checked against
/// the surrogate they define. Non-finite gradients report infinity.
GradCheckReport grad_check_report(ParamStore<double>& params, const std::function<Var(Tape<double>&)>& loss_fn,
                                  double epsilon = 1e-5);

inline double grad_check(ParamStore<double>& params, const std::function<Var(Tape<double>&)>& loss_fn,
                         double epsilon = 1e-5) {
  return grad_check_report(params, loss_fn, epsilon).max_relative_error;
}

}  // namespace trama::nn
