#include "trama/grad_check.hpp"

#include <cmath>
#include <limits>
#include <vector>

namespace trama::nn {

GradCheckReport grad_check_report(ParamStore<double>& params, const std::function<Var(Tape<double>&)>& loss_fn,
                                  double epsilon) {
  FrozenDecisions<double> frozen;
  std::vector<Matrix<double>> analytic;
  {
    params.zero_grad();
    Tape<double> tape(&frozen);
    const Var loss = loss_fn(tape);
    tape.backward(loss);
    for (const auto& p : params) analytic.push_back(p.grad);
    params.zero_grad();
  }

  auto evaluate = [&]() {
    frozen.start_replay();
    Tape<double> tape(&frozen);
    const Var loss = loss_fn(tape);
    return tape.value(loss)(0, 0);
  };

  GradCheckReport report;
  for (ParamId id = 0; id < params.size(); ++id) {
    auto& value = params.value(id);
    for (Eigen::Index i = 0; i < value.size(); ++i) {
      const double a = analytic[id].data()[i];
      double rel;
      double cd = 0.0;
      if (!std::isfinite(a)) {
        rel = std::numeric_limits<double>::infinity();
      } else {
        const double saved = value.data()[i];
        value.data()[i] = saved + epsilon;
        const double up = evaluate();
        value.data()[i] = saved - epsilon;
        const double down = evaluate();
        value.data()[i] = saved;
        cd = (up - down) / (2.0 * epsilon);
        rel = std::isfinite(cd) ? std::abs(a - cd) / (std::abs(a) + std::abs(cd) + 1e-12)
                                : std::numeric_limits<double>::infinity();
      }
      if (rel > report.max_relative_error || report.worst_entry < 0) {
        report.max_relative_error = rel;
        report.worst_parameter = params.at(id).name;
        report.worst_entry = i;
        report.analytic = a;
        report.numeric = cd;
      }
    }
  }
  return report;
}

}  // namespace trama::nn
