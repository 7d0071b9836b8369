#pragma once

#include <cmath>
#include <functional>
#include <string>

#include "pairsim/ops.hpp"
#include "pairsim/params.hpp"

namespace pairsim {

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
};

// Compares the tape gradient of a scalar function against central finite
// differences, entry by entry. `f` is evaluated with live (tape-attached)
// parameters for the analytic pass and with the raw parameters for the
// perturbed evaluations. Relative error denominator is max(|a|, |n|, 1e-8).
//
// `fault_scale` != 1 corrupts the analytic gradient before comparison; it
// exists so tests can prove the checker catches a broken backward pass.
inline GradCheckReport grad_check(const std::function<Tensor(const ParamMap&, Tape*)>& f,
                                  ParameterSet& params, double h, double fault_scale = 1.0) {
  if (h <= 0.0) throw ShapeError("grad_check: h must be positive");

  Tape tape;
  ParamMap live = params.attached(tape);
  Tensor loss = f(live, &tape);
  auto grads = tape.backward(loss);

  GradCheckReport report;
  for (auto& [name, t] : params.map()) {
    int node = live.at(name).node();
    const std::vector<double>* analytic =
        (node >= 0 && !grads[node].empty()) ? &grads[static_cast<std::size_t>(node)] : nullptr;
    for (std::size_t i = 0; i < t.size(); ++i) {
      double saved = t.values()[i];
      t.values()[i] = saved + h;
      double f_plus = f(params.map(), nullptr).value();
      t.values()[i] = saved - h;
      double f_minus = f(params.map(), nullptr).value();
      t.values()[i] = saved;

      double numeric = (f_plus - f_minus) / (2.0 * h);
      double a = (analytic ? (*analytic)[i] : 0.0) * fault_scale;
      double rel = std::fabs(a - numeric) /
                   std::max({std::fabs(a), std::fabs(numeric), 1e-8});
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_param = name;
        report.worst_index = i;
      }
    }
  }
  return report;
}

}  // namespace pairsim
