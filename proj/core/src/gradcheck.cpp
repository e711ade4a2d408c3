#include "blur/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace blur {

void FDSpec::validate() const {
  if (!(rel_step > 0.0 && abs_step > 0.0)) throw ConfigError("fd: step sizes must be > 0");
  if (!(tol_rel > 0.0 && tol_abs > 0.0)) throw ConfigError("fd: tolerances must be > 0");
}

ParamVector fd_gradient(const Objective& obj, const ParamVector& theta, const FDSpec& spec) {
  spec.validate();
  std::vector<double> x = theta.values();
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double xi = x[i];
    const double h = std::max(spec.rel_step * std::abs(xi), spec.abs_step);
    x[i] = xi + h;
    const double fp = obj.value(ParamVector(x));
    x[i] = xi - h;
    const double fm = obj.value(ParamVector(x));
    x[i] = xi;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw NumericalError("fd_gradient: non-finite value at coordinate " + std::to_string(i));
    }
    // Divide by the step actually taken after rounding.
    g[i] = (fp - fm) / ((xi + h) - (xi - h));
  }
  return ParamVector(std::move(g));
}

GradCheckReport compare_gradients(const ParamVector& analytic, const ParamVector& numeric, const FDSpec& spec) {
  require_same_dim(analytic, numeric, "gradcheck");
  GradCheckReport rep;
  for (std::size_t i = 0; i < analytic.dim(); ++i) {
    const double a = analytic[i], n = numeric[i];
    const double err = std::abs(a - n);
    const double mag = std::max(std::abs(a), std::abs(n));
    rep.max_abs_err = std::max(rep.max_abs_err, err);
    if (mag > 0.0) rep.max_rel_err = std::max(rep.max_rel_err, err / mag);
    if (err > std::max(spec.tol_abs, spec.tol_rel * mag)) {
      if (rep.pass) rep.failing_coordinate = i;
      rep.pass = false;
    }
  }
  return rep;
}

GradCheckReport check(const Objective& obj, const ParamVector& theta, const FDSpec& spec) {
  return compare_gradients(obj.gradient(theta), fd_gradient(obj, theta, spec), spec);
}

}  // namespace blur
