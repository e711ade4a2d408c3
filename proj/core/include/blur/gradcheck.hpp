#pragma once

#include <cstddef>
#include <optional>

#include "blur/objective.hpp"

namespace blur {

struct FDSpec {
  double rel_step = 1e-5;   // h_i = max(rel_step·|θ_i|, abs_step)
  double abs_step = 1e-7;
  double tol_rel = 1e-6;
  double tol_abs = 1e-8;

  void validate() const;
};

// Central differences, coordinate by coordinate.
ParamVector fd_gradient(const Objective& obj, const ParamVector& theta, const FDSpec& spec = {});

struct GradCheckReport {
  double max_rel_err = 0.0;
  double max_abs_err = 0.0;
  bool pass = true;
  std::optional<std::size_t> failing_coordinate;  // first failing coordinate, if any
};

// Coordinate i passes when |a_i − n_i| <= max(tol_abs, tol_rel·max(|a_i|, |n_i|)).
GradCheckReport compare_gradients(const ParamVector& analytic, const ParamVector& numeric, const FDSpec& spec);
GradCheckReport check(const Objective& obj, const ParamVector& theta, const FDSpec& spec = {});

}  // namespace blur
