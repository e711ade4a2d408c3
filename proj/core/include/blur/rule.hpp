#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "blur/vecmath.hpp"

namespace blur {

struct UpdateRule {
  enum class Kind { blur, weighted_sum };
  // Which gradient λ scales in the weighted sum.
  enum class Weighting { retain, forget };

  Kind kind = Kind::blur;
  double gamma = 1.0;
  double grad_floor = 1e-12;
  double lambda = 1.0;
  Weighting weighting = Weighting::retain;

  static UpdateRule blur(double gamma = 1.0, double grad_floor = 1e-12);
  static UpdateRule weighted_sum(double lambda = 1.0, Weighting weighting = Weighting::retain);

  void validate() const;
};

std::string to_string(UpdateRule::Kind kind);
std::string to_string(UpdateRule::Weighting w);
UpdateRule::Kind parse_rule_kind(const std::string& name);
UpdateRule::Weighting parse_weighting(const std::string& name);

struct StepSchedule {
  enum class Kind { constant, theorem };

  Kind kind = Kind::constant;
  double eta = 1e-2;  // constant
  double C = 0.0, C1 = 0.0, L_f = 0.0;
  std::int64_t T = 0;

  static StepSchedule constant(double eta);
  static StepSchedule theorem(double C, double C1, double L_f, std::int64_t T);
  // C₁ = (2+γ)C.
  static StepSchedule theorem_for(double C, double L_f, double gamma, std::int64_t T);

  // (2/C₁)·√(C/L_f)·T^{-1/2} for the theorem kind.
  double step_size() const;
  // Throws ConfigError if the schedule is invalid or inconsistent with `rule`.
  void validate(const UpdateRule& rule) const;
};

std::string to_string(StepSchedule::Kind kind);

struct Direction {
  ParamVector u;
  std::optional<double> zeta_hat;  // absent on the degenerate branch
};

}  // namespace blur
