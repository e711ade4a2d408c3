#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "blur/objective.hpp"
#include "blur/rule.hpp"

namespace blur {

struct StepRecord {
  std::int64_t step = 0;
  double f = 0.0;
  double r = 0.0;
  double grad_f_norm = 0.0;
  double grad_r_norm = 0.0;
  double u_norm = 0.0;
  std::optional<double> cos_fr;
  std::optional<double> align_f;
  std::optional<double> align_r;
  // BLUR: ζ̂. Weighted sum: λ.
  std::optional<double> zeta_hat;
  double eta = 0.0;

  friend bool operator==(const StepRecord&, const StepRecord&) = default;
};

enum class RunStatus { completed, aborted_nonfinite };
std::string to_string(RunStatus s);

struct RunTrace {
  std::vector<StepRecord> records;
  UpdateRule rule;
  StepSchedule schedule;
  std::string problem;
  std::uint64_t seed = 0;
  RunStatus status = RunStatus::completed;
  std::string message;  // reason for an abort
};

// ⟨g,d⟩/‖g‖²; absent when g = 0.
std::optional<double> alignment(const ParamVector& g, const ParamVector& d);
// Clamped to [-1, 1]; absent when either vector is 0.
std::optional<double> cosine(const ParamVector& g_f, const ParamVector& g_r);

struct KktResiduals {
  double stationarity;        // ‖g_r + ζ̂ g_f‖
  double lower_stationarity;  // ‖g_f‖
};
KktResiduals kkt_residuals(const ParamVector& g_f, const ParamVector& g_r, double zeta_hat);

StepRecord make_record(std::int64_t step, double f, double r, const ParamVector& g_f, const ParamVector& g_r,
                       const Direction& dir, const UpdateRule& rule, double eta);

struct TemporalAverages {
  double grad_f_sq;           // (1/T) Σ ‖∇f‖²
  double grad_f_sq_plus_u_sq; // (1/T) Σ ‖∇f‖² + ‖u‖²
};
TemporalAverages temporal_averages(std::span<const StepRecord> records);
TemporalAverages temporal_averages(const RunTrace& trace);

// Least-squares slope of log(avg) against log(T).
double rate_slope(std::span<const std::pair<double, double>> points);

// Heuristic: max ‖∇g(x)−∇g(y)‖/‖x−y‖ over random pairs in a box around `center`.
double estimate_lipschitz(const Objective& obj, const ParamVector& center, double radius, int pairs,
                          std::uint64_t seed);

// Number of sign flips in a sequence, skipping absent entries and exact zeros.
int count_sign_changes(std::span<const std::optional<double>> values);

}  // namespace blur
