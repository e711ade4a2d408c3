#pragma once

#include <cstdint>
#include <functional>

#include "blur/diagnostics.hpp"
#include "blur/objective.hpp"
#include "blur/rule.hpp"

namespace blur {

// u = γ g_f + g_r − (⟨g_f,g_r⟩/‖g_f‖²) g_f,  ζ̂ = γ − ⟨g_f,g_r⟩/‖g_f‖².
// Falls back to u = g_r when ‖g_f‖ <= grad_floor.
Direction blur_direction(const ParamVector& g_f, const ParamVector& g_r, double gamma, double grad_floor = 1e-12);

// û = g_f + λ g_r.
ParamVector weighted_sum_direction(const ParamVector& g_f, const ParamVector& g_r, double lambda);

Direction compute_direction(const UpdateRule& rule, const ParamVector& g_f, const ParamVector& g_r);

struct RunHooks {
  std::function<void(const StepRecord&)> on_record;
  // Called with θ(t) before step t, and with θ(T) after a completed run.
  std::function<void(std::int64_t step, const ParamVector& theta)> on_iterate;
};

struct RunResult {
  ParamVector theta;
  RunTrace trace;
};

// Problem to use at a given step; lets minibatch runs swap batches.
using ProblemProvider = std::function<BilevelProblem(std::int64_t step)>;

// θ(t+1) = θ(t) − η_t · direction(θ(t)) for t < T.
// A non-finite loss, gradient or iterate stops the run with status aborted_nonfinite.
RunResult run(const BilevelProblem& problem, const ParamVector& theta0, const UpdateRule& rule,
              const StepSchedule& schedule, std::int64_t T, const RunHooks& hooks = {});
RunResult run(const ProblemProvider& provider, const ParamVector& theta0, const UpdateRule& rule,
              const StepSchedule& schedule, std::int64_t T, const RunHooks& hooks = {});

}  // namespace blur
