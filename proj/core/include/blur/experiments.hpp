#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "blur/analytic.hpp"
#include "blur/config.hpp"
#include "blur/diagnostics.hpp"
#include "blur/gradcheck.hpp"
#include "blur/toylm.hpp"
#include "blur/updaters.hpp"

namespace blur {

class TraceWriter;

// ---- analytic experiments ---------------------------------------------------

AnalyticProblemId problem_id(const ExperimentConfig& cfg);
ParamVector default_theta0(const ExperimentConfig& cfg, const BilevelProblem& problem);
// Constant, or the theorem schedule for horizon T with C and L_f from the config or the problem.
StepSchedule make_schedule(const ExperimentConfig& cfg, const BilevelProblem& problem, std::int64_t T);

struct Example1Run {
  double theta0 = 0.0;
  double theta_final = 0.0;
  RunTrace trace;
};
std::vector<Example1Run> run_example1(const ExperimentConfig& cfg);

struct RatePoint {
  std::int64_t T = 0;
  double eta = 0.0;
  double avg_grad_f_sq = 0.0;           // mean over starts of (1/T) Σ ‖∇f‖²
  double avg_grad_f_sq_plus_u_sq = 0.0; // mean over starts of (1/T) Σ ‖∇f‖² + ‖u‖²
};
struct RateStudyResult {
  SmoothnessBounds bounds{};
  std::vector<std::vector<double>> starts;
  std::vector<RatePoint> points;
  double slope_grad_f_sq = 0.0;
  double slope_grad_f_sq_plus_u_sq = 0.0;
  bool aborted = false;
};
// `trace_dir` non-empty writes trace_T<T>_start<k>.csv files there.
RateStudyResult run_rate_study(const ExperimentConfig& cfg, const std::string& trace_dir = {});

// ---- toy unlearning ---------------------------------------------------------

struct ToySetup {
  ToyLMShape shape;
  Corpus corpus;
  RetainSplit split;
  ToyLM original;
  std::vector<double> finetune_loss;
  MemorizationReport before;
};
// Corpus from cfg.seed, then finetune of a seeded random model on retain-train ∪ forget.
ToySetup prepare_toy(const ExperimentConfig& cfg);

struct Evaluation {
  std::int64_t step = 0;
  MemorizationReport report;
};

struct UnlearnResult {
  MemorizationReport before;
  MemorizationReport final_report;
  std::optional<Evaluation> selected;  // max know_mem_retain s.t. know_mem_forget <= threshold
  std::vector<Evaluation> evals;
  RunTrace trace;
  double chance = 0.0;
  double forget_threshold = 0.0;
  int align_f_sign_changes = 0;

  // The selected checkpoint, or the final model when none qualifies.
  const MemorizationReport& after() const { return selected ? selected->report : final_report; }
};

// Mean over secrets of (1/V)^|continuation|.
double chance_know_mem(std::span<const Secret> secrets, std::size_t vocab);
std::optional<Evaluation> select_checkpoint(std::span<const Evaluation> evals, double forget_threshold);

// Unlearning run from setup.original with cfg's rule, losses, schedule and steps.
// `cell_seed` drives RMU directions and minibatch draws.
UnlearnResult run_unlearning(const ToySetup& setup, const ExperimentConfig& cfg, std::uint64_t cell_seed,
                             TraceWriter* writer = nullptr);

// ---- gradient gate ---------------------------------------------------------------

struct GateResult {
  std::string target;
  int points = 0;
  int passed = 0;
  double max_rel_err = 0.0;
  double max_abs_err = 0.0;
  bool pass() const { return points > 0 && passed == points; }
};

// Every analytic objective and toy-LM loss known to the gate.
std::vector<std::string> gate_targets();
// Checks `target` at `points` seeded parameter vectors. Analytic targets use
// tol_rel 1e-6, toy-LM targets 1e-5; both with tol_abs 1e-8.
GateResult gradient_gate(const std::string& target, int points, std::uint64_t seed);

// ---- sweeps and orchestration -----------------------------------------------

struct SweepCell {
  std::size_t index = 0;
  std::string label;
  ExperimentConfig cfg;  // rule / loss parameters specialised for this cell
  std::uint64_t seed = 0;
};
// One cell for unlearn_pipeline and cosine_demo; the grid for the sweep kinds.
std::vector<SweepCell> make_cells(const ExperimentConfig& cfg);
bool is_sweep(ExperimentKind kind);

struct RunOptions {
  std::optional<std::size_t> cell;  // run one sweep cell only
  int jobs = 1;
  bool verbose = false;
};

// Runs the experiment and writes config.json, summary.json and traces under the
// output directory. Returns 0 on success, 2 if any run aborted on a non-finite value.
int run_experiment(const ExperimentConfig& cfg, const RunOptions& opts = {});

}  // namespace blur
