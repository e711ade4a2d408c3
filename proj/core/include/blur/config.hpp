#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "blur/losses.hpp"
#include "blur/rule.hpp"
#include "blur/toylm.hpp"

namespace blur {

enum class ExperimentKind {
  single_run,
  lambda_sweep,
  gamma_beta_grid,
  alignment_demo,
  cosine_demo,
  rate_study,
  unlearn_pipeline,
  example1,
};
std::string to_string(ExperimentKind kind);
ExperimentKind parse_experiment_kind(const std::string& name);
bool is_toy_experiment(ExperimentKind kind);

struct ProblemConfig {
  std::string name = "example1_smoothed";
  double mu = 0.05;
  std::size_t dim = 0;                        // 0: per-problem default
  std::vector<double> theta0;                 // single_run; empty: per-problem default
  std::vector<double> starts{-3.0, 0.5, 3.0}; // example1 starting points
  int n_starts = 4;                           // rate_study: random starts per horizon
  double start_range = 3.0;                   // rate_study: starts drawn from U(-range, range)^d
};

struct ScheduleConfig {
  StepSchedule::Kind kind = StepSchedule::Kind::constant;
  double eta = 1e-2;
  // Theorem schedule constants; 0 derives them from the problem.
  double C = 0.0;
  double L_f = 0.0;
};

struct CorpusConfig {
  std::size_t vocab = 32;
  std::size_t n_retain = 200;
  std::size_t n_forget = 50;
  std::size_t n_secrets = 12;
  std::size_t seq_len = 16;
  double chain_peak = 0.7;
  double dirichlet_alpha = 0.3;
  double holdout_fraction = 0.2;
};

struct ModelConfig {
  std::size_t hidden = 16;
  double init_scale = 0.3;
};

struct FinetuneConfig {
  int epochs = 2000;
  double eta = 0.25;
};

struct UnlearnConfig {
  LossKind forget_loss = LossKind::npo_forget;
  LossKind retain_loss = LossKind::cross_entropy_retain;
  double beta = 0.2;
  double alpha = 0.0;
  Layer layer = Layer::hidden_out;
  double c = 6.5;
  int eval_every = 10;
  // Checkpoint selection bound on know_mem_forget; 0 means 3x chance.
  double forget_threshold = 0.0;
  std::size_t batch_size = 0;  // 0: full batch
};

struct SweepConfig {
  std::vector<double> lambdas{0.25, 0.5, 1.0, 2.0, 4.0};
  std::vector<double> gammas{0.5, 1.0, 2.0};
  std::vector<double> betas{0.05, 0.1, 0.2};
  std::vector<std::int64_t> horizons{100, 1000, 10000};
};

struct ExperimentConfig {
  ExperimentKind experiment = ExperimentKind::single_run;
  std::uint64_t seed = 7;
  std::int64_t steps = 1000;
  std::string output_dir;  // empty: $BLUR_OUT_DIR/<experiment>, else blur_out/<experiment>
  ProblemConfig problem;
  UpdateRule rule;
  ScheduleConfig schedule;
  CorpusConfig corpus;
  ModelConfig model;
  FinetuneConfig finetune;
  UnlearnConfig unlearn;
  SweepConfig sweep;
};

ExperimentConfig default_config(ExperimentKind kind);

// Defaults for `experiment` overlaid with the JSON text. Unknown keys,
// wrong types and out-of-range values throw ConfigError.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::string& path);
void validate(const ExperimentConfig& cfg);

// Fully resolved config; parse_config(to_json(c)) reproduces c.
std::string to_json(const ExperimentConfig& cfg);

std::string resolve_output_dir(const ExperimentConfig& cfg);

}  // namespace blur
