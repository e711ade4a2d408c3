// blur: command-line front end for the bi-level unlearning experiments.
//
//   blur run --config cfg.json [--cell N] [--jobs N]
//   blur example1 --rule blur --gamma 1 --eta 0.01 --steps 5000
//   blur gradcheck [--target NAME] [--points 20]
//   blur rates [--seed 7]
//   blur unlearn --rule weighted_sum --lambda 0 --loss ga
//   blur sweep --kind lambda_sweep [--jobs 4]
//
// Exit status: 0 success, 1 configuration or usage error, 2 numerical abort
// or failed gradient check.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "blur/config.hpp"
#include "blur/errors.hpp"
#include "blur/experiments.hpp"

namespace {

struct Common {
  std::string config_path;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::int64_t> steps;
  int jobs = 1;
  std::optional<std::size_t> cell;
  bool verbose = false;
};

void add_common(CLI::App* app, Common& c, bool with_config) {
  if (with_config) app->add_option("--config", c.config_path, "JSON experiment config");
  app->add_option("--out", c.out, "output directory (default $BLUR_OUT_DIR/<experiment>)");
  app->add_option("--seed", c.seed, "base seed");
  app->add_option("--steps", c.steps, "iterations T");
  app->add_flag("-v,--verbose", c.verbose, "print the summary to stderr");
}

void add_rule_flags(CLI::App* app, std::optional<std::string>& rule, std::optional<double>& gamma,
                    std::optional<double>& lambda, std::optional<std::string>& weighting, std::optional<double>& eta) {
  app->add_option("--rule", rule, "blur | weighted_sum")->check(CLI::IsMember({"blur", "weighted_sum"}));
  app->add_option("--gamma", gamma, "BLUR forget weight γ");
  app->add_option("--lambda", lambda, "weighted-sum coefficient λ");
  app->add_option("--weighting", weighting, "which gradient λ scales: retain | forget")
      ->check(CLI::IsMember({"retain", "forget"}));
  app->add_option("--eta", eta, "constant step size η");
}

blur::ExperimentConfig base_config(const Common& c, blur::ExperimentKind kind) {
  blur::ExperimentConfig cfg = c.config_path.empty() ? blur::default_config(kind) : blur::load_config(c.config_path);
  if (!c.out.empty()) cfg.output_dir = c.out;
  if (c.seed) cfg.seed = *c.seed;
  if (c.steps) cfg.steps = *c.steps;
  return cfg;
}

void apply_rule(blur::ExperimentConfig& cfg, const std::optional<std::string>& rule, const std::optional<double>& gamma,
                const std::optional<double>& lambda, const std::optional<std::string>& weighting,
                const std::optional<double>& eta) {
  if (rule) cfg.rule.kind = blur::parse_rule_kind(*rule);
  if (gamma) cfg.rule.gamma = *gamma;
  if (lambda) cfg.rule.lambda = *lambda;
  if (weighting) cfg.rule.weighting = blur::parse_weighting(*weighting);
  if (eta) cfg.schedule.eta = *eta;
}

int run_gradcheck(const std::string& target, int points, std::uint64_t seed) {
  std::vector<std::string> targets = target == "all" ? blur::gate_targets() : std::vector<std::string>{target};
  bool ok = true;
  std::printf("%-26s %7s %12s %12s  %s\n", "target", "passed", "max_rel_err", "max_abs_err", "result");
  for (const auto& t : targets) {
    const blur::GateResult r = blur::gradient_gate(t, points, seed);
    ok = ok && r.pass();
    std::printf("%-26s %3d/%-3d %12.3e %12.3e  %s\n", t.c_str(), r.passed, r.points, r.max_rel_err, r.max_abs_err,
                r.pass() ? "PASS" : "FAIL");
  }
  return ok ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"BLUR bi-level unlearning experiments"};
  app.require_subcommand(1);

  Common run_c;
  auto* run_cmd = app.add_subcommand("run", "run any experiment from a JSON config");
  add_common(run_cmd, run_c, true);
  run_cmd->add_option("--cell", run_c.cell, "run one sweep cell only");
  run_cmd->add_option("--jobs", run_c.jobs, "parallel sweep cells")->check(CLI::PositiveNumber);

  Common ex_c;
  std::optional<std::string> ex_rule, ex_weighting, ex_problem;
  std::optional<double> ex_gamma, ex_lambda, ex_eta, ex_mu;
  std::vector<double> ex_theta0;
  auto* ex_cmd = app.add_subcommand("example1", "the one-dimensional bilevel toy");
  add_common(ex_cmd, ex_c, true);
  add_rule_flags(ex_cmd, ex_rule, ex_gamma, ex_lambda, ex_weighting, ex_eta);
  ex_cmd->add_option("--problem", ex_problem, "example1_smoothed | example1_exact | example1_huber");
  ex_cmd->add_option("--mu", ex_mu, "smoothing radius");
  ex_cmd->add_option("--theta0", ex_theta0, "starting points");

  std::string gc_target = "all";
  int gc_points = 20;
  std::uint64_t gc_seed = 1;
  auto* gc_cmd = app.add_subcommand("gradcheck", "finite-difference check of every analytic gradient");
  gc_cmd->add_option("--target", gc_target, "target name or 'all'");
  gc_cmd->add_option("--points", gc_points, "seeded points per target")->check(CLI::PositiveNumber);
  gc_cmd->add_option("--seed", gc_seed, "seed");
  bool gc_list = false;
  gc_cmd->add_flag("--list", gc_list, "list targets");

  Common rt_c;
  std::optional<double> rt_gamma;
  std::optional<std::size_t> rt_dim;
  std::optional<int> rt_starts;
  std::vector<std::int64_t> rt_horizons;
  auto* rt_cmd = app.add_subcommand("rates", "convergence-rate study on nonconvex_bench");
  add_common(rt_cmd, rt_c, true);
  rt_cmd->add_option("--gamma", rt_gamma, "BLUR γ");
  rt_cmd->add_option("--dim", rt_dim, "problem dimension");
  rt_cmd->add_option("--starts", rt_starts, "random starts per horizon");
  rt_cmd->add_option("--horizons", rt_horizons, "horizons T");

  Common ul_c;
  std::optional<std::string> ul_rule, ul_weighting, ul_loss, ul_retain_loss, ul_layer;
  std::optional<double> ul_gamma, ul_lambda, ul_eta, ul_beta, ul_alpha, ul_rmu_c;
  std::optional<std::size_t> ul_batch;
  auto* ul_cmd = app.add_subcommand("unlearn", "corpus, finetune, unlearn, evaluate");
  add_common(ul_cmd, ul_c, true);
  add_rule_flags(ul_cmd, ul_rule, ul_gamma, ul_lambda, ul_weighting, ul_eta);
  ul_cmd->add_option("--loss", ul_loss, "forget loss: ga | npo | simnpo | rmu_forget");
  ul_cmd->add_option("--retain-loss", ul_retain_loss, "cross_entropy_retain | rmu_retain");
  ul_cmd->add_option("--beta", ul_beta, "NPO / SimNPO β");
  ul_cmd->add_option("--alpha", ul_alpha, "SimNPO α");
  ul_cmd->add_option("--layer", ul_layer, "RMU layer: embedding_out | hidden_out");
  ul_cmd->add_option("--rmu-c", ul_rmu_c, "RMU target scale c");
  ul_cmd->add_option("--batch-size", ul_batch, "minibatch size (0 = full batch)");

  Common sw_c;
  std::optional<std::string> sw_kind;
  auto* sw_cmd = app.add_subcommand("sweep", "lambda_sweep, gamma_beta_grid or alignment_demo");
  add_common(sw_cmd, sw_c, true);
  sw_cmd->add_option("--kind", sw_kind, "sweep kind when no config is given")
      ->check(CLI::IsMember({"lambda_sweep", "gamma_beta_grid", "alignment_demo"}));
  sw_cmd->add_option("--cell", sw_c.cell, "run one cell only");
  sw_cmd->add_option("--jobs", sw_c.jobs, "parallel cells")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    using blur::ExperimentKind;
    if (*run_cmd) {
      if (run_c.config_path.empty()) throw blur::ConfigError("run: --config is required");
      auto cfg = base_config(run_c, ExperimentKind::single_run);
      return blur::run_experiment(cfg, {run_c.cell, run_c.jobs, run_c.verbose});
    }
    if (*ex_cmd) {
      auto cfg = base_config(ex_c, ExperimentKind::example1);
      if (cfg.experiment != ExperimentKind::example1) throw blur::ConfigError("example1: config is not an example1 experiment");
      apply_rule(cfg, ex_rule, ex_gamma, ex_lambda, ex_weighting, ex_eta);
      if (ex_problem) cfg.problem.name = *ex_problem;
      if (ex_mu) cfg.problem.mu = *ex_mu;
      if (!ex_theta0.empty()) cfg.problem.starts = ex_theta0;
      return blur::run_experiment(cfg, {std::nullopt, 1, ex_c.verbose});
    }
    if (*gc_cmd) {
      if (gc_list) {
        for (const auto& t : blur::gate_targets()) std::cout << t << "\n";
        return 0;
      }
      return run_gradcheck(gc_target, gc_points, gc_seed);
    }
    if (*rt_cmd) {
      auto cfg = base_config(rt_c, ExperimentKind::rate_study);
      if (cfg.experiment != ExperimentKind::rate_study) throw blur::ConfigError("rates: config is not a rate_study");
      if (rt_gamma) cfg.rule.gamma = *rt_gamma;
      if (rt_dim) cfg.problem.dim = *rt_dim;
      if (rt_starts) cfg.problem.n_starts = *rt_starts;
      if (!rt_horizons.empty()) cfg.sweep.horizons = rt_horizons;
      return blur::run_experiment(cfg, {std::nullopt, 1, rt_c.verbose});
    }
    if (*ul_cmd) {
      auto cfg = base_config(ul_c, ExperimentKind::unlearn_pipeline);
      if (!blur::is_toy_experiment(cfg.experiment)) throw blur::ConfigError("unlearn: config is not a toy experiment");
      apply_rule(cfg, ul_rule, ul_gamma, ul_lambda, ul_weighting, ul_eta);
      if (ul_loss) cfg.unlearn.forget_loss = blur::parse_loss_kind(*ul_loss);
      if (ul_retain_loss) cfg.unlearn.retain_loss = blur::parse_loss_kind(*ul_retain_loss);
      if (ul_beta) cfg.unlearn.beta = *ul_beta;
      if (ul_alpha) cfg.unlearn.alpha = *ul_alpha;
      if (ul_layer) cfg.unlearn.layer = blur::parse_layer(*ul_layer);
      if (ul_rmu_c) cfg.unlearn.c = *ul_rmu_c;
      if (ul_batch) cfg.unlearn.batch_size = *ul_batch;
      return blur::run_experiment(cfg, {std::nullopt, 1, ul_c.verbose});
    }
    if (*sw_cmd) {
      if (sw_c.config_path.empty() && !sw_kind) throw blur::ConfigError("sweep: give --config or --kind");
      auto cfg = base_config(sw_c, sw_kind ? blur::parse_experiment_kind(*sw_kind) : ExperimentKind::lambda_sweep);
      if (!blur::is_sweep(cfg.experiment)) throw blur::ConfigError("sweep: config is not a sweep experiment");
      return blur::run_experiment(cfg, {sw_c.cell, sw_c.jobs, sw_c.verbose});
    }
  } catch (const blur::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const blur::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 2;
  } catch (const blur::DimensionError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
