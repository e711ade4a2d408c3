#include "blur/config.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "blur/analytic.hpp"

namespace blur {

using json = nlohmann::ordered_json;

namespace {

constexpr ExperimentKind kAllKinds[] = {
    ExperimentKind::single_run,     ExperimentKind::lambda_sweep,   ExperimentKind::gamma_beta_grid,
    ExperimentKind::alignment_demo, ExperimentKind::cosine_demo,    ExperimentKind::rate_study,
    ExperimentKind::unlearn_pipeline, ExperimentKind::example1,
};

// Typed access to one JSON object; remembers which keys were consumed.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  bool has(const char* key) {
    if (!j_.contains(key)) return false;
    seen_.insert(key);
    return true;
  }

  void number(const char* key, double& out) {
    if (!has(key)) return;
    const auto& v = j_.at(key);
    if (!v.is_number()) throw type_error(key, "a number");
    out = v.get<double>();
  }

  template <class Int>
  void integer(const char* key, Int& out) {
    if (!has(key)) return;
    const auto& v = j_.at(key);
    if (!v.is_number_integer()) throw type_error(key, "an integer");
    if constexpr (std::is_unsigned_v<Int>) {
      if (v.is_number_unsigned()) {
        out = static_cast<Int>(v.get<std::uint64_t>());
        return;
      }
      if (v.get<std::int64_t>() < 0) throw ConfigError(path_ + "." + key + ": must be >= 0");
    }
    out = static_cast<Int>(v.get<std::int64_t>());
  }

  void string(const char* key, std::string& out) {
    if (!has(key)) return;
    const auto& v = j_.at(key);
    if (!v.is_string()) throw type_error(key, "a string");
    out = v.get<std::string>();
  }

  template <class Enum, class Parse>
  void enumeration(const char* key, Enum& out, Parse parse) {
    std::string s;
    if (!has(key)) return;
    string(key, s);
    out = parse(s);
  }

  void numbers(const char* key, std::vector<double>& out) {
    if (!has(key)) return;
    const auto& v = j_.at(key);
    if (!v.is_array()) throw type_error(key, "an array of numbers");
    out.clear();
    for (const auto& e : v) {
      if (!e.is_number()) throw type_error(key, "an array of numbers");
      out.push_back(e.get<double>());
    }
  }

  void integers(const char* key, std::vector<std::int64_t>& out) {
    if (!has(key)) return;
    const auto& v = j_.at(key);
    if (!v.is_array()) throw type_error(key, "an array of integers");
    out.clear();
    for (const auto& e : v) {
      if (!e.is_number_integer()) throw type_error(key, "an array of integers");
      out.push_back(e.get<std::int64_t>());
    }
  }

  const json& object(const char* key) {
    seen_.insert(key);
    return j_.at(key);
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) throw ConfigError("unknown config key '" + path_ + (path_.empty() ? "" : ".") + k + "'");
    }
  }

 private:
  ConfigError type_error(const char* key, const char* want) const {
    return ConfigError(path_ + (path_.empty() ? "" : ".") + key + ": expected " + want);
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <class Fn>
void sub(Section& parent, const char* key, Fn fn) {
  if (!parent.has(key)) return;
  Section s(parent.object(key), key);
  fn(s);
  s.finish();
}

}  // namespace

std::string to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::single_run: return "single_run";
    case ExperimentKind::lambda_sweep: return "lambda_sweep";
    case ExperimentKind::gamma_beta_grid: return "gamma_beta_grid";
    case ExperimentKind::alignment_demo: return "alignment_demo";
    case ExperimentKind::cosine_demo: return "cosine_demo";
    case ExperimentKind::rate_study: return "rate_study";
    case ExperimentKind::unlearn_pipeline: return "unlearn_pipeline";
    case ExperimentKind::example1: return "example1";
  }
  return "?";
}

ExperimentKind parse_experiment_kind(const std::string& name) {
  for (ExperimentKind k : kAllKinds) {
    if (to_string(k) == name) return k;
  }
  throw ConfigError("unknown experiment '" + name + "'");
}

bool is_toy_experiment(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::lambda_sweep:
    case ExperimentKind::gamma_beta_grid:
    case ExperimentKind::alignment_demo:
    case ExperimentKind::cosine_demo:
    case ExperimentKind::unlearn_pipeline:
      return true;
    default:
      return false;
  }
}

ExperimentConfig default_config(ExperimentKind kind) {
  ExperimentConfig c;
  c.experiment = kind;
  switch (kind) {
    case ExperimentKind::single_run:
      c.problem.name = "quadratic_pair";
      c.steps = 10000;
      c.schedule.eta = 2.5e-3;
      break;
    case ExperimentKind::example1:
      c.problem.name = "example1_smoothed";
      c.steps = 5000;
      c.rule.weighting = UpdateRule::Weighting::forget;
      c.schedule.eta = 1e-2;
      break;
    case ExperimentKind::rate_study:
      c.problem.name = "nonconvex_bench";
      c.steps = 10000;
      c.schedule.kind = StepSchedule::Kind::theorem;
      break;
    case ExperimentKind::lambda_sweep:
      c.rule = UpdateRule::weighted_sum(1.0);
      c.unlearn.forget_loss = LossKind::ga_forget;
      break;
    case ExperimentKind::alignment_demo:
    case ExperimentKind::cosine_demo:
      c.rule = UpdateRule::weighted_sum(1.0);
      break;
    case ExperimentKind::gamma_beta_grid:
    case ExperimentKind::unlearn_pipeline:
      break;
  }
  if (is_toy_experiment(kind)) {
    c.problem.name = "toylm";
    c.steps = 600;
    c.schedule.eta = 0.5;
    c.rule.grad_floor = 1e-4;
  }
  return c;
}

ExperimentConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  Section root(j, "");
  std::string kind_name = "single_run";
  root.string("experiment", kind_name);
  ExperimentConfig c = default_config(parse_experiment_kind(kind_name));

  root.integer("seed", c.seed);
  root.integer("steps", c.steps);
  root.string("output_dir", c.output_dir);
  sub(root, "problem", [&](Section& s) {
    s.string("name", c.problem.name);
    s.number("mu", c.problem.mu);
    s.integer("dim", c.problem.dim);
    s.numbers("theta0", c.problem.theta0);
    s.numbers("starts", c.problem.starts);
    s.integer("n_starts", c.problem.n_starts);
    s.number("start_range", c.problem.start_range);
  });
  sub(root, "rule", [&](Section& s) {
    s.enumeration("kind", c.rule.kind, parse_rule_kind);
    s.number("gamma", c.rule.gamma);
    s.number("grad_floor", c.rule.grad_floor);
    s.number("lambda", c.rule.lambda);
    s.enumeration("weighting", c.rule.weighting, parse_weighting);
  });
  sub(root, "schedule", [&](Section& s) {
    s.enumeration("kind", c.schedule.kind, [](const std::string& n) {
      if (n == "constant") return StepSchedule::Kind::constant;
      if (n == "theorem") return StepSchedule::Kind::theorem;
      throw ConfigError("unknown schedule '" + n + "'");
    });
    s.number("eta", c.schedule.eta);
    s.number("C", c.schedule.C);
    s.number("L_f", c.schedule.L_f);
  });
  sub(root, "corpus", [&](Section& s) {
    s.integer("vocab", c.corpus.vocab);
    s.integer("n_retain", c.corpus.n_retain);
    s.integer("n_forget", c.corpus.n_forget);
    s.integer("n_secrets", c.corpus.n_secrets);
    s.integer("seq_len", c.corpus.seq_len);
    s.number("chain_peak", c.corpus.chain_peak);
    s.number("dirichlet_alpha", c.corpus.dirichlet_alpha);
    s.number("holdout_fraction", c.corpus.holdout_fraction);
  });
  sub(root, "model", [&](Section& s) {
    s.integer("hidden", c.model.hidden);
    s.number("init_scale", c.model.init_scale);
  });
  sub(root, "finetune", [&](Section& s) {
    s.integer("epochs", c.finetune.epochs);
    s.number("eta", c.finetune.eta);
  });
  sub(root, "unlearn", [&](Section& s) {
    s.enumeration("forget_loss", c.unlearn.forget_loss, parse_loss_kind);
    s.enumeration("retain_loss", c.unlearn.retain_loss, parse_loss_kind);
    s.number("beta", c.unlearn.beta);
    s.number("alpha", c.unlearn.alpha);
    s.enumeration("layer", c.unlearn.layer, parse_layer);
    s.number("c", c.unlearn.c);
    s.integer("eval_every", c.unlearn.eval_every);
    s.number("forget_threshold", c.unlearn.forget_threshold);
    s.integer("batch_size", c.unlearn.batch_size);
  });
  sub(root, "sweep", [&](Section& s) {
    s.numbers("lambdas", c.sweep.lambdas);
    s.numbers("gammas", c.sweep.gammas);
    s.numbers("betas", c.sweep.betas);
    s.integers("horizons", c.sweep.horizons);
  });
  root.finish();
  validate(c);
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config not found: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

void validate(const ExperimentConfig& c) {
  if (c.steps < 1) throw ConfigError("steps must be >= 1");
  c.rule.validate();
  if (c.schedule.kind == StepSchedule::Kind::constant && !(c.schedule.eta >= 0.0)) {
    throw ConfigError("schedule.eta must be >= 0");
  }
  if (!(c.schedule.C >= 0.0 && c.schedule.L_f >= 0.0)) throw ConfigError("schedule.C and schedule.L_f must be >= 0");

  if (is_toy_experiment(c.experiment)) {
    if (c.problem.name != "toylm") throw ConfigError("toy experiments require problem.name = \"toylm\"");
    if (c.corpus.seq_len < 2 || c.corpus.n_secrets > c.corpus.n_forget || c.corpus.vocab < c.corpus.n_secrets + 2) {
      throw ConfigError("corpus: need seq_len >= 2, n_secrets <= n_forget, vocab >= n_secrets + 2");
    }
    if (c.corpus.n_retain < 2) throw ConfigError("corpus.n_retain must be >= 2");
    if (c.corpus.n_forget < 1) throw ConfigError("corpus.n_forget must be >= 1");
    if (!(c.corpus.holdout_fraction > 0.0 && c.corpus.holdout_fraction < 1.0)) {
      throw ConfigError("corpus.holdout_fraction must be in (0,1)");
    }
    if (c.model.hidden < 1 || !(c.model.init_scale >= 0.0)) throw ConfigError("model: hidden >= 1, init_scale >= 0");
    if (c.finetune.epochs < 0 || !(c.finetune.eta > 0.0)) throw ConfigError("finetune: epochs >= 0, eta > 0");
    if (c.unlearn.eval_every < 1) throw ConfigError("unlearn.eval_every must be >= 1");
    if (!(c.unlearn.forget_threshold >= 0.0)) throw ConfigError("unlearn.forget_threshold must be >= 0");
    if (c.schedule.kind != StepSchedule::Kind::constant) throw ConfigError("toy experiments use a constant schedule");
    const bool rmu_f = c.unlearn.forget_loss == LossKind::rmu_forget;
    const bool rmu_r = c.unlearn.retain_loss == LossKind::rmu_retain;
    if (c.unlearn.forget_loss == LossKind::cross_entropy_retain || c.unlearn.forget_loss == LossKind::rmu_retain) {
      throw ConfigError("unlearn.forget_loss must be a forget loss");
    }
    if (c.unlearn.retain_loss != LossKind::cross_entropy_retain && !rmu_r) {
      throw ConfigError("unlearn.retain_loss must be cross_entropy_retain or rmu_retain");
    }
    if (rmu_f != rmu_r) throw ConfigError("rmu_forget and rmu_retain must be used together");
    LossSpec{.kind = c.unlearn.forget_loss, .beta = c.unlearn.beta, .alpha = c.unlearn.alpha, .c = c.unlearn.c}
        .validate();
  } else {
    const auto kind = parse_problem_kind(c.problem.name);
    if (!(c.problem.mu > 0.0)) throw ConfigError("problem.mu must be > 0");
    if (c.experiment == ExperimentKind::example1 && kind != AnalyticProblemId::Kind::example1_exact &&
        kind != AnalyticProblemId::Kind::example1_smoothed && kind != AnalyticProblemId::Kind::example1_huber) {
      throw ConfigError("example1 requires an example1_* problem");
    }
    if (c.experiment == ExperimentKind::example1 && c.problem.starts.empty()) {
      throw ConfigError("problem.starts must not be empty");
    }
    if (c.experiment == ExperimentKind::rate_study) {
      if (kind != AnalyticProblemId::Kind::nonconvex_bench) throw ConfigError("rate_study requires nonconvex_bench");
      if (c.sweep.horizons.size() < 3) throw ConfigError("rate_study needs at least 3 horizons");
      for (auto t : c.sweep.horizons) {
        if (t < 1) throw ConfigError("sweep.horizons must be >= 1");
      }
      if (c.problem.n_starts < 1 || !(c.problem.start_range > 0.0)) {
        throw ConfigError("problem: n_starts >= 1 and start_range > 0 required");
      }
    }
  }
  if (c.experiment == ExperimentKind::lambda_sweep) {
    if (c.sweep.lambdas.empty()) throw ConfigError("sweep.lambdas must not be empty");
    for (double l : c.sweep.lambdas) {
      if (!(l >= 0.0)) throw ConfigError("sweep.lambdas must be >= 0");
    }
  }
  if (c.experiment == ExperimentKind::gamma_beta_grid) {
    if (c.sweep.gammas.empty() || c.sweep.betas.empty()) throw ConfigError("sweep.gammas and sweep.betas must not be empty");
    for (double g : c.sweep.gammas) {
      if (!(g > 0.0)) throw ConfigError("sweep.gammas must be > 0");
    }
    for (double b : c.sweep.betas) {
      if (!(b > 0.0)) throw ConfigError("sweep.betas must be > 0");
    }
  }
}

std::string to_json(const ExperimentConfig& c) {
  json j;
  j["experiment"] = to_string(c.experiment);
  j["seed"] = c.seed;
  j["steps"] = c.steps;
  j["output_dir"] = c.output_dir;
  j["problem"] = {{"name", c.problem.name},     {"mu", c.problem.mu},
                  {"dim", c.problem.dim},       {"theta0", c.problem.theta0},
                  {"starts", c.problem.starts}, {"n_starts", c.problem.n_starts},
                  {"start_range", c.problem.start_range}};
  j["rule"] = {{"kind", to_string(c.rule.kind)},
               {"gamma", c.rule.gamma},
               {"grad_floor", c.rule.grad_floor},
               {"lambda", c.rule.lambda},
               {"weighting", to_string(c.rule.weighting)}};
  j["schedule"] = {{"kind", to_string(c.schedule.kind)},
                   {"eta", c.schedule.eta},
                   {"C", c.schedule.C},
                   {"L_f", c.schedule.L_f}};
  j["corpus"] = {{"vocab", c.corpus.vocab},
                 {"n_retain", c.corpus.n_retain},
                 {"n_forget", c.corpus.n_forget},
                 {"n_secrets", c.corpus.n_secrets},
                 {"seq_len", c.corpus.seq_len},
                 {"chain_peak", c.corpus.chain_peak},
                 {"dirichlet_alpha", c.corpus.dirichlet_alpha},
                 {"holdout_fraction", c.corpus.holdout_fraction}};
  j["model"] = {{"hidden", c.model.hidden}, {"init_scale", c.model.init_scale}};
  j["finetune"] = {{"epochs", c.finetune.epochs}, {"eta", c.finetune.eta}};
  j["unlearn"] = {{"forget_loss", to_string(c.unlearn.forget_loss)},
                  {"retain_loss", to_string(c.unlearn.retain_loss)},
                  {"beta", c.unlearn.beta},
                  {"alpha", c.unlearn.alpha},
                  {"layer", to_string(c.unlearn.layer)},
                  {"c", c.unlearn.c},
                  {"eval_every", c.unlearn.eval_every},
                  {"forget_threshold", c.unlearn.forget_threshold},
                  {"batch_size", c.unlearn.batch_size}};
  j["sweep"] = {{"lambdas", c.sweep.lambdas},
                {"gammas", c.sweep.gammas},
                {"betas", c.sweep.betas},
                {"horizons", c.sweep.horizons}};
  return j.dump(2) + "\n";
}

std::string resolve_output_dir(const ExperimentConfig& c) {
  if (!c.output_dir.empty()) return c.output_dir;
  const char* env = std::getenv("BLUR_OUT_DIR");
  const std::filesystem::path root = env && *env ? env : "blur_out";
  return (root / to_string(c.experiment)).string();
}

}  // namespace blur
