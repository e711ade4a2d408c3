#include "blur/updaters.hpp"

#include <cmath>

namespace blur {

UpdateRule UpdateRule::blur(double gamma, double grad_floor) {
  UpdateRule r;
  r.kind = Kind::blur;
  r.gamma = gamma;
  r.grad_floor = grad_floor;
  return r;
}

UpdateRule UpdateRule::weighted_sum(double lambda, Weighting weighting) {
  UpdateRule r;
  r.kind = Kind::weighted_sum;
  r.lambda = lambda;
  r.weighting = weighting;
  return r;
}

void UpdateRule::validate() const {
  if (kind == Kind::blur && !(gamma > 0.0 && std::isfinite(gamma))) throw ConfigError("blur: gamma must be > 0");
  if (!(grad_floor >= 0.0)) throw ConfigError("grad_floor must be >= 0");
  if (kind == Kind::weighted_sum && !(lambda >= 0.0 && std::isfinite(lambda))) {
    throw ConfigError("weighted_sum: lambda must be >= 0");
  }
}

std::string to_string(UpdateRule::Kind kind) { return kind == UpdateRule::Kind::blur ? "blur" : "weighted_sum"; }

std::string to_string(UpdateRule::Weighting w) { return w == UpdateRule::Weighting::retain ? "retain" : "forget"; }

UpdateRule::Kind parse_rule_kind(const std::string& name) {
  if (name == "blur") return UpdateRule::Kind::blur;
  if (name == "weighted_sum") return UpdateRule::Kind::weighted_sum;
  throw ConfigError("unknown rule '" + name + "'");
}

UpdateRule::Weighting parse_weighting(const std::string& name) {
  if (name == "retain") return UpdateRule::Weighting::retain;
  if (name == "forget") return UpdateRule::Weighting::forget;
  throw ConfigError("unknown weighting '" + name + "'");
}

StepSchedule StepSchedule::constant(double eta) {
  StepSchedule s;
  s.kind = Kind::constant;
  s.eta = eta;
  return s;
}

StepSchedule StepSchedule::theorem(double C, double C1, double L_f, std::int64_t T) {
  StepSchedule s;
  s.kind = Kind::theorem;
  s.C = C;
  s.C1 = C1;
  s.L_f = L_f;
  s.T = T;
  s.eta = s.step_size();
  return s;
}

StepSchedule StepSchedule::theorem_for(double C, double L_f, double gamma, std::int64_t T) {
  return theorem(C, (2.0 + gamma) * C, L_f, T);
}

double StepSchedule::step_size() const {
  if (kind == Kind::constant) return eta;
  return 2.0 / C1 * std::sqrt(C / L_f) / std::sqrt(static_cast<double>(T));
}

std::string to_string(StepSchedule::Kind kind) { return kind == StepSchedule::Kind::constant ? "constant" : "theorem"; }

void StepSchedule::validate(const UpdateRule& rule) const {
  if (kind == Kind::constant) {
    if (!(eta >= 0.0 && std::isfinite(eta))) throw ConfigError("constant schedule: eta must be >= 0");
    return;
  }
  if (!(C > 0.0 && C1 > 0.0 && L_f > 0.0 && T >= 1)) {
    throw ConfigError("theorem schedule: C, C1, L_f must be > 0 and T >= 1");
  }
  if (rule.kind == UpdateRule::Kind::blur) {
    const double expect = (2.0 + rule.gamma) * C;
    if (std::abs(C1 - expect) > 1e-12 * expect) throw ConfigError("theorem schedule: C1 must equal (2+gamma)*C");
  }
}

Direction blur_direction(const ParamVector& g_f, const ParamVector& g_r, double gamma, double grad_floor) {
  require_same_dim(g_f, g_r, "blur_direction");
  const double nf2 = norm_sq(g_f);
  if (!std::isfinite(nf2)) throw NumericalError("blur_direction: non-finite ‖g_f‖²");
  if (!all_finite(g_r.values())) throw NumericalError("blur_direction: non-finite g_r");
  if (std::sqrt(nf2) <= grad_floor) return {g_r, std::nullopt};
  double c = dot(g_f, g_r) / nf2;
  if (!std::isfinite(c)) throw NumericalError("blur_direction: non-finite projection coefficient");
  std::vector<double> w(g_f.dim());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::fma(-c, g_f[i], g_r[i]);
  // Second projection pass removes the g_f component left by rounding in c.
  const ParamVector w1(std::move(w));
  const double c2 = dot(g_f, w1) / nf2;
  c += c2;
  std::vector<double> u(g_f.dim());
  for (std::size_t i = 0; i < u.size(); ++i) u[i] = std::fma(gamma, g_f[i], std::fma(-c2, g_f[i], w1[i]));
  if (!all_finite(u)) throw NumericalError("blur_direction: non-finite direction");
  return {ParamVector(std::move(u)), gamma - c};
}

ParamVector weighted_sum_direction(const ParamVector& g_f, const ParamVector& g_r, double lambda) {
  require_same_dim(g_f, g_r, "weighted_sum_direction");
  std::vector<double> u(g_f.dim());
  for (std::size_t i = 0; i < u.size(); ++i) u[i] = g_f[i] + lambda * g_r[i];
  if (!all_finite(u)) throw NumericalError("weighted_sum_direction: non-finite direction");
  return ParamVector(std::move(u));
}

Direction compute_direction(const UpdateRule& rule, const ParamVector& g_f, const ParamVector& g_r) {
  if (rule.kind == UpdateRule::Kind::blur) return blur_direction(g_f, g_r, rule.gamma, rule.grad_floor);
  if (rule.weighting == UpdateRule::Weighting::forget) {
    return {weighted_sum_direction(g_r, g_f, rule.lambda), rule.lambda};
  }
  return {weighted_sum_direction(g_f, g_r, rule.lambda), rule.lambda};
}

RunResult run(const BilevelProblem& problem, const ParamVector& theta0, const UpdateRule& rule,
              const StepSchedule& schedule, std::int64_t T, const RunHooks& hooks) {
  return run([&problem](std::int64_t) { return problem; }, theta0, rule, schedule, T, hooks);
}

RunResult run(const ProblemProvider& provider, const ParamVector& theta0, const UpdateRule& rule,
              const StepSchedule& schedule, std::int64_t T, const RunHooks& hooks) {
  rule.validate();
  schedule.validate(rule);
  if (T < 1) throw ConfigError("run: T must be >= 1");

  RunResult res{theta0, {}};
  res.trace.rule = rule;
  res.trace.schedule = schedule;
  res.trace.records.reserve(static_cast<std::size_t>(T));
  const double eta = schedule.step_size();
  std::vector<double> next(theta0.dim());

  for (std::int64_t t = 0; t < T; ++t) {
    if (hooks.on_iterate) hooks.on_iterate(t, res.theta);
    const BilevelProblem problem = provider(t);
    if (t == 0) res.trace.problem = problem.name;
    if (problem.dim() != theta0.dim()) throw DimensionError("run: problem and theta0 dims differ");
    try {
      const ValueGrad ef = problem.forget->evaluate(res.theta);
      const ValueGrad er = problem.retain->evaluate(res.theta);
      if (!std::isfinite(ef.value) || !std::isfinite(er.value)) throw NumericalError("non-finite loss value");
      const Direction dir = compute_direction(rule, ef.gradient, er.gradient);
      const StepRecord rec = make_record(t, ef.value, er.value, ef.gradient, er.gradient, dir, rule, eta);
      res.trace.records.push_back(rec);
      if (hooks.on_record) hooks.on_record(rec);
      for (std::size_t i = 0; i < next.size(); ++i) next[i] = res.theta[i] - eta * dir.u[i];
      res.theta = ParamVector(next);
    } catch (const NumericalError& e) {
      res.trace.status = RunStatus::aborted_nonfinite;
      res.trace.message = "step " + std::to_string(t) + ": " + e.what();
      return res;
    }
  }
  if (hooks.on_iterate) hooks.on_iterate(T, res.theta);
  return res;
}

}  // namespace blur
