#include "blur/analytic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "blur/rng.hpp"

namespace blur {

void Objective::check_dim(const ParamVector& theta) const {
  if (theta.dim() != dim()) {
    throw DimensionError("objective expects dim " + std::to_string(dim()) + ", got " +
                         std::to_string(theta.dim()));
  }
}

BilevelProblem::BilevelProblem(std::shared_ptr<const Objective> forget_obj,
                               std::shared_ptr<const Objective> retain_obj,
                               std::optional<double> lower_opt, std::string problem_name)
    : forget(std::move(forget_obj)),
      retain(std::move(retain_obj)),
      known_lower_opt(lower_opt),
      name(std::move(problem_name)) {
  if (!forget || !retain) throw DimensionError("BilevelProblem: null objective");
  if (forget->dim() != retain->dim()) throw DimensionError("BilevelProblem: forget/retain dims differ");
}

// --- Example 1 -------------------------------------------------------------

double Example1Lower::value(const ParamVector& theta) const {
  check_dim(theta);
  const double t = theta[0];
  return std::abs(t - 1.0) + std::abs(t + 1.0);
}

ParamVector Example1Lower::gradient(const ParamVector& theta) const {
  check_dim(theta);
  const double t = theta[0];
  if (t > 1.0) return ParamVector{2.0};
  if (t < -1.0) return ParamVector{-2.0};
  return ParamVector{0.0};
}

double Example1Upper::value(const ParamVector& theta) const {
  check_dim(theta);
  const double d = theta[0] - 2.0;
  return d * d;
}

ParamVector Example1Upper::gradient(const ParamVector& theta) const {
  check_dim(theta);
  return ParamVector{2.0 * (theta[0] - 2.0)};
}

namespace {

double huber_abs(double z, double mu) {
  const double a = std::abs(z);
  return a <= mu ? z * z / (2.0 * mu) + mu / 2.0 : a;
}

double huber_abs_grad(double z, double mu) {
  if (std::abs(z) <= mu) return z / mu;
  return z > 0.0 ? 1.0 : -1.0;
}

void require_mu(double mu) {
  if (!(mu > 0.0) || !std::isfinite(mu)) throw ConfigError("smoothing radius mu must be > 0");
}

}  // namespace

Example1Huber::Example1Huber(double mu) : mu_(mu) { require_mu(mu); }

double Example1Huber::value(const ParamVector& theta) const {
  check_dim(theta);
  const double t = theta[0];
  return huber_abs(t - 1.0, mu_) + huber_abs(t + 1.0, mu_);
}

ParamVector Example1Huber::gradient(const ParamVector& theta) const {
  check_dim(theta);
  const double t = theta[0];
  return ParamVector{huber_abs_grad(t - 1.0, mu_) + huber_abs_grad(t + 1.0, mu_)};
}

Example1Smoothed::Example1Smoothed(double mu) : mu_(mu) { require_mu(mu); }

double Example1Smoothed::value(const ParamVector& theta) const {
  check_dim(theta);
  const double s = std::max(std::abs(theta[0]) - 1.0, 0.0);
  const double h = s <= mu_ ? s * s / (2.0 * mu_) : s - mu_ / 2.0;
  return 2.0 + 2.0 * h;
}

ParamVector Example1Smoothed::gradient(const ParamVector& theta) const {
  check_dim(theta);
  const double t = theta[0];
  const double s = std::max(std::abs(t) - 1.0, 0.0);
  const double dh = s <= mu_ ? s / mu_ : 1.0;
  return ParamVector{2.0 * dh * (t > 0.0 ? 1.0 : -1.0)};
}

// --- Quadratic -------------------------------------------------------------

QuadraticObjective::QuadraticObjective(std::size_t rows, std::vector<double> matrix,
                                       std::vector<double> center)
    : rows_(rows), matrix_(std::move(matrix)), center_(std::move(center)) {
  if (rows_ == 0 || center_.empty() || matrix_.size() != rows_ * center_.size()) {
    throw DimensionError("QuadraticObjective: matrix is not rows x dim");
  }
}

std::vector<double> QuadraticObjective::residual(const ParamVector& theta) const {
  check_dim(theta);
  const std::size_t n = center_.size();
  std::vector<double> res(rows_, 0.0);
  for (std::size_t i = 0; i < rows_; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += matrix_[i * n + j] * (theta[j] - center_[j]);
    res[i] = s;
  }
  return res;
}

double QuadraticObjective::value(const ParamVector& theta) const {
  double s = 0.0;
  for (double r : residual(theta)) s += r * r;
  return s;
}

ParamVector QuadraticObjective::gradient(const ParamVector& theta) const {
  return evaluate(theta).gradient;
}

ValueGrad QuadraticObjective::evaluate(const ParamVector& theta) const {
  const auto res = residual(theta);
  const std::size_t n = center_.size();
  double v = 0.0;
  std::vector<double> g(n, 0.0);
  for (std::size_t i = 0; i < rows_; ++i) {
    v += res[i] * res[i];
    for (std::size_t j = 0; j < n; ++j) g[j] += 2.0 * matrix_[i * n + j] * res[i];
  }
  return {v, ParamVector(std::move(g))};
}

// --- Sinusoid bench ----------------------------------------------------------

SinusoidBench::SinusoidBench(std::vector<double> omega, std::vector<double> phase, double box)
    : omega_(std::move(omega)), phase_(std::move(phase)), box_(box) {
  if (omega_.empty() || omega_.size() != phase_.size()) {
    throw DimensionError("SinusoidBench: omega/phase size mismatch");
  }
  if (!(box_ > 0.0)) throw ConfigError("SinusoidBench: box must be > 0");
}

double SinusoidBench::value(const ParamVector& theta) const {
  check_dim(theta);
  double v = 0.0;
  for (std::size_t i = 0; i < omega_.size(); ++i) {
    const double c = box_ * std::tanh(theta[i] / box_);
    v += std::sin(omega_[i] * c + phase_[i]) + 0.01 * c * c;
  }
  return v;
}

ParamVector SinusoidBench::gradient(const ParamVector& theta) const {
  return evaluate(theta).gradient;
}

ValueGrad SinusoidBench::evaluate(const ParamVector& theta) const {
  check_dim(theta);
  double v = 0.0;
  std::vector<double> g(omega_.size());
  for (std::size_t i = 0; i < omega_.size(); ++i) {
    const double th = std::tanh(theta[i] / box_);
    const double c = box_ * th;
    const double arg = omega_[i] * c + phase_[i];
    v += std::sin(arg) + 0.01 * c * c;
    g[i] = (omega_[i] * std::cos(arg) + 0.02 * c) * (1.0 - th * th);
  }
  return {v, ParamVector(std::move(g))};
}

double SinusoidBench::value_bound() const {
  return static_cast<double>(omega_.size()) * (1.0 + 0.01 * box_ * box_);
}

double SinusoidBench::gradient_bound() const {
  double s = 0.0;
  for (double w : omega_) s += (w + 0.02 * box_) * (w + 0.02 * box_);
  return std::sqrt(s);
}

double SinusoidBench::lipschitz_bound() const {
  // |d/dθ sech^2(θ/B)| <= 4 / (3√3 B)
  const double ds = 4.0 / (3.0 * std::sqrt(3.0) * box_);
  double l = 0.0;
  for (double w : omega_) l = std::max(l, w * w + 0.02 + (w + 0.02 * box_) * ds);
  return l;
}

// --- Registry --------------------------------------------------------------

std::string to_string(AnalyticProblemId::Kind kind) {
  using K = AnalyticProblemId::Kind;
  switch (kind) {
    case K::example1_exact: return "example1_exact";
    case K::example1_smoothed: return "example1_smoothed";
    case K::example1_huber: return "example1_huber";
    case K::quadratic_pair: return "quadratic_pair";
    case K::nonconvex_bench: return "nonconvex_bench";
  }
  return "?";
}

AnalyticProblemId::Kind parse_problem_kind(const std::string& name) {
  using K = AnalyticProblemId::Kind;
  for (K k : {K::example1_exact, K::example1_smoothed, K::example1_huber, K::quadratic_pair,
              K::nonconvex_bench}) {
    if (to_string(k) == name) return k;
  }
  throw ConfigError("unknown problem '" + name + "'");
}

namespace {

BilevelProblem make_quadratic_pair(std::uint64_t seed, std::size_t d) {
  Rng rng(seed);
  // Rank-one forget: the lower-level solution set is a hyperplane.
  std::vector<double> a_row(d);
  double nrm = 0.0;
  for (double& x : a_row) {
    x = rng.normal();
    nrm += x * x;
  }
  nrm = std::sqrt(nrm);
  for (double& x : a_row) x *= 0.5 / nrm;
  std::vector<double> a(d);
  for (double& x : a) x = rng.normal();

  std::vector<double> b_mat(d * d);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) b_mat[i * d + j] = (i == j ? 1.0 : 0.0) + 0.1 * rng.normal();
  }
  std::vector<double> b(d);
  for (double& x : b) x = rng.normal();

  auto f = std::make_shared<QuadraticObjective>(1, std::move(a_row), std::move(a));
  auto r = std::make_shared<QuadraticObjective>(d, std::move(b_mat), std::move(b));
  return BilevelProblem(f, r, 0.0, "quadratic_pair");
}

BilevelProblem make_nonconvex_bench(std::uint64_t seed, std::size_t d) {
  Rng rng(seed);
  auto draw = [&] {
    std::vector<double> omega(d), phase(d);
    for (double& w : omega) w = rng.uniform(0.5, 1.5);
    for (double& p : phase) p = rng.uniform(0.0, 2.0 * std::numbers::pi);
    return std::make_shared<SinusoidBench>(std::move(omega), std::move(phase), kNonconvexBenchBox);
  };
  auto f = draw();
  auto r = draw();
  return BilevelProblem(f, r, std::nullopt, "nonconvex_bench");
}

}  // namespace

BilevelProblem make_problem(const AnalyticProblemId& id) {
  using K = AnalyticProblemId::Kind;
  switch (id.kind) {
    case K::example1_exact:
      return BilevelProblem(std::make_shared<Example1Lower>(), std::make_shared<Example1Upper>(), 2.0,
                            "example1_exact");
    case K::example1_smoothed:
      return BilevelProblem(std::make_shared<Example1Smoothed>(id.mu),
                            std::make_shared<Example1Upper>(), 2.0, "example1_smoothed");
    case K::example1_huber:
      return BilevelProblem(std::make_shared<Example1Huber>(id.mu), std::make_shared<Example1Upper>(),
                            2.0, "example1_huber");
    case K::quadratic_pair:
      return make_quadratic_pair(id.seed, id.dim ? id.dim : kQuadraticPairDefaultDim);
    case K::nonconvex_bench:
      return make_nonconvex_bench(id.seed, id.dim ? id.dim : kNonconvexBenchDefaultDim);
  }
  throw ConfigError("unknown problem id");
}

SmoothnessBounds nonconvex_bench_bounds(const BilevelProblem& problem) {
  const auto* f = dynamic_cast<const SinusoidBench*>(problem.forget.get());
  const auto* r = dynamic_cast<const SinusoidBench*>(problem.retain.get());
  if (!f || !r) throw ConfigError("smoothness bounds are only known for nonconvex_bench");
  const double c = std::max({f->value_bound(), r->value_bound(), f->gradient_bound(),
                             r->gradient_bound()});
  return {c, f->lipschitz_bound()};
}

}  // namespace blur
