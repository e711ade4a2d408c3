#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "blur/objective.hpp"

namespace blur {

// w(θ) = |θ-1| + |θ+1|. Gradient is the minimum-norm subgradient.
class Example1Lower final : public Objective {
 public:
  std::size_t dim() const override { return 1; }
  double value(const ParamVector& theta) const override;
  ParamVector gradient(const ParamVector& theta) const override;
};

// h(θ) = (θ-2)^2.
class Example1Upper final : public Objective {
 public:
  std::size_t dim() const override { return 1; }
  double value(const ParamVector& theta) const override;
  ParamVector gradient(const ParamVector& theta) const override;
};

// Each |z| in w replaced by z^2/(2μ) + μ/2 on |z| <= μ.
// Its minimizer set shrinks to [-1+μ, 1-μ].
class Example1Huber final : public Objective {
 public:
  explicit Example1Huber(double mu);
  std::size_t dim() const override { return 1; }
  double value(const ParamVector& theta) const override;
  ParamVector gradient(const ParamVector& theta) const override;
  double mu() const { return mu_; }

 private:
  double mu_;
};

// 2 + 2·H_μ(dist(θ, [-1, 1])) with H_μ(s) = s^2/(2μ) for s <= μ, s - μ/2 beyond.
// Keeps the minimizer set [-1, 1] and the minimum 2; gradient is 2/μ-Lipschitz.
class Example1Smoothed final : public Objective {
 public:
  explicit Example1Smoothed(double mu);
  std::size_t dim() const override { return 1; }
  double value(const ParamVector& theta) const override;
  ParamVector gradient(const ParamVector& theta) const override;
  double mu() const { return mu_; }

 private:
  double mu_;
};

// ‖M(θ - c)‖², M row-major rows × dim.
class QuadraticObjective final : public Objective {
 public:
  QuadraticObjective(std::size_t rows, std::vector<double> matrix, std::vector<double> center);
  std::size_t dim() const override { return center_.size(); }
  std::size_t rows() const { return rows_; }
  double value(const ParamVector& theta) const override;
  ParamVector gradient(const ParamVector& theta) const override;
  ValueGrad evaluate(const ParamVector& theta) const override;
  const std::vector<double>& matrix() const { return matrix_; }
  const std::vector<double>& center() const { return center_; }

 private:
  std::vector<double> residual(const ParamVector& theta) const;

  std::size_t rows_;
  std::vector<double> matrix_;
  std::vector<double> center_;
};

// Σ_i sin(ω_i c_i + φ_i) + 0.01 c_i^2 with c_i = B tanh(θ_i / B).
class SinusoidBench final : public Objective {
 public:
  SinusoidBench(std::vector<double> omega, std::vector<double> phase, double box);
  std::size_t dim() const override { return omega_.size(); }
  double value(const ParamVector& theta) const override;
  ParamVector gradient(const ParamVector& theta) const override;
  ValueGrad evaluate(const ParamVector& theta) const override;

  // Analytic bounds on |value|, ‖gradient‖ and the gradient Lipschitz constant.
  double value_bound() const;
  double gradient_bound() const;
  double lipschitz_bound() const;

 private:
  std::vector<double> omega_;
  std::vector<double> phase_;
  double box_;
};

struct AnalyticProblemId {
  enum class Kind { example1_exact, example1_smoothed, example1_huber, quadratic_pair, nonconvex_bench };

  Kind kind = Kind::example1_exact;
  double mu = 0.05;             // example1_smoothed / example1_huber
  std::uint64_t seed = 7;       // quadratic_pair / nonconvex_bench
  std::size_t dim = 0;          // 0 picks the per-kind default
};

constexpr std::size_t kQuadraticPairDefaultDim = 6;
constexpr std::size_t kNonconvexBenchDefaultDim = 2;
constexpr double kNonconvexBenchBox = 4.0;

std::string to_string(AnalyticProblemId::Kind kind);
// Throws ConfigError on an unknown name.
AnalyticProblemId::Kind parse_problem_kind(const std::string& name);

BilevelProblem make_problem(const AnalyticProblemId& id);

// Constants for the theorem step schedule, valid for nonconvex_bench problems.
struct SmoothnessBounds {
  double C;    // bounds |f|, |r|, ‖∇f‖, ‖∇r‖
  double L_f;  // Lipschitz constant of ∇f
};
SmoothnessBounds nonconvex_bench_bounds(const BilevelProblem& problem);

}  // namespace blur
