#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "blur/objective.hpp"
#include "blur/toylm.hpp"

namespace blur {

enum class LossKind { cross_entropy_retain, ga_forget, npo_forget, simnpo_forget, rmu_retain, rmu_forget };
std::string to_string(LossKind kind);
LossKind parse_loss_kind(const std::string& name);

struct LossSpec {
  LossKind kind = LossKind::cross_entropy_retain;
  double beta = 0.1;                 // npo, simnpo
  double alpha = 0.0;                // simnpo
  Layer layer = Layer::hidden_out;   // rmu_*
  double c = 6.5;                    // rmu_forget
  std::uint64_t seed = 0;            // rmu_forget direction
  DatasetRole role = DatasetRole::retain;

  bool needs_reference() const {
    return kind == LossKind::npo_forget || kind == LossKind::rmu_retain || kind == LossKind::rmu_forget;
  }
  // Throws ConfigError on out-of-range parameters.
  void validate() const;
};

// Frozen θ₀ with its forward pass over every context.
class ReferenceModel {
 public:
  ReferenceModel(ToyLMShape shape, ParamVector params);

  const ToyLMShape& shape() const { return shape_; }
  const ParamVector& params() const { return params_; }
  const ForwardCache& cache() const { return cache_; }
  double log_prob(const Sample& s) const { return sample_log_prob(cache_, s); }

 private:
  ToyLMShape shape_;
  ParamVector params_;
  ForwardCache cache_;
};

// Unit vector with U[0,1) components before normalization.
std::vector<double> rmu_direction(std::size_t hidden, std::uint64_t seed);

double softplus(double s);
double sigmoid(double s);

// One loss over a fixed batch; also the Objective used by the updaters.
class LossObjective final : public Objective {
 public:
  LossObjective(LossSpec spec, ToyLMShape shape, std::vector<Sample> batch,
                std::shared_ptr<const ReferenceModel> reference = nullptr);

  std::size_t dim() const override { return shape_.num_params(); }
  double value(const ParamVector& theta) const override;
  ParamVector gradient(const ParamVector& theta) const override;
  ValueGrad evaluate(const ParamVector& theta) const override;

  const LossSpec& spec() const { return spec_; }
  std::span<const Sample> batch() const { return batch_; }

 private:
  double value_from(const ForwardCache& fwd, Cotangents* cot) const;
  double rmu_value(const ForwardCache& fwd, Cotangents* cot) const;

  LossSpec spec_;
  ToyLMShape shape_;
  std::vector<Sample> batch_;
  std::shared_ptr<const ReferenceModel> reference_;
  std::vector<double> rmu_target_;  // c·u for rmu_forget
};

// Convenience forms of the individual losses.
ValueGrad cross_entropy_retain(const ToyLMShape& shape, const ParamVector& theta, std::span<const Sample> batch);
ValueGrad ga_forget(const ToyLMShape& shape, const ParamVector& theta, std::span<const Sample> batch);
ValueGrad npo_forget(const ToyLMShape& shape, const ParamVector& theta,
                     std::shared_ptr<const ReferenceModel> reference, std::span<const Sample> batch,
                     double beta);
ValueGrad simnpo_forget(const ToyLMShape& shape, const ParamVector& theta, std::span<const Sample> batch,
                        double beta, double alpha);
ValueGrad rmu_retain(const ToyLMShape& shape, const ParamVector& theta,
                     std::shared_ptr<const ReferenceModel> reference, std::span<const Sample> batch,
                     Layer layer);
ValueGrad rmu_forget(const ToyLMShape& shape, const ParamVector& theta, std::span<const Sample> batch,
                     Layer layer, double c, std::uint64_t seed);

}  // namespace blur
