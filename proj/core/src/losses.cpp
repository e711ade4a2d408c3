#include "blur/losses.hpp"

#include <cmath>

#include "blur/rng.hpp"

namespace blur {

std::string to_string(LossKind kind) {
  switch (kind) {
    case LossKind::cross_entropy_retain: return "cross_entropy_retain";
    case LossKind::ga_forget: return "ga_forget";
    case LossKind::npo_forget: return "npo_forget";
    case LossKind::simnpo_forget: return "simnpo_forget";
    case LossKind::rmu_retain: return "rmu_retain";
    case LossKind::rmu_forget: return "rmu_forget";
  }
  return "?";
}

LossKind parse_loss_kind(const std::string& name) {
  for (LossKind k : {LossKind::cross_entropy_retain, LossKind::ga_forget, LossKind::npo_forget,
                     LossKind::simnpo_forget, LossKind::rmu_retain, LossKind::rmu_forget}) {
    if (to_string(k) == name) return k;
  }
  // Short aliases used on the command line.
  if (name == "ce" || name == "cross_entropy") return LossKind::cross_entropy_retain;
  if (name == "ga") return LossKind::ga_forget;
  if (name == "npo") return LossKind::npo_forget;
  if (name == "simnpo") return LossKind::simnpo_forget;
  throw ConfigError("unknown loss '" + name + "'");
}

void LossSpec::validate() const {
  if ((kind == LossKind::npo_forget || kind == LossKind::simnpo_forget) && !(beta > 0.0)) {
    throw ConfigError(to_string(kind) + ": beta must be > 0");
  }
  if (kind == LossKind::simnpo_forget && !(alpha >= 0.0)) throw ConfigError("simnpo_forget: alpha must be >= 0");
  if (kind == LossKind::rmu_forget && !(c > 0.0)) throw ConfigError("rmu_forget: c must be > 0");
}

double softplus(double s) { return s > 0.0 ? s + std::log1p(std::exp(-s)) : std::log1p(std::exp(s)); }

double sigmoid(double s) {
  if (s >= 0.0) return 1.0 / (1.0 + std::exp(-s));
  const double e = std::exp(s);
  return e / (1.0 + e);
}

ReferenceModel::ReferenceModel(ToyLMShape shape, ParamVector params)
    : shape_(shape), params_(std::move(params)), cache_(forward(shape_, params_)) {}

std::vector<double> rmu_direction(std::size_t hidden, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> u(hidden);
  double n2 = 0.0;
  for (double& x : u) {
    x = rng.uniform();
    n2 += x * x;
  }
  if (!(n2 > 0.0)) throw NumericalError("rmu_direction: zero draw");
  const double inv = 1.0 / std::sqrt(n2);
  for (double& x : u) x *= inv;
  return u;
}

LossObjective::LossObjective(LossSpec spec, ToyLMShape shape, std::vector<Sample> batch,
                             std::shared_ptr<const ReferenceModel> reference)
    : spec_(spec), shape_(shape), batch_(std::move(batch)), reference_(std::move(reference)) {
  spec_.validate();
  if (batch_.empty()) throw ConfigError(to_string(spec_.kind) + ": empty batch");
  for (const auto& s : batch_) {
    if (s.prompt.empty() || s.response.empty()) throw ConfigError(to_string(spec_.kind) + ": empty prompt or response");
    for (const Sequence* seq : {&s.prompt, &s.response}) {
      for (int t : *seq) {
        if (t < 0 || static_cast<std::size_t>(t) >= shape_.vocab) {
          throw DimensionError("token id " + std::to_string(t) + " outside vocabulary");
        }
      }
    }
  }
  if (spec_.needs_reference()) {
    if (spec_.kind != LossKind::rmu_forget && !reference_) {
      throw ConfigError(to_string(spec_.kind) + ": reference model required");
    }
    if (reference_ && (reference_->shape().vocab != shape_.vocab || reference_->shape().hidden != shape_.hidden)) {
      throw DimensionError("reference model shape mismatch");
    }
  }
  if (spec_.kind == LossKind::rmu_forget) {
    rmu_target_ = rmu_direction(shape_.hidden, spec_.seed);
    for (double& x : rmu_target_) x *= spec_.c;
  }
}

double LossObjective::rmu_value(const ForwardCache& fwd, Cotangents* cot) const {
  // Every context position of the batch, each weighted equally.
  const std::size_t V = shape_.vocab, H = shape_.hidden;
  std::vector<double> w(V, 0.0);
  double positions = 0.0;
  for (const auto& s : batch_) {
    w[s.prompt.back()] += 1.0;
    for (std::size_t t = 0; t + 1 < s.response.size(); ++t) w[s.response[t]] += 1.0;
    positions += static_cast<double>(s.response.size());
  }
  for (double& x : w) x /= positions;

  std::vector<double> grad;
  if (cot) grad.assign(V * H, 0.0);
  double v = 0.0;
  for (std::size_t x = 0; x < V; ++x) {
    if (w[x] == 0.0) continue;
    const auto m = fwd.layer(spec_.layer, static_cast<int>(x));
    const std::span<const double> target =
        spec_.kind == LossKind::rmu_forget ? std::span<const double>(rmu_target_)
                                           : reference_->cache().layer(spec_.layer, static_cast<int>(x));
    double d2 = 0.0;
    for (std::size_t i = 0; i < H; ++i) {
      const double d = m[i] - target[i];
      d2 += d * d;
      if (cot) grad[x * H + i] = 2.0 * w[x] * d;
    }
    v += w[x] * d2;
  }
  if (cot) (spec_.layer == Layer::embedding_out ? cot->d_h0 : cot->d_h1) = std::move(grad);
  return v;
}

double LossObjective::value_from(const ForwardCache& fwd, Cotangents* cot) const {
  if (spec_.kind == LossKind::rmu_retain || spec_.kind == LossKind::rmu_forget) return rmu_value(fwd, cot);

  const std::size_t V = shape_.vocab;
  const double n = static_cast<double>(batch_.size());
  if (cot) cot->logp_weights.assign(V * V, 0.0);
  double total = 0.0;
  for (const auto& s : batch_) {
    const double lp = sample_log_prob(fwd, s);
    double loss = 0.0, dlp = 0.0;  // per-sample loss and d loss / d log π
    switch (spec_.kind) {
      case LossKind::cross_entropy_retain:
        loss = -lp;
        dlp = -1.0;
        break;
      case LossKind::ga_forget:
        loss = lp;
        dlp = 1.0;
        break;
      case LossKind::npo_forget: {
        const double sc = spec_.beta * (lp - reference_->log_prob(s));
        loss = 2.0 / spec_.beta * softplus(sc);
        dlp = 2.0 * sigmoid(sc);
        break;
      }
      case LossKind::simnpo_forget: {
        const double len = static_cast<double>(s.response.size());
        const double z = -(spec_.beta / len) * lp - spec_.alpha;
        loss = 2.0 / spec_.beta * softplus(-z);
        dlp = 2.0 / len * sigmoid(-z);
        break;
      }
      default:
        break;
    }
    total += loss;
    if (cot) {
      int prev = s.prompt.back();
      for (int t : s.response) {
        cot->logp_weights[static_cast<std::size_t>(prev) * V + t] += dlp / n;
        prev = t;
      }
    }
  }
  return total / n;
}

double LossObjective::value(const ParamVector& theta) const {
  check_dim(theta);
  return value_from(forward(shape_, theta), nullptr);
}

ParamVector LossObjective::gradient(const ParamVector& theta) const { return evaluate(theta).gradient; }

ValueGrad LossObjective::evaluate(const ParamVector& theta) const {
  check_dim(theta);
  const ForwardCache fwd = forward(shape_, theta);
  Cotangents cot;
  const double v = value_from(fwd, &cot);
  return {v, backprop(shape_, theta, fwd, cot)};
}

namespace {

ValueGrad eval(LossSpec spec, const ToyLMShape& shape, const ParamVector& theta, std::span<const Sample> batch,
               std::shared_ptr<const ReferenceModel> ref = nullptr) {
  return LossObjective(spec, shape, std::vector<Sample>(batch.begin(), batch.end()), std::move(ref)).evaluate(theta);
}

}  // namespace

ValueGrad cross_entropy_retain(const ToyLMShape& shape, const ParamVector& theta, std::span<const Sample> batch) {
  return eval({.kind = LossKind::cross_entropy_retain}, shape, theta, batch);
}

ValueGrad ga_forget(const ToyLMShape& shape, const ParamVector& theta, std::span<const Sample> batch) {
  return eval({.kind = LossKind::ga_forget, .role = DatasetRole::forget}, shape, theta, batch);
}

ValueGrad npo_forget(const ToyLMShape& shape, const ParamVector& theta,
                     std::shared_ptr<const ReferenceModel> reference, std::span<const Sample> batch, double beta) {
  return eval({.kind = LossKind::npo_forget, .beta = beta, .role = DatasetRole::forget}, shape, theta, batch,
              std::move(reference));
}

ValueGrad simnpo_forget(const ToyLMShape& shape, const ParamVector& theta, std::span<const Sample> batch,
                        double beta, double alpha) {
  return eval({.kind = LossKind::simnpo_forget, .beta = beta, .alpha = alpha, .role = DatasetRole::forget}, shape,
              theta, batch);
}

ValueGrad rmu_retain(const ToyLMShape& shape, const ParamVector& theta,
                     std::shared_ptr<const ReferenceModel> reference, std::span<const Sample> batch, Layer layer) {
  return eval({.kind = LossKind::rmu_retain, .layer = layer}, shape, theta, batch, std::move(reference));
}

ValueGrad rmu_forget(const ToyLMShape& shape, const ParamVector& theta, std::span<const Sample> batch, Layer layer,
                     double c, std::uint64_t seed) {
  return eval({.kind = LossKind::rmu_forget, .layer = layer, .c = c, .seed = seed, .role = DatasetRole::forget},
              shape, theta, batch);
}

}  // namespace blur
