#include <cmath>
#include <memory>
#include <numbers>
#include <vector>

#include <gtest/gtest.h>

#include "blur/gradcheck.hpp"
#include "blur/losses.hpp"
#include "blur/rng.hpp"

namespace {

using blur::LossKind;
using blur::LossSpec;
using blur::ParamVector;
using blur::Sample;
using blur::ToyLMShape;

const ToyLMShape kShape{32, 16};
const double kE = std::numbers::e;

// Every context predicts token `y` with log-probability log_py; other tokens share the rest.
ParamVector bias_model(const ToyLMShape& s, int y, double log_py) {
  std::vector<double> p(s.num_params(), 0.0);
  const double py = std::exp(log_py);
  p[s.off_b2() + y] = std::log(py * static_cast<double>(s.vocab - 1) / (1.0 - py));
  return ParamVector(std::move(p));
}

std::vector<Sample> one_token_batch(int y) { return {{{0}, {y}}, {{5}, {y}}, {{9}, {y}}}; }

std::vector<Sample> seeded_batch(std::uint64_t seed, std::size_t n, std::size_t len, std::size_t vocab) {
  blur::Rng rng(seed);
  std::vector<Sample> out;
  for (std::size_t i = 0; i < n; ++i) {
    Sample s;
    s.prompt.push_back(static_cast<int>(rng.below(vocab)));
    for (std::size_t t = 0; t < len; ++t) s.response.push_back(static_cast<int>(rng.below(vocab)));
    out.push_back(std::move(s));
  }
  return out;
}

std::shared_ptr<const blur::ReferenceModel> reference(const ParamVector& p) {
  return std::make_shared<blur::ReferenceModel>(kShape, p);
}

double cosine(const ParamVector& a, const ParamVector& b) {
  return blur::dot(a, b) / (blur::norm(a) * blur::norm(b));
}

TEST(LossKind, NamesRoundTrip) {
  for (LossKind k : {LossKind::cross_entropy_retain, LossKind::ga_forget, LossKind::npo_forget,
                     LossKind::simnpo_forget, LossKind::rmu_retain, LossKind::rmu_forget}) {
    EXPECT_EQ(blur::parse_loss_kind(blur::to_string(k)), k);
  }
  EXPECT_EQ(blur::parse_loss_kind("npo"), LossKind::npo_forget);
  EXPECT_EQ(blur::parse_loss_kind("ce"), LossKind::cross_entropy_retain);
  EXPECT_THROW(blur::parse_loss_kind("dpo"), blur::ConfigError);
}

TEST(CrossEntropy, UniformModelIsLogV) {
  const auto vg = blur::cross_entropy_retain(kShape, ParamVector::zeros(kShape.num_params()), one_token_batch(3));
  EXPECT_NEAR(vg.value, std::log(32.0), 1e-14);
}

TEST(CrossEntropy, SumsOverResponseTokens) {
  const std::vector<Sample> batch{{{1}, {2, 3, 4}}};
  const auto vg = blur::cross_entropy_retain(kShape, ParamVector::zeros(kShape.num_params()), batch);
  EXPECT_NEAR(vg.value, 3.0 * std::log(32.0), 1e-13);
}

TEST(CrossEntropy, PerfectPredictionIsZero) {
  const auto vg = blur::cross_entropy_retain(kShape, bias_model(kShape, 3, -1e-15), one_token_batch(3));
  EXPECT_NEAR(vg.value, 0.0, 1e-12);
  const auto ga = blur::ga_forget(kShape, bias_model(kShape, 3, -1e-15), one_token_batch(3));
  EXPECT_NEAR(ga.value, 0.0, 1e-12);
}

TEST(GradientAscent, IsNegatedCrossEntropy) {
  const auto batch = seeded_batch(2, 6, 4, kShape.vocab);
  const auto theta = blur::ToyLM::random(kShape, 4, 0.3).params();
  const auto ce = blur::cross_entropy_retain(kShape, theta, batch);
  const auto ga = blur::ga_forget(kShape, theta, batch);
  EXPECT_DOUBLE_EQ(ga.value, -ce.value);
  for (std::size_t i = 0; i < theta.dim(); ++i) EXPECT_DOUBLE_EQ(ga.gradient[i], -ce.gradient[i]);
}

TEST(NPO, ReferencePointIsTwoLogTwoOverBeta) {
  const auto theta = blur::ToyLM::random(kShape, 4, 0.3).params();
  const auto batch = seeded_batch(3, 5, 3, kShape.vocab);
  for (double beta : {0.1, 1.0, 3.0}) {
    const auto vg = blur::npo_forget(kShape, theta, reference(theta), batch, beta);
    EXPECT_NEAR(vg.value, 2.0 / beta * std::log(2.0), 1e-12) << beta;
  }
}

TEST(NPO, UnitLogRatio) {
  const ParamVector ref = ParamVector::zeros(kShape.num_params());
  const ParamVector theta = bias_model(kShape, 3, std::log(1.0 / 32.0) + 1.0);
  const auto vg = blur::npo_forget(kShape, theta, reference(ref), one_token_batch(3), 1.0);
  EXPECT_NEAR(vg.value, 2.0 * std::log(1.0 + kE), 1e-12);
  EXPECT_NEAR(vg.value, 2.6265, 1e-4);
}

TEST(NPO, NonNegativeAndVanishesWhenForgotten) {
  const ParamVector ref = ParamVector::zeros(kShape.num_params());
  for (double lp : {-5.0, -20.0, -60.0}) {
    std::vector<double> p(kShape.num_params(), 0.0);
    p[kShape.off_b2() + 3] = lp;  // push token 3 down
    const auto vg = blur::npo_forget(kShape, ParamVector(p), reference(ref), one_token_batch(3), 0.5);
    EXPECT_GE(vg.value, 0.0);
    if (lp == -60.0) EXPECT_LT(vg.value, 1e-10);
  }
}

TEST(NPO, HugeLogRatioStaysFinite) {
  const ParamVector ref = bias_model(kShape, 3, -700.0);
  const ParamVector theta = bias_model(kShape, 3, -1e-12);
  const auto vg = blur::npo_forget(kShape, theta, reference(ref), one_token_batch(3), 2.0);
  EXPECT_TRUE(std::isfinite(vg.value));
  EXPECT_NEAR(vg.value, 1400.0, 1e-6);
}

TEST(NPO, ApproachesGradientAscentAsBetaVanishes) {
  const auto ref = blur::ToyLM::random(kShape, 5, 0.3).params();
  const auto theta = blur::ToyLM::random(kShape, 6, 0.3).params();
  const auto batch = seeded_batch(7, 8, 5, kShape.vocab);
  const auto npo = blur::npo_forget(kShape, theta, reference(ref), batch, 1e-4);
  const auto ga = blur::ga_forget(kShape, theta, batch);
  EXPECT_GE(cosine(npo.gradient, ga.gradient), 0.999);
}

TEST(NPO, Errors) {
  const auto theta = ParamVector::zeros(kShape.num_params());
  EXPECT_THROW(blur::npo_forget(kShape, theta, reference(theta), one_token_batch(1), 0.0), blur::ConfigError);
  EXPECT_THROW(blur::npo_forget(kShape, theta, reference(theta), one_token_batch(1), -1.0), blur::ConfigError);
  EXPECT_THROW(blur::npo_forget(kShape, theta, nullptr, one_token_batch(1), 0.1), blur::ConfigError);
}

TEST(SimNPO, HandValues) {
  const auto vg = blur::simnpo_forget(kShape, bias_model(kShape, 3, -1.0), one_token_batch(3), 1.0, 0.0);
  EXPECT_NEAR(vg.value, 2.0 * std::log(1.0 + 1.0 / kE), 1e-12);
  EXPECT_NEAR(vg.value, 0.6265, 1e-4);
  const auto one = blur::simnpo_forget(kShape, bias_model(kShape, 3, -1e-15), one_token_batch(3), 1.0, 0.0);
  EXPECT_NEAR(one.value, 2.0 * std::log(2.0), 1e-12);
}

TEST(SimNPO, Errors) {
  const auto theta = ParamVector::zeros(kShape.num_params());
  EXPECT_THROW(blur::simnpo_forget(kShape, theta, one_token_batch(1), 0.0, 0.0), blur::ConfigError);
  EXPECT_THROW(blur::simnpo_forget(kShape, theta, one_token_batch(1), 1.0, -0.5), blur::ConfigError);
  const std::vector<Sample> empty_response{{{1}, {}}};
  EXPECT_THROW(blur::simnpo_forget(kShape, theta, empty_response, 1.0, 0.0), blur::ConfigError);
}

TEST(Batch, Errors) {
  const auto theta = ParamVector::zeros(kShape.num_params());
  EXPECT_THROW(blur::cross_entropy_retain(kShape, theta, {}), blur::ConfigError);
  const std::vector<Sample> oov{{{1}, {32}}};
  EXPECT_THROW(blur::cross_entropy_retain(kShape, theta, oov), blur::DimensionError);
  const std::vector<Sample> neg{{{-1}, {2}}};
  EXPECT_THROW(blur::ga_forget(kShape, theta, neg), blur::DimensionError);
}

TEST(RMURetain, ZeroAtReference) {
  const auto theta = blur::ToyLM::random(kShape, 4, 0.3).params();
  const auto batch = seeded_batch(3, 5, 3, kShape.vocab);
  for (blur::Layer layer : {blur::Layer::embedding_out, blur::Layer::hidden_out}) {
    const auto vg = blur::rmu_retain(kShape, theta, reference(theta), batch, layer);
    EXPECT_EQ(vg.value, 0.0);
    EXPECT_EQ(blur::norm(vg.gradient), 0.0);
  }
}

TEST(RMURetain, DoubledActivationsGiveReferenceNorm) {
  const auto ref = blur::ToyLM::random(kShape, 4, 0.3).params();
  std::vector<double> p = ref.values();
  for (std::size_t i = 0; i < kShape.vocab * kShape.hidden; ++i) p[kShape.off_E() + i] *= 2.0;
  const auto batch = seeded_batch(8, 6, 4, kShape.vocab);
  const auto vg = blur::rmu_retain(kShape, ParamVector(p), reference(ref), batch, blur::Layer::embedding_out);

  // Direct oracle: mean over context positions of ‖h0(x; θ₀)‖².
  double sum = 0.0, positions = 0.0;
  auto add = [&](int x) {
    for (std::size_t i = 0; i < kShape.hidden; ++i) {
      const double h = ref[kShape.off_E() + static_cast<std::size_t>(x) * kShape.hidden + i];
      sum += h * h;
    }
    positions += 1.0;
  };
  for (const auto& s : batch) {
    add(s.prompt.back());
    for (std::size_t t = 0; t + 1 < s.response.size(); ++t) add(s.response[t]);
  }
  EXPECT_NEAR(vg.value, sum / positions, 1e-12);
}

TEST(RMURetain, SmallPerturbationIsPositive) {
  const auto ref = blur::ToyLM::random(kShape, 4, 0.3).params();
  std::vector<double> p = ref.values();
  p[0] += 1e-3;
  const std::vector<Sample> batch{{{0}, {1, 2}}};
  const auto vg = blur::rmu_retain(kShape, ParamVector(p), reference(ref), batch, blur::Layer::hidden_out);
  EXPECT_GT(vg.value, 0.0);
}

TEST(RMUForget, ExactTargetHitIsZero) {
  const double c = 6.5;
  const std::uint64_t seed = 13;
  const auto u = blur::rmu_direction(kShape.hidden, seed);
  std::vector<double> p(kShape.num_params(), 0.0);
  for (std::size_t x = 0; x < kShape.vocab; ++x) {
    for (std::size_t i = 0; i < kShape.hidden; ++i) p[kShape.off_E() + x * kShape.hidden + i] = c * u[i];
  }
  const auto batch = seeded_batch(3, 5, 3, kShape.vocab);
  const auto vg = blur::rmu_forget(kShape, ParamVector(p), batch, blur::Layer::embedding_out, c, seed);
  EXPECT_NEAR(vg.value, 0.0, 1e-24);
}

TEST(RMUForget, LargeCoefficientDominates) {
  const auto theta = blur::ToyLM::random(kShape, 4, 0.3).params();
  const auto batch = seeded_batch(3, 5, 3, kShape.vocab);
  for (double c : {1e2, 1e3, 1e4}) {
    const auto vg = blur::rmu_forget(kShape, theta, batch, blur::Layer::hidden_out, c, 2);
    // ‖h1‖ ≤ √H, so |value − c²| ≤ 2c√H + H.
    EXPECT_LE(std::fabs(vg.value - c * c), 2.0 * c * 4.0 + 16.0) << c;
  }
}

TEST(RMUForget, Errors) {
  const auto theta = ParamVector::zeros(kShape.num_params());
  EXPECT_THROW(blur::rmu_forget(kShape, theta, one_token_batch(1), blur::Layer::hidden_out, 0.0, 1),
               blur::ConfigError);
  EXPECT_THROW(blur::parse_layer("attention_7"), blur::ConfigError);
}

TEST(RMUDirection, UnitNormNonNegative) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto u = blur::rmu_direction(16, seed);
    double n2 = 0.0;
    for (double x : u) {
      EXPECT_GE(x, 0.0);
      n2 += x * x;
    }
    EXPECT_NEAR(n2, 1.0, 1e-15);
  }
  EXPECT_NE(blur::rmu_direction(16, 1), blur::rmu_direction(16, 2));
}

TEST(Losses, GradientsMatchFiniteDifferences) {
  const ToyLMShape s{12, 6};
  const auto ref = std::make_shared<blur::ReferenceModel>(s, blur::ToyLM::random(s, 21, 0.5).params());
  const auto batch = seeded_batch(22, 6, 4, s.vocab);
  blur::FDSpec fd;
  fd.abs_step = 1e-5;
  fd.tol_rel = 1e-5;
  const std::vector<LossSpec> specs{
      {.kind = LossKind::cross_entropy_retain},
      {.kind = LossKind::ga_forget},
      {.kind = LossKind::npo_forget, .beta = 0.5},
      {.kind = LossKind::simnpo_forget, .beta = 0.7, .alpha = 0.2},
      {.kind = LossKind::rmu_retain, .layer = blur::Layer::embedding_out},
      {.kind = LossKind::rmu_retain, .layer = blur::Layer::hidden_out},
      {.kind = LossKind::rmu_forget, .layer = blur::Layer::embedding_out, .c = 2.0, .seed = 3},
      {.kind = LossKind::rmu_forget, .layer = blur::Layer::hidden_out, .c = 2.0, .seed = 3},
  };
  blur::Rng rng(23);
  for (const auto& spec : specs) {
    const blur::LossObjective obj(spec, s, batch, ref);
    for (int trial = 0; trial < 3; ++trial) {
      std::vector<double> th(s.num_params());
      for (double& x : th) x = 0.5 * rng.normal();
      const auto rep = blur::check(obj, ParamVector(th), fd);
      EXPECT_TRUE(rep.pass) << blur::to_string(spec.kind) << " rel " << rep.max_rel_err << " abs "
                            << rep.max_abs_err;
    }
  }
}

TEST(Losses, EvaluateAgreesWithValueAndGradient) {
  const auto theta = blur::ToyLM::random(kShape, 4, 0.3).params();
  const auto ref = reference(blur::ToyLM::random(kShape, 5, 0.3).params());
  const blur::LossObjective obj({.kind = LossKind::npo_forget, .beta = 0.2}, kShape,
                                seeded_batch(3, 5, 3, kShape.vocab), ref);
  const auto vg = obj.evaluate(theta);
  EXPECT_EQ(vg.value, obj.value(theta));
  EXPECT_EQ(vg.gradient, obj.gradient(theta));
}

}  // namespace
