#include <cmath>
#include <limits>
#include <vector>

#include <gtest/gtest.h>

#include "blur/rng.hpp"
#include "blur/vecmath.hpp"

namespace {

using blur::ParamVector;

ParamVector random_vector(blur::Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal();
  return ParamVector(std::move(v));
}

TEST(ParamVector, RejectsEmptyAndNonFinite) {
  EXPECT_THROW(ParamVector(std::vector<double>{}), blur::DimensionError);
  EXPECT_THROW(ParamVector({1.0, std::numeric_limits<double>::quiet_NaN()}), blur::NumericalError);
  EXPECT_THROW(ParamVector({std::numeric_limits<double>::infinity()}), blur::NumericalError);
  EXPECT_THROW(ParamVector::zeros(0), blur::DimensionError);
}

TEST(Dot, HandValues) {
  EXPECT_EQ(blur::dot({1, 0}, {0, 2}), 0.0);
  EXPECT_EQ(blur::dot({1, 2}, {1, 2}), 5.0);
}

TEST(Dot, DimensionMismatchThrows) {
  EXPECT_THROW(blur::dot({1, 2}, {1, 2, 3}), blur::DimensionError);
}

TEST(Dot, MatchesExtendedPrecision) {
  blur::Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const ParamVector a = random_vector(rng, 10), b = random_vector(rng, 10);
    long double ref = 0.0L, mag = 0.0L;
    for (std::size_t i = 0; i < 10; ++i) {
      ref += static_cast<long double>(a[i]) * b[i];
      mag += std::fabs(static_cast<long double>(a[i]) * b[i]);
    }
    EXPECT_LE(std::fabs(blur::dot(a, b) - ref), 1e-12 * mag) << "trial " << trial;
  }
}

TEST(NormSq, HandValuesAndDotIdentity) {
  EXPECT_EQ(blur::norm_sq({0, 0, 0}), 0.0);
  EXPECT_EQ(blur::norm_sq({3, 4}), 25.0);
  EXPECT_EQ(blur::norm({3, 4}), 5.0);
  blur::Rng rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    const ParamVector a = random_vector(rng, 37);
    EXPECT_EQ(blur::norm_sq(a), blur::dot(a, a));
  }
}

TEST(AxpyCombine, HandValues) {
  EXPECT_EQ(blur::axpy_combine({1.0, 1.0}, {ParamVector{1, 0}, ParamVector{0, 2}}), (ParamVector{1, 2}));
  EXPECT_EQ(blur::axpy_combine({0.0}, {ParamVector{5, 5}}), (ParamVector{0, 0}));
  EXPECT_EQ(blur::axpy_combine({2.0, -1.0}, {ParamVector{1, 1}, ParamVector{1, 1}}), (ParamVector{1, 1}));
}

TEST(AxpyCombine, Errors) {
  EXPECT_THROW(blur::axpy_combine(std::span<const double>{}, std::span<const ParamVector>{}), blur::DimensionError);
  EXPECT_THROW(blur::axpy_combine({1.0, 1.0}, {ParamVector{1, 0}, ParamVector{1, 2, 3}}), blur::DimensionError);
  EXPECT_THROW(blur::axpy_combine({1.0}, {ParamVector{1, 0}, ParamVector{1, 2}}), blur::DimensionError);
}

TEST(Arithmetic, AddSubScale) {
  EXPECT_EQ(blur::add({1, 2}, {3, 4}), (ParamVector{4, 6}));
  EXPECT_EQ(blur::sub({1, 2}, {3, 4}), (ParamVector{-2, -2}));
  EXPECT_EQ(blur::scale(2.0, {1, -3}), (ParamVector{2, -6}));
}

TEST(Rng, SameSeedSameStream) {
  blur::Rng a(5), b(5);
  for (int i = 0; i < 100; ++i) {
    EXPECT_EQ(a.next_u64(), b.next_u64());
    EXPECT_EQ(a.normal(), b.normal());
    EXPECT_EQ(a.gamma(0.3), b.gamma(0.3));
  }
}

TEST(Rng, UniformAndBelowRanges) {
  blur::Rng rng(6);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform();
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
    EXPECT_LT(rng.below(7), 7u);
  }
}

TEST(Rng, NormalMoments) {
  blur::Rng rng(8);
  const int n = 200000;
  double s = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    s += x;
    s2 += x * x;
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(s2 / n, 1.0, 0.02);
}

TEST(Rng, GammaMean) {
  blur::Rng rng(9);
  for (double shape : {0.3, 1.0, 4.0}) {
    const int n = 100000;
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += rng.gamma(shape);
    EXPECT_NEAR(s / n, shape, 0.03 * shape + 0.01) << "shape " << shape;
  }
}

TEST(Rng, DerivedSeedsDiffer) {
  EXPECT_NE(blur::derive_seed(7, 0), blur::derive_seed(7, 1));
  EXPECT_NE(blur::derive_seed(7, 0), blur::derive_seed(8, 0));
  EXPECT_EQ(blur::derive_seed(7, 3), blur::derive_seed(7, 3));
}

}  // namespace
