#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

#include "blur/errors.hpp"

namespace blur {

// Dense parameter vector. Non-empty, every entry finite.
class ParamVector {
 public:
  explicit ParamVector(std::vector<double> values);
  ParamVector(std::initializer_list<double> values);

  static ParamVector zeros(std::size_t dim);

  std::size_t dim() const { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }
  const std::vector<double>& values() const { return values_; }
  std::span<const double> span() const { return values_; }
  const double* data() const { return values_.data(); }

  // Moves the storage out; the vector is left empty and must not be used.
  std::vector<double> release() && { return std::move(values_); }

  friend bool operator==(const ParamVector&, const ParamVector&) = default;

 private:
  std::vector<double> values_;
};

bool all_finite(std::span<const double> v);

// Left-to-right sum of a_i * b_i.
double dot(const ParamVector& a, const ParamVector& b);
double norm_sq(const ParamVector& a);
double norm(const ParamVector& a);

// sum_i coeffs[i] * vecs[i]
ParamVector axpy_combine(std::span<const double> coeffs,
                         std::span<const ParamVector> vecs);
ParamVector axpy_combine(std::initializer_list<double> coeffs,
                         std::initializer_list<ParamVector> vecs);

ParamVector add(const ParamVector& a, const ParamVector& b);
ParamVector sub(const ParamVector& a, const ParamVector& b);
ParamVector scale(double c, const ParamVector& a);

void require_same_dim(const ParamVector& a, const ParamVector& b, const char* where);

}  // namespace blur
