#include "blur/vecmath.hpp"

#include <cmath>
#include <string>

namespace blur {

bool all_finite(std::span<const double> v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

ParamVector::ParamVector(std::vector<double> values) : values_(std::move(values)) {
  if (values_.empty()) throw DimensionError("ParamVector: empty");
  if (!all_finite(values_)) throw NumericalError("ParamVector: non-finite entry");
}

ParamVector::ParamVector(std::initializer_list<double> values)
    : ParamVector(std::vector<double>(values)) {}

ParamVector ParamVector::zeros(std::size_t dim) {
  return ParamVector(std::vector<double>(dim, 0.0));
}

void require_same_dim(const ParamVector& a, const ParamVector& b, const char* where) {
  if (a.dim() != b.dim()) {
    throw DimensionError(std::string(where) + ": dimension mismatch (" +
                         std::to_string(a.dim()) + " vs " + std::to_string(b.dim()) + ")");
  }
}

double dot(const ParamVector& a, const ParamVector& b) {
  require_same_dim(a, b, "dot");
  const double* x = a.data();
  const double* y = b.data();
  double s = 0.0;
  for (std::size_t i = 0, n = a.dim(); i < n; ++i) s += x[i] * y[i];
  return s;
}

double norm_sq(const ParamVector& a) { return dot(a, a); }

double norm(const ParamVector& a) { return std::sqrt(norm_sq(a)); }

ParamVector axpy_combine(std::span<const double> coeffs, std::span<const ParamVector> vecs) {
  if (vecs.empty()) throw DimensionError("axpy_combine: empty list");
  if (coeffs.size() != vecs.size()) throw DimensionError("axpy_combine: list length mismatch");
  const std::size_t n = vecs[0].dim();
  for (const auto& v : vecs) require_same_dim(vecs[0], v, "axpy_combine");
  std::vector<double> out(n, 0.0);
  for (std::size_t k = 0; k < vecs.size(); ++k) {
    const double c = coeffs[k];
    const double* x = vecs[k].data();
    for (std::size_t i = 0; i < n; ++i) out[i] += c * x[i];
  }
  return ParamVector(std::move(out));
}

ParamVector axpy_combine(std::initializer_list<double> coeffs,
                         std::initializer_list<ParamVector> vecs) {
  return axpy_combine(std::span<const double>(coeffs.begin(), coeffs.size()),
                      std::span<const ParamVector>(vecs.begin(), vecs.size()));
}

ParamVector add(const ParamVector& a, const ParamVector& b) {
  require_same_dim(a, b, "add");
  std::vector<double> out(a.values());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return ParamVector(std::move(out));
}

ParamVector sub(const ParamVector& a, const ParamVector& b) {
  require_same_dim(a, b, "sub");
  std::vector<double> out(a.values());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
  return ParamVector(std::move(out));
}

ParamVector scale(double c, const ParamVector& a) {
  std::vector<double> out(a.values());
  for (double& x : out) x *= c;
  return ParamVector(std::move(out));
}

}  // namespace blur
