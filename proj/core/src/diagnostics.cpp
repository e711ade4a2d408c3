#include "blur/diagnostics.hpp"

#include <algorithm>
#include <cmath>

#include "blur/rng.hpp"

namespace blur {

std::string to_string(RunStatus s) { return s == RunStatus::completed ? "completed" : "aborted_nonfinite"; }

std::optional<double> alignment(const ParamVector& g, const ParamVector& d) {
  const double n2 = norm_sq(g);
  if (n2 == 0.0) return std::nullopt;
  return dot(g, d) / n2;
}

std::optional<double> cosine(const ParamVector& g_f, const ParamVector& g_r) {
  const double a = norm(g_f), b = norm(g_r);
  if (a == 0.0 || b == 0.0) return std::nullopt;
  return std::clamp(dot(g_f, g_r) / (a * b), -1.0, 1.0);
}

KktResiduals kkt_residuals(const ParamVector& g_f, const ParamVector& g_r, double zeta_hat) {
  require_same_dim(g_f, g_r, "kkt_residuals");
  double s = 0.0;
  for (std::size_t i = 0; i < g_f.dim(); ++i) {
    const double v = g_r[i] + zeta_hat * g_f[i];
    s += v * v;
  }
  return {std::sqrt(s), norm(g_f)};
}

StepRecord make_record(std::int64_t step, double f, double r, const ParamVector& g_f, const ParamVector& g_r,
                       const Direction& dir, const UpdateRule& rule, double eta) {
  StepRecord rec;
  rec.step = step;
  rec.f = f;
  rec.r = r;
  rec.grad_f_norm = norm(g_f);
  rec.grad_r_norm = norm(g_r);
  rec.u_norm = norm(dir.u);
  const double floor = rule.grad_floor;
  if (rec.grad_f_norm > floor && rec.grad_r_norm > floor) rec.cos_fr = cosine(g_f, g_r);
  if (rec.grad_f_norm > floor) rec.align_f = alignment(g_f, dir.u);
  if (rec.grad_r_norm > floor) rec.align_r = alignment(g_r, dir.u);
  rec.zeta_hat = dir.zeta_hat;
  rec.eta = eta;
  return rec;
}

TemporalAverages temporal_averages(std::span<const StepRecord> records) {
  if (records.empty()) throw std::invalid_argument("temporal_averages: empty trace");
  double a = 0.0, b = 0.0;
  for (const auto& r : records) {
    const double f2 = r.grad_f_norm * r.grad_f_norm;
    a += f2;
    b += f2 + r.u_norm * r.u_norm;
  }
  const double n = static_cast<double>(records.size());
  return {a / n, b / n};
}

TemporalAverages temporal_averages(const RunTrace& trace) { return temporal_averages(trace.records); }

double rate_slope(std::span<const std::pair<double, double>> points) {
  if (points.size() < 3) throw std::invalid_argument("rate_slope: need at least 3 points");
  double mx = 0.0, my = 0.0;
  for (const auto& [t, v] : points) {
    if (!(t > 0.0) || !(v > 0.0)) throw std::invalid_argument("rate_slope: values must be positive");
    mx += std::log(t);
    my += std::log(v);
  }
  const double n = static_cast<double>(points.size());
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0;
  for (const auto& [t, v] : points) {
    const double dx = std::log(t) - mx;
    sxy += dx * (std::log(v) - my);
    sxx += dx * dx;
  }
  if (sxx == 0.0) throw std::invalid_argument("rate_slope: all T equal");
  return sxy / sxx;
}

double estimate_lipschitz(const Objective& obj, const ParamVector& center, double radius, int pairs,
                          std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t d = center.dim();
  double best = 0.0;
  std::vector<double> x(d), y(d);
  for (int k = 0; k < pairs; ++k) {
    for (std::size_t i = 0; i < d; ++i) {
      x[i] = center[i] + rng.uniform(-radius, radius);
      y[i] = center[i] + rng.uniform(-radius, radius);
    }
    const ParamVector px(x), py(y);
    const double dist = norm(sub(px, py));
    if (dist == 0.0) continue;
    best = std::max(best, norm(sub(obj.gradient(px), obj.gradient(py))) / dist);
  }
  return best;
}

int count_sign_changes(std::span<const std::optional<double>> values) {
  int flips = 0, last = 0;
  for (const auto& v : values) {
    if (!v || *v == 0.0) continue;
    const int s = *v > 0.0 ? 1 : -1;
    if (last != 0 && s != last) ++flips;
    last = s;
  }
  return flips;
}

}  // namespace blur
