#include "blur/trace_io.hpp"

#include <charconv>
#include <stdexcept>
#include <vector>

namespace blur {

std::string format_real(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  if (res.ec != std::errc()) throw std::runtime_error("format_real failed");
  return std::string(buf, res.ptr);
}

double parse_real(std::string_view s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw std::invalid_argument("malformed number '" + std::string(s) + "'");
  }
  return v;
}

namespace {

void append_opt(std::string& out, const std::optional<double>& v) {
  out += ',';
  if (v) out += format_real(*v);
}

std::optional<double> parse_opt(std::string_view s) {
  if (s.empty()) return std::nullopt;
  return parse_real(s);
}

}  // namespace

std::string format_record(const StepRecord& rec) {
  std::string out = std::to_string(rec.step);
  for (double v : {rec.f, rec.r, rec.grad_f_norm, rec.grad_r_norm, rec.u_norm}) {
    out += ',';
    out += format_real(v);
  }
  append_opt(out, rec.cos_fr);
  append_opt(out, rec.align_f);
  append_opt(out, rec.align_r);
  append_opt(out, rec.zeta_hat);
  out += ',';
  out += format_real(rec.eta);
  return out;
}

StepRecord parse_record(std::string_view line) {
  std::vector<std::string_view> f;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(',', start);
    f.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  if (f.size() != 11) throw std::invalid_argument("trace row has " + std::to_string(f.size()) + " fields, want 11");
  StepRecord r;
  std::int64_t step = 0;
  const auto res = std::from_chars(f[0].data(), f[0].data() + f[0].size(), step);
  if (res.ec != std::errc() || res.ptr != f[0].data() + f[0].size()) {
    throw std::invalid_argument("malformed step '" + std::string(f[0]) + "'");
  }
  r.step = step;
  r.f = parse_real(f[1]);
  r.r = parse_real(f[2]);
  r.grad_f_norm = parse_real(f[3]);
  r.grad_r_norm = parse_real(f[4]);
  r.u_norm = parse_real(f[5]);
  r.cos_fr = parse_opt(f[6]);
  r.align_f = parse_opt(f[7]);
  r.align_r = parse_opt(f[8]);
  r.zeta_hat = parse_opt(f[9]);
  r.eta = parse_real(f[10]);
  return r;
}

TraceWriter::TraceWriter(const std::string& path) : out_(path, std::ios::binary | std::ios::trunc), path_(path) {
  if (!out_) throw std::runtime_error("cannot write " + path);
  out_ << kTraceHeader << '\n';
  out_.flush();
}

void TraceWriter::write(const StepRecord& rec) {
  out_ << format_record(rec) << '\n';
  out_.flush();
  if (!out_) throw std::runtime_error("write failed: " + path_);
}

void write_trace(const RunTrace& trace, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << kTraceHeader << '\n';
  for (const auto& r : trace.records) out << format_record(r) << '\n';
  out.flush();
  if (!out) throw std::runtime_error("write failed: " + path);
}

RunTrace read_trace(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::string line;
  if (!std::getline(in, line) || line != kTraceHeader) throw std::invalid_argument(path + ": bad trace header");
  RunTrace t;
  for (std::size_t n = 2; std::getline(in, line); ++n) {
    if (line.empty()) continue;
    try {
      t.records.push_back(parse_record(line));
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(path + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return t;
}

}  // namespace blur
