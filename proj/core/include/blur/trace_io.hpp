#pragma once

#include <fstream>
#include <string>
#include <string_view>

#include "blur/diagnostics.hpp"

namespace blur {

inline constexpr std::string_view kTraceHeader =
    "step,f,r,grad_f_norm,grad_r_norm,u_norm,cos_fr,align_f,align_r,zeta_hat,eta";

// Shortest decimal that parses back to the same double.
std::string format_real(double x);
// Strict parse of the whole string; throws std::invalid_argument.
double parse_real(std::string_view s);

std::string format_record(const StepRecord& rec);
StepRecord parse_record(std::string_view line);

// Appends records to a CSV, flushing after each row.
class TraceWriter {
 public:
  explicit TraceWriter(const std::string& path);
  void write(const StepRecord& rec);

 private:
  std::ofstream out_;
  std::string path_;
};

void write_trace(const RunTrace& trace, const std::string& path);
// Restores records only; status, rule and schedule are not stored in the CSV.
RunTrace read_trace(const std::string& path);

}  // namespace blur
