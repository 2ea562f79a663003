#include <charconv>
#include <cmath>
#include <ostream>

#include "follmer/app/experiment.hpp"

namespace follmer::app {

std::string format_real(Real x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

json real_to_json(Real x) {
  if (std::isfinite(x)) return x;
  return format_real(x);
}

CsvWriter::CsvWriter(std::ostream& out, const std::vector<std::string>& header) : out_(out), width_(header.size()) {
  row(header);
}

void CsvWriter::row(const std::vector<std::string>& cells) {
  if (cells.size() != width_) throw std::logic_error("csv row width does not match header");
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) out_ << ',';
    out_ << cells[i];
  }
  out_ << '\n';
}

json to_json(const CheckRecord& r) {
  json j;
  j["check"] = r.check;
  j["target"] = r.target;
  j["statistic"] = real_to_json(r.statistic);
  j["threshold"] = real_to_json(r.threshold);
  j["pass"] = r.pass;
  if (!r.detail.empty()) j["detail"] = r.detail;
  return j;
}

json to_json(const GridProvenance& p) {
  json j;
  j["constructor"] = to_string(p.constructor);
  j["t0"] = real_to_json(p.t0);
  j["delta"] = real_to_json(p.delta);
  j["N"] = p.steps;
  return j;
}

json to_json(const BoundReport<Real>& r) {
  json j;
  j["kind"] = to_string(r.kind);
  j["value"] = real_to_json(r.value);
  j["certified"] = r.certified;
  j["hypotheses_ok"] = r.hypotheses_hold;
  j["warnings"] = r.warnings;
  const auto& in = r.inputs;
  json ij;
  ij["kappa"] = real_to_json(in.kappa);
  ij["d"] = real_to_json(in.dimension);
  ij["t0"] = real_to_json(in.t0);
  ij["delta"] = real_to_json(in.delta);
  ij["eps_score"] = real_to_json(in.eps_score);
  ij["second_moment"] = real_to_json(in.second_moment);
  ij["entropy"] = real_to_json(in.entropy);
  ij["fisher"] = real_to_json(in.fisher);
  ij["max_step"] = real_to_json(in.max_step);
  ij["N"] = real_to_json(in.steps);
  ij["k"] = real_to_json(in.intrinsic_dim);
  ij["eps0"] = real_to_json(in.eps0);
  ij["R"] = real_to_json(in.moment_radius);
  if (r.kind == BoundKind::AdaIntrinsic) ij["L"] = real_to_json(intrinsic_log_factor(in));
  ij["sampling_r"] = in.sampling_r;
  ij["C"] = real_to_json(in.constant);
  j["inputs"] = ij;
  return j;
}

}  // namespace follmer::app
