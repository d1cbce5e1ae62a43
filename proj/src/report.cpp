#include "branchlab/report.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "branchlab/version.hpp"

namespace branchlab {

std::string num17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return std::string(buf);
}

namespace {

// JSON cannot carry infinities; report them as signed sentinels.
ordered_json finite_or_string(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

}  // namespace

ordered_json report_json(const TheoremReport& rep) {
  ordered_json out;
  out["theorem"] = rep.theorem;
  out["model_id"] = rep.model_id;
  out["statistic"] = rep.statistic;
  out["pass"] = rep.pass;
  out["final_abs_err"] = finite_or_string(rep.final_abs_err);
  out["final_rel_err"] = finite_or_string(rep.final_rel_err);
  ordered_json constants;
  for (const auto& [key, value] : rep.constants) constants[key] = finite_or_string(value);
  out["constants"] = constants;
  ordered_json tolerances;
  for (const auto& [key, value] : rep.tolerances) tolerances[key] = finite_or_string(value);
  out["tolerances"] = tolerances;
  ordered_json series = ordered_json::array();
  for (const auto& pt : rep.series)
    series.push_back(ordered_json{{"t", pt.t},
                                  {"measured", finite_or_string(pt.measured)},
                                  {"theory", finite_or_string(pt.theory)},
                                  {"abs_err", finite_or_string(pt.abs_err)}});
  out["series"] = series;
  out["notes"] = rep.notes;
  return out;
}

std::string report_csv(const TheoremReport& rep) {
  std::ostringstream os;
  os << "t,measured,theory,abs_err\n";
  for (const auto& pt : rep.series)
    os << num17(pt.t) << "," << num17(pt.measured) << "," << num17(pt.theory) << ","
       << num17(pt.abs_err) << "\n";
  return os.str();
}

ordered_json estimate_json(const McEstimate& est) {
  ordered_json out;
  out["mean"] = est.mean;
  out["std_error"] = est.std_error;
  out["n"] = est.n;
  out["ci95"] = ordered_json::array({est.ci_lo, est.ci_hi});
  return out;
}

ordered_json assumptions_json(const AssumptionReport& rep, const EigenTriple& triple) {
  ordered_json out;
  out["criticality"] = to_string(rep.criticality);
  out["lambda"] = triple.lambda;
  out["eigen_residual"] = triple.residual;
  out["spectral_gap"] = finite_or_string(triple.gap);
  out["right_eigenvector"] = triple.right;
  out["left_eigenvector"] = triple.left;
  out["second_moment_sup"] = rep.second_moment_sup;
  out["delta_sup"] = rep.delta_sup;
  out["delta_decay_rate"] = rep.mixing.eps_fit;
  out["extinction_flag"] = rep.extinction_flag;
  ordered_json floor;
  floor["k_estimate"] = rep.k_estimate;
  floor["m_truncation"] = rep.m_truncation;
  floor["positive"] = rep.k_positive;
  floor["status"] = "estimated";
  out["pair_moment_floor"] = floor;
  out["notes"] = rep.notes;
  return out;
}

std::string mixing_csv(const MixingProfile& profile) {
  std::ostringstream os;
  os << "t,delta,delta2\n";
  for (size_t i = 0; i < profile.times.size(); ++i)
    os << num17(profile.times[i]) << "," << num17(profile.delta[i]) << ","
       << num17(profile.delta2[i]) << "\n";
  return os.str();
}

ordered_json manifest_json(const std::string& config_sha256, std::uint64_t seed, int threads,
                           const std::string& command,
                           const std::vector<std::string>& outputs) {
  ordered_json out;
  out["config_sha256"] = config_sha256;
  out["seed"] = seed;
  out["threads"] = threads;
  out["command"] = command;
  out["version"] = std::string(kVersion);
  out["outputs"] = outputs;
  return out;
}

}  // namespace branchlab
