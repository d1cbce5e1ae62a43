#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "branchlab/model.hpp"
#include "branchlab/semigroup.hpp"
#include "branchlab/spectral.hpp"

namespace branchlab {

// Limit constant of t * survival probability for critical models:
// 2 <right, mu> / <variance_functional(right), left>.
double kolmogorov_constant(const EigenTriple& triple, const ModelAny& m, const Vec& mu_mass);

// Limit of the conditional Laplace transform of <f, population>/t at
// criticality: 1 / (1 + theta/2 <f,left> <variance(right),left>).
double yaglom_laplace(const EigenTriple& triple, const ModelAny& m, const Vec& f, double theta);

// Mean immigrated eigen-mass per unit time (may be infinite, which is a
// legitimate verdict: no scaled weak limit exists).
double immigration_intensity(const EigenTriple& triple, const ImmAny& imm);

struct GammaLimit {
  bool has_limit = false;   // false <=> infinite intensity: no weak limit
  double intensity = 0.0;
  double shape = 0.0;
  double rate = 0.0;
  double laplace(double theta) const;
};

GammaLimit gamma_parameters(const EigenTriple& triple, const ModelAny& m, const ImmAny& imm,
                            const Vec& f);

enum class IntegralVerdict { Converges, Diverges, Undetermined };
std::string to_string(IntegralVerdict v);

struct IntegralTestResult {
  IntegralVerdict verdict = IntegralVerdict::Undetermined;
  std::vector<double> eps;     // ladder of lower cutoffs
  std::vector<double> values;  // integral from eps to z0
  double slope = 0.0;          // log-difference slope against log log(1/eps)
  double last_diff = 0.0;
  std::string rule;            // which decision rule fired, with thresholds
};

// Improper-integral test of mechanism(z * phi)/z near z = 0 on a shrinking
// cutoff ladder (default 1e-1 .. 1e-8).
IntegralTestResult integral_test(const ImmAny& imm, const Vec& phi, double z0,
                                 std::vector<double> eps_ladder = {});

// E log(1 + <phi, arrival>) of the immigration law; may be infinite.
double log_moment(const ImmAny& imm, const Vec& phi);

struct SeriesPoint {
  double t = 0.0;        // abscissa (time, or theta for grid comparisons)
  double measured = 0.0;
  double theory = 0.0;
  double abs_err = 0.0;
};

struct TheoremReport {
  int theorem = 0;
  std::string model_id;
  std::string statistic;
  bool pass = false;
  double final_abs_err = 0.0;
  double final_rel_err = 0.0;
  std::vector<SeriesPoint> series;
  std::vector<std::pair<std::string, double>> constants;
  std::vector<std::pair<std::string, double>> tolerances;
  std::vector<std::string> notes;
};

struct VerifyOptions {
  std::vector<long> mu;                                   // particle configuration (BMP)
  Vec mu_mass;                                            // mass configuration (SP)
  Vec f;                                                  // test function, defaults to 1
  std::vector<double> theta_grid = {0.25, 0.5, 1.0, 2.0, 4.0};
  std::vector<double> schedule;                           // defaults to 2^0..2^10
  double tolerance = -1.0;                                // < 0: per-theorem default
  bool with_mc = false;
  long mc_n = 100000;
  double mc_t = 200.0;
  std::uint64_t seed = 1;
  int threads = 1;
  std::string model_id = "model";
};

// Runs the comparison behind one of the four limit statements:
//   1 Kolmogorov survival decay   2 Yaglom conditional exponential
//   3 gamma limit with immigration 4 subcritical stationarity
TheoremReport verify_theorem(int id, const ModelAny& m, const ImmAny* imm,
                             const VerifyOptions& opts);

}  // namespace branchlab
