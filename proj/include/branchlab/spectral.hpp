#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "branchlab/linalg.hpp"
#include "branchlab/model.hpp"

namespace branchlab {

// Generator of the mean (first-moment) semigroup: the action exp(t L) f is
// the expected pairing of f with the population at time t.
struct MeanGenerator {
  Matrix L;
};

MeanGenerator build_mean_generator(const BranchingModel& m);
MeanGenerator build_mean_generator(const SuperModel& m);
MeanGenerator build_mean_generator(const ModelAny& m);

// Leading eigenvalue with right eigenvector and left (probability-normalized)
// eigenvector. Normalizations: <right, left> = 1 and <1, left> = 1.
struct EigenTriple {
  double lambda = 0.0;
  Vec right;            // strictly positive
  Vec left;             // strictly positive, sums to one
  double residual = 0.0;
  double gap = 0.0;     // lambda minus the next-largest real part
};

// Shifted power iteration on exp(h L) with h = 1/(1 + max |L_ii|), all-ones
// start, two-sided Rayleigh-quotient refinement of the eigenvalue. Throws
// ApplicabilityError for reducible generators and NumericalFault when the
// residual target is not met within the iteration budget.
EigenTriple eigen_triple(const MeanGenerator& gen, double tol = 1e-11,
                         long max_iterations = 2000000);

enum class Criticality { Subcritical, Critical, Supercritical };

// Band defaults to 1e-9 relative to the sup-norm of L (see classify helper).
Criticality classify_criticality(const EigenTriple& triple, double band);
double default_criticality_band(const MeanGenerator& gen);
std::string to_string(Criticality c);

// Worst-case deviation of the normalized mean semigroup from its rank-one
// limit at time t, evaluated exactly (the supremum over indicator directions
// of the signed kernel).
double rank_one_deviation(const MeanGenerator& gen, const EigenTriple& triple, double t);

// Second-moment analogue: worst case over the unit box of the quadratic form
// discrepancy. `kernel` comes from variance_kernel(model). At criticality the
// comparison kernel is t^-1-normalized; at subcriticality the stationary
// second-moment functional takes its place. Exact for n <= 10 (face
// enumeration of the box).
double rank_one_deviation_second(const MeanGenerator& gen, const std::vector<Matrix>& kernel,
                                 const EigenTriple& triple, double t, double quad_tol = 1e-9);

struct MixingProfile {
  std::vector<double> times;
  std::vector<double> delta;
  std::vector<double> delta2;
  double eps_fit = 0.0;  // fitted exponential decay rate of delta
};

MixingProfile mixing_profile(const MeanGenerator& gen, const std::vector<Matrix>& kernel,
                             const EigenTriple& triple, const std::vector<double>& times);

struct AssumptionReport {
  double second_moment_sup = 0.0;   // finite-event second moment bound
  MixingProfile mixing;
  double delta_sup = 0.0;           // grid supremum of delta
  bool extinction_flag = false;     // lambda <= 0 plus irreducibility
  double k_estimate = 0.0;          // estimated uniform pair-moment lower constant
  double m_truncation = 0.0;        // event-size truncation realizing it
  bool k_positive = false;
  Criticality criticality = Criticality::Critical;
  std::vector<std::string> notes;
};

struct AssumptionOptions {
  std::vector<double> delta_grid;   // defaults to {0, 0.5, 1, 2, 4, ..., 64}
  int random_starts = 64;
  std::uint64_t seed = 12345;
  double k_tol = 1e-10;
};

AssumptionReport check_assumptions(const ModelAny& m, const EigenTriple& triple,
                                   const AssumptionOptions& opts = {});

// Minimum of <variance_functional(f), left> over the weighted simplex
// { f >= 0 : <f, left> = 1 }, by projected gradient descent from the uniform
// start plus `starts` random ones; deterministic in `seed`.
double pair_moment_floor(const std::vector<Matrix>& kernel, const Vec& left, int starts,
                         std::uint64_t seed);

}  // namespace branchlab
