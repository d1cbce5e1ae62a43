#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "branchlab/model.hpp"
#include "branchlab/spectral.hpp"

namespace branchlab {

struct StepStats {
  long accepted = 0;
  long rejected = 0;
  long clamp_events = 0;
  double max_clamp = 0.0;
  double max_local_error = 0.0;
};

// Checkpointed time series of a vector-valued flow plus named scalar channels.
struct Trajectory {
  std::vector<double> times;
  std::vector<Vec> values;
  std::vector<std::pair<std::string, std::vector<double>>> scalars;
  StepStats stats;

  const std::vector<double>* scalar(const std::string& name) const {
    for (const auto& [key, series] : scalars)
      if (key == name) return &series;
    return nullptr;
  }
};

struct SolveOptions {
  double rtol = 1e-9;
  double atol = 1e-12;
  double clamp_fault = 1e-10;  // clamps larger than this are integration faults
  double initial_step = -1.0;  // < 0: automatic
  long max_steps = 200000000;
};

// Checkpoints for long-horizon runs: {0, 1, 2, 4, ...} up to and including
// the horizon.
std::vector<double> default_checkpoints(double horizon);

// exp(t L) f by scaling and squaring.
Vec linear_action(const MeanGenerator& gen, const Vec& f, double t);

// Second moment of the pairing <f, population> started from one unit at each
// type: linear action on f^2 plus the accumulated variance along the flow.
Vec second_moment_action(const BranchingModel& m, const MeanGenerator& gen, const Vec& f,
                         double t, double rel_tol = 1e-8);
Vec second_moment_action(const SuperModel& m, const MeanGenerator& gen, const Vec& f, double t,
                         double rel_tol = 1e-8);

// Nonlinear flow u' = L u - nonlinearity(u), u_0 = 1 - g0, with values in
// [0,1]^n. Records the channel "a" = <u, pairing> when pairing is given.
// g0 = 0 makes u_t the survival probability of a single starter per type.
Trajectory solve_nonlinear(const BranchingModel& m, const MeanGenerator& gen, const Vec& g0,
                           double horizon, const std::vector<double>& checkpoints,
                           const Vec* pairing = nullptr, const SolveOptions& opts = {});

// Measure-valued analogue V' = L V - nonlinearity(V), V_0 = f0, V >= 0.
Trajectory solve_nonlinear(const SuperModel& m, const MeanGenerator& gen, const Vec& f0,
                           double horizon, const std::vector<double>& checkpoints,
                           const Vec* pairing = nullptr, const SolveOptions& opts = {});

// Survival probability of a particle configuration.
double survival_probability(const BranchingModel& m, const MeanGenerator& gen,
                            const std::vector<long>& mu, double t,
                            const SolveOptions& opts = {});

struct SpSurvival {
  double probability = 0.0;
  Vec vbar;              // extinction exponent at time t
  bool converged = false;
  double ladder_gap = 0.0;
  double theta_used = 0.0;
};

// Survival of a mass configuration via the increasing-initial-condition
// ladder theta in {1e2..1e5}; accepted once consecutive ladder members agree
// componentwise to 1e-8 at every checkpoint >= t_min (default t/2).
SpSurvival survival_probability(const SuperModel& m, const MeanGenerator& gen, const Vec& mu,
                                double t, double t_min = -1.0, const SolveOptions& opts = {});

// Log-Laplace flow with immigration. Values are the no-immigration exponent
// per type; channel "imm_integral" carries the accumulated immigration
// integral, so the full exponent at checkpoint i is values[i] + integral[i].
Trajectory immigration_log_laplace(const BranchingModel& m, const MeanGenerator& gen,
                                   const ImmigrationLaw& imm, const Vec& f, double horizon,
                                   const std::vector<double>& checkpoints,
                                   const Vec* pairing = nullptr, const SolveOptions& opts = {});
Trajectory immigration_log_laplace(const SuperModel& m, const MeanGenerator& gen,
                                   const SpImmigrationLaw& imm, const Vec& f, double horizon,
                                   const std::vector<double>& checkpoints,
                                   const Vec* pairing = nullptr, const SolveOptions& opts = {});

// Full log-Laplace exponent at checkpoint i (values + immigration integral).
Vec log_laplace_at(const Trajectory& tr, size_t i);

struct StationaryValue {
  double integral = 0.0;    // accumulated immigration integral
  double tail_bound = 0.0;  // certified bound on the discarded tail
  double horizon = 0.0;
  double laplace() const;   // exp(-integral)
};

// Infinite-horizon immigration integral for subcritical models. Throws
// ApplicabilityError when the model is not subcritical or the integral
// provably diverges. force_horizon > 0 integrates to exactly that horizon.
StationaryValue stationary_log_laplace(const BranchingModel& m, const MeanGenerator& gen,
                                       const EigenTriple& triple, const ImmigrationLaw& imm,
                                       const Vec& f, double tail_tol = 1e-10,
                                       double force_horizon = -1.0,
                                       const SolveOptions& opts = {});
StationaryValue stationary_log_laplace(const SuperModel& m, const MeanGenerator& gen,
                                       const EigenTriple& triple, const SpImmigrationLaw& imm,
                                       const Vec& f, double tail_tol = 1e-10,
                                       double force_horizon = -1.0,
                                       const SolveOptions& opts = {});

// Trajectory export, one row per (t, channel, type): bit-stable across runs.
std::string trajectory_csv(const Trajectory& tr, const std::string& value_channel);

}  // namespace branchlab
