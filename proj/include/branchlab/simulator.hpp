#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "branchlab/model.hpp"

namespace branchlab {

struct ParticleState {
  double time = 0.0;
  std::vector<long> counts;  // particles per type
};

struct McEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  long n = 0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
};

struct SimOptions {
  long population_cap = 10000000;  // explosion guard, not a model property
  long csv_row_cap = 1000000;
};

struct PathResult {
  std::vector<ParticleState> states;           // one per checkpoint
  std::optional<double> extinction_time;       // set when the population dies out
};

// Exact event-driven simulation: exponential waiting times at the total rate,
// events split between motion jumps (including killing through the motion row
// deficit), branching and immigration. States are carried forward onto
// checkpoints.
PathResult simulate_path(const BranchingModel& m, const ImmigrationLaw* imm,
                         const std::vector<long>& init, double horizon, std::uint64_t seed,
                         std::uint64_t replicate, const std::vector<double>& checkpoints,
                         const SimOptions& opts = {});

// Monte Carlo estimate of the survival probability up to time t from the
// configuration mu; replicate k always consumes the stream (seed, k).
McEstimate mc_survival(const BranchingModel& m, const std::vector<long>& mu, double t, long n,
                       std::uint64_t seed, int threads = 1, const SimOptions& opts = {});

// Monte Carlo estimate of E exp(-theta <f, X_t>/t) (immigration includes the
// immigrated population). Conditional mode estimates the expectation given
// survival with a ratio estimator and delta-method standard error; it
// requires imm == nullptr.
McEstimate mc_laplace(const BranchingModel& m, const ImmigrationLaw* imm,
                      const std::vector<long>& mu, const Vec& f, double theta, double t, long n,
                      std::uint64_t seed, bool conditional, int threads = 1,
                      const SimOptions& opts = {});

// As mc_laplace (conditional), but grows the replicate count in fixed rounds
// until at least min_survivors survivors were seen. Deterministic in seed.
McEstimate mc_laplace_until_survivors(const BranchingModel& m, const std::vector<long>& mu,
                                      const Vec& f, double theta, double t, long min_survivors,
                                      long round_size, long max_n, std::uint64_t seed,
                                      int threads = 1, const SimOptions& opts = {});

// Mean of <f, X_t> over n replicates (first-moment cross-check).
McEstimate mc_pairing_mean(const BranchingModel& m, const ImmigrationLaw* imm,
                           const std::vector<long>& mu, const Vec& f, double t, long n,
                           std::uint64_t seed, int threads = 1, const SimOptions& opts = {});

// Replicate summaries as CSV (replicate, checkpoint time, type, count),
// truncated at opts.csv_row_cap rows.
std::string replicates_csv(const BranchingModel& m, const ImmigrationLaw* imm,
                           const std::vector<long>& init, double horizon, std::uint64_t seed,
                           long n, const std::vector<double>& checkpoints,
                           const SimOptions& opts = {});

}  // namespace branchlab
