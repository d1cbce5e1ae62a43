#pragma once

#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "branchlab/linalg.hpp"

namespace branchlab {

inline constexpr double kInf = std::numeric_limits<double>::infinity();
inline constexpr double kProbTol = 1e-12;  // sum-to-one tolerance for parsed decimals

struct TypeSpace {
  int n = 0;
  std::vector<std::string> labels;  // optional, per type index
};

// One outcome of a branching event: with probability `prob` the parent is
// replaced by children at the listed type indices (possibly none).
struct OffspringAtom {
  double prob = 0.0;
  std::vector<int> children;
};

// Branching particle model. `motion` is a rate matrix with nonnegative
// off-diagonal entries; a negative row sum is a killing rate (particles
// jumping to the cemetery simply disappear, the cemetery is never stored).
struct BranchingModel {
  TypeSpace space;
  Matrix motion;                                       // Q
  Vec branch_rate;                                     // per-type event rate
  std::vector<std::vector<OffspringAtom>> offspring;   // per type
};

// Unbounded immigration family: P(size = k) proportional to
// 1 / (k * log(k+2)^(p+1)), k >= 1, all arrivals at one designated type.
// log-moment finite iff p > 1; the mean is infinite for every p.
struct HeavyTailTables;  // internal certified-series cache (model.cpp)

struct HeavyTailFamily {
  double p = 1.0;
  int type_index = 0;
  std::shared_ptr<const HeavyTailTables> tables;  // built by make_heavy_tail
};

HeavyTailFamily make_heavy_tail(double p, int type_index);

struct ImmigrationAtom {
  double prob = 0.0;
  std::vector<int> arrivals;  // at least one arrival per atom
};

struct ImmigrationLaw {
  double rate = 0.0;  // Poisson arrival rate of immigration events
  std::vector<ImmigrationAtom> atoms;
  std::optional<HeavyTailFamily> heavy_tail;  // exclusive with atoms
};

// Atom of the local jump measure: mass `weight` at jump size `size` > 0.
struct JumpAtom {
  double weight = 0.0;
  double size = 0.0;
};

// Atom of a measure-valued kernel: mass `weight` at the finite measure
// `measure` on the type space.
struct MassAtom {
  double weight = 0.0;
  Vec measure;
};

// Measure-valued (superprocess) model on a finite type space.
struct SuperModel {
  TypeSpace space;
  Matrix motion;                                // Q
  Vec drift;                                    // linear branching coefficient, any sign
  Vec diffusion;                                // quadratic coefficient, >= 0
  std::vector<std::vector<JumpAtom>> jumps;     // local jump atoms per type
  Vec branch_rate;                              // rate of non-local branching
  Matrix nonlocal_mean;                         // deterministic displaced-mass kernel
  std::vector<std::vector<MassAtom>> nonlocal_atoms;  // random displaced-mass atoms
};

struct SpImmigrationLaw {
  Vec drift;                    // continuous immigration intensity per type
  std::vector<MassAtom> jumps;  // Poissonian mass arrivals
};

using ModelAny = std::variant<BranchingModel, SuperModel>;
using ImmAny = std::variant<ImmigrationLaw, SpImmigrationLaw>;

// --- validation -----------------------------------------------------------

// Returns human-readable descriptions of violated invariants; empty iff the
// model is admissible. Single-child atoms produce a warning entry prefixed
// "warning:" and do not make the model inadmissible.
std::vector<std::string> validate(const BranchingModel& m);
std::vector<std::string> validate(const SuperModel& m);
std::vector<std::string> validate(const ImmigrationLaw& imm, int n_types);
std::vector<std::string> validate(const SpImmigrationLaw& imm, int n_types);
bool admissible(const std::vector<std::string>& diagnostics);

// --- pointwise operators --------------------------------------------------

// Expected mass sent to each type by one branching event.
Matrix mean_matrix(const BranchingModel& m);
Matrix mean_matrix(const SuperModel& m);

// Nonlinear part of the flow equation u' = L u - nonlinearity(u).
// Particle version requires g in [0,1]^n, measure version requires h >= 0.
Vec nonlinearity(const BranchingModel& m, const Vec& g);
Vec nonlinearity(const SuperModel& m, const Vec& h);

// Second-moment (pair) functional; truncation restricts to branching events
// of size <= truncation (family size, resp. jump size / atom total mass).
// Pass kInf for the untruncated functional.
Vec variance_functional(const BranchingModel& m, const Vec& f, double truncation = kInf);
Vec variance_functional(const SuperModel& m, const Vec& f, double truncation = kInf);

// nonlinearity(f) - variance_functional(f)/2, evaluated without cancellation
// (third and higher order terms summed directly). Used by the remainder
// decay checks, which probe arguments down to 1e-6.
Vec nonlinearity_remainder(const BranchingModel& m, const Vec& g);
Vec nonlinearity_remainder(const SuperModel& m, const Vec& h);

// Per-type symmetric matrices W_x with variance_functional(f)(x) = f^T W_x f.
std::vector<Matrix> variance_kernel(const BranchingModel& m);
std::vector<Matrix> variance_kernel(const SuperModel& m);

// Immigration mechanisms (Laplace exponents of the arrival streams).
// Heavy-tail laws are evaluated by certified series truncation: the returned
// value is accurate to 1e-10 absolute.
double immigration_mechanism(const ImmigrationLaw& imm, const Vec& f);
double immigration_mechanism(const SpImmigrationLaw& imm, const Vec& f);

// Same mechanism evaluated at f = -log(1-u) without forming the logarithm;
// u must lie in [0,1)^n componentwise.
double immigration_mechanism_u(const ImmigrationLaw& imm, const Vec& u);

// Mean immigrated eigen-mass per unit time (may be infinite).
double immigrant_mean_mass(const ImmigrationLaw& imm, const Vec& phi);
double immigrant_mean_mass(const SpImmigrationLaw& imm, const Vec& phi);

// E[log(1 + <phi, arrival>)] (atoms exactly; heavy tails by certified series
// with integral-comparison divergence detection). May be infinite.
double immigrant_log_moment(const ImmigrationLaw& imm, const Vec& phi);
double immigrant_log_moment(const SpImmigrationLaw& imm, const Vec& phi);

// --- moment summaries (validation / assumption reports) --------------------

// sup_x of the second moment of branching-event size.
double offspring_second_moment_sup(const BranchingModel& m);
double offspring_second_moment_sup(const SuperModel& m);

// Largest branching-event size present in the model (family size, resp.
// max of jump sizes and atom total masses).
double largest_event_size(const BranchingModel& m);
double largest_event_size(const SuperModel& m);

// Lipschitz constant of variance_functional on { f >= 0 : |f|_inf <= bound }.
double variance_lipschitz_bound(const BranchingModel& m, double bound);
double variance_lipschitz_bound(const SuperModel& m, double bound);

// Heavy-tail internals reused by the simulator: normalized point mass and
// cumulative mass of the family size distribution.
double heavy_tail_pmf(const HeavyTailFamily& fam, long k);
double heavy_tail_prefix_mass(const HeavyTailFamily& fam, long k);  // P(size <= k), k <= table size
long heavy_tail_table_size(const HeavyTailFamily& fam);
double heavy_tail_norm(const HeavyTailFamily& fam);  // sum of the unnormalized weights

int space_dim(const ModelAny& m);
Vec beta_of(const ModelAny& m);

}  // namespace branchlab
