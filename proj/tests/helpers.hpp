#pragma once

// Shared fixtures: the bundled desk models plus random-model generators used
// by the property suites.

#include <vector>

#include "branchlab/model.hpp"
#include "branchlab/rng.hpp"

namespace branchlab::testing {

// Single type, rate one, half extinction / half two children. Critical.
inline BranchingModel critical_binary() {
  BranchingModel m;
  m.space.n = 1;
  m.motion = Matrix(1, 1);
  m.branch_rate = {1.0};
  m.offspring = {{{0.5, {}}, {0.5, {0, 0}}}};
  return m;
}

// Single type, 3/4 extinction / 1/4 two children: mean 1/2, leading
// eigenvalue -1/2.
inline BranchingModel subcritical_single() {
  BranchingModel m;
  m.space.n = 1;
  m.motion = Matrix(1, 1);
  m.branch_rate = {1.0};
  m.offspring = {{{0.75, {}}, {0.25, {0, 0}}}};
  return m;
}

// Two types; a branching type-0 particle dies and with probability 1/2
// leaves two type-1 children (and symmetrically). Critical, purely non-local.
inline BranchingModel swap_pair() {
  BranchingModel m;
  m.space.n = 2;
  m.motion = Matrix(2, 2);
  m.branch_rate = {1.0, 1.0};
  m.offspring = {{{0.5, {}}, {0.5, {1, 1}}}, {{0.5, {}}, {0.5, {0, 0}}}};
  return m;
}

// Three types with cyclic non-local offspring and genuine motion; the mean
// displacement matrix is doubly stochastic, so the model is critical with a
// flat right eigenvector.
inline BranchingModel nonlocal_triple() {
  BranchingModel m;
  m.space.n = 3;
  m.motion = Matrix(3, 3);
  const double q[3][3] = {{-0.2, 0.1, 0.1}, {0.05, -0.1, 0.05}, {0.1, 0.1, -0.2}};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) m.motion(i, j) = q[i][j];
  m.branch_rate = {1.0, 1.5, 0.75};
  m.offspring = {
      {{0.5, {}}, {0.25, {1, 1}}, {0.25, {2, 2}}},
      {{0.5, {}}, {0.25, {2, 2}}, {0.25, {0, 0}}},
      {{0.5, {}}, {0.25, {0, 0}}, {0.25, {1, 1}}},
  };
  return m;
}

// Single-type quadratic mass branching (diffusion c), drift b.
inline SuperModel feller(double c = 1.0, double b = 0.0) {
  SuperModel m;
  m.space.n = 1;
  m.motion = Matrix(1, 1);
  m.drift = {b};
  m.diffusion = {c};
  m.jumps = {{}};
  m.branch_rate = {0.0};
  m.nonlocal_mean = Matrix(1, 1);
  m.nonlocal_atoms = {{}};
  return m;
}

inline ImmigrationLaw single_immigrant(double rate = 1.0, int type = 0) {
  ImmigrationLaw law;
  law.rate = rate;
  law.atoms = {{1.0, {type}}};
  return law;
}

inline SpImmigrationLaw linear_mass_immigration(double level = 1.0) {
  SpImmigrationLaw law;
  law.drift = {level};
  return law;
}

// --- random generators -------------------------------------------------------

inline BranchingModel random_bmp(RngStream& rng, int max_types = 3, int max_children = 4,
                                 bool want_third_order = false) {
  BranchingModel m;
  m.space.n = 1 + static_cast<int>(rng.uniform() * max_types) % max_types;
  const int n = m.space.n;
  m.motion = Matrix(n, n);
  for (int x = 0; x < n; ++x) {
    double row = 0.0;
    for (int y = 0; y < n; ++y) {
      if (y == x) continue;
      const double q = 0.5 * rng.uniform();
      m.motion(x, y) = q;
      row += q;
    }
    m.motion(x, x) = -row - (rng.uniform() < 0.25 ? 0.1 * rng.uniform() : 0.0);
  }
  m.branch_rate.resize(n);
  m.offspring.resize(n);
  for (int x = 0; x < n; ++x) {
    m.branch_rate[x] = 0.2 + 1.3 * rng.uniform();
    const int atoms = 2 + static_cast<int>(rng.uniform() * 3);
    double total = 0.0;
    std::vector<double> weights(atoms);
    for (double& w : weights) {
      w = 0.1 + rng.uniform();
      total += w;
    }
    for (int a = 0; a < atoms; ++a) {
      OffspringAtom atom;
      atom.prob = weights[a] / total;
      int kids = static_cast<int>(rng.uniform() * (max_children + 1));
      if (want_third_order && a == 0 && kids < 3) kids = 3;
      for (int c = 0; c < kids; ++c)
        atom.children.push_back(static_cast<int>(rng.uniform() * n) % n);
      m.offspring[x].push_back(std::move(atom));
    }
  }
  return m;
}

inline SuperModel random_sp(RngStream& rng, int max_types = 3) {
  SuperModel m;
  m.space.n = 1 + static_cast<int>(rng.uniform() * max_types) % max_types;
  const int n = m.space.n;
  m.motion = Matrix(n, n);
  for (int x = 0; x < n; ++x) {
    double row = 0.0;
    for (int y = 0; y < n; ++y) {
      if (y == x) continue;
      const double q = 0.4 * rng.uniform();
      m.motion(x, y) = q;
      row += q;
    }
    m.motion(x, x) = -row;
  }
  m.drift.resize(n);
  m.diffusion.resize(n);
  m.jumps.resize(n);
  m.branch_rate.resize(n);
  m.nonlocal_mean = Matrix(n, n);
  m.nonlocal_atoms.resize(n);
  for (int x = 0; x < n; ++x) {
    m.drift[x] = 0.4 * (rng.uniform() - 0.5);
    m.diffusion[x] = rng.uniform();
    const int jumps = static_cast<int>(rng.uniform() * 3);
    for (int j = 0; j < jumps; ++j)
      m.jumps[x].push_back(JumpAtom{0.5 * rng.uniform(), 0.2 + 2.0 * rng.uniform()});
    m.branch_rate[x] = rng.uniform();
    double budget = 0.9;  // displaced-mass constraint
    for (int y = 0; y < n; ++y) {
      const double g = budget * rng.uniform() / n;
      m.nonlocal_mean(x, y) = g;
      budget -= g;
    }
    const int atoms = static_cast<int>(rng.uniform() * 2) + 1;
    for (int a = 0; a < atoms && budget > 0.05; ++a) {
      MassAtom atom;
      atom.weight = 0.5 * rng.uniform();
      atom.measure.assign(n, 0.0);
      double mass_budget = budget / (atom.weight > 0 ? atom.weight : 1.0);
      for (int y = 0; y < n; ++y) {
        atom.measure[y] = 0.5 * mass_budget * rng.uniform() / n;
      }
      double mass = 0.0;
      for (double v : atom.measure) mass += v;
      if (mass == 0.0) atom.measure[0] = 0.01;
      budget -= atom.weight * mass;
      m.nonlocal_atoms[x].push_back(std::move(atom));
    }
  }
  return m;
}

inline Vec random_unit_vec(RngStream& rng, int n) {
  Vec g(n);
  for (double& v : g) v = rng.uniform();
  return g;
}

inline Vec random_nonneg_vec(RngStream& rng, int n, double scale = 2.0) {
  Vec f(n);
  for (double& v : f) v = scale * rng.uniform();
  return f;
}

inline ImmigrationLaw random_immigration(RngStream& rng, int n) {
  ImmigrationLaw law;
  law.rate = 0.2 + 1.8 * rng.uniform();
  const int atoms = 1 + static_cast<int>(rng.uniform() * 3);
  double total = 0.0;
  std::vector<double> weights(atoms);
  for (double& w : weights) {
    w = 0.1 + rng.uniform();
    total += w;
  }
  for (int a = 0; a < atoms; ++a) {
    ImmigrationAtom atom;
    atom.prob = weights[a] / total;
    const int arrivals = 1 + static_cast<int>(rng.uniform() * 4);
    for (int i = 0; i < arrivals; ++i)
      atom.arrivals.push_back(static_cast<int>(rng.uniform() * n) % n);
    law.atoms.push_back(std::move(atom));
  }
  return law;
}

}  // namespace branchlab::testing
