#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "branchlab/errors.hpp"
#include "branchlab/quad.hpp"
#include "branchlab/semigroup.hpp"
#include "branchlab/simulator.hpp"
#include "branchlab/spectral.hpp"
#include "helpers.hpp"

using namespace branchlab;
using namespace branchlab::testing;

TEST_CASE("pure motion conserves the particle count") {
  BranchingModel m = swap_pair();
  m.branch_rate = {0.0, 0.0};
  m.motion(0, 0) = -1.0;
  m.motion(0, 1) = 1.0;
  m.motion(1, 0) = 1.0;
  m.motion(1, 1) = -1.0;
  PathResult path = simulate_path(m, nullptr, {3, 2}, 10.0, 42, 0, {0.0, 2.5, 5.0, 10.0});
  REQUIRE(path.states.size() == 4);
  for (const auto& st : path.states) CHECK(st.counts[0] + st.counts[1] == 5);
  CHECK_FALSE(path.extinction_time.has_value());
}

TEST_CASE("degenerate cases of the estimators") {
  const BranchingModel bin = critical_binary();
  const McEstimate at_zero = mc_survival(bin, {1}, 0.0, 1000, 7);
  CHECK(at_zero.mean == 1.0);
  CHECK(at_zero.std_error == 0.0);

  const McEstimate empty = mc_survival(bin, {0}, 5.0, 1000, 7);
  CHECK(empty.mean == 0.0);

  const McEstimate theta0 = mc_laplace(bin, nullptr, {1}, {1.0}, 0.0, 5.0, 1000, 7, false);
  CHECK(theta0.mean == 1.0);
  CHECK(theta0.std_error == 0.0);

  CHECK_THROWS_AS(mc_survival(bin, {1}, 1.0, 1, 7), SchemaError);
  const ImmigrationLaw imm = single_immigrant();
  CHECK_THROWS_AS(mc_laplace(bin, &imm, {0}, {1.0}, 1.0, 1.0, 100, 7, true),
                  ApplicabilityError);
}

TEST_CASE("conditional estimator faults when nothing survives") {
  const BranchingModel sub = subcritical_single();
  // at t = 60 survival is ~ 2e-13: no survivors among a handful of replicates
  CHECK_THROWS_AS(mc_laplace(sub, nullptr, {1}, {1.0}, 1.0, 60.0, 100, 7, true),
                  NumericalFault);
}

TEST_CASE("survival estimates match the closed forms") {
  const BranchingModel bin = critical_binary();
  const McEstimate crit = mc_survival(bin, {1}, 10.0, 100000, 2024);
  CHECK(std::abs(crit.mean - 1.0 / 6.0) <= 3.0 * crit.std_error);

  const McEstimate late = mc_survival(bin, {1}, 50.0, 200000, 2025);
  CHECK(std::abs(late.mean - 2.0 / 52.0) <= 3.0 * late.std_error);

  const BranchingModel sub = subcritical_single();
  const McEstimate sexp = mc_survival(sub, {1}, 20.0, 1000000, 2026);
  const double truth = 2.0 / (3.0 * std::exp(10.0) - 1.0);
  CHECK(std::abs(sexp.mean - truth) <= 3.0 * sexp.std_error + 1e-7);
}

TEST_CASE("immigration-only population is a filtered Poisson flow") {
  BranchingModel still;
  still.space.n = 1;
  still.motion = Matrix(1, 1);
  still.branch_rate = {0.0};
  still.offspring = {{{1.0, {}}}};  // never branches (rate is zero anyway)
  const ImmigrationLaw imm = single_immigrant();
  const McEstimate mean = mc_pairing_mean(still, &imm, {0}, {1.0}, 5.0, 200000, 11);
  CHECK(std::abs(mean.mean - 5.0) <= 3.0 * mean.std_error);
}

TEST_CASE("first moment matches the mean semigroup pairing") {
  const BranchingModel m = nonlocal_triple();
  const MeanGenerator gen = build_mean_generator(m);
  const Vec f{0.5, 1.0, 2.0};
  const std::vector<long> mu{2, 0, 1};
  const Vec lin = linear_action(gen, f, 3.0);
  const double expected = 2.0 * lin[0] + lin[2];
  const McEstimate est = mc_pairing_mean(m, nullptr, mu, f, 3.0, 200000, 31);
  CHECK(std::abs(est.mean - expected) <= 3.0 * est.std_error);
}

TEST_CASE("immigration decomposition of the mean") {
  const BranchingModel m = swap_pair();
  const MeanGenerator gen = build_mean_generator(m);
  const Vec f{1.0, 0.5};
  const ImmigrationLaw imm = single_immigrant(1.0, 1);
  const std::vector<long> mu{1, 0};
  const double t = 4.0;
  // deterministic side: <T_t f, mu> + integral of the immigrated pairing
  const Vec lin = linear_action(gen, f, t);
  double base = lin[0];
  const auto arrivals = integrate(
      [&](double s) { return Vec{linear_action(gen, f, s)[1]}; }, 0.0, t, 1e-10);
  const double expected = base + arrivals.value[0];
  const McEstimate est = mc_pairing_mean(m, &imm, mu, f, t, 300000, 77);
  CHECK(std::abs(est.mean - expected) <= 3.0 * est.std_error);
}

TEST_CASE("conditional Laplace estimate against the flow solver") {
  const BranchingModel bin = critical_binary();
  const MeanGenerator gen = build_mean_generator(bin);
  const double t = 20.0;
  const double theta = 1.0;
  // deterministic reference: 1 - u_t[exp(-theta/t)]/u_t for one starter
  Trajectory num = solve_nonlinear(bin, gen, {std::exp(-theta / t)}, t, {t});
  Trajectory den = solve_nonlinear(bin, gen, {0.0}, t, {t});
  const double reference = 1.0 - num.values.back()[0] / den.values.back()[0];
  const McEstimate est = mc_laplace(bin, nullptr, {1}, {1.0}, theta, t, 400000, 99, true);
  CHECK(std::abs(est.mean - reference) <= 3.0 * est.std_error);
}

TEST_CASE("replicate streams make estimates independent of the worker count") {
  const BranchingModel m = nonlocal_triple();
  const std::vector<long> mu{1, 1, 0};
  const McEstimate t1 = mc_survival(m, mu, 8.0, 30000, 5, 1);
  const McEstimate t3 = mc_survival(m, mu, 8.0, 30000, 5, 3);
  const McEstimate t8 = mc_survival(m, mu, 8.0, 30000, 5, 8);
  CHECK(t1.mean == t3.mean);
  CHECK(t1.std_error == t3.std_error);
  CHECK(t1.mean == t8.mean);
  CHECK(t1.std_error == t8.std_error);

  const McEstimate l1 = mc_laplace(m, nullptr, mu, {1.0, 1.0, 1.0}, 2.0, 5.0, 20000, 5, true, 1);
  const McEstimate l4 = mc_laplace(m, nullptr, mu, {1.0, 1.0, 1.0}, 2.0, 5.0, 20000, 5, true, 4);
  CHECK(l1.mean == l4.mean);
  CHECK(l1.std_error == l4.std_error);
}

TEST_CASE("identical seeds reproduce paths exactly") {
  const BranchingModel m = swap_pair();
  const std::vector<double> cps{0.0, 1.0, 2.0, 4.0};
  PathResult a = simulate_path(m, nullptr, {2, 1}, 4.0, 123, 9, cps);
  PathResult b = simulate_path(m, nullptr, {2, 1}, 4.0, 123, 9, cps);
  REQUIRE(a.states.size() == b.states.size());
  for (size_t i = 0; i < a.states.size(); ++i) CHECK(a.states[i].counts == b.states[i].counts);

  PathResult c = simulate_path(m, nullptr, {2, 1}, 4.0, 123, 10, cps);
  bool all_same = true;
  for (size_t i = 0; i < a.states.size(); ++i)
    if (a.states[i].counts != c.states[i].counts) all_same = false;
  CHECK_FALSE(all_same);  // different replicate index, different stream
}

TEST_CASE("extinction times are recorded and the population cap trips") {
  const BranchingModel sub = subcritical_single();
  PathResult path = simulate_path(sub, nullptr, {1}, 100.0, 17, 0, {100.0});
  REQUIRE(path.extinction_time.has_value());
  CHECK(*path.extinction_time > 0.0);
  CHECK(path.states.back().counts[0] == 0);

  // supercritical growth breaches a tiny cap quickly
  BranchingModel super = critical_binary();
  super.offspring[0] = {{0.1, {}}, {0.9, {0, 0}}};
  SimOptions opts;
  opts.population_cap = 50;
  CHECK_THROWS_AS(simulate_path(super, nullptr, {10}, 200.0, 3, 0, {200.0}, opts),
                  NumericalFault);
}

TEST_CASE("survivor-targeted sampling reaches its quota deterministically") {
  const BranchingModel bin = critical_binary();
  const McEstimate a =
      mc_laplace_until_survivors(bin, {1}, {1.0}, 1.0, 20.0, 500, 2000, 1000000, 13, 1);
  const McEstimate b =
      mc_laplace_until_survivors(bin, {1}, {1.0}, 1.0, 20.0, 500, 2000, 1000000, 13, 4);
  CHECK(a.mean == b.mean);
  CHECK(a.n == b.n);
  CHECK(a.n * (2.0 / 22.0) >= 500.0 * 0.8);  // quota was reachable
}

TEST_CASE("replicate CSV export is stable and capped") {
  const BranchingModel m = critical_binary();
  const std::string csv = replicates_csv(m, nullptr, {1}, 2.0, 21, 3, {0.0, 1.0, 2.0});
  CHECK(csv.rfind("replicate,t,type_index,count\n", 0) == 0);
  const std::string again = replicates_csv(m, nullptr, {1}, 2.0, 21, 3, {0.0, 1.0, 2.0});
  CHECK(csv == again);
}
