#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "branchlab/errors.hpp"
#include "branchlab/semigroup.hpp"
#include "branchlab/spectral.hpp"
#include "helpers.hpp"

using namespace branchlab;
using namespace branchlab::testing;

TEST_CASE("mean generators of the bundled models") {
  CHECK(build_mean_generator(critical_binary()).L(0, 0) == doctest::Approx(0.0));
  CHECK(build_mean_generator(subcritical_single()).L(0, 0) == doctest::Approx(-0.5));

  const Matrix L = build_mean_generator(swap_pair()).L;
  CHECK(L(0, 0) == doctest::Approx(-1.0));
  CHECK(L(0, 1) == doctest::Approx(1.0));
  CHECK(L(1, 0) == doctest::Approx(1.0));
  CHECK(L(1, 1) == doctest::Approx(-1.0));

  // measure-valued generator picks up the drift on the diagonal
  const Matrix Lsp = build_mean_generator(feller(1.0, -0.5)).L;
  CHECK(Lsp(0, 0) == doctest::Approx(-0.5));
}

TEST_CASE("eigen data for one- and two-type generators") {
  const EigenTriple one = eigen_triple(build_mean_generator(critical_binary()));
  CHECK(one.lambda == doctest::Approx(0.0));
  CHECK(one.right[0] == doctest::Approx(1.0));
  CHECK(one.left[0] == doctest::Approx(1.0));
  CHECK(one.residual <= 1e-10);

  const EigenTriple sub = eigen_triple(build_mean_generator(subcritical_single()));
  CHECK(sub.lambda == doctest::Approx(-0.5));

  const EigenTriple sw = eigen_triple(build_mean_generator(swap_pair()));
  CHECK(sw.lambda == doctest::Approx(0.0).epsilon(1e-10));
  CHECK(sw.right[0] == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(sw.right[1] == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(sw.left[0] == doctest::Approx(0.5).epsilon(1e-10));
  CHECK(sw.left[1] == doctest::Approx(0.5).epsilon(1e-10));
  CHECK(sw.residual <= 1e-10);
  CHECK(sw.gap == doctest::Approx(2.0).epsilon(1e-6));
}

TEST_CASE("eigen normalizations hold to 1e-12 on the bundled models") {
  for (const BranchingModel& m :
       {critical_binary(), subcritical_single(), swap_pair(), nonlocal_triple()}) {
    const EigenTriple tr = eigen_triple(build_mean_generator(m));
    CHECK(dot(tr.right, tr.left) == doctest::Approx(1.0).epsilon(1e-12));
    double mass = 0.0;
    for (double v : tr.left) mass += v;
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-12));
    for (double v : tr.right) CHECK(v > 0.0);
  }
}

TEST_CASE("reducible generators are refused") {
  BranchingModel m = swap_pair();
  m.offspring[0] = {{1.0, {}}};  // type 0 never reaches type 1
  CHECK_THROWS_AS(eigen_triple(build_mean_generator(m)), ApplicabilityError);
}

TEST_CASE("criticality classification") {
  EigenTriple t;
  t.lambda = 0.0;
  CHECK(classify_criticality(t, 1e-9) == Criticality::Critical);
  t.lambda = -0.5;
  CHECK(classify_criticality(t, 1e-9) == Criticality::Subcritical);
  t.lambda = 0.3;
  CHECK(classify_criticality(t, 1e-9) == Criticality::Supercritical);
}

TEST_CASE("rank-one deviation: exact values and decay") {
  const MeanGenerator gen = build_mean_generator(swap_pair());
  const EigenTriple tr = eigen_triple(gen);

  // at t=0 the kernel row is (1,0): positive and negative parts are both 1/2
  CHECK(rank_one_deviation(gen, tr, 0.0) == doctest::Approx(0.5));
  CHECK(rank_one_deviation(gen, tr, 1.0) ==
        doctest::Approx(0.5 * std::exp(-2.0)).epsilon(1e-10));

  const MeanGenerator one = build_mean_generator(critical_binary());
  const EigenTriple otr = eigen_triple(one);
  CHECK(rank_one_deviation(one, otr, 0.0) == doctest::Approx(0.0));

  // fitted decay rate over t in [1,5] matches the spectral gap
  const auto kernel = variance_kernel(swap_pair());
  MixingProfile prof = mixing_profile(gen, kernel, tr, {1.0, 2.0, 3.0, 4.0, 5.0});
  CHECK(prof.eps_fit == doctest::Approx(2.0).epsilon(1e-6));
}

TEST_CASE("second-moment deviation has the closed form 1/t for the binary model") {
  const BranchingModel m = critical_binary();
  const MeanGenerator gen = build_mean_generator(m);
  const EigenTriple tr = eigen_triple(gen);
  const auto kernel = variance_kernel(m);
  for (double t : {1.0, 2.0, 8.0})
    CHECK(rank_one_deviation_second(gen, kernel, tr, t) ==
          doctest::Approx(1.0 / t).epsilon(1e-7));
}

TEST_CASE("deviation envelope: doubling t never increases delta on critical models") {
  for (const BranchingModel& m : {swap_pair(), nonlocal_triple()}) {
    const MeanGenerator gen = build_mean_generator(m);
    const EigenTriple tr = eigen_triple(gen);
    for (double t : {0.5, 1.0, 2.0, 4.0}) {
      const double d1 = rank_one_deviation(gen, tr, t);
      const double d2 = rank_one_deviation(gen, tr, 2.0 * t);
      CHECK(d2 <= d1 * (1.0 + 1e-6) + 1e-9);
    }
  }
}

TEST_CASE("linear semigroup consistency and eigen invariance") {
  RngStream rng(23, 0);
  for (const BranchingModel& m : {swap_pair(), nonlocal_triple(), subcritical_single()}) {
    const MeanGenerator gen = build_mean_generator(m);
    const EigenTriple tr = eigen_triple(gen);
    for (int trial = 0; trial < 20; ++trial) {
      const Vec f = random_nonneg_vec(rng, m.space.n);
      const double t = 5.0 * rng.uniform();
      const double s = 5.0 * rng.uniform();
      const Vec direct = linear_action(gen, f, t + s);
      const Vec composed = linear_action(gen, linear_action(gen, f, s), t);
      for (int x = 0; x < m.space.n; ++x)
        CHECK(std::abs(direct[x] - composed[x]) <= 1e-8 * norm_inf(f));

      const Vec flow = linear_action(gen, tr.right, t);
      for (int x = 0; x < m.space.n; ++x)
        CHECK(std::abs(flow[x] - std::exp(tr.lambda * t) * tr.right[x]) <= 1e-8);
      // left eigenvector under the adjoint flow
      const Matrix Et = transpose(expm(t * gen.L));
      const Vec adj = matvec(Et, tr.left);
      for (int x = 0; x < m.space.n; ++x)
        CHECK(std::abs(adj[x] - std::exp(tr.lambda * t) * tr.left[x]) <= 1e-8);
    }
  }
}

TEST_CASE("pair-moment floor: exact low-dimensional cases") {
  const BranchingModel bin = critical_binary();
  const EigenTriple tr = eigen_triple(build_mean_generator(bin));
  CHECK(pair_moment_floor(variance_kernel(bin), tr.left, 64, 5) ==
        doctest::Approx(1.0).epsilon(1e-9));

  const EigenTriple sw = eigen_triple(build_mean_generator(swap_pair()));
  CHECK(pair_moment_floor(variance_kernel(swap_pair()), sw.left, 64, 5) ==
        doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("assumption report fields") {
  const BranchingModel bin = critical_binary();
  const EigenTriple tr = eigen_triple(build_mean_generator(bin));
  const AssumptionReport rep = check_assumptions(ModelAny{bin}, tr);
  CHECK(rep.second_moment_sup == doctest::Approx(2.0));
  CHECK(rep.k_positive);
  CHECK(rep.k_estimate == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(rep.m_truncation == 2.0);
  CHECK(rep.extinction_flag);
  CHECK(rep.criticality == Criticality::Critical);

  const BranchingModel sw = swap_pair();
  const EigenTriple str = eigen_triple(build_mean_generator(sw));
  CHECK(check_assumptions(ModelAny{sw}, str).second_moment_sup == doctest::Approx(2.0));

  // deterministic single-child offspring: the pair functional vanishes
  BranchingModel flat = critical_binary();
  flat.offspring[0] = {{1.0, {0}}};
  const EigenTriple ftr = eigen_triple(build_mean_generator(flat));
  const AssumptionReport frep = check_assumptions(ModelAny{flat}, ftr);
  CHECK_FALSE(frep.k_positive);
  CHECK(frep.k_estimate <= 1e-10);
}
