#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "branchlab/model.hpp"
#include "branchlab/rng.hpp"
#include "helpers.hpp"

using namespace branchlab;
using namespace branchlab::testing;

TEST_CASE("validation accepts the bundled models and flags broken ones") {
  CHECK(admissible(validate(critical_binary())));
  CHECK(admissible(validate(swap_pair())));
  CHECK(admissible(validate(nonlocal_triple())));
  CHECK(admissible(validate(feller())));

  BranchingModel bad = critical_binary();
  bad.offspring[0][1].prob = 0.4;  // sums to 0.9
  const auto diag = validate(bad);
  REQUIRE_FALSE(admissible(diag));
  bool mentions_sum = false;
  for (const auto& d : diag)
    if (d.find("sum to 0.9") != std::string::npos) mentions_sum = true;
  CHECK(mentions_sum);

  SuperModel heavy = feller();
  heavy.nonlocal_mean(0, 0) = 0.7;
  heavy.nonlocal_atoms[0].push_back(MassAtom{1.0, {0.5}});  // total displaced mass 1.2
  const auto sdiag = validate(heavy);
  REQUIRE_FALSE(admissible(sdiag));
  bool mentions_mass = false;
  for (const auto& d : sdiag)
    if (d.find("type 0") != std::string::npos && d.find("1.2") != std::string::npos)
      mentions_mass = true;
  CHECK(mentions_mass);
}

TEST_CASE("single-child atoms warn but stay admissible") {
  BranchingModel m = critical_binary();
  m.offspring[0] = {{0.5, {0}}, {0.5, {0, 0}}};
  const auto diag = validate(m);
  REQUIRE(diag.size() == 1);
  CHECK(diag[0].rfind("warning:", 0) == 0);
  CHECK(admissible(diag));
}

TEST_CASE("mean matrix") {
  CHECK(mean_matrix(critical_binary())(0, 0) == doctest::Approx(1.0));

  const Matrix swap = mean_matrix(swap_pair());
  CHECK(swap(0, 0) == 0.0);
  CHECK(swap(0, 1) == doctest::Approx(1.0));
  CHECK(swap(1, 0) == doctest::Approx(1.0));
  CHECK(swap(1, 1) == 0.0);

  BranchingModel barren = critical_binary();
  barren.offspring[0] = {{1.0, {}}};
  CHECK(mean_matrix(barren)(0, 0) == 0.0);
}

TEST_CASE("particle nonlinearity matches direct atom sums") {
  const BranchingModel bin = critical_binary();
  CHECK(nonlinearity(bin, {0.0})[0] == 0.0);
  CHECK(nonlinearity(bin, {0.2})[0] == doctest::Approx(0.02).epsilon(1e-12));

  const BranchingModel sw = swap_pair();
  const Vec a = nonlinearity(sw, {0.1, 0.3});
  CHECK(a[0] == doctest::Approx(0.5 * 0.7 * 0.7 - 0.5 + 0.3).epsilon(1e-12));  // 0.045
  CHECK(a[1] == doctest::Approx(0.5 * 0.9 * 0.9 - 0.5 + 0.1).epsilon(1e-12));  // 0.005
}

TEST_CASE("measure nonlinearity matches the closed forms") {
  CHECK(nonlinearity(feller(), {0.0})[0] == 0.0);
  CHECK(nonlinearity(feller(), {3.0})[0] == doctest::Approx(9.0));

  SuperModel jump = feller(0.0);
  jump.jumps[0] = {JumpAtom{1.0, 2.0}};
  CHECK(nonlinearity(jump, {1.0})[0] ==
        doctest::Approx(std::exp(-2.0) - 1.0 + 2.0).epsilon(1e-14));
}

TEST_CASE("variance functional and truncation") {
  const BranchingModel bin = critical_binary();
  CHECK(variance_functional(bin, {1.0})[0] == doctest::Approx(1.0));
  CHECK(variance_functional(bin, {0.0})[0] == 0.0);
  CHECK(variance_functional(bin, {1.0}, 1.0)[0] == 0.0);  // the pair atom has size 2

  const SuperModel sp = feller(1.5);
  CHECK(variance_functional(sp, {2.0})[0] == doctest::Approx(2.0 * 1.5 * 4.0));
}

TEST_CASE("immigration mechanisms") {
  const ImmigrationLaw one = single_immigrant();
  CHECK(immigration_mechanism(one, {0.0}) == 0.0);
  CHECK(immigration_mechanism(one, {std::log(2.0)}) == doctest::Approx(0.5).epsilon(1e-14));

  ImmigrationLaw pair;
  pair.rate = 2.0;
  pair.atoms = {{1.0, {0, 0}}};
  CHECK(immigration_mechanism(pair, {0.5}) ==
        doctest::Approx(2.0 * (1.0 - std::exp(-1.0))).epsilon(1e-14));

  const SpImmigrationLaw lin = linear_mass_immigration();
  CHECK(immigration_mechanism(lin, {0.0}) == 0.0);
  CHECK(immigration_mechanism(lin, {0.7}) == doctest::Approx(0.7));

  SpImmigrationLaw burst;
  burst.drift = {0.0};
  burst.jumps = {MassAtom{1.0, {1.0}}};
  CHECK(immigration_mechanism(burst, {1.0}) ==
        doctest::Approx(1.0 - std::exp(-1.0)).epsilon(1e-14));
}

TEST_CASE("u-space immigration mechanism agrees with the exponent form") {
  RngStream rng(7, 0);
  for (int trial = 0; trial < 50; ++trial) {
    BranchingModel m = random_bmp(rng);
    ImmigrationLaw law = random_immigration(rng, m.space.n);
    Vec u = random_unit_vec(rng, m.space.n);
    for (double& v : u) v *= 0.95;
    Vec f(u.size());
    for (size_t i = 0; i < u.size(); ++i) f[i] = -std::log1p(-u[i]);
    CHECK(immigration_mechanism_u(law, u) ==
          doctest::Approx(immigration_mechanism(law, f)).epsilon(1e-12));
  }
}

TEST_CASE("positivity and half-variance domination hold on random inputs") {
  RngStream rng(11, 0);
  for (int trial = 0; trial < 1000; ++trial) {
    const BranchingModel m = random_bmp(rng);
    const Vec g = random_unit_vec(rng, m.space.n);
    const Vec a = nonlinearity(m, g);
    const Vec v = variance_functional(m, g);
    for (int x = 0; x < m.space.n; ++x) {
      CHECK(a[x] >= -1e-12);
      CHECK(a[x] <= 0.5 * v[x] + 1e-12);
    }
  }
  for (int trial = 0; trial < 1000; ++trial) {
    const SuperModel m = random_sp(rng);
    const Vec h = random_nonneg_vec(rng, m.space.n);
    const Vec j = nonlinearity(m, h);
    const Vec v = variance_functional(m, h);
    for (int x = 0; x < m.space.n; ++x) {
      CHECK(j[x] >= -1e-12);
      CHECK(j[x] <= 0.5 * v[x] + 1e-12);
    }
  }
}

TEST_CASE("remainder agrees with the direct difference and decays cubically") {
  RngStream rng(13, 0);
  // direct agreement where cancellation is mild
  for (int trial = 0; trial < 200; ++trial) {
    const BranchingModel m = random_bmp(rng, 3, 4, true);
    Vec g = random_unit_vec(rng, m.space.n);
    for (double& v : g) v *= 0.5;
    const Vec direct_a = nonlinearity(m, g);
    const Vec direct_v = variance_functional(m, g);
    const Vec rem = nonlinearity_remainder(m, g);
    for (int x = 0; x < m.space.n; ++x)
      CHECK(rem[x] == doctest::Approx(direct_a[x] - 0.5 * direct_v[x]).epsilon(1e-9));
  }

  // remainder norm decays strictly through six decades of the argument scale
  const BranchingModel m = random_bmp(rng, 3, 4, true);
  const Vec g0 = random_unit_vec(rng, m.space.n);
  std::vector<double> norms;
  for (int k = 1; k <= 6; ++k) {
    const double s = std::pow(10.0, -k);
    Vec g(g0.size());
    for (size_t i = 0; i < g0.size(); ++i) g[i] = s * g0[i];
    norms.push_back(norm_inf(nonlinearity_remainder(m, g)));
  }
  for (size_t k = 1; k < norms.size(); ++k) CHECK(norms[k] < norms[k - 1]);
  CHECK(norms.back() <= 1e-6 * norms.front());
}

TEST_CASE("binary and pure-diffusion models have an exactly vanishing remainder") {
  CHECK(norm_inf(nonlinearity_remainder(critical_binary(), {0.3})) == 0.0);
  CHECK(norm_inf(nonlinearity_remainder(feller(), {2.0})) == 0.0);
}

TEST_CASE("variance functional is Lipschitz with the model-derived constant") {
  RngStream rng(17, 0);
  for (int trial = 0; trial < 300; ++trial) {
    const BranchingModel m = random_bmp(rng);
    const double bound = 2.0;
    const double c = variance_lipschitz_bound(m, bound);
    Vec h1 = random_nonneg_vec(rng, m.space.n, bound);
    Vec h2 = random_nonneg_vec(rng, m.space.n, bound);
    Vec d(h1.size());
    for (size_t i = 0; i < h1.size(); ++i) d[i] = h1[i] - h2[i];
    const Vec v1 = variance_functional(m, h1);
    const Vec v2 = variance_functional(m, h2);
    Vec dv(v1.size());
    for (size_t i = 0; i < v1.size(); ++i) dv[i] = v1[i] - v2[i];
    CHECK(norm_inf(dv) <= c * norm_inf(d) + 1e-12);
  }
}

TEST_CASE("immigration mechanisms are monotone") {
  RngStream rng(19, 0);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = 1 + static_cast<int>(rng.uniform() * 3) % 3;
    ImmigrationLaw law = random_immigration(rng, n);
    Vec f = random_nonneg_vec(rng, n);
    Vec g = f;
    for (double& v : g) v += rng.uniform();
    CHECK(immigration_mechanism(law, f) <= immigration_mechanism(law, g) + 1e-14);
  }
}

TEST_CASE("second-moment summaries") {
  CHECK(offspring_second_moment_sup(swap_pair()) == doctest::Approx(2.0));
  CHECK(offspring_second_moment_sup(critical_binary()) == doctest::Approx(2.0));
  CHECK(largest_event_size(critical_binary()) == 2.0);
  SuperModel sp = feller();
  sp.jumps[0] = {JumpAtom{0.5, 3.0}};
  CHECK(offspring_second_moment_sup(sp) == doctest::Approx(0.5 * 9.0));
  CHECK(largest_event_size(sp) == 3.0);
}

TEST_CASE("heavy-tail family: certified series behave") {
  const HeavyTailFamily fam = make_heavy_tail(1.0, 0);

  // the normalized masses sum to one once the integral-comparison estimate
  // of the mass beyond the summation horizon is added back
  double mass = heavy_tail_prefix_mass(fam, heavy_tail_table_size(fam));
  double tail = 0.0;
  for (long k = heavy_tail_table_size(fam) + 1; k <= 4000000; ++k)
    tail += heavy_tail_pmf(fam, k);
  const double beyond =
      std::pow(std::log(4e6 + 2.0), -fam.p) / fam.p / heavy_tail_norm(fam);
  CHECK(mass + tail + beyond == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(mass < 1.0);

  // the mechanism agrees with a long direct sum at a moderate argument
  ImmigrationLaw law;
  law.rate = 1.0;
  law.heavy_tail = fam;
  const double a = 0.01;
  double brute = 0.0;
  for (long k = 1; k <= 20000; ++k)  // e^{-200} beyond: negligible
    brute += heavy_tail_pmf(fam, k) * (-std::expm1(-k * a));
  double leftover = 1.0 - heavy_tail_prefix_mass(fam, heavy_tail_table_size(fam));
  for (long k = heavy_tail_table_size(fam) + 1; k <= 20000; ++k)
    leftover -= heavy_tail_pmf(fam, k);
  brute += leftover;  // indicator = 1 on the remaining mass, up to 1e-80
  CHECK(immigration_mechanism(law, {a}) == doctest::Approx(brute).epsilon(1e-7));

  // and with a tiny argument the value is positive but small
  const double small = immigration_mechanism(law, {1e-8});
  CHECK(small > 0.0);
  CHECK(small < 0.1);
}

TEST_CASE("heavy-tail log moments: divergence at p <= 1, finite beyond") {
  const Vec phi{1.0};
  ImmigrationLaw p1;
  p1.rate = 1.0;
  p1.heavy_tail = make_heavy_tail(1.0, 0);
  CHECK(immigrant_log_moment(p1, phi) == kInf);
  CHECK(immigrant_mean_mass(p1, phi) == kInf);

  ImmigrationLaw p2;
  p2.rate = 1.0;
  p2.heavy_tail = make_heavy_tail(2.0, 0);
  const double lm = immigrant_log_moment(p2, phi);
  CHECK(std::isfinite(lm));
  CHECK(lm > 0.0);
  // cross-check the finite value against a long partial sum with an integral
  // tail estimate coarser than the library's
  double acc = 0.0;
  for (long k = 1; k <= 2000000; ++k)
    acc += heavy_tail_pmf(p2.heavy_tail.value(), k) * std::log1p(double(k));
  CHECK(lm > acc);                         // tail contributes positively
  CHECK(lm < acc + 2.0 / std::log(2e6));   // and at most ~ integral of w^{-2}
}

TEST_CASE("atom log moments are exact sums") {
  const Vec phi{1.0};
  CHECK(immigrant_log_moment(single_immigrant(), phi) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-14));
  ImmigrationLaw two;
  two.rate = 1.0;
  two.atoms = {{0.5, {0}}, {0.5, {0, 0}}};
  CHECK(immigrant_log_moment(two, phi) ==
        doctest::Approx(0.5 * std::log(2.0) + 0.5 * std::log(3.0)).epsilon(1e-14));

  SpImmigrationLaw sp;
  sp.drift = {0.0};
  sp.jumps = {MassAtom{2.0, {1.0}}};
  CHECK(immigrant_log_moment(sp, phi) == doctest::Approx(2.0 * std::log(2.0)));
}

TEST_CASE("mean immigrated mass") {
  const Vec phi{1.0};
  CHECK(immigrant_mean_mass(single_immigrant(), phi) == doctest::Approx(1.0));
  ImmigrationLaw pair;
  pair.rate = 2.0;
  pair.atoms = {{1.0, {0, 0}}};
  CHECK(immigrant_mean_mass(pair, phi) == doctest::Approx(4.0));
  const SpImmigrationLaw lin = linear_mass_immigration();
  CHECK(immigrant_mean_mass(lin, phi) == doctest::Approx(1.0));
}
