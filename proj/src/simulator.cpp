#include "branchlab/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "branchlab/errors.hpp"
#include "branchlab/rng.hpp"
#include "branchlab/threadpool.hpp"

namespace branchlab {

namespace {

constexpr long kBlock = 4096;  // replicates per reduction block (fixed, not thread-dependent)

struct TypeTables {
  double beta = 0.0;
  double q_out = 0.0;        // total motion-out rate including killing
  double per_particle = 0.0; // beta + q_out
  std::vector<std::pair<double, int>> motion_cdf;  // cumulative rate, destination (-1 = killed)
  std::vector<double> atom_cdf;                    // cumulative offspring probabilities
  std::vector<std::vector<int>> atom_children;
};

struct SimTables {
  int n = 0;
  std::vector<TypeTables> types;
  double imm_rate = 0.0;
  std::vector<double> imm_cdf;
  std::vector<std::vector<int>> imm_arrivals;
  const HeavyTailFamily* heavy = nullptr;
};

SimTables build_tables(const BranchingModel& m, const ImmigrationLaw* imm) {
  const auto diag = validate(m);
  if (!admissible(diag)) throw SchemaError("invalid model: " + diag.front());
  SimTables t;
  t.n = m.space.n;
  t.types.resize(t.n);
  for (int x = 0; x < t.n; ++x) {
    TypeTables& tt = t.types[x];
    tt.beta = m.branch_rate[x];
    double out = 0.0;
    for (int y = 0; y < t.n; ++y) {
      if (y == x) continue;
      const double q = m.motion(x, y);
      if (q > 0.0) {
        out += q;
        tt.motion_cdf.emplace_back(out, y);
      }
    }
    double row = 0.0;
    for (int y = 0; y < t.n; ++y) row += m.motion(x, y);
    const double kill = std::max(0.0, -row);
    if (kill > 0.0) {
      out += kill;
      tt.motion_cdf.emplace_back(out, -1);
    }
    tt.q_out = out;
    tt.per_particle = tt.beta + tt.q_out;
    double cum = 0.0;
    for (const auto& atom : m.offspring[x]) {
      cum += atom.prob;
      tt.atom_cdf.push_back(cum);
      tt.atom_children.push_back(atom.children);
    }
  }
  if (imm != nullptr) {
    const auto idiag = validate(*imm, t.n);
    if (!admissible(idiag)) throw SchemaError("invalid immigration law: " + idiag.front());
    t.imm_rate = imm->rate;
    if (imm->heavy_tail) {
      t.heavy = &*imm->heavy_tail;
    } else {
      double cum = 0.0;
      for (const auto& atom : imm->atoms) {
        cum += atom.prob;
        t.imm_cdf.push_back(cum);
        t.imm_arrivals.push_back(atom.arrivals);
      }
    }
  }
  return t;
}

long sample_heavy_size(const HeavyTailFamily& fam, RngStream& rng, long cap, double t) {
  const double u = rng.uniform();
  const long table = heavy_tail_table_size(fam);
  if (u <= heavy_tail_prefix_mass(fam, table)) {
    long lo = 1, hi = table;
    while (lo < hi) {
      const long mid = (lo + hi) / 2;
      if (heavy_tail_prefix_mass(fam, mid) >= u)
        hi = mid;
      else
        lo = mid + 1;
    }
    return lo;
  }
  double cum = heavy_tail_prefix_mass(fam, table);
  for (long k = table + 1;; ++k) {
    cum += heavy_tail_pmf(fam, k);
    if (cum >= u) return k;
    if (k > cap) {
      std::ostringstream os;
      os << "population cap breached by an immigration burst at t = " << t;
      throw NumericalFault(os.str());
    }
  }
}

struct SimState {
  std::vector<long> counts;
  long total = 0;
  double t = 0.0;
  bool extinct_recorded = false;
  double extinction_time = 0.0;
};

// Advances the state to t_end; calls record(checkpoint_time) for every
// checkpoint passed (carry-forward semantics). Checkpoints must be sorted.
template <typename Record>
void run_core(const SimTables& tab, SimState& st, double t_end, RngStream& rng,
              const std::vector<double>& checkpoints, size_t& next_cp, long cap,
              const Record& record) {
  const int n = tab.n;
  auto flush_checkpoints = [&](double up_to) {
    while (next_cp < checkpoints.size() && checkpoints[next_cp] <= up_to + 1e-14) {
      record(checkpoints[next_cp]);
      ++next_cp;
    }
  };
  for (;;) {
    double r_particles = 0.0;
    for (int x = 0; x < n; ++x)
      r_particles += static_cast<double>(st.counts[x]) * tab.types[x].per_particle;
    const double rate = r_particles + tab.imm_rate;
    if (st.total == 0 && tab.imm_rate == 0.0) {
      if (!st.extinct_recorded) {
        st.extinct_recorded = true;
        st.extinction_time = st.t;
      }
      flush_checkpoints(t_end);
      st.t = t_end;
      return;
    }
    if (rate <= 0.0) {  // frozen configuration
      flush_checkpoints(t_end);
      st.t = t_end;
      return;
    }
    const double dt = rng.exponential(rate);
    if (st.t + dt > t_end) {
      flush_checkpoints(t_end);
      st.t = t_end;
      return;
    }
    flush_checkpoints(st.t + dt);
    st.t += dt;

    double u = rng.uniform() * rate;
    if (u < r_particles) {
      int x = 0;
      double acc = 0.0;
      for (; x < n; ++x) {
        acc += static_cast<double>(st.counts[x]) * tab.types[x].per_particle;
        if (u < acc) break;
      }
      if (x >= n) x = n - 1;  // guard against roundoff at the boundary
      const TypeTables& tt = tab.types[x];
      const double u2 = rng.uniform() * tt.per_particle;
      if (u2 < tt.beta) {
        // branching: replace the parent by a sampled offspring configuration
        const double u3 = rng.uniform();
        size_t a = 0;
        while (a + 1 < tt.atom_cdf.size() && u3 > tt.atom_cdf[a]) ++a;
        --st.counts[x];
        --st.total;
        for (int c : tt.atom_children[a]) {
          ++st.counts[c];
          ++st.total;
        }
      } else {
        // motion jump or killing
        const double u3 = rng.uniform() * tt.q_out;
        int dest = -1;
        for (const auto& [cum, y] : tt.motion_cdf) {
          if (u3 < cum) {
            dest = y;
            break;
          }
        }
        --st.counts[x];
        if (dest >= 0)
          ++st.counts[dest];
        else
          --st.total;
      }
    } else {
      // immigration event
      if (tab.heavy != nullptr) {
        const long k = sample_heavy_size(*tab.heavy, rng, cap, st.t);
        st.counts[tab.heavy->type_index] += k;
        st.total += k;
      } else {
        const double u3 = rng.uniform();
        size_t a = 0;
        while (a + 1 < tab.imm_cdf.size() && u3 > tab.imm_cdf[a]) ++a;
        for (int y : tab.imm_arrivals[a]) {
          ++st.counts[y];
          ++st.total;
        }
      }
    }
    if (st.total > cap) {
      std::ostringstream os;
      os << "population cap (" << cap << ") breached at t = " << st.t;
      throw NumericalFault(os.str());
    }
    if (st.total == 0 && !st.extinct_recorded) {
      st.extinct_recorded = true;
      st.extinction_time = st.t;
    }
  }
}

SimState init_state(const std::vector<long>& init, int n) {
  if (static_cast<int>(init.size()) != n)
    throw SchemaError("initial configuration length differs from the type count");
  SimState st;
  st.counts = init;
  for (long c : init) {
    if (c < 0) throw SchemaError("negative initial particle count");
    st.total += c;
  }
  return st;
}

struct BlockSums {
  double a = 0.0, a2 = 0.0, b = 0.0, ab = 0.0;
  long n = 0;
};

McEstimate finalize_mean(const std::vector<BlockSums>& blocks) {
  double sa = 0.0, sa2 = 0.0;
  long n = 0;
  for (const auto& blk : blocks) {
    sa += blk.a;
    sa2 += blk.a2;
    n += blk.n;
  }
  McEstimate est;
  est.n = n;
  est.mean = sa / static_cast<double>(n);
  if (n >= 2) {
    const double var = std::max(0.0, (sa2 - sa * sa / n) / static_cast<double>(n - 1));
    est.std_error = std::sqrt(var / static_cast<double>(n));
  }
  est.ci_lo = est.mean - 1.96 * est.std_error;
  est.ci_hi = est.mean + 1.96 * est.std_error;
  return est;
}

McEstimate finalize_ratio(const std::vector<BlockSums>& blocks) {
  double sa = 0.0, sa2 = 0.0, sb = 0.0, sab = 0.0;
  long n = 0;
  for (const auto& blk : blocks) {
    sa += blk.a;
    sa2 += blk.a2;
    sb += blk.b;
    sab += blk.ab;
    n += blk.n;
  }
  if (sb <= 0.0) throw NumericalFault("conditional estimate undefined: no survivors observed");
  const double abar = sa / n;
  const double bbar = sb / n;
  const double ratio = abar / bbar;
  McEstimate est;
  est.n = n;
  est.mean = ratio;
  if (n >= 2) {
    const double saa = (sa2 - sa * sa / n) / (n - 1.0);
    const double sbb = (sb - sb * sb / n) / (n - 1.0);  // indicator: b^2 = b
    const double scov = (sab - sa * sb / n) / (n - 1.0);
    const double var =
        (saa - 2.0 * ratio * scov + ratio * ratio * sbb) / (bbar * bbar * n);
    est.std_error = std::sqrt(std::max(0.0, var));
  }
  est.ci_lo = est.mean - 1.96 * est.std_error;
  est.ci_hi = est.mean + 1.96 * est.std_error;
  return est;
}

// Runs replicates [first, first + count) and accumulates block sums in
// replicate order. value(state_alive, pairing) supplies the per-replicate
// statistics (a, b).
template <typename PerReplicate>
void run_blocks(const SimTables& tab, const std::vector<long>& init, double t,
                std::uint64_t seed, long first, long count, int threads, long cap,
                std::vector<BlockSums>& out, const PerReplicate& per_replicate) {
  const long blocks = (count + kBlock - 1) / kBlock;
  out.assign(static_cast<size_t>(blocks), BlockSums{});
  const std::vector<double> no_checkpoints;
  parallel_blocks(blocks, threads, [&](long blk) {
    BlockSums sums;
    const long lo = first + blk * kBlock;
    const long hi = std::min(first + count, lo + kBlock);
    for (long k = lo; k < hi; ++k) {
      RngStream rng(seed, static_cast<std::uint64_t>(k));
      SimState st = init_state(init, tab.n);
      size_t next_cp = 0;
      run_core(tab, st, t, rng, no_checkpoints, next_cp, cap, [](double) {});
      const auto [a, b] = per_replicate(st);
      sums.a += a;
      sums.a2 += a * a;
      sums.b += b;
      sums.ab += a * b;
      ++sums.n;
    }
    out[static_cast<size_t>(blk)] = sums;
  });
}

}  // namespace

PathResult simulate_path(const BranchingModel& m, const ImmigrationLaw* imm,
                         const std::vector<long>& init, double horizon, std::uint64_t seed,
                         std::uint64_t replicate, const std::vector<double>& checkpoints,
                         const SimOptions& opts) {
  const SimTables tab = build_tables(m, imm);
  std::vector<double> cps = checkpoints;
  std::sort(cps.begin(), cps.end());
  RngStream rng(seed, replicate);
  SimState st = init_state(init, tab.n);
  PathResult out;
  size_t next_cp = 0;
  run_core(tab, st, horizon, rng, cps, next_cp, opts.population_cap, [&](double tcp) {
    out.states.push_back(ParticleState{tcp, st.counts});
  });
  if (st.extinct_recorded && imm == nullptr) out.extinction_time = st.extinction_time;
  return out;
}

McEstimate mc_survival(const BranchingModel& m, const std::vector<long>& mu, double t, long n,
                       std::uint64_t seed, int threads, const SimOptions& opts) {
  if (n < 2) throw SchemaError("n >= 2 required");
  const SimTables tab = build_tables(m, nullptr);
  std::vector<BlockSums> blocks;
  run_blocks(tab, mu, t, seed, 0, n, threads, opts.population_cap, blocks,
             [](const SimState& st) {
               const double alive = st.total > 0 ? 1.0 : 0.0;
               return std::pair<double, double>(alive, alive);
             });
  return finalize_mean(blocks);
}

McEstimate mc_laplace(const BranchingModel& m, const ImmigrationLaw* imm,
                      const std::vector<long>& mu, const Vec& f, double theta, double t, long n,
                      std::uint64_t seed, bool conditional, int threads,
                      const SimOptions& opts) {
  if (n < 2) throw SchemaError("n >= 2 required");
  if (theta < 0.0) throw SchemaError("theta must be nonnegative");
  if (conditional && imm != nullptr)
    throw ApplicabilityError("conditional estimates require a model without immigration");
  const SimTables tab = build_tables(m, imm);
  const double scale = t > 0.0 ? t : 1.0;
  std::vector<BlockSums> blocks;
  run_blocks(tab, mu, t, seed, 0, n, threads, opts.population_cap, blocks,
             [&](const SimState& st) {
               double pairing = 0.0;
               for (int x = 0; x < tab.n; ++x)
                 pairing += f[x] * static_cast<double>(st.counts[x]);
               const double alive = st.total > 0 ? 1.0 : 0.0;
               const double val = std::exp(-theta * pairing / scale);
               return conditional ? std::pair<double, double>(val * alive, alive)
                                  : std::pair<double, double>(val, 1.0);
             });
  return conditional ? finalize_ratio(blocks) : finalize_mean(blocks);
}

McEstimate mc_laplace_until_survivors(const BranchingModel& m, const std::vector<long>& mu,
                                      const Vec& f, double theta, double t, long min_survivors,
                                      long round_size, long max_n, std::uint64_t seed,
                                      int threads, const SimOptions& opts) {
  const SimTables tab = build_tables(m, nullptr);
  const double scale = t > 0.0 ? t : 1.0;
  std::vector<BlockSums> all;
  long n = 0;
  double survivors = 0.0;
  while (n < max_n) {
    std::vector<BlockSums> round;
    run_blocks(tab, mu, t, seed, n, round_size, threads, opts.population_cap, round,
               [&](const SimState& st) {
                 double pairing = 0.0;
                 for (int x = 0; x < tab.n; ++x)
                   pairing += f[x] * static_cast<double>(st.counts[x]);
                 const double alive = st.total > 0 ? 1.0 : 0.0;
                 return std::pair<double, double>(std::exp(-theta * pairing / scale) * alive,
                                                  alive);
               });
    for (const auto& blk : round) survivors += blk.b;
    all.insert(all.end(), round.begin(), round.end());
    n += round_size;
    if (survivors >= static_cast<double>(min_survivors)) break;
  }
  if (survivors < static_cast<double>(min_survivors))
    throw NumericalFault("replicate budget exhausted before reaching the survivor target");
  return finalize_ratio(all);
}

McEstimate mc_pairing_mean(const BranchingModel& m, const ImmigrationLaw* imm,
                           const std::vector<long>& mu, const Vec& f, double t, long n,
                           std::uint64_t seed, int threads, const SimOptions& opts) {
  if (n < 2) throw SchemaError("n >= 2 required");
  const SimTables tab = build_tables(m, imm);
  std::vector<BlockSums> blocks;
  run_blocks(tab, mu, t, seed, 0, n, threads, opts.population_cap, blocks,
             [&](const SimState& st) {
               double pairing = 0.0;
               for (int x = 0; x < tab.n; ++x)
                 pairing += f[x] * static_cast<double>(st.counts[x]);
               return std::pair<double, double>(pairing, 1.0);
             });
  return finalize_mean(blocks);
}

std::string replicates_csv(const BranchingModel& m, const ImmigrationLaw* imm,
                           const std::vector<long>& init, double horizon, std::uint64_t seed,
                           long n, const std::vector<double>& checkpoints,
                           const SimOptions& opts) {
  std::ostringstream os;
  os << "replicate,t,type_index,count\n";
  long rows = 0;
  char buf[64];
  for (long k = 0; k < n && rows < opts.csv_row_cap; ++k) {
    PathResult path = simulate_path(m, imm, init, horizon, seed,
                                    static_cast<std::uint64_t>(k), checkpoints, opts);
    for (const auto& state : path.states) {
      for (size_t x = 0; x < state.counts.size() && rows < opts.csv_row_cap; ++x) {
        std::snprintf(buf, sizeof buf, "%.17g", state.time);
        os << k << "," << buf << "," << x << "," << state.counts[x] << "\n";
        ++rows;
      }
    }
  }
  return os.str();
}

}  // namespace branchlab
