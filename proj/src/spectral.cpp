#include "branchlab/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "branchlab/errors.hpp"
#include "branchlab/quad.hpp"
#include "branchlab/rng.hpp"

namespace branchlab {

MeanGenerator build_mean_generator(const BranchingModel& m) {
  const auto diag = validate(m);
  if (!admissible(diag)) throw SchemaError("invalid model: " + diag.front());
  const int n = m.space.n;
  Matrix mm = mean_matrix(m);
  Matrix L = m.motion;
  for (int x = 0; x < n; ++x) {
    for (int y = 0; y < n; ++y) L(x, y) += m.branch_rate[x] * mm(x, y);
    L(x, x) -= m.branch_rate[x];
  }
  return MeanGenerator{L};
}

MeanGenerator build_mean_generator(const SuperModel& m) {
  const auto diag = validate(m);
  if (!admissible(diag)) throw SchemaError("invalid model: " + diag.front());
  const int n = m.space.n;
  Matrix mm = mean_matrix(m);
  Matrix L = m.motion;
  for (int x = 0; x < n; ++x) {
    for (int y = 0; y < n; ++y) L(x, y) += m.branch_rate[x] * mm(x, y);
    L(x, x) += m.drift[x] - m.branch_rate[x];
  }
  return MeanGenerator{L};
}

MeanGenerator build_mean_generator(const ModelAny& m) {
  return std::visit([](const auto& mm) { return build_mean_generator(mm); }, m);
}

namespace {

void normalize_sum(Vec& v) {
  double s = std::accumulate(v.begin(), v.end(), 0.0);
  for (double& x : v) x /= s;
}

// Spectral radius of a small matrix by repeated squaring with rescaling.
double spectral_radius(Matrix m, int squarings = 48) {
  double log_scale = 0.0;
  for (int i = 0; i < squarings; ++i) {
    const double s = norm_inf(m);
    if (s == 0.0) return 0.0;
    m = (1.0 / s) * m;
    log_scale = 2.0 * (log_scale + std::log(s));
    m = m * m;
  }
  // after J squarings m approximates (A / e^{log_scale / 2^J})^{2^J}
  const double final_norm = norm_inf(m);
  return std::exp((std::log(final_norm) + log_scale) / std::ldexp(1.0, squarings));
}

}  // namespace

EigenTriple eigen_triple(const MeanGenerator& gen, double tol, long max_iterations) {
  const int n = gen.L.rows;
  if (!is_irreducible(gen.L))
    throw ApplicabilityError("mean generator is reducible: no unique positive eigen pair");

  EigenTriple out;
  if (n == 1) {
    out.lambda = gen.L(0, 0);
    out.right = {1.0};
    out.left = {1.0};
    out.residual = 0.0;
    out.gap = kInf;
    return out;
  }

  double max_diag = 0.0;
  for (int i = 0; i < n; ++i) max_diag = std::max(max_diag, std::abs(gen.L(i, i)));
  const double h = 1.0 / (1.0 + max_diag);
  const Matrix B = expm(h * gen.L);
  const Matrix Bt = transpose(B);

  Vec right(n, 1.0), left(n, 1.0);
  normalize_sum(right);
  normalize_sum(left);
  double lambda = 0.0;
  double residual = kInf;
  for (long it = 0; it < max_iterations; ++it) {
    Vec r2 = matvec(B, right);
    Vec l2 = matvec(Bt, left);
    normalize_sum(r2);
    normalize_sum(l2);
    right.swap(r2);
    left.swap(l2);
    if ((it & 0x3f) != 0x3f) continue;
    // two-sided Rayleigh quotient on L itself
    const Vec Lr = matvec(gen.L, right);
    lambda = dot(left, Lr) / dot(left, right);
    double res = 0.0;
    for (int i = 0; i < n; ++i) res = std::max(res, std::abs(Lr[i] - lambda * right[i]));
    const Vec Ll = matvec_transposed(gen.L, left);
    for (int i = 0; i < n; ++i) res = std::max(res, std::abs(Ll[i] - lambda * left[i]));
    residual = res;
    if (res <= tol) break;
  }
  if (residual > tol)
    throw NumericalFault("eigen iteration did not reach the residual target");
  for (double v : right)
    if (!(v > 0.0)) throw NumericalFault("right eigenvector not strictly positive");
  for (double v : left)
    if (!(v > 0.0)) throw NumericalFault("left eigenvector not strictly positive");

  normalize_sum(left);
  const double pairing = dot(right, left);
  for (double& v : right) v /= pairing;

  // subdominant real part via deflation of the dominant rank-one piece
  Matrix deflated = B;
  const double rho1 = std::exp(h * lambda);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) deflated(i, j) -= rho1 * right[i] * left[j];
  const double rho2 = spectral_radius(deflated);
  const double re2 = rho2 > 0.0 ? std::log(rho2) / h : -kInf;

  out.lambda = lambda;
  out.right = right;
  out.left = left;
  out.residual = residual;
  out.gap = lambda - re2;
  return out;
}

double default_criticality_band(const MeanGenerator& gen) {
  return 1e-9 * std::max(1.0, norm_inf(gen.L));
}

Criticality classify_criticality(const EigenTriple& triple, double band) {
  if (std::abs(triple.lambda) <= band) return Criticality::Critical;
  return triple.lambda < 0.0 ? Criticality::Subcritical : Criticality::Supercritical;
}

std::string to_string(Criticality c) {
  switch (c) {
    case Criticality::Subcritical: return "subcritical";
    case Criticality::Critical: return "critical";
    case Criticality::Supercritical: return "supercritical";
  }
  return "unknown";
}

double rank_one_deviation(const MeanGenerator& gen, const EigenTriple& triple, double t) {
  const int n = gen.L.rows;
  const Matrix E = expm(t * gen.L);
  const double damp = std::exp(-triple.lambda * t);
  double worst = 0.0;
  for (int x = 0; x < n; ++x) {
    double pos = 0.0, neg = 0.0;
    for (int y = 0; y < n; ++y) {
      const double v = damp * E(x, y) / triple.right[x] - triple.left[y];
      if (v > 0.0)
        pos += v;
      else
        neg -= v;
    }
    worst = std::max(worst, std::max(pos, neg));
  }
  return worst;
}

namespace {

// max over the unit box [0,1]^n of |f^T M f| by enumerating faces: every
// coordinate is pinned at 0, pinned at 1, or free, and the free block is
// solved at its stationary point.
double box_quadratic_sup(const Matrix& M) {
  const int n = M.rows;
  Matrix S(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) S(i, j) = M(i, j) + M(j, i);

  std::vector<int> state(n, 0);  // 0 -> pinned 0, 1 -> pinned 1, 2 -> free
  double best = 0.0;
  const long total = static_cast<long>(std::pow(3.0, n));
  Vec f(n, 0.0);
  for (long code = 0; code < total; ++code) {
    long c = code;
    std::vector<int> freeset;
    for (int i = 0; i < n; ++i) {
      state[i] = static_cast<int>(c % 3);
      c /= 3;
      if (state[i] == 2) freeset.push_back(i);
    }
    for (int i = 0; i < n; ++i) f[i] = state[i] == 1 ? 1.0 : 0.0;
    if (!freeset.empty()) {
      const int k = static_cast<int>(freeset.size());
      Matrix A(k, k), b(k, 1);
      for (int a = 0; a < k; ++a) {
        double rhs = 0.0;
        for (int j = 0; j < n; ++j)
          if (state[j] == 1) rhs -= S(freeset[a], j);
        b(a, 0) = rhs;
        for (int bcol = 0; bcol < k; ++bcol) A(a, bcol) = S(freeset[a], freeset[bcol]);
      }
      Matrix sol;
      try {
        sol = solve(A, b);
      } catch (const std::exception&) {
        continue;  // singular face: its extrema live on sub-faces
      }
      bool interior = true;
      for (int a = 0; a < k; ++a) {
        if (!(sol(a, 0) > 0.0 && sol(a, 0) < 1.0)) {
          interior = false;
          break;
        }
        f[freeset[a]] = sol(a, 0);
      }
      if (!interior) continue;
    }
    double q = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) q += f[i] * M(i, j) * f[j];
    best = std::max(best, std::abs(q));
  }
  return best;
}

}  // namespace

double rank_one_deviation_second(const MeanGenerator& gen, const std::vector<Matrix>& kernel,
                                 const EigenTriple& triple, double t, double quad_tol) {
  const int n = gen.L.rows;
  if (n > 10) throw ApplicabilityError("exact box enumeration limited to 10 types");
  if (!(t > 0.0)) throw std::invalid_argument("second-moment deviation needs t > 0");
  if (classify_criticality(triple, default_criticality_band(gen)) == Criticality::Supercritical)
    return std::numeric_limits<double>::quiet_NaN();

  // quadratic-form matrix of the second-moment action at time t, per source x
  const Matrix Et = expm(t * gen.L);
  auto integrand = [&](double s) {
    const Matrix Es = expm(s * gen.L);
    const Matrix Ets = expm((t - s) * gen.L);
    const Matrix EtsT = transpose(Ets);
    // rows x: Ets^T ( sum_y Es(x,y) W_y ) Ets, flattened for all x
    Vec out(static_cast<size_t>(n) * n * n, 0.0);
    for (int x = 0; x < n; ++x) {
      Matrix C(n, n);
      for (int y = 0; y < n; ++y) {
        const double w = Es(x, y);
        if (w == 0.0) continue;
        for (int a = 0; a < n; ++a)
          for (int b = 0; b < n; ++b) C(a, b) += w * kernel[y](a, b);
      }
      const Matrix Q = EtsT * (C * Ets);
      std::copy(Q.a.begin(), Q.a.end(), out.begin() + static_cast<size_t>(x) * n * n);
    }
    return out;
  };
  QuadResult duhamel = integrate(integrand, 0.0, t, quad_tol);

  const Criticality crit = classify_criticality(triple, 1e-9 * std::max(1.0, norm_inf(gen.L)));

  // comparison kernel
  Matrix compare(n, n);
  if (crit == Criticality::Critical) {
    // <V[right], left> times the rank-one square of the left eigenvector
    Vec vr(n, 0.0);
    for (int x = 0; x < n; ++x) {
      double q = 0.0;
      for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b) q += triple.right[a] * kernel[x](a, b) * triple.right[b];
      vr[x] = q;
    }
    const double scale = dot(vr, triple.left);
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) compare(a, b) = scale * triple.left[a] * triple.left[b];
  } else {
    // stationary second-moment functional: diag(left) plus the damped
    // accumulated variance along the mean flow
    const double lambda = triple.lambda;
    Matrix Wbar(n, n);
    for (int x = 0; x < n; ++x)
      for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b) Wbar(a, b) += triple.left[x] * kernel[x](a, b);
    const double horizon = std::max(1.0, std::log(1e14) / std::max(1e-12, -lambda));
    auto l2int = [&](double s) {
      const Matrix Es = expm(s * gen.L);
      const Matrix q = transpose(Es) * (Wbar * Es);
      Vec out(q.a);
      for (double& v : out) v *= std::exp(-lambda * s);
      return out;
    };
    QuadResult l2 = integrate(l2int, 0.0, horizon, quad_tol);
    for (int a = 0; a < n; ++a) {
      compare(a, a) += triple.left[a];
      for (int b = 0; b < n; ++b) compare(a, b) += l2.value[static_cast<size_t>(a) * n + b];
    }
  }

  double worst = 0.0;
  const double damp =
      crit == Criticality::Critical ? 1.0 / t : std::exp(-triple.lambda * t);
  for (int x = 0; x < n; ++x) {
    Matrix Mx(n, n);
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b)
        Mx(a, b) = damp / triple.right[x] *
                       duhamel.value[static_cast<size_t>(x) * n * n + static_cast<size_t>(a) * n + b] -
                   compare(a, b);
    // diagonal part from the linear action on f^2
    for (int a = 0; a < n; ++a) Mx(a, a) += damp / triple.right[x] * Et(x, a);
    worst = std::max(worst, box_quadratic_sup(Mx));
  }
  return worst;
}

MixingProfile mixing_profile(const MeanGenerator& gen, const std::vector<Matrix>& kernel,
                             const EigenTriple& triple, const std::vector<double>& times) {
  MixingProfile out;
  out.times = times;
  for (double t : times) {
    out.delta.push_back(rank_one_deviation(gen, triple, t));
    out.delta2.push_back(t > 0.0 ? rank_one_deviation_second(gen, kernel, triple, t) : kInf);
  }
  // least-squares fit of log delta against t over the positive entries
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int cnt = 0;
  for (size_t i = 0; i < out.times.size(); ++i) {
    if (out.delta[i] <= 0.0 || out.times[i] <= 0.0) continue;
    const double x = out.times[i];
    const double y = std::log(out.delta[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++cnt;
  }
  if (cnt >= 2 && sxx * cnt - sx * sx > 0.0)
    out.eps_fit = -(sxy * cnt - sx * sy) / (sxx * cnt - sx * sx);
  return out;
}

// --- pair-moment floor (projected gradient over the weighted simplex) -------

namespace {

// Euclidean projection onto { f >= 0 : <f, w> = 1 } with w > 0.
Vec project_simplex(const Vec& y, const Vec& w) {
  const int n = static_cast<int>(y.size());
  // KKT form: f_i = max(y_i - tau w_i, 0); find tau by scanning breakpoints.
  std::vector<double> breaks(n);
  for (int i = 0; i < n; ++i) breaks[i] = y[i] / w[i];
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) { return breaks[a] > breaks[b]; });
  double num = 0.0, den = 0.0;
  double tau = 0.0;
  for (int r = 0; r < n; ++r) {
    const int i = order[r];
    num += w[i] * y[i];
    den += w[i] * w[i];
    tau = (num - 1.0) / den;
    const double next_break = r + 1 < n ? breaks[order[r + 1]] : -kInf;
    if (tau >= next_break) break;
  }
  Vec f(n, 0.0);
  for (int i = 0; i < n; ++i) f[i] = std::max(0.0, y[i] - tau * w[i]);
  return f;
}

}  // namespace

double pair_moment_floor(const std::vector<Matrix>& kernel, const Vec& left, int starts,
                         std::uint64_t seed) {
  const int n = static_cast<int>(left.size());
  Matrix Wbar(n, n);
  for (int x = 0; x < n; ++x)
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) Wbar(a, b) += left[x] * kernel[x](a, b);

  auto objective = [&](const Vec& f) {
    double q = 0.0;
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) q += f[a] * Wbar(a, b) * f[b];
    return q;
  };
  auto gradient = [&](const Vec& f) {
    Vec g(n, 0.0);
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) g[a] += (Wbar(a, b) + Wbar(b, a)) * f[b];
    return g;
  };

  double best = kInf;
  RngStream rng(seed, 0);
  for (int s = 0; s <= starts; ++s) {
    Vec f(n, 0.0);
    if (s == 0) {
      double mass = std::accumulate(left.begin(), left.end(), 0.0);
      for (int i = 0; i < n; ++i) f[i] = 1.0 / mass;
    } else {
      for (int i = 0; i < n; ++i) f[i] = rng.uniform();
      const double pairing = dot(f, left);
      for (double& v : f) v /= pairing;
    }
    double val = objective(f);
    double step = 1.0;
    for (int it = 0; it < 5000; ++it) {
      const Vec g = gradient(f);
      bool improved = false;
      while (step > 1e-18) {
        Vec trial(n);
        for (int i = 0; i < n; ++i) trial[i] = f[i] - step * g[i];
        trial = project_simplex(trial, left);
        const double tv = objective(trial);
        if (tv < val - 1e-18) {
          const double gain = val - tv;
          f.swap(trial);
          val = tv;
          improved = true;
          if (gain < 1e-12) it = 5000;
          break;
        }
        step *= 0.5;
      }
      if (!improved) break;
      step *= 2.0;
    }
    best = std::min(best, val);
  }
  return best;
}

AssumptionReport check_assumptions(const ModelAny& m, const EigenTriple& triple,
                                   const AssumptionOptions& opts) {
  AssumptionReport rep;
  const MeanGenerator gen = build_mean_generator(m);
  rep.second_moment_sup =
      std::visit([](const auto& mm) { return offspring_second_moment_sup(mm); }, m);
  const auto kernel = std::visit([](const auto& mm) { return variance_kernel(mm); }, m);

  std::vector<double> grid = opts.delta_grid;
  if (grid.empty()) grid = {0.0, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0};
  rep.mixing = mixing_profile(gen, kernel, triple, grid);
  for (double d : rep.mixing.delta) rep.delta_sup = std::max(rep.delta_sup, d);

  rep.criticality = classify_criticality(triple, default_criticality_band(gen));
  rep.extinction_flag =
      rep.criticality != Criticality::Supercritical && is_irreducible(gen.L);
  if (!rep.extinction_flag)
    rep.notes.push_back("almost-sure extinction flag not established (sufficient condition only)");
  else
    rep.notes.push_back("extinction flag from nonpositive leading eigenvalue plus irreducibility");

  rep.m_truncation = std::visit([](const auto& mm) { return largest_event_size(mm); }, m);
  rep.k_estimate = pair_moment_floor(kernel, triple.left, opts.random_starts, opts.seed);
  rep.k_positive = rep.k_estimate > opts.k_tol;
  rep.notes.push_back("pair-moment floor is a multi-start estimate, not a certificate");
  if (!rep.k_positive) rep.notes.push_back("pair-moment floor not bounded away from zero");
  return rep;
}

}  // namespace branchlab
