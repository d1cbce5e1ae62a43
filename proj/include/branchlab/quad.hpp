#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>

#include "branchlab/linalg.hpp"

namespace branchlab {

struct QuadResult {
  Vec value;
  double error_estimate = 0.0;  // accumulated Kronrod-Gauss discrepancy
  bool converged = true;
};

namespace quad_detail {

// Gauss-Kronrod 15(7) nodes and weights on [-1, 1].
inline constexpr double kXgk[8] = {0.991455371120813, 0.949107912342759, 0.864864423359769,
                                   0.741531185599394, 0.586087235467691, 0.405845151377397,
                                   0.207784955007898, 0.0};
inline constexpr double kWgk[8] = {0.022935322010529, 0.063092092629979, 0.104790010322250,
                                   0.140653259715525, 0.169004726639267, 0.190350578064785,
                                   0.204432940075298, 0.209482141084728};
inline constexpr double kWg[4] = {0.129484966168870, 0.279705391489277, 0.381830050505119,
                                  0.417959183673469};

template <typename F>
void gk15(const F& f, double a, double b, Vec& kronrod, double& disc) {
  const double h = 0.5 * (b - a);
  const double c = 0.5 * (a + b);
  Vec fc = f(c);
  const size_t dim = fc.size();
  Vec resk(dim, 0.0), resg(dim, 0.0);
  for (size_t d = 0; d < dim; ++d) {
    resk[d] = kWgk[7] * fc[d];
    resg[d] = kWg[3] * fc[d];
  }
  for (int j = 0; j < 7; ++j) {
    const Vec f1 = f(c - h * kXgk[j]);
    const Vec f2 = f(c + h * kXgk[j]);
    for (size_t d = 0; d < dim; ++d) {
      const double s = f1[d] + f2[d];
      resk[d] += kWgk[j] * s;
      if (j % 2 == 1) resg[d] += kWg[j / 2] * s;
    }
  }
  disc = 0.0;
  kronrod.assign(dim, 0.0);
  for (size_t d = 0; d < dim; ++d) {
    kronrod[d] = resk[d] * h;
    disc = std::max(disc, std::abs(resk[d] - resg[d]) * std::abs(h));
  }
}

template <typename F>
void adapt(const F& f, double a, double b, double tol, int depth, QuadResult& out) {
  Vec whole;
  double disc = 0.0;
  gk15(f, a, b, whole, disc);
  if (disc <= tol || depth >= 48) {
    if (disc > tol) out.converged = false;
    if (out.value.empty()) out.value.assign(whole.size(), 0.0);
    for (size_t d = 0; d < whole.size(); ++d) out.value[d] += whole[d];
    out.error_estimate += disc;
    return;
  }
  const double m = 0.5 * (a + b);
  adapt(f, a, m, 0.5 * tol, depth + 1, out);
  adapt(f, m, b, 0.5 * tol, depth + 1, out);
}

}  // namespace quad_detail

// Adaptive Gauss-Kronrod integration of a vector-valued integrand on [a, b].
// tol is an absolute tolerance on the max-norm of the result.
template <typename F>
QuadResult integrate(const F& f, double a, double b, double tol) {
  QuadResult out;
  if (a == b) {
    out.value = f(a);
    for (double& v : out.value) v = 0.0;
    return out;
  }
  quad_detail::adapt(f, a, b, tol, 0, out);
  return out;
}

// Scalar convenience wrapper.
template <typename F>
double integrate_scalar(const F& f, double a, double b, double tol, double* err = nullptr) {
  auto wrapped = [&f](double x) { return Vec{f(x)}; };
  QuadResult r = integrate(wrapped, a, b, tol);
  if (err) *err = r.error_estimate;
  return r.value[0];
}

}  // namespace branchlab
