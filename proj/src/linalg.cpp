#include "branchlab/linalg.hpp"

#include <cmath>
#include <cstdlib>
#include <stdexcept>

namespace branchlab {

Matrix Matrix::identity(int n) {
  Matrix m(n, n);
  for (int i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix operator*(const Matrix& x, const Matrix& y) {
  if (x.cols != y.rows) throw std::invalid_argument("matrix product shape mismatch");
  Matrix r(x.rows, y.cols);
  for (int i = 0; i < x.rows; ++i) {
    for (int k = 0; k < x.cols; ++k) {
      const double xik = x(i, k);
      if (xik == 0.0) continue;
      for (int j = 0; j < y.cols; ++j) r(i, j) += xik * y(k, j);
    }
  }
  return r;
}

Matrix operator+(const Matrix& x, const Matrix& y) {
  Matrix r = x;
  for (size_t i = 0; i < r.a.size(); ++i) r.a[i] += y.a[i];
  return r;
}

Matrix operator-(const Matrix& x, const Matrix& y) {
  Matrix r = x;
  for (size_t i = 0; i < r.a.size(); ++i) r.a[i] -= y.a[i];
  return r;
}

Matrix operator*(double s, const Matrix& x) {
  Matrix r = x;
  for (double& v : r.a) v *= s;
  return r;
}

Vec matvec(const Matrix& m, const Vec& v) {
  Vec r(m.rows, 0.0);
  for (int i = 0; i < m.rows; ++i) {
    double acc = 0.0;
    for (int j = 0; j < m.cols; ++j) acc += m(i, j) * v[j];
    r[i] = acc;
  }
  return r;
}

Vec matvec_transposed(const Matrix& m, const Vec& v) {
  Vec r(m.cols, 0.0);
  for (int i = 0; i < m.rows; ++i) {
    const double vi = v[i];
    if (vi == 0.0) continue;
    for (int j = 0; j < m.cols; ++j) r[j] += m(i, j) * vi;
  }
  return r;
}

Matrix transpose(const Matrix& m) {
  Matrix r(m.cols, m.rows);
  for (int i = 0; i < m.rows; ++i)
    for (int j = 0; j < m.cols; ++j) r(j, i) = m(i, j);
  return r;
}

double norm_inf(const Matrix& m) {
  double best = 0.0;
  for (int i = 0; i < m.rows; ++i) {
    double row = 0.0;
    for (int j = 0; j < m.cols; ++j) row += std::abs(m(i, j));
    if (row > best) best = row;
  }
  return best;
}

double norm_inf(const Vec& v) {
  double best = 0.0;
  for (double x : v) best = std::max(best, std::abs(x));
  return best;
}

double dot(const Vec& x, const Vec& y) {
  double acc = 0.0;
  for (size_t i = 0; i < x.size(); ++i) acc += x[i] * y[i];
  return acc;
}

Matrix solve(Matrix m, Matrix b) {
  const int n = m.rows;
  if (m.cols != n || b.rows != n) throw std::invalid_argument("solve shape mismatch");
  std::vector<int> perm(n);
  for (int i = 0; i < n; ++i) perm[i] = i;
  for (int col = 0; col < n; ++col) {
    int pivot = col;
    double best = std::abs(m(col, col));
    for (int i = col + 1; i < n; ++i) {
      const double v = std::abs(m(i, col));
      if (v > best) {
        best = v;
        pivot = i;
      }
    }
    if (best == 0.0) throw std::runtime_error("singular matrix in solve");
    if (pivot != col) {
      for (int j = 0; j < n; ++j) std::swap(m(col, j), m(pivot, j));
      for (int j = 0; j < b.cols; ++j) std::swap(b(col, j), b(pivot, j));
    }
    const double d = m(col, col);
    for (int i = col + 1; i < n; ++i) {
      const double factor = m(i, col) / d;
      if (factor == 0.0) continue;
      for (int j = col; j < n; ++j) m(i, j) -= factor * m(col, j);
      for (int j = 0; j < b.cols; ++j) b(i, j) -= factor * b(col, j);
    }
  }
  Matrix x(n, b.cols);
  for (int i = n - 1; i >= 0; --i) {
    for (int j = 0; j < b.cols; ++j) {
      double acc = b(i, j);
      for (int k = i + 1; k < n; ++k) acc -= m(i, k) * x(k, j);
      x(i, j) = acc / m(i, i);
    }
  }
  return x;
}

Matrix expm(const Matrix& m) {
  const int n = m.rows;
  // Pade(13) coefficients.
  static const double b[] = {64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
                             1187353796428800.0,  129060195264000.0,   10559470521600.0,
                             670442572800.0,      33522128640.0,       1323241920.0,
                             40840800.0,          960960.0,            16380.0,
                             182.0,               1.0};
  const double theta13 = 5.371920351148152;
  const double nrm = norm_inf(m);
  int squarings = 0;
  if (nrm > theta13) {
    squarings = static_cast<int>(std::ceil(std::log2(nrm / theta13)));
  }
  const double scale = std::ldexp(1.0, -squarings);
  Matrix a = scale * m;

  const Matrix id = Matrix::identity(n);
  const Matrix a2 = a * a;
  const Matrix a4 = a2 * a2;
  const Matrix a6 = a2 * a4;

  Matrix u = a * (a6 * (b[13] * a6 + b[11] * a4 + b[9] * a2) + b[7] * a6 + b[5] * a4 +
                  b[3] * a2 + b[1] * id);
  Matrix v = a6 * (b[12] * a6 + b[10] * a4 + b[8] * a2) + b[6] * a6 + b[4] * a4 + b[2] * a2 +
             b[0] * id;

  Matrix r = solve(v - u, v + u);
  for (int i = 0; i < squarings; ++i) r = r * r;
  return r;
}

namespace {

void reach(const Matrix& m, int start, bool transposed, std::vector<bool>& seen) {
  std::vector<int> stack{start};
  seen.assign(m.rows, false);
  seen[start] = true;
  while (!stack.empty()) {
    const int x = stack.back();
    stack.pop_back();
    for (int y = 0; y < m.rows; ++y) {
      if (y == x || seen[y]) continue;
      const double w = transposed ? m(y, x) : m(x, y);
      if (w != 0.0) {
        seen[y] = true;
        stack.push_back(y);
      }
    }
  }
}

}  // namespace

bool is_irreducible(const Matrix& m) {
  if (m.rows != m.cols || m.rows == 0) return false;
  if (m.rows == 1) return true;
  std::vector<bool> seen;
  reach(m, 0, false, seen);
  for (bool s : seen)
    if (!s) return false;
  reach(m, 0, true, seen);
  for (bool s : seen)
    if (!s) return false;
  return true;
}

}  // namespace branchlab
