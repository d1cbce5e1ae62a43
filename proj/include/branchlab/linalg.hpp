#pragma once

#include <cstddef>
#include <vector>

namespace branchlab {

using Vec = std::vector<double>;

// Dense row-major matrix. Type spaces here are tiny (a handful of types), so
// everything below is written for clarity over asymptotics.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> a;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), a(static_cast<size_t>(r) * c, 0.0) {}

  double& operator()(int i, int j) { return a[static_cast<size_t>(i) * cols + j]; }
  double operator()(int i, int j) const { return a[static_cast<size_t>(i) * cols + j]; }

  static Matrix identity(int n);
  static Matrix zero(int n) { return Matrix(n, n); }
};

Matrix operator*(const Matrix& x, const Matrix& y);
Matrix operator+(const Matrix& x, const Matrix& y);
Matrix operator-(const Matrix& x, const Matrix& y);
Matrix operator*(double s, const Matrix& x);

Vec matvec(const Matrix& m, const Vec& v);
Vec matvec_transposed(const Matrix& m, const Vec& v);  // m^T v
Matrix transpose(const Matrix& m);

double norm_inf(const Matrix& m);  // max absolute row sum
double norm_inf(const Vec& v);
double dot(const Vec& x, const Vec& y);

// Solves m x = b for several right-hand sides (columns of b), partial pivoting.
Matrix solve(Matrix m, Matrix b);

// Matrix exponential by Pade(13) with scaling and squaring.
Matrix expm(const Matrix& m);

// Strong connectivity of the directed graph with an edge x->y whenever the
// off-diagonal entry m(x,y) is nonzero.
bool is_irreducible(const Matrix& m);

}  // namespace branchlab
