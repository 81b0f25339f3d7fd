#pragma once

#include <cassert>
#include <cmath>
#include <vector>

namespace symcon {

// Dense row-major matrix, just big enough for the model in this repo.
struct Matrix {
  int rows = 0, cols = 0;
  std::vector<double> a;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), a((size_t)r * c, 0.0) {}

  double& operator()(int i, int j) { return a[(size_t)i * cols + j]; }
  double operator()(int i, int j) const { return a[(size_t)i * cols + j]; }
  size_t size() const { return a.size(); }
};

inline Matrix matmul(const Matrix& A, const Matrix& B) {
  assert(A.cols == B.rows);
  Matrix C(A.rows, B.cols);
  for (int i = 0; i < A.rows; ++i)
    for (int k = 0; k < A.cols; ++k) {
      double aik = A(i, k);
      if (aik == 0.0) continue;
      for (int j = 0; j < B.cols; ++j) C(i, j) += aik * B(k, j);
    }
  return C;
}

// A^T * B without materializing the transpose.
inline Matrix matmul_tn(const Matrix& A, const Matrix& B) {
  assert(A.rows == B.rows);
  Matrix C(A.cols, B.cols);
  for (int k = 0; k < A.rows; ++k)
    for (int i = 0; i < A.cols; ++i) {
      double aki = A(k, i);
      if (aki == 0.0) continue;
      for (int j = 0; j < B.cols; ++j) C(i, j) += aki * B(k, j);
    }
  return C;
}

// A * B^T.
inline Matrix matmul_nt(const Matrix& A, const Matrix& B) {
  assert(A.cols == B.cols);
  Matrix C(A.rows, B.rows);
  for (int i = 0; i < A.rows; ++i)
    for (int j = 0; j < B.rows; ++j) {
      double s = 0;
      for (int k = 0; k < A.cols; ++k) s += A(i, k) * B(j, k);
      C(i, j) = s;
    }
  return C;
}

inline void add_scaled(Matrix& A, const Matrix& B, double s) {
  assert(A.size() == B.size());
  for (size_t i = 0; i < A.a.size(); ++i) A.a[i] += s * B.a[i];
}

inline Matrix relu(const Matrix& A) {
  Matrix B = A;
  for (double& v : B.a) v = v > 0 ? v : 0.0;
  return B;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace symcon
