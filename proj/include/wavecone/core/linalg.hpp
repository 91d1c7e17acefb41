#pragma once

// Small fixed-size vectors and matrices for spacetime dimensions 3 and 4.
// Hand-rolled on purpose: every object here is at most 4x4 and lives on the
// stack inside tight integration loops.

#include <array>
#include <cmath>
#include <cstddef>
#include <stdexcept>

namespace wavecone {

template <std::size_t N>
using Vec = std::array<double, N>;

template <std::size_t N>
using Mat = std::array<std::array<double, N>, N>;

template <std::size_t N>
inline Vec<N> zero_vec() {
  Vec<N> v{};
  return v;
}

template <std::size_t N>
inline Mat<N> zero_mat() {
  Mat<N> m{};
  return m;
}

template <std::size_t N>
inline Mat<N> identity() {
  Mat<N> m{};
  for (int i = 0; i < N; ++i) m[i][i] = 1.0;
  return m;
}

template <std::size_t N>
inline Vec<N> operator+(const Vec<N>& a, const Vec<N>& b) {
  Vec<N> r;
  for (int i = 0; i < N; ++i) r[i] = a[i] + b[i];
  return r;
}

template <std::size_t N>
inline Vec<N> operator-(const Vec<N>& a, const Vec<N>& b) {
  Vec<N> r;
  for (int i = 0; i < N; ++i) r[i] = a[i] - b[i];
  return r;
}

template <std::size_t N>
inline Vec<N> operator*(double c, const Vec<N>& a) {
  Vec<N> r;
  for (int i = 0; i < N; ++i) r[i] = c * a[i];
  return r;
}

template <std::size_t N>
inline double dot(const Vec<N>& a, const Vec<N>& b) {
  double s = 0.0;
  for (int i = 0; i < N; ++i) s += a[i] * b[i];
  return s;
}

template <std::size_t N>
inline double norm(const Vec<N>& a) {
  return std::sqrt(dot(a, a));
}

template <std::size_t N>
inline Vec<N> matvec(const Mat<N>& m, const Vec<N>& v) {
  Vec<N> r{};
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j) r[i] += m[i][j] * v[j];
  return r;
}

// Quadratic form v^T m v.
template <std::size_t N>
inline double quad_form(const Mat<N>& m, const Vec<N>& v) {
  double s = 0.0;
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j) s += v[i] * m[i][j] * v[j];
  return s;
}

template <std::size_t N>
inline Mat<N> matmul(const Mat<N>& a, const Mat<N>& b) {
  Mat<N> r{};
  for (int i = 0; i < N; ++i)
    for (int k = 0; k < N; ++k)
      for (int j = 0; j < N; ++j) r[i][j] += a[i][k] * b[k][j];
  return r;
}

// Gaussian elimination with partial pivoting. Throws on (numerically)
// singular input.
template <std::size_t N>
inline Vec<N> solve(Mat<N> a, Vec<N> b) {
  for (int col = 0; col < N; ++col) {
    int piv = col;
    for (int r = col + 1; r < N; ++r)
      if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
    if (std::abs(a[piv][col]) < 1e-300)
      throw std::runtime_error("linalg: singular matrix in solve");
    std::swap(a[piv], a[col]);
    std::swap(b[piv], b[col]);
    const double inv = 1.0 / a[col][col];
    for (int r = 0; r < N; ++r) {
      if (r == col) continue;
      const double f = a[r][col] * inv;
      for (int c = col; c < N; ++c) a[r][c] -= f * a[col][c];
      b[r] -= f * b[col];
    }
  }
  Vec<N> x;
  for (int i = 0; i < N; ++i) x[i] = b[i] / a[i][i];
  return x;
}

template <std::size_t N>
inline Mat<N> inverse(const Mat<N>& a) {
  Mat<N> inv;
  for (int j = 0; j < N; ++j) {
    Vec<N> e{};
    e[j] = 1.0;
    Vec<N> col = solve(a, e);
    for (int i = 0; i < N; ++i) inv[i][j] = col[i];
  }
  return inv;
}

template <std::size_t N>
inline double determinant(Mat<N> a) {
  double det = 1.0;
  for (int col = 0; col < N; ++col) {
    int piv = col;
    for (int r = col + 1; r < N; ++r)
      if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
    if (piv != col) {
      std::swap(a[piv], a[col]);
      det = -det;
    }
    if (a[col][col] == 0.0) return 0.0;
    det *= a[col][col];
    const double inv = 1.0 / a[col][col];
    for (int r = col + 1; r < N; ++r) {
      const double f = a[r][col] * inv;
      for (int c = col; c < N; ++c) a[r][c] -= f * a[col][c];
    }
  }
  return det;
}

// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations,
// returned in ascending order.
template <std::size_t N>
inline Vec<N> sym_eigenvalues(Mat<N> a) {
  for (int sweep = 0; sweep < 64; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < N; ++p)
      for (int q = p + 1; q < N; ++q) off += a[p][q] * a[p][q];
    if (off < 1e-26) break;
    for (int p = 0; p < N; ++p) {
      for (int q = p + 1; q < N; ++q) {
        if (std::abs(a[p][q]) < 1e-300) continue;
        const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
        const double t =
            (theta >= 0 ? 1.0 : -1.0) /
            (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int k = 0; k < N; ++k) {
          const double akp = a[k][p], akq = a[k][q];
          a[k][p] = c * akp - s * akq;
          a[k][q] = s * akp + c * akq;
        }
        for (int k = 0; k < N; ++k) {
          const double apk = a[p][k], aqk = a[q][k];
          a[p][k] = c * apk - s * aqk;
          a[q][k] = s * apk + c * aqk;
        }
      }
    }
  }
  Vec<N> ev;
  for (int i = 0; i < N; ++i) ev[i] = a[i][i];
  for (int i = 0; i < N; ++i)
    for (int j = i + 1; j < N; ++j)
      if (ev[j] < ev[i]) std::swap(ev[i], ev[j]);
  return ev;
}

// Least squares x minimizing |A x - b| for a tall N x M system (M <= N),
// via normal equations; also reports the relative residual.
template <std::size_t N, std::size_t M>
struct LstSqResult {
  std::array<double, M> coeffs;
  double residual;  // |A x - b| / max(|b|, tiny)
};

template <std::size_t N, std::size_t M>
inline LstSqResult<N, M> least_squares(
    const std::array<Vec<N>, M>& cols, const Vec<N>& b) {
  Mat<M> ata{};
  Vec<M> atb{};
  for (int i = 0; i < M; ++i) {
    for (int j = 0; j < M; ++j) ata[i][j] = dot(cols[i], cols[j]);
    atb[i] = dot(cols[i], b);
  }
  Vec<M> x = solve<M>(ata, atb);
  Vec<N> r = b;
  for (int i = 0; i < M; ++i) r = r - x[i] * cols[i];
  LstSqResult<N, M> out;
  for (int i = 0; i < M; ++i) out.coeffs[i] = x[i];
  out.residual = norm(r) / std::max(norm(b), 1e-300);
  return out;
}

}  // namespace wavecone
