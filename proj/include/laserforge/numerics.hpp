#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <vector>

#include "laserforge/error.hpp"

namespace laserforge {

/// Dense row-major matrix of doubles. Sized for the small systems this
/// pipeline solves (a few columns, up to a few hundred rows).
class Matrix {
 public:
  Matrix() = default;
  Matrix(int rows, int cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * cols, fill) {
    if (rows < 1 || cols < 1) fail(errc::dimension_error, "matrix dimensions must be >= 1");
  }

  static Matrix identity(int n) {
    Matrix m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  int rows() const noexcept { return rows_; }
  int cols() const noexcept { return cols_; }

  double& operator()(int r, int c) { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
  double operator()(int r, int c) const { return data_[static_cast<std::size_t>(r) * cols_ + c]; }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  double frobenius_norm() const {
    double s = 0.0;
    for (double v : data_) s += v * v;
    return std::sqrt(s);
  }

  std::vector<double> multiply(const std::vector<double>& x) const {
    if (static_cast<int>(x.size()) != cols_) fail(errc::dimension_error, "matrix-vector size mismatch");
    std::vector<double> y(rows_, 0.0);
    for (int r = 0; r < rows_; ++r) {
      double s = 0.0;
      for (int c = 0; c < cols_; ++c) s += (*this)(r, c) * x[c];
      y[r] = s;
    }
    return y;
  }

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> data_;
};

/// Thin SVD A = U diag(sigma) V^T with sigma nonincreasing. Columns of v are
/// sign-fixed so the first component above 1e-9 in magnitude is positive.
struct SvdResult {
  Matrix u;                   // m x n, orthonormal columns
  std::vector<double> sigma;  // n, nonincreasing
  Matrix v;                   // n x n, orthonormal
};

namespace detail {

inline void canonicalize_sign(Matrix& u, Matrix& v, int col) {
  const int n = v.rows();
  double s = 1.0;
  for (int i = 0; i < n; ++i) {
    if (std::fabs(v(i, col)) > 1e-9) {
      s = v(i, col) > 0.0 ? 1.0 : -1.0;
      break;
    }
  }
  if (s < 0.0) {
    for (int i = 0; i < n; ++i) v(i, col) = -v(i, col);
    for (int i = 0; i < u.rows(); ++i) u(i, col) = -u(i, col);
  }
}

}  // namespace detail

/// One-sided Jacobi SVD for tall matrices with a handful of columns. The
/// rotations orthogonalize column pairs using their Gram products, i.e. the
/// entries of A^T A, until A^T A is diagonal.
inline SvdResult svd_small(const Matrix& a) {
  const int m = a.rows();
  const int n = a.cols();
  if (!a.all_finite()) fail(errc::non_finite, "svd_small: non-finite entry");
  if (m < n) fail(errc::dimension_error, "svd_small: requires rows >= cols");

  Matrix w = a;  // rotated in place; columns converge to u_j * sigma_j
  Matrix v = Matrix::identity(n);

  const int max_sweeps = 60;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    bool rotated = false;
    for (int p = 0; p < n; ++p) {
      for (int q = p + 1; q < n; ++q) {
        double app = 0.0, aqq = 0.0, apq = 0.0;
        for (int i = 0; i < m; ++i) {
          app += w(i, p) * w(i, p);
          aqq += w(i, q) * w(i, q);
          apq += w(i, p) * w(i, q);
        }
        if (std::fabs(apq) <= 1e-15 * std::sqrt(app * aqq) || apq == 0.0) continue;
        rotated = true;
        const double tau = (aqq - app) / (2.0 * apq);
        const double t = (tau >= 0.0 ? 1.0 : -1.0) / (std::fabs(tau) + std::sqrt(1.0 + tau * tau));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = t * c;
        for (int i = 0; i < m; ++i) {
          const double wp = w(i, p), wq = w(i, q);
          w(i, p) = c * wp - s * wq;
          w(i, q) = s * wp + c * wq;
        }
        for (int i = 0; i < n; ++i) {
          const double vp = v(i, p), vq = v(i, q);
          v(i, p) = c * vp - s * vq;
          v(i, q) = s * vp + c * vq;
        }
      }
    }
    if (!rotated) break;
  }

  std::vector<double> sigma(n, 0.0);
  for (int j = 0; j < n; ++j) {
    double s = 0.0;
    for (int i = 0; i < m; ++i) s += w(i, j) * w(i, j);
    sigma[j] = std::sqrt(s);
  }

  // Sort nonincreasing; stable so repeated singular values keep their order.
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int i, int j) { return sigma[i] > sigma[j]; });

  SvdResult out;
  out.u = Matrix(m, n);
  out.v = Matrix(n, n);
  out.sigma.resize(n);
  for (int j = 0; j < n; ++j) {
    out.sigma[j] = sigma[order[j]];
    for (int i = 0; i < n; ++i) out.v(i, j) = v(i, order[j]);
  }

  const double sigma_max = out.sigma.empty() ? 0.0 : out.sigma[0];
  for (int j = 0; j < n; ++j) {
    const int src = order[j];
    if (out.sigma[j] > sigma_max * 1e-13 && out.sigma[j] > 0.0) {
      for (int i = 0; i < m; ++i) out.u(i, j) = w(i, src) / out.sigma[j];
    } else {
      // Null direction: complete u with a unit vector orthogonal to the
      // columns already placed, picked deterministically from the canonical
      // basis. Two Gram-Schmidt passes keep orthogonality near round-off.
      for (int seed = 0; seed < m; ++seed) {
        std::vector<double> cand(m, 0.0);
        cand[seed] = 1.0;
        for (int pass = 0; pass < 2; ++pass) {
          for (int k = 0; k < j; ++k) {
            double dot = 0.0;
            for (int i = 0; i < m; ++i) dot += cand[i] * out.u(i, k);
            for (int i = 0; i < m; ++i) cand[i] -= dot * out.u(i, k);
          }
        }
        double norm = 0.0;
        for (double c : cand) norm += c * c;
        norm = std::sqrt(norm);
        if (norm > 0.5) {
          for (int i = 0; i < m; ++i) out.u(i, j) = cand[i] / norm;
          break;
        }
      }
    }
  }

  for (int j = 0; j < n; ++j) detail::canonicalize_sign(out.u, out.v, j);
  return out;
}

/// argmin_x ||a x - b||_2 through the SVD pseudoinverse.
inline std::vector<double> solve_least_squares(const Matrix& a, const std::vector<double>& b) {
  if (static_cast<int>(b.size()) != a.rows())
    fail(errc::dimension_error, "solve_least_squares: rhs size mismatch");
  const SvdResult svd = svd_small(a);
  const int n = a.cols();
  const double sigma_max = svd.sigma[0];
  if (svd.sigma[n - 1] <= 1e-12 * sigma_max)
    fail(errc::rank_deficient, "solve_least_squares: system is rank deficient");

  // x = V diag(1/sigma) U^T b
  std::vector<double> utb(n, 0.0);
  for (int j = 0; j < n; ++j) {
    double s = 0.0;
    for (int i = 0; i < a.rows(); ++i) s += svd.u(i, j) * b[i];
    utb[j] = s / svd.sigma[j];
  }
  std::vector<double> x(n, 0.0);
  for (int i = 0; i < n; ++i) {
    double s = 0.0;
    for (int j = 0; j < n; ++j) s += svd.v(i, j) * utb[j];
    x[i] = s;
  }
  return x;
}

namespace detail {

// In-place LLT. Returns false when a pivot falls at or below the noise floor.
inline bool cholesky_solve(Matrix a, std::vector<double> rhs, std::vector<double>& x) {
  const int n = a.rows();
  double max_diag = 0.0;
  for (int i = 0; i < n; ++i) max_diag = std::max(max_diag, std::fabs(a(i, i)));
  const double floor = std::max(max_diag * 1e-15, 1e-300);
  for (int c = 0; c < n; ++c) {
    double d = a(c, c);
    for (int k = 0; k < c; ++k) d -= a(c, k) * a(c, k);
    if (!(d > floor)) return false;
    const double l = std::sqrt(d);
    a(c, c) = l;
    for (int r = c + 1; r < n; ++r) {
      double s = a(r, c);
      for (int k = 0; k < c; ++k) s -= a(r, k) * a(c, k);
      a(r, c) = s / l;
    }
  }
  for (int r = 0; r < n; ++r) {
    double s = rhs[r];
    for (int k = 0; k < r; ++k) s -= a(r, k) * rhs[k];
    rhs[r] = s / a(r, r);
  }
  for (int r = n - 1; r >= 0; --r) {
    double s = rhs[r];
    for (int k = r + 1; k < n; ++k) s -= a(k, r) * rhs[k];
    rhs[r] = s / a(r, r);
  }
  x = std::move(rhs);
  return true;
}

inline double rms_of(const std::vector<double>& r) {
  double s = 0.0;
  for (double v : r) s += v * v;
  return std::sqrt(s / std::max<std::size_t>(1, r.size()));
}

inline bool all_finite(const std::vector<double>& r) {
  return std::all_of(r.begin(), r.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace detail

struct GaussNewtonOptions {
  int max_iters = 50;
  double step_tol = 1e-12;
  double residual_tol = 1e-12;
};

struct GaussNewtonResult {
  std::vector<double> x;
  double final_rms = 0.0;
  int iters = 0;
};

using ResidualFn = std::function<std::vector<double>(const std::vector<double>&)>;

/// Damped Gauss-Newton over a generic residual vector. Jacobians come from
/// central finite differences with step 1e-6 * max(1, |x_i|). Steps are only
/// accepted when they reduce the residual RMS, so the RMS is nonincreasing
/// across iterates; singular normal equations get one Levenberg retry with
/// lambda = 1e-3 * trace before the solve is declared failed.
inline GaussNewtonResult gauss_newton(const ResidualFn& residual_fn, std::vector<double> x,
                                      const GaussNewtonOptions& opts = {}) {
  std::vector<double> r = residual_fn(x);
  if (!detail::all_finite(r)) fail(errc::non_finite, "gauss_newton: residual not finite at x0");
  const int p = static_cast<int>(x.size());
  const int m = static_cast<int>(r.size());
  double rms = detail::rms_of(r);

  GaussNewtonResult result;
  result.iters = 0;

  for (int iter = 0; iter < opts.max_iters; ++iter) {
    if (rms <= opts.residual_tol) break;

    Matrix jac(m, p);
    std::vector<double> probe = x;
    for (int j = 0; j < p; ++j) {
      const double h = 1e-6 * std::max(1.0, std::fabs(x[j]));
      probe[j] = x[j] + h;
      std::vector<double> rp = residual_fn(probe);
      probe[j] = x[j] - h;
      std::vector<double> rm = residual_fn(probe);
      probe[j] = x[j];
      if (!detail::all_finite(rp) || !detail::all_finite(rm))
        fail(errc::non_finite, "gauss_newton: residual not finite near iterate");
      const double inv = 1.0 / (2.0 * h);
      for (int i = 0; i < m; ++i) jac(i, j) = (rp[i] - rm[i]) * inv;
    }

    Matrix jtj(p, p);
    std::vector<double> jtr(p, 0.0);
    double trace = 0.0;
    for (int a = 0; a < p; ++a) {
      for (int b = a; b < p; ++b) {
        double s = 0.0;
        for (int i = 0; i < m; ++i) s += jac(i, a) * jac(i, b);
        jtj(a, b) = s;
        jtj(b, a) = s;
      }
      trace += jtj(a, a);
      double s = 0.0;
      for (int i = 0; i < m; ++i) s += jac(i, a) * r[i];
      jtr[a] = -s;
    }

    std::vector<double> delta;
    double lambda = 0.0;
    bool solved = false;
    for (int attempt = 0; attempt < 8 && !solved; ++attempt) {
      Matrix damped = jtj;
      for (int d = 0; d < p; ++d) damped(d, d) += lambda;
      solved = detail::cholesky_solve(damped, jtr, delta);
      if (!solved) lambda = (lambda == 0.0) ? 1e-3 * trace : lambda * 10.0;
      if (!solved && !(lambda > 0.0)) break;
    }
    if (!solved) fail(errc::singular_normal_equations, "gauss_newton: normal equations singular");

    // Backtrack until the step actually improves the RMS.
    bool accepted = false;
    double scale = 1.0;
    for (int back = 0; back < 8; ++back, scale *= 0.5) {
      std::vector<double> cand(x);
      for (int j = 0; j < p; ++j) cand[j] += scale * delta[j];
      std::vector<double> rc = residual_fn(cand);
      if (!detail::all_finite(rc)) continue;
      const double rms_c = detail::rms_of(rc);
      if (rms_c < rms) {
        x = std::move(cand);
        r = std::move(rc);
        rms = rms_c;
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
    ++result.iters;

    double step_norm = 0.0, x_norm = 0.0;
    for (int j = 0; j < p; ++j) {
      step_norm += scale * delta[j] * scale * delta[j];
      x_norm += x[j] * x[j];
    }
    if (std::sqrt(step_norm) <= opts.step_tol * (1.0 + std::sqrt(x_norm))) break;
  }

  result.x = std::move(x);
  result.final_rms = rms;
  return result;
}

}  // namespace laserforge
