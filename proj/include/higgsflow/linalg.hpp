#pragma once

// Small dense complex matrix helpers shared by the field modules.

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <complex>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace higgsflow {

using Complex = std::complex<double>;
using Mat     = Eigen::MatrixXcd;
using Vec     = Eigen::VectorXcd;

struct ValidationError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct ConditioningError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ContractViolation : std::logic_error {
  using std::logic_error::logic_error;
};

namespace linalg {

inline Mat identity(int r) { return Mat::Identity(r, r); }

inline Mat hermitian_part(const Mat& a) { return 0.5 * (a + a.adjoint()); }

inline Mat commutator(const Mat& a, const Mat& b) { return a * b - b * a; }

inline double frobenius(const Mat& a) { return a.norm(); }

/// Eigendecomposition of a Hermitian matrix; the input is symmetrized first.
struct HermitianEig {
  Eigen::VectorXd values;
  Mat vectors;
};

inline HermitianEig hermitian_eig(const Mat& a) {
  Eigen::SelfAdjointEigenSolver<Mat> es(hermitian_part(a));
  if (es.info() != Eigen::Success) throw ConditioningError("hermitian eigensolver failed");
  return {es.eigenvalues(), es.eigenvectors()};
}

inline double min_eigenvalue(const Mat& a) { return hermitian_eig(a).values.minCoeff(); }

/// f(A) for Hermitian A via spectral calculus.
inline Mat hermitian_function(const Mat& a, const std::function<double(double)>& f) {
  const auto eig = hermitian_eig(a);
  Eigen::VectorXd fv(eig.values.size());
  for (Eigen::Index i = 0; i < fv.size(); ++i) fv[i] = f(eig.values[i]);
  return eig.vectors * fv.cast<Complex>().asDiagonal() * eig.vectors.adjoint();
}

inline Mat hermitian_log(const Mat& a) {
  const auto eig = hermitian_eig(a);
  if (eig.values.minCoeff() <= 0.0) throw ConditioningError("log of a non-positive matrix");
  Eigen::VectorXd fv = eig.values.array().log();
  return eig.vectors * fv.cast<Complex>().asDiagonal() * eig.vectors.adjoint();
}

inline Mat hermitian_exp(const Mat& a) {
  return hermitian_function(a, [](double x) { return std::exp(x); });
}

inline Mat hermitian_sqrt(const Mat& a) {
  return hermitian_function(a, [](double x) { return std::sqrt(std::max(x, 0.0)); });
}

/// Divided difference of log, the kernel of the Frechet derivative of log.
inline double log_divided_difference(double x, double y) {
  const double d = x - y;
  if (std::abs(d) <= 1e-8 * std::max(x, y)) {
    // series around the midpoint keeps the quotient accurate for near-equal arguments
    const double m = 0.5 * (x + y);
    const double e = d / m;
    return (1.0 + e * e / 12.0) / m;
  }
  return (std::log(x) - std::log(y)) / d;
}

/// Frechet derivative of the principal log at Hermitian positive h, applied to direction b.
inline Mat log_derivative(const Mat& h, const Mat& b) {
  const auto eig = hermitian_eig(h);
  const Eigen::Index r = eig.values.size();
  Mat bt = eig.vectors.adjoint() * b * eig.vectors;
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < r; ++j)
      bt(i, j) *= log_divided_difference(eig.values[i], eig.values[j]);
  return eig.vectors * bt * eig.vectors.adjoint();
}

/// Lower Cholesky factor of a Hermitian positive matrix.
inline Mat cholesky_factor(const Mat& h) {
  Eigen::LLT<Mat> llt(hermitian_part(h));
  if (llt.info() != Eigen::Success) throw ConditioningError("metric is not positive definite");
  return llt.matrixL();
}

/// Spectral data of an operator X that is self-adjoint with respect to the metric h,
/// i.e. h X is Hermitian. With h = L L^dagger, X = L^{-dagger} Q diag(values) Q^dagger L^dagger.
struct MetricSelfAdjointEig {
  Mat chol;  // L
  Eigen::VectorXd values;
  Mat q;
};

inline MetricSelfAdjointEig metric_self_adjoint_eig(const Mat& x, const Mat& h) {
  MetricSelfAdjointEig out;
  out.chol = cholesky_factor(h);
  const Mat hx = hermitian_part(h * x);
  // L^{-1} (h X) L^{-dagger}
  const auto tri = out.chol.triangularView<Eigen::Lower>();
  Mat y = tri.solve(hx);
  y = tri.solve(y.adjoint()).adjoint();
  auto eig = hermitian_eig(y);
  out.values = std::move(eig.values);
  out.q = std::move(eig.vectors);
  return out;
}

/// f(X) for h-self-adjoint X.
inline Mat metric_self_adjoint_function(const Mat& x, const Mat& h,
                                        const std::function<double(double)>& f) {
  const auto e = metric_self_adjoint_eig(x, h);
  Eigen::VectorXd fv(e.values.size());
  for (Eigen::Index i = 0; i < fv.size(); ++i) fv[i] = f(e.values[i]);
  const Mat lt = e.chol.adjoint();
  const Mat left = e.chol.adjoint().triangularView<Eigen::Upper>().solve(e.q);  // L^{-dagger} Q
  return left * fv.cast<Complex>().asDiagonal() * e.q.adjoint() * lt;
}

/// log(h^{-1} g) for Hermitian positive h and g; the result is h-self-adjoint.
/// Also returns tr(log(h^{-1} g)^2) through `sq_trace` when non-null.
inline Mat relative_log(const Mat& h, const Mat& g, double* sq_trace = nullptr) {
  const Mat l = cholesky_factor(h);
  const auto tri = l.triangularView<Eigen::Lower>();
  Mat y = tri.solve(hermitian_part(g));
  y = tri.solve(y.adjoint()).adjoint();
  const auto eig = hermitian_eig(y);
  if (eig.values.minCoeff() <= 0.0) throw ConditioningError("relative log of non-positive pair");
  Eigen::VectorXd lv = eig.values.array().log();
  if (sq_trace) *sq_trace = lv.squaredNorm();
  const Mat left = l.adjoint().triangularView<Eigen::Upper>().solve(eig.vectors);
  return left * lv.cast<Complex>().asDiagonal() * eig.vectors.adjoint() * l.adjoint();
}

/// Principal log of a unitary matrix (normal, so the Schur form is diagonal).
inline Mat unitary_log(const Mat& u) {
  Eigen::ComplexSchur<Mat> schur(u);
  const Mat& t = schur.matrixT();
  const Mat& z = schur.matrixU();
  Mat d = Mat::Zero(u.rows(), u.cols());
  for (Eigen::Index i = 0; i < u.rows(); ++i) d(i, i) = Complex(0.0, std::arg(t(i, i)));
  return z * d * z.adjoint();
}

/// Kronecker product A (x) B.
inline Mat kron(const Mat& a, const Mat& b) {
  Mat out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

/// Row-major vectorization, vec(A)[i*m + j] = A(i, j).
inline Vec vec_row_major(const Mat& a) {
  Vec v(a.size());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j) v[i * a.cols() + j] = a(i, j);
  return v;
}

inline Mat unvec_row_major(const Vec& v, int m) {
  Mat a(m, m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) a(i, j) = v[i * m + j];
  return a;
}

/// Matrix of A -> g A g^{-1} in the row-major elementary basis.
inline Mat adjoint_action(const Mat& g) {
  return kron(g, g.inverse().transpose());
}

/// Matrix of A -> [X, A] in the row-major elementary basis.
inline Mat adjoint_derivation(const Mat& x) {
  const Mat id = Mat::Identity(x.rows(), x.cols());
  return kron(x, id) - kron(id, x.transpose());
}

}  // namespace linalg
}  // namespace higgsflow
