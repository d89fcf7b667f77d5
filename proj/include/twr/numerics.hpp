// SPDX-License-Identifier: Apache-2.0
//
// Dense complex-matrix helpers shared by every estimation module.
//
// Conventions:
//   * vec() stacks columns (Eigen's native column-major order).
//   * dft_unitary(n)(p, q) = exp(-j 2 pi p q / n) / sqrt(n), p, q zero-based.
//   * eigh() returns eigenvalues in descending order.
//   * complex Gaussian entries have E|z|^2 = 1 (variance 1/2 per real part).

#pragma once

#include <complex>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace twr {

using Complex = std::complex<double>;
using ComplexMatrix = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;
using RealVector = Eigen::VectorXd;

/// Raised when a numerical precondition (invertibility, convergence) fails.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EigenData {
  ComplexMatrix basis;  // columns are eigenvectors
  RealVector values;    // descending
};

/// Deterministic random stream keyed by (seed, stream id). Streams with
/// different ids are statistically independent; the same key always
/// reproduces the same sequence.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id);

  /// Child stream for a named sub-purpose inside one trial.
  RngStream substream(std::uint64_t tag) const;

  double normal();
  double uniform();
  /// Standard exponential variate.
  double exponential();

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

ComplexMatrix kron(const ComplexMatrix& a, const ComplexMatrix& b);

/// Column-stacking vectorization.
ComplexVector vec(const ComplexMatrix& a);
ComplexMatrix unvec(const ComplexVector& v, Eigen::Index rows);

ComplexMatrix dft_unitary(Eigen::Index n);

/// Zeroth-order Bessel function of the first kind.
double bessel_j0(double x);

/// Throws std::invalid_argument when `a` deviates from Hermitian by more
/// than `tol` (max-abs of a - a^H relative to max(1, max-abs of a)).
void require_hermitian(const ComplexMatrix& a, const std::string& what, double tol = 1e-8);

EigenData eigh(const ComplexMatrix& a);

/// Principal square root of a Hermitian PSD matrix. Eigenvalues in
/// [-1e-6, 0) are clamped to zero; anything more negative is rejected.
ComplexMatrix hermitian_sqrt(const ComplexMatrix& a);

/// Matrix with i.i.d. CN(0, 1) entries drawn from `stream`.
ComplexMatrix sample_complex_gaussian(Eigen::Index rows, Eigen::Index cols, RngStream& stream);

/// Inverse of a Hermitian positive-definite matrix via Cholesky; throws
/// NumericalError when the factorization fails.
ComplexMatrix hpd_inverse(const ComplexMatrix& a, const std::string& what);

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }
inline double linear_to_db(double x) { return 10.0 * std::log10(x); }

}  // namespace twr
