// SPDX-License-Identifier: Apache-2.0

#include "twr/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <vector>

namespace twr {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::mt19937_64 make_engine(std::uint64_t seed, std::uint64_t stream_id) {
  const std::uint64_t a = splitmix64(seed);
  const std::uint64_t b = splitmix64(a ^ splitmix64(stream_id + 0x632be59bd9b4e019ULL));
  std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                    static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
  return std::mt19937_64(seq);
}

double max_abs(const ComplexMatrix& a) {
  return a.size() == 0 ? 0.0 : a.cwiseAbs().maxCoeff();
}

// Multiply by a unit phase so the first entry with magnitude above the
// noise floor becomes real positive.
void canonicalize_phase(Eigen::Ref<ComplexVector> v) {
  const double floor = 1e-12 * std::max(1.0, v.cwiseAbs().maxCoeff());
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (std::abs(v(i)) > floor) {
      v *= std::conj(v(i)) / std::abs(v(i));
      return;
    }
  }
}

bool lexicographic_less(const ComplexVector& a, const ComplexVector& b) {
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if (a(i).real() != b(i).real()) return a(i).real() < b(i).real();
    if (a(i).imag() != b(i).imag()) return a(i).imag() < b(i).imag();
  }
  return false;
}

}  // namespace

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed), stream_id_(stream_id), engine_(make_engine(seed, stream_id)) {}

RngStream RngStream::substream(std::uint64_t tag) const {
  return RngStream(splitmix64(seed_ ^ 0xa0761d6478bd642fULL) ^ splitmix64(stream_id_),
                   splitmix64(tag + 0x1d8e4e27c47d124fULL));
}

double RngStream::normal() { return normal_(engine_); }
double RngStream::uniform() { return uniform_(engine_); }
double RngStream::exponential() {
  double u = uniform();
  while (u <= 0.0) u = uniform();
  return -std::log(u);
}

ComplexMatrix kron(const ComplexMatrix& a, const ComplexMatrix& b) {
  ComplexMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index p = 0; p < a.rows(); ++p)
    for (Eigen::Index q = 0; q < a.cols(); ++q)
      out.block(p * b.rows(), q * b.cols(), b.rows(), b.cols()) = a(p, q) * b;
  return out;
}

ComplexVector vec(const ComplexMatrix& a) {
  return Eigen::Map<const ComplexVector>(a.data(), a.size());
}

ComplexMatrix unvec(const ComplexVector& v, Eigen::Index rows) {
  if (rows <= 0 || v.size() % rows != 0)
    throw std::invalid_argument("unvec: length " + std::to_string(v.size()) +
                                " is not a multiple of rows " + std::to_string(rows));
  return Eigen::Map<const ComplexMatrix>(v.data(), rows, v.size() / rows);
}

ComplexMatrix dft_unitary(Eigen::Index n) {
  if (n <= 0) throw std::invalid_argument("dft_unitary: n must be positive");
  ComplexMatrix u(n, n);
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  for (Eigen::Index p = 0; p < n; ++p) {
    for (Eigen::Index q = 0; q < n; ++q) {
      // reduce p*q mod n first so the angle stays small and exact for integers
      const auto k = static_cast<double>((p * q) % n);
      const double angle = -2.0 * std::numbers::pi * k / static_cast<double>(n);
      u(p, q) = scale * Complex(std::cos(angle), std::sin(angle));
    }
  }
  return u;
}

double bessel_j0(double x) { return std::cyl_bessel_j(0.0, std::fabs(x)); }

void require_hermitian(const ComplexMatrix& a, const std::string& what, double tol) {
  if (a.rows() != a.cols())
    throw std::invalid_argument(what + ": matrix is not square");
  const double asym = max_abs(a - a.adjoint());
  if (asym > tol * std::max(1.0, max_abs(a)))
    throw std::invalid_argument(what + ": matrix is not Hermitian (asymmetry " +
                                std::to_string(asym) + ")");
}

EigenData eigh(const ComplexMatrix& a) {
  require_hermitian(a, "eigh");
  const ComplexMatrix sym = 0.5 * (a + a.adjoint());
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> solver(sym);
  if (solver.info() != Eigen::Success) throw NumericalError("eigh: eigensolver did not converge");

  const Eigen::Index n = a.rows();
  ComplexMatrix vectors = solver.eigenvectors();
  for (Eigen::Index j = 0; j < n; ++j) canonicalize_phase(vectors.col(j));

  const RealVector& raw = solver.eigenvalues();
  const double tie = 1e-12 * std::max(1.0, raw.cwiseAbs().maxCoeff());
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index i, Eigen::Index j) {
    if (std::abs(raw(i) - raw(j)) > tie) return raw(i) > raw(j);
    return lexicographic_less(vectors.col(i), vectors.col(j));
  });

  EigenData out{ComplexMatrix(n, n), RealVector(n)};
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto src = order[static_cast<std::size_t>(j)];
    out.basis.col(j) = vectors.col(src);
    out.values(j) = raw(src);
  }
  return out;
}

ComplexMatrix hermitian_sqrt(const ComplexMatrix& a) {
  EigenData ed = eigh(a);
  const double scale = std::max(1.0, ed.values.cwiseAbs().maxCoeff());
  RealVector roots(ed.values.size());
  for (Eigen::Index i = 0; i < ed.values.size(); ++i) {
    const double v = ed.values(i);
    if (v < -1e-6 * scale)
      throw std::invalid_argument("hermitian_sqrt: matrix has negative eigenvalue " +
                                  std::to_string(v));
    roots(i) = v > 0.0 ? std::sqrt(v) : 0.0;
  }
  ComplexMatrix s = ed.basis * roots.cast<Complex>().asDiagonal() * ed.basis.adjoint();
  return 0.5 * (s + s.adjoint());
}

ComplexMatrix sample_complex_gaussian(Eigen::Index rows, Eigen::Index cols, RngStream& stream) {
  ComplexMatrix out(rows, cols);
  const double s = std::sqrt(0.5);
  // column-major fill order is part of the reproducibility contract
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index r = 0; r < rows; ++r) {
      const double re = stream.normal();
      const double im = stream.normal();
      out(r, c) = Complex(s * re, s * im);
    }
  }
  return out;
}

ComplexMatrix hpd_inverse(const ComplexMatrix& a, const std::string& what) {
  Eigen::LLT<ComplexMatrix> llt(0.5 * (a + a.adjoint()));
  if (llt.info() != Eigen::Success)
    throw NumericalError(what + ": matrix is not positive definite");
  return llt.solve(ComplexMatrix::Identity(a.rows(), a.cols()));
}

}  // namespace twr
