// SPDX-License-Identifier: Apache-2.0

#include "twr/channel_model.hpp"

#include <cmath>
#include <numbers>

namespace twr {

namespace {

void require(bool ok, const char* field, const char* rule) {
  if (!ok) throw std::invalid_argument(std::string("config field '") + field + "' " + rule);
}

// Substream tags for the four links of one trial.
constexpr std::uint64_t kTagH1r = 1;
constexpr std::uint64_t kTagH2r = 2;
constexpr std::uint64_t kTagHr1 = 3;
constexpr std::uint64_t kTagHr2 = 4;

}  // namespace

void SystemConfig::validate() const {
  require(n1 >= 1, "n1", "must be >= 1");
  require(n2 >= 1, "n2", "must be >= 1");
  require(nr >= 1, "nr", "must be >= 1");
  require(l_r >= nr, "l_r", "must be >= nr");
  require(l >= n1 + n2, "l", "must be >= n1 + n2");
  require(p1 > 0.0 && std::isfinite(p1), "p1", "must be positive");
  require(p2 > 0.0 && std::isfinite(p2), "p2", "must be positive");
  require(pr > 0.0 && std::isfinite(pr), "pr", "must be positive");
  require(sigma1_sq > 0.0, "sigma1_sq", "must be positive");
  require(sigma2_sq > 0.0, "sigma2_sq", "must be positive");
  require(sigmar_sq > 0.0, "sigmar_sq", "must be positive");
  require(spacing_s1 >= 0.0, "spacing_s1", "must be >= 0");
  require(spacing_s2 >= 0.0, "spacing_s2", "must be >= 0");
  require(spacing_r >= 0.0, "spacing_r", "must be >= 0");
}

ComplexMatrix ChannelSet::forward_stack() const {
  ComplexMatrix hc(h_r1.rows(), h_r1.cols() + h_r2.cols());
  hc << h_r1, h_r2;
  return hc;
}

ComplexVector ChannelSet::h_c() const { return vec(forward_stack()); }

ComplexMatrix correlation_matrix(int n, double spacing) {
  if (n < 1) throw std::invalid_argument("correlation_matrix: n must be >= 1");
  if (spacing < 0.0) throw std::invalid_argument("correlation_matrix: spacing must be >= 0");
  ComplexMatrix c(n, n);
  for (int p = 0; p < n; ++p)
    for (int q = 0; q < n; ++q)
      c(p, q) = bessel_j0(2.0 * std::numbers::pi * spacing * std::abs(p - q));

  EigenData ed = eigh(c);
  if (ed.values.minCoeff() < -1e-6) {
    throw std::invalid_argument("correlation_matrix: Bessel Toeplitz matrix is indefinite");
  }
  if (ed.values.minCoeff() < 0.0) {
    // floating-point repair: clamp, rebuild, rescale to unit diagonal
    RealVector clamped = ed.values.cwiseMax(0.0);
    ComplexMatrix r = ed.basis * clamped.cast<Complex>().asDiagonal() * ed.basis.adjoint();
    RealVector d = r.diagonal().real().cwiseSqrt().cwiseInverse();
    r = d.cast<Complex>().asDiagonal() * r * d.cast<Complex>().asDiagonal();
    r = 0.5 * (r + r.adjoint());
    for (int p = 0; p < n; ++p) r(p, p) = 1.0;
    c = r;
  }
  return c;
}

CorrelationSet build_correlations(const SystemConfig& cfg) {
  CorrelationSet cs;
  cs.psi_1r = correlation_matrix(cfg.n1, cfg.spacing_s1);
  cs.phi_r1 = correlation_matrix(cfg.n1, cfg.spacing_s1);
  cs.psi_2r = correlation_matrix(cfg.n2, cfg.spacing_s2);
  cs.phi_r2 = correlation_matrix(cfg.n2, cfg.spacing_s2);
  cs.phi_1r = correlation_matrix(cfg.nr, cfg.spacing_r);
  cs.phi_2r = correlation_matrix(cfg.nr, cfg.spacing_r);
  cs.psi_r1 = correlation_matrix(cfg.nr, cfg.spacing_r);
  cs.psi_r2 = correlation_matrix(cfg.nr, cfg.spacing_r);
  return cs;
}

ChannelSampler::ChannelSampler(const CorrelationSet& corr)
    : psi_1r_(hermitian_sqrt(corr.psi_1r)),
      phi_1r_(hermitian_sqrt(corr.phi_1r)),
      psi_2r_(hermitian_sqrt(corr.psi_2r)),
      phi_2r_(hermitian_sqrt(corr.phi_2r)),
      psi_r1_(hermitian_sqrt(corr.psi_r1)),
      phi_r1_(hermitian_sqrt(corr.phi_r1)),
      psi_r2_(hermitian_sqrt(corr.psi_r2)),
      phi_r2_(hermitian_sqrt(corr.phi_r2)) {}

ChannelSet ChannelSampler::sample(const RngStream& stream) const {
  auto draw = [&](const ComplexMatrix& rx, const ComplexMatrix& tx, std::uint64_t tag) {
    RngStream s = stream.substream(tag);
    ComplexMatrix core = sample_complex_gaussian(rx.rows(), tx.rows(), s);
    return ComplexMatrix(rx * core * tx);
  };
  ChannelSet ch;
  ch.h_1r = draw(psi_1r_, phi_1r_, kTagH1r);
  ch.h_2r = draw(psi_2r_, phi_2r_, kTagH2r);
  ch.h_r1 = draw(psi_r1_, phi_r1_, kTagHr1);
  ch.h_r2 = draw(psi_r2_, phi_r2_, kTagHr2);
  return ch;
}

ChannelSet sample_channels(const CorrelationSet& corr, const RngStream& stream) {
  return ChannelSampler(corr).sample(stream);
}

ComplexMatrix prior_covariance_rhc(const CorrelationSet& corr) {
  const ComplexMatrix b1 = kron(corr.phi_r1.transpose(), corr.psi_r1);
  const ComplexMatrix b2 = kron(corr.phi_r2.transpose(), corr.psi_r2);
  ComplexMatrix r = ComplexMatrix::Zero(b1.rows() + b2.rows(), b1.cols() + b2.cols());
  r.topLeftCorner(b1.rows(), b1.cols()) = b1;
  r.bottomRightCorner(b2.rows(), b2.cols()) = b2;
  return r;
}

}  // namespace twr
