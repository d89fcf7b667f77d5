// SPDX-License-Identifier: Apache-2.0
//
// Bessel (Clarke) antenna correlation and Gaussian-Kronecker channel
// sampling for the two-way relay links.
//
// Link naming follows "<to><from>": h_1r is relay -> S1 (backward,
// n1 x nr) and h_r1 is S1 -> relay (forward, nr x n1).

#pragma once

#include "twr/numerics.hpp"

namespace twr {

struct SystemConfig {
  int n1 = 4;
  int n2 = 4;
  int nr = 4;
  int l_r = 4;  // relay pilot length
  int l = 8;    // source pilot length
  double p1 = 1.0;
  double p2 = 1.0;
  double pr = 1.0;
  double sigma1_sq = 1.0;
  double sigma2_sq = 1.0;
  double sigmar_sq = 1.0;
  double spacing_s1 = 0.05;  // d/lambda at S1
  double spacing_s2 = 0.05;
  double spacing_r = 0.25;

  int n_source(int i) const { return i == 1 ? n1 : n2; }
  double p_source(int k) const { return k == 1 ? p1 : p2; }
  double sigma_source_sq(int i) const { return i == 1 ? sigma1_sq : sigma2_sq; }

  /// Throws std::invalid_argument naming the first offending field.
  void validate() const;
};

struct CorrelationSet {
  ComplexMatrix psi_1r, phi_1r;  // backward S1 link: receive n1 x n1, transmit nr x nr
  ComplexMatrix psi_2r, phi_2r;
  ComplexMatrix psi_r1, phi_r1;  // forward S1 link: receive nr x nr, transmit n1 x n1
  ComplexMatrix psi_r2, phi_r2;

  const ComplexMatrix& psi_r(int k) const { return k == 1 ? psi_r1 : psi_r2; }
  const ComplexMatrix& phi_r(int k) const { return k == 1 ? phi_r1 : phi_r2; }
};

struct ChannelSet {
  ComplexMatrix h_1r, h_2r;  // backward, n_i x nr
  ComplexMatrix h_r1, h_r2;  // forward, nr x n_i

  const ComplexMatrix& backward(int i) const { return i == 1 ? h_1r : h_2r; }
  const ComplexMatrix& forward(int k) const { return k == 1 ? h_r1 : h_r2; }

  /// H_c = [H_r1, H_r2], nr x (n1 + n2).
  ComplexMatrix forward_stack() const;
  /// h_c = vec(H_c) = [vec(H_r1); vec(H_r2)].
  ComplexVector h_c() const;
};

/// Toeplitz matrix with entries J0(2 pi spacing |p - q|), PSD-repaired.
ComplexMatrix correlation_matrix(int n, double spacing);

CorrelationSet build_correlations(const SystemConfig& cfg);

/// Caches the Hermitian square roots of a CorrelationSet so repeated draws
/// do not refactor the same matrices.
class ChannelSampler {
 public:
  explicit ChannelSampler(const CorrelationSet& corr);

  /// Each link draws its i.i.d. core from its own substream of `stream`.
  ChannelSet sample(const RngStream& stream) const;

 private:
  ComplexMatrix psi_1r_, phi_1r_, psi_2r_, phi_2r_;
  ComplexMatrix psi_r1_, phi_r1_, psi_r2_, phi_r2_;
};

ChannelSet sample_channels(const CorrelationSet& corr, const RngStream& stream);

/// blkdiag{Phi_r1^T (x) Psi_r1, Phi_r2^T (x) Psi_r2}: covariance of h_c.
ComplexMatrix prior_covariance_rhc(const CorrelationSet& corr);

}  // namespace twr
