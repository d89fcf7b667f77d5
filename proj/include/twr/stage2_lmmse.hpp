// SPDX-License-Identifier: Apache-2.0
//
// Second training stage: both sources send pilots X_1, X_2 to the relay,
// which forwards the superposition unamplified. Source S_i then estimates
// the stacked forward channel h_c = [vec(H_r1); vec(H_r2)] by LMMSE,
// treating its stage-one estimate H^_ir as known and the stage-one error
// dH_ir ~ CN(0, err_var I) as extra noise.

#pragma once

#include "twr/stage1_ls.hpp"

namespace twr {

enum class SourceScheme { proposed, orthogonal, diagonal };

struct SourceTraining {
  ComplexMatrix x1;  // n1 x l
  ComplexMatrix x2;  // n2 x l
  SourceScheme scheme = SourceScheme::orthogonal;

  const ComplexMatrix& x(int k) const { return k == 1 ? x1 : x2; }
  /// P = [X_1; X_2], (n1 + n2) x l.
  ComplexMatrix stacked() const;
};

struct Stage2Observation {
  ComplexMatrix y_r;  // nr x l at the relay
  ComplexMatrix y_1;  // n1 x l at S1
  ComplexMatrix y_2;
  const ComplexMatrix& y(int i) const { return i == 1 ? y_1 : y_2; }
};

/// Second-order statistics seen by S_i when estimating h_c.
struct ForwardModel {
  ComplexMatrix m;         // M_i = P^T (x) H^_ir
  ComplexMatrix r_hc;      // prior covariance of h_c
  ComplexMatrix r_vi;      // covariance of the effective noise v~_i
  ComplexMatrix r_vi_bar;  // r_vi without the dH * H_c * P term
};

struct ForwardEstimate {
  ComplexVector h_c_hat;
  double mse_exact = 0.0;     // Tr(R_hc - R_hcy R_y^-1 R_hcy^H)
  double mse_woodbury = 0.0;  // Tr((R_hc^-1 + M^H R_v^-1 M)^-1)
  double mse_approx = 0.0;    // Woodbury form with r_vi_bar
  bool regularized = false;   // R_y needed the 1e-12 I loading
};

/// Y_r = H_r1 X_1 + H_r2 X_2 + V_r and Y_i = H_ir (Y_r) + V_i, with fresh
/// noise drawn from substreams of `stream`.
Stage2Observation simulate_stage2(const ChannelSet& channels, const SourceTraining& train,
                                  const SystemConfig& cfg, const RngStream& stream);

/// Same as simulate_stage2 but with caller-supplied noise realizations.
Stage2Observation simulate_stage2(const ChannelSet& channels, const SourceTraining& train,
                                  const ComplexMatrix& v_r, const ComplexMatrix& v_1,
                                  const ComplexMatrix& v_2);

/// M_i = P^T (x) H^_ir, so that M_i vec(H_c) = vec(H^_ir H_c P).
ComplexMatrix build_m_i(const ComplexMatrix& p, const ComplexMatrix& h_hat);

/// sigma_i^2 + sigma_r^2 * nr * err_var: the white part of v~_i.
double effective_noise_var(const BackwardEstimate& est, double sigma_i_sq, double sigmar_sq);

/// Full covariance of v~_i:
///   sigma_r^2 I_L (x) H^ H^^H + sigma_bar^2 I
///   + err_var * sum_k Tr(Psi_rk) (X_k^T Phi_rk^T X_k^*) (x) I_{n_i}.
ComplexMatrix noise_covariance(const BackwardEstimate& est, const SourceTraining& train,
                               const CorrelationSet& corr, double sigma_i_sq, double sigmar_sq);

/// The first two terms of noise_covariance (large relay power limit).
ComplexMatrix approx_noise_covariance(const BackwardEstimate& est, Eigen::Index l,
                                      double sigma_i_sq, double sigmar_sq);

ForwardModel forward_model(const BackwardEstimate& est, const SourceTraining& train,
                           const CorrelationSet& corr, double sigma_i_sq, double sigmar_sq);

/// h^_c = R_hc M^H R_y^-1 y_i. mse_exact is always populated; the Woodbury
/// and approximate forms only when `all_mse_forms` is set.
ForwardEstimate lmmse_estimate(const ComplexVector& y_i, const ForwardModel& model,
                               bool all_mse_forms = true);

/// Tr(R_hc - R_hc M^H R_y^-1 M R_hc): MSE of the LMMSE estimator by direct
/// evaluation.
double direct_mse(const ForwardModel& model);

/// Tr((R_hc^-1 + M^H R_v^-1 M)^-1).
double conditional_mse(const ForwardModel& model);

/// conditional_mse with r_vi replaced by r_vi_bar; never exceeds it.
double approx_mse(const ForwardModel& model);

/// H^^H (c I + H^ H^^H)^-1 H^, nr x nr. With c = sigma_bar^2 / sigma_r^2 it
/// is the kernel of the Sigma blocks of the approximate MSE.
ComplexMatrix effective_matrix_e(const ComplexMatrix& h_hat, double c);

/// Approximate MSE evaluated through the 2 x 2 Sigma-block matrix
/// Sigma_pq = sigma_r^-2 X_p^* X_q^T (x) E_i plus blkdiag(Phi^-T (x) Psi^-1).
double approx_mse_blocks(const BackwardEstimate& est, const SourceTraining& train,
                         const CorrelationSet& corr, double sigma_i_sq, double sigmar_sq);

/// Per-source sum of the diagonal blocks only; equals approx_mse_blocks
/// whenever X_1 X_2^H = 0.
double approx_mse_decoupled(const BackwardEstimate& est, const SourceTraining& train,
                            const CorrelationSet& corr, double sigma_i_sq, double sigmar_sq);

}  // namespace twr
