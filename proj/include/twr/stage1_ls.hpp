// SPDX-License-Identifier: Apache-2.0
//
// First training stage: the relay broadcasts X_R and each source forms a
// least-squares estimate of its backward channel H_ir.

#pragma once

#include <vector>

#include "twr/channel_model.hpp"

namespace twr {

enum class RelayScheme { optimal, diagonal };

struct RelayTraining {
  ComplexMatrix x_r;  // nr x l_r
  RelayScheme scheme = RelayScheme::optimal;
  RealVector loadings;  // per-antenna power, diagonal scheme only
};

struct BackwardEstimate {
  ComplexMatrix h_hat;  // n_i x nr
  double err_var = 0.0; // per-entry variance of h_hat - h
};

/// Xi_R = [U_R, 0] with U_R the nr-point unitary DFT.
ComplexMatrix relay_xi(const SystemConfig& cfg);

/// sqrt(pr / nr) * Xi_R: minimizes Tr((X X^H)^-1) under Tr(X X^H) <= pr.
RelayTraining optimal_relay_training(const SystemConfig& cfg);

/// diag(sqrt(loadings)) * Xi_R. Loadings must be nonnegative and sum to pr
/// (relative tolerance 1e-9).
RelayTraining diagonal_relay_training(const SystemConfig& cfg, const RealVector& loadings);

/// Symmetric Dirichlet(1) power split of `total` over n antennas.
RealVector dirichlet_loadings(int n, double total, RngStream& stream);

/// Y~_i = H_ir X_R + V~_i with V~_i i.i.d. CN(0, sigma_i_sq).
ComplexMatrix simulate_stage1(const ComplexMatrix& h_ir, const RelayTraining& train,
                              double sigma_i_sq, RngStream& stream);

/// True when the pilot Gram matrix X_R X_R^H is singular or its condition
/// number reaches 1e12.
bool pilot_gram_singular(const RelayTraining& train);

/// H^_ir = Y~ X_R^H (X_R X_R^H)^-1. `sigma_i_sq` populates err_var as
/// sigma_i_sq * Tr((X_R X_R^H)^-1) / nr. Throws NumericalError for a
/// singular pilot.
BackwardEstimate ls_estimate(const ComplexMatrix& y_tilde, const RelayTraining& train,
                             double sigma_i_sq);

/// Tr E[dH dH^H] = sigma_i_sq * n_i * Tr((X_R X_R^H)^-1).
double stage1_theoretical_mse(const RelayTraining& train, int n_i, double sigma_i_sq);

}  // namespace twr
