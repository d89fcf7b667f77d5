// SPDX-License-Identifier: Apache-2.0
//
// Stage-two pilot design. The proposed pilots take the eigen-domain form
//
//   X_k = conj(U_phi_k) diag(sqrt(gamma_k)) conj(Xi_k)
//
// which makes X_1 X_2^H = 0 and diagonalizes the transformed Gram matrix,
// so the approximate MSE reduces to a separable scalar objective
//
//   J(gamma) = sum_{i,k,s,l} 1 / (a_{k,s,l} + gamma_{k,s} b^{(i)}_{k,l})
//
// minimized under sum_s gamma_{k,s} <= p_k by a two-loop bisection on the
// KKT conditions (outer loop on the multiplier mu_k, inner loop on each
// gamma_{k,s}).
//
// U_phi_k diagonalizes Phi_rk^T, the transmit factor of the vec-covariance
// of H_rk. For the real Bessel correlations this is the same basis as Phi_rk.
//
// Source indices k and i are zero-based here: 0 for S1, 1 for S2.

#pragma once

#include <array>
#include <string>

#include "twr/stage2_lmmse.hpp"

namespace twr {

/// How the diagonal coefficients of E~_i^-1 enter the scalar objective.
///   paper_scalar:   a = 1 / (sigma_r^2 lambda sigma), b = [E~^-1]_ll
///   derived_matrix: a = 1 / (lambda sigma),           b = 1 / ([E~^-1]_ll sigma_r^2)
/// Only derived_matrix follows from the Woodbury argument as an upper
/// bound on the approximate MSE; see oracle::bound_direction_check.
enum class DeltaVariant { paper_scalar, derived_matrix };

std::string to_string(DeltaVariant v);
DeltaVariant delta_variant_from_string(const std::string& s);

struct ScalarProblem {
  std::array<RealVector, 2> lambda;  // eigenvalues of Phi_rk, descending, size n_k
  std::array<RealVector, 2> sigma;   // eigenvalues of Psi_rk, descending, size nr
  std::array<std::array<RealVector, 2>, 2> delta;  // [i][k], size nr
  double sigmar_sq = 1.0;
  std::array<double, 2> p{1.0, 1.0};
  DeltaVariant variant = DeltaVariant::derived_matrix;
  bool regularized = false;  // E~_i needed the 1e-8 I loading

  Eigen::Index n(int k) const { return lambda[static_cast<std::size_t>(k)].size(); }
  Eigen::Index nr() const { return sigma[0].size(); }

  /// Constant part of a term's denominator.
  double a(int k, int s, int l) const;
  /// Slope of a term's denominator in gamma_{k,s}.
  double b(int i, int k, int l) const;

  void validate() const;
};

using Allocation = std::array<RealVector, 2>;

struct PowerAllocation {
  Allocation gamma;
  std::array<double, 2> mu{0.0, 0.0};
  std::array<int, 2> outer_iterations{0, 0};
  int inner_iterations = 0;  // summed over all calls
  double kkt_residual = 0.0;
  double slackness_residual = 0.0;
  Allocation initial_gamma;  // sqrt(p_k / n_k); bisection does not use it
  bool converged = false;
};

struct BisectionOptions {
  double tol_outer_rel = 1e-8;  // |sum gamma - p_k| <= tol_outer_rel * p_k
  double tol_inner_rel = 1e-9;  // final gamma bracket width <= tol_inner_rel * p_k
  int max_iter = 200;
  double mu_floor = 1e-12;
  double kkt_tol = 1e-6;
};

/// Rows of [U_F, 0] split as (first n1, last n2), U_F the (n1+n2)-point DFT.
std::pair<ComplexMatrix, ComplexMatrix> build_xi_split(int n1, int n2, int l);

/// conj(u_phi_k) diag(sqrt(gamma_k)) conj(xi_k).
ComplexMatrix assemble_training(const ComplexMatrix& u_phi_k, const RealVector& gamma_k,
                                const ComplexMatrix& xi_k);

/// Rotated kernel U_psi^H E U_psi whose inverse diagonal defines delta.
ComplexMatrix rotated_effective_matrix(const ComplexMatrix& e, const ComplexMatrix& u_psi);

/// Scalar coefficients for both sources' stage-one estimates.
ScalarProblem scalar_problem_from(const BackwardEstimate& est1, const BackwardEstimate& est2,
                                  const CorrelationSet& corr, const SystemConfig& cfg,
                                  DeltaVariant variant);

/// J summed over both sources.
double objective_j(const ScalarProblem& prob, const Allocation& gamma);
/// The i-th source's share of J (its MSE upper bound).
double objective_source(const ScalarProblem& prob, const Allocation& gamma, int i);
/// Direction (k, s) share of J as a function of its own gamma.
double objective_direction(const ScalarProblem& prob, int k, int s, double gamma);

/// Same quantity as objective_source, evaluated as a trace of an inverted
/// Kronecker-structured matrix.
double upper_bound_trace_form(const ScalarProblem& prob, const Allocation& gamma, int i);

/// dL/dgamma_{k,s} = -sum_{i,l} b / (a + gamma b)^2 + mu_k.
double gradient_residual(const ScalarProblem& prob, double gamma, int k, int s, double mu_k);
double second_derivative(const ScalarProblem& prob, double gamma, int k, int s);

struct InnerResult {
  double gamma = 0.0;
  int iterations = 0;
};

/// Root of gradient_residual in [0, upper]. Returns 0 when the residual at
/// zero is already nonnegative and `upper` when it stays negative there.
InnerResult inner_bisection(const ScalarProblem& prob, int k, int s, double mu_k, double upper,
                            double tol, int max_iter);

PowerAllocation optimize_allocation(const ScalarProblem& prob, const BisectionOptions& opt = {});

struct ProposedDesign {
  SourceTraining training;
  ScalarProblem problem;
  PowerAllocation allocation;
};

/// Optimized pilots from both sources' stage-one estimates. Throws
/// NumericalError if the allocation does not converge.
ProposedDesign proposed_training(const BackwardEstimate& est1, const BackwardEstimate& est2,
                                 const CorrelationSet& corr, const SystemConfig& cfg,
                                 DeltaVariant variant, const BisectionOptions& opt = {});

/// sqrt(p_k / n_k) Xi_k.
SourceTraining orthogonal_training(const SystemConfig& cfg);
/// diag(sqrt(loadings_k)) Xi_k; each loading vector must sum to p_k.
SourceTraining diagonal_training(const SystemConfig& cfg, const RealVector& loadings1,
                                 const RealVector& loadings2);
/// Baseline pilots; the diagonal scheme draws Dirichlet loadings from `stream`.
SourceTraining baseline_training(SourceScheme scheme, const SystemConfig& cfg, RngStream& stream);

}  // namespace twr
