// SPDX-License-Identifier: Apache-2.0

#include "twr/stage1_ls.hpp"

#include <cmath>
#include <string>

namespace twr {

namespace {

constexpr double kMaxGramCondition = 1e12;

ComplexMatrix gram_inverse(const RelayTraining& train) {
  if (pilot_gram_singular(train))
    throw NumericalError("relay pilot Gram matrix X_R X_R^H is singular");
  return hpd_inverse(train.x_r * train.x_r.adjoint(), "relay pilot Gram");
}

}  // namespace

ComplexMatrix relay_xi(const SystemConfig& cfg) {
  if (cfg.l_r < cfg.nr)
    throw std::invalid_argument("relay pilot length l_r (" + std::to_string(cfg.l_r) +
                                ") must be >= nr (" + std::to_string(cfg.nr) + ")");
  ComplexMatrix xi = ComplexMatrix::Zero(cfg.nr, cfg.l_r);
  xi.leftCols(cfg.nr) = dft_unitary(cfg.nr);
  return xi;
}

RelayTraining optimal_relay_training(const SystemConfig& cfg) {
  RelayTraining t;
  t.scheme = RelayScheme::optimal;
  t.x_r = std::sqrt(cfg.pr / cfg.nr) * relay_xi(cfg);
  return t;
}

RelayTraining diagonal_relay_training(const SystemConfig& cfg, const RealVector& loadings) {
  if (loadings.size() != cfg.nr)
    throw std::invalid_argument("diagonal relay pilot needs nr loadings");
  if ((loadings.array() < 0.0).any())
    throw std::invalid_argument("diagonal relay pilot: negative power loading");
  if (std::abs(loadings.sum() - cfg.pr) > 1e-9 * cfg.pr)
    throw std::invalid_argument("diagonal relay pilot: loadings must sum to pr");
  RelayTraining t;
  t.scheme = RelayScheme::diagonal;
  t.loadings = loadings;
  t.x_r = loadings.cwiseSqrt().cast<Complex>().asDiagonal() * relay_xi(cfg);
  return t;
}

RealVector dirichlet_loadings(int n, double total, RngStream& stream) {
  RealVector w(n);
  for (int i = 0; i < n; ++i) w(i) = stream.exponential();
  return total * w / w.sum();
}

ComplexMatrix simulate_stage1(const ComplexMatrix& h_ir, const RelayTraining& train,
                              double sigma_i_sq, RngStream& stream) {
  if (h_ir.cols() != train.x_r.rows())
    throw std::invalid_argument("simulate_stage1: channel/pilot dimension mismatch");
  ComplexMatrix noise = sample_complex_gaussian(h_ir.rows(), train.x_r.cols(), stream);
  return h_ir * train.x_r + std::sqrt(sigma_i_sq) * noise;
}

bool pilot_gram_singular(const RelayTraining& train) {
  const ComplexMatrix gram = train.x_r * train.x_r.adjoint();
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(gram, Eigen::EigenvaluesOnly);
  const double hi = es.eigenvalues().maxCoeff();
  const double lo = es.eigenvalues().minCoeff();
  return !(lo > 0.0) || hi / lo >= kMaxGramCondition;
}

BackwardEstimate ls_estimate(const ComplexMatrix& y_tilde, const RelayTraining& train,
                             double sigma_i_sq) {
  if (y_tilde.cols() != train.x_r.cols())
    throw std::invalid_argument("ls_estimate: observation/pilot dimension mismatch");
  const ComplexMatrix g_inv = gram_inverse(train);
  BackwardEstimate est;
  est.h_hat = y_tilde * train.x_r.adjoint() * g_inv;
  est.err_var = sigma_i_sq * g_inv.trace().real() / static_cast<double>(train.x_r.rows());
  return est;
}

double stage1_theoretical_mse(const RelayTraining& train, int n_i, double sigma_i_sq) {
  return sigma_i_sq * n_i * gram_inverse(train).trace().real();
}

}  // namespace twr
