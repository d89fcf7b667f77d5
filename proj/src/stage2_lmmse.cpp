// SPDX-License-Identifier: Apache-2.0

#include "twr/stage2_lmmse.hpp"

#include <cmath>

namespace twr {

namespace {

constexpr std::uint64_t kTagRelayNoise = 11;
constexpr std::uint64_t kTagSource1Noise = 12;
constexpr std::uint64_t kTagSource2Noise = 13;

constexpr double kRyMinRcond = 1e-12;
constexpr double kRyLoading = 1e-12;

ComplexMatrix block_diag(const ComplexMatrix& a, const ComplexMatrix& b) {
  ComplexMatrix r = ComplexMatrix::Zero(a.rows() + b.rows(), a.cols() + b.cols());
  r.topLeftCorner(a.rows(), a.cols()) = a;
  r.bottomRightCorner(b.rows(), b.cols()) = b;
  return r;
}

double trace_of_inverse(const ComplexMatrix& a, const char* what) {
  return hpd_inverse(a, what).trace().real();
}

ComplexMatrix prior_precision(const CorrelationSet& corr) {
  const ComplexMatrix phi1_inv = hpd_inverse(corr.phi_r1, "Phi_r1");
  const ComplexMatrix phi2_inv = hpd_inverse(corr.phi_r2, "Phi_r2");
  const ComplexMatrix psi1_inv = hpd_inverse(corr.psi_r1, "Psi_r1");
  const ComplexMatrix psi2_inv = hpd_inverse(corr.psi_r2, "Psi_r2");
  return block_diag(kron(phi1_inv.transpose(), psi1_inv), kron(phi2_inv.transpose(), psi2_inv));
}

void check_dims(const BackwardEstimate& est, const SourceTraining& train,
                const CorrelationSet& corr) {
  const auto nr = est.h_hat.cols();
  if (train.x1.cols() != train.x2.cols())
    throw std::invalid_argument("source pilots must share one length l");
  if (corr.psi_r1.rows() != nr || corr.psi_r2.rows() != nr)
    throw std::invalid_argument("forward receive correlation must be nr x nr");
  if (corr.phi_r1.rows() != train.x1.rows() || corr.phi_r2.rows() != train.x2.rows())
    throw std::invalid_argument("forward transmit correlation does not match pilot rows");
}

}  // namespace

ComplexMatrix SourceTraining::stacked() const {
  ComplexMatrix p(x1.rows() + x2.rows(), x1.cols());
  p << x1, x2;
  return p;
}

Stage2Observation simulate_stage2(const ChannelSet& channels, const SourceTraining& train,
                                  const SystemConfig& cfg, const RngStream& stream) {
  const Eigen::Index l = train.x1.cols();
  RngStream sr = stream.substream(kTagRelayNoise);
  RngStream s1 = stream.substream(kTagSource1Noise);
  RngStream s2 = stream.substream(kTagSource2Noise);
  const ComplexMatrix v_r = std::sqrt(cfg.sigmar_sq) * sample_complex_gaussian(cfg.nr, l, sr);
  const ComplexMatrix v_1 = std::sqrt(cfg.sigma1_sq) * sample_complex_gaussian(cfg.n1, l, s1);
  const ComplexMatrix v_2 = std::sqrt(cfg.sigma2_sq) * sample_complex_gaussian(cfg.n2, l, s2);
  return simulate_stage2(channels, train, v_r, v_1, v_2);
}

Stage2Observation simulate_stage2(const ChannelSet& channels, const SourceTraining& train,
                                  const ComplexMatrix& v_r, const ComplexMatrix& v_1,
                                  const ComplexMatrix& v_2) {
  if (channels.h_r1.cols() != train.x1.rows() || channels.h_r2.cols() != train.x2.rows())
    throw std::invalid_argument("simulate_stage2: channel/pilot dimension mismatch");
  Stage2Observation obs;
  obs.y_r = channels.h_r1 * train.x1 + channels.h_r2 * train.x2 + v_r;
  obs.y_1 = channels.h_1r * obs.y_r + v_1;
  obs.y_2 = channels.h_2r * obs.y_r + v_2;
  return obs;
}

ComplexMatrix build_m_i(const ComplexMatrix& p, const ComplexMatrix& h_hat) {
  return kron(p.transpose(), h_hat);
}

double effective_noise_var(const BackwardEstimate& est, double sigma_i_sq, double sigmar_sq) {
  return sigma_i_sq + sigmar_sq * static_cast<double>(est.h_hat.cols()) * est.err_var;
}

ComplexMatrix approx_noise_covariance(const BackwardEstimate& est, Eigen::Index l,
                                      double sigma_i_sq, double sigmar_sq) {
  const ComplexMatrix hh = est.h_hat * est.h_hat.adjoint();
  ComplexMatrix r = sigmar_sq * kron(ComplexMatrix::Identity(l, l), hh);
  r.diagonal().array() += effective_noise_var(est, sigma_i_sq, sigmar_sq);
  return r;
}

ComplexMatrix noise_covariance(const BackwardEstimate& est, const SourceTraining& train,
                               const CorrelationSet& corr, double sigma_i_sq, double sigmar_sq) {
  check_dims(est, train, corr);
  const Eigen::Index l = train.x1.cols();
  const Eigen::Index ni = est.h_hat.rows();
  ComplexMatrix w = ComplexMatrix::Zero(l, l);
  for (int k = 1; k <= 2; ++k) {
    const ComplexMatrix& x = train.x(k);
    const double tr_psi = corr.psi_r(k).trace().real();
    w += tr_psi * (x.transpose() * corr.phi_r(k).transpose() * x.conjugate());
  }
  ComplexMatrix r = approx_noise_covariance(est, l, sigma_i_sq, sigmar_sq);
  r += est.err_var * kron(w, ComplexMatrix::Identity(ni, ni));
  return 0.5 * (r + r.adjoint());
}

ForwardModel forward_model(const BackwardEstimate& est, const SourceTraining& train,
                           const CorrelationSet& corr, double sigma_i_sq, double sigmar_sq) {
  ForwardModel fm;
  fm.m = build_m_i(train.stacked(), est.h_hat);
  fm.r_hc = prior_covariance_rhc(corr);
  fm.r_vi = noise_covariance(est, train, corr, sigma_i_sq, sigmar_sq);
  fm.r_vi_bar = approx_noise_covariance(est, train.x1.cols(), sigma_i_sq, sigmar_sq);
  return fm;
}

ForwardEstimate lmmse_estimate(const ComplexVector& y_i, const ForwardModel& model,
                               bool all_mse_forms) {
  if (y_i.size() != model.m.rows())
    throw std::invalid_argument("lmmse_estimate: observation length " +
                                std::to_string(y_i.size()) + " does not match M_i rows " +
                                std::to_string(model.m.rows()));
  const ComplexMatrix r_hy = model.r_hc * model.m.adjoint();
  ComplexMatrix r_y = model.m * r_hy + model.r_vi;
  r_y = 0.5 * (r_y + r_y.adjoint());

  ForwardEstimate out;
  Eigen::LLT<ComplexMatrix> llt(r_y);
  if (llt.info() != Eigen::Success || llt.rcond() < kRyMinRcond) {
    r_y.diagonal().array() += kRyLoading;
    llt.compute(r_y);
    out.regularized = true;
    if (llt.info() != Eigen::Success)
      throw NumericalError("lmmse_estimate: R_y is not positive definite");
  }
  out.h_c_hat = r_hy * llt.solve(y_i);
  out.mse_exact = (model.r_hc - r_hy * llt.solve(r_hy.adjoint())).trace().real();
  if (all_mse_forms) {
    out.mse_woodbury = conditional_mse(model);
    out.mse_approx = approx_mse(model);
  }
  return out;
}

double direct_mse(const ForwardModel& model) {
  const ComplexMatrix r_hy = model.r_hc * model.m.adjoint();
  const ComplexMatrix r_y = model.m * r_hy + model.r_vi;
  Eigen::LLT<ComplexMatrix> llt(0.5 * (r_y + r_y.adjoint()));
  if (llt.info() != Eigen::Success) throw NumericalError("direct_mse: R_y is not positive definite");
  return (model.r_hc - r_hy * llt.solve(r_hy.adjoint())).trace().real();
}

double conditional_mse(const ForwardModel& model) {
  const ComplexMatrix prec = hpd_inverse(model.r_hc, "R_hc");
  const ComplexMatrix info = model.m.adjoint() * hpd_inverse(model.r_vi, "R_v") * model.m;
  return trace_of_inverse(prec + info, "posterior precision");
}

double approx_mse(const ForwardModel& model) {
  const ComplexMatrix prec = hpd_inverse(model.r_hc, "R_hc");
  const ComplexMatrix info = model.m.adjoint() * hpd_inverse(model.r_vi_bar, "R_v_bar") * model.m;
  return trace_of_inverse(prec + info, "approximate posterior precision");
}

ComplexMatrix effective_matrix_e(const ComplexMatrix& h_hat, double c) {
  ComplexMatrix g = h_hat * h_hat.adjoint();
  g.diagonal().array() += c;
  ComplexMatrix e = h_hat.adjoint() * hpd_inverse(g, "c I + H H^H") * h_hat;
  return 0.5 * (e + e.adjoint());
}

double approx_mse_blocks(const BackwardEstimate& est, const SourceTraining& train,
                         const CorrelationSet& corr, double sigma_i_sq, double sigmar_sq) {
  check_dims(est, train, corr);
  const double c = effective_noise_var(est, sigma_i_sq, sigmar_sq) / sigmar_sq;
  const ComplexMatrix e = effective_matrix_e(est.h_hat, c);
  const ComplexMatrix p = train.stacked();
  ComplexMatrix a = kron(p.conjugate() * p.transpose(), e) / sigmar_sq;
  a += prior_precision(corr);
  return trace_of_inverse(a, "Sigma-block matrix");
}

double approx_mse_decoupled(const BackwardEstimate& est, const SourceTraining& train,
                            const CorrelationSet& corr, double sigma_i_sq, double sigmar_sq) {
  check_dims(est, train, corr);
  const double c = effective_noise_var(est, sigma_i_sq, sigmar_sq) / sigmar_sq;
  const ComplexMatrix e = effective_matrix_e(est.h_hat, c);
  double total = 0.0;
  for (int k = 1; k <= 2; ++k) {
    const ComplexMatrix& x = train.x(k);
    ComplexMatrix a = kron(x.conjugate() * x.transpose(), e) / sigmar_sq;
    a += kron(hpd_inverse(corr.phi_r(k), "Phi_rk").transpose(), hpd_inverse(corr.psi_r(k), "Psi_rk"));
    total += trace_of_inverse(a, "decoupled Sigma block");
  }
  return total;
}

}  // namespace twr
