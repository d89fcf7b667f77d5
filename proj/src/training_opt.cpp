// SPDX-License-Identifier: Apache-2.0

#include "twr/training_opt.hpp"

#include <algorithm>
#include <cmath>

namespace twr {

namespace {

constexpr double kEMinRcond = 1e-12;
constexpr double kELoading = 1e-8;

constexpr std::uint64_t kTagLoadings1 = 21;
constexpr std::uint64_t kTagLoadings2 = 22;

std::size_t idx(int k) { return static_cast<std::size_t>(k); }

// Diagonal of the inverse of the rotated kernel; loads the diagonal once
// when the kernel is numerically singular.
RealVector inverse_diagonal(ComplexMatrix e_rot, bool& regularized) {
  e_rot = 0.5 * (e_rot + e_rot.adjoint());
  Eigen::LLT<ComplexMatrix> llt(e_rot);
  if (llt.info() != Eigen::Success || llt.rcond() < kEMinRcond) {
    e_rot.diagonal().array() += kELoading;
    llt.compute(e_rot);
    regularized = true;
    if (llt.info() != Eigen::Success)
      throw NumericalError("effective matrix E_i is rank deficient beyond regularization");
  }
  const ComplexMatrix inv = llt.solve(ComplexMatrix::Identity(e_rot.rows(), e_rot.cols()));
  return inv.diagonal().real();
}

}  // namespace

std::string to_string(DeltaVariant v) {
  return v == DeltaVariant::paper_scalar ? "paper_scalar" : "derived_matrix";
}

DeltaVariant delta_variant_from_string(const std::string& s) {
  if (s == "paper_scalar") return DeltaVariant::paper_scalar;
  if (s == "derived_matrix") return DeltaVariant::derived_matrix;
  throw std::invalid_argument("unknown delta variant '" + s +
                              "' (expected paper_scalar or derived_matrix)");
}

double ScalarProblem::a(int k, int s, int l) const {
  const double ls = lambda[idx(k)](s) * sigma[idx(k)](l);
  return variant == DeltaVariant::paper_scalar ? 1.0 / (sigmar_sq * ls) : 1.0 / ls;
}

double ScalarProblem::b(int i, int k, int l) const {
  const double d = delta[idx(i)][idx(k)](l);
  return variant == DeltaVariant::paper_scalar ? d : d / sigmar_sq;
}

void ScalarProblem::validate() const {
  if (!(sigmar_sq > 0.0)) throw std::invalid_argument("scalar problem: sigmar_sq must be positive");
  for (int k = 0; k < 2; ++k) {
    if (lambda[idx(k)].size() == 0) throw std::invalid_argument("scalar problem: empty lambda");
    if (sigma[idx(k)].size() != nr())
      throw std::invalid_argument("scalar problem: sigma sizes differ between sources");
    if (!(p[idx(k)] > 0.0)) throw std::invalid_argument("scalar problem: power must be positive");
    if ((lambda[idx(k)].array() <= 0.0).any() || (sigma[idx(k)].array() <= 0.0).any())
      throw std::invalid_argument("scalar problem: correlation eigenvalues must be positive");
    for (int i = 0; i < 2; ++i) {
      const RealVector& d = delta[idx(i)][idx(k)];
      if (d.size() != nr()) throw std::invalid_argument("scalar problem: delta has wrong size");
      if ((d.array() <= 0.0).any() || !d.allFinite())
        throw std::invalid_argument("scalar problem: delta coefficients must be positive");
    }
  }
}

std::pair<ComplexMatrix, ComplexMatrix> build_xi_split(int n1, int n2, int l) {
  if (n1 < 1 || n2 < 1) throw std::invalid_argument("build_xi_split: antenna counts must be >= 1");
  if (l < n1 + n2)
    throw std::invalid_argument("source pilot length l (" + std::to_string(l) +
                                ") must be >= n1 + n2 (" + std::to_string(n1 + n2) + ")");
  ComplexMatrix xi = ComplexMatrix::Zero(n1 + n2, l);
  xi.leftCols(n1 + n2) = dft_unitary(n1 + n2);
  return {xi.topRows(n1), xi.bottomRows(n2)};
}

ComplexMatrix assemble_training(const ComplexMatrix& u_phi_k, const RealVector& gamma_k,
                                const ComplexMatrix& xi_k) {
  if ((gamma_k.array() < 0.0).any())
    throw std::invalid_argument("assemble_training: negative power gamma");
  if (gamma_k.size() != u_phi_k.cols() || xi_k.rows() != gamma_k.size())
    throw std::invalid_argument("assemble_training: dimension mismatch");
  return u_phi_k.conjugate() * gamma_k.cwiseSqrt().cast<Complex>().asDiagonal() * xi_k.conjugate();
}

ComplexMatrix rotated_effective_matrix(const ComplexMatrix& e, const ComplexMatrix& u_psi) {
  return u_psi.adjoint() * e * u_psi;
}

ScalarProblem scalar_problem_from(const BackwardEstimate& est1, const BackwardEstimate& est2,
                                  const CorrelationSet& corr, const SystemConfig& cfg,
                                  DeltaVariant variant) {
  ScalarProblem prob;
  prob.variant = variant;
  prob.sigmar_sq = cfg.sigmar_sq;
  prob.p = {cfg.p1, cfg.p2};

  std::array<ComplexMatrix, 2> u_psi;
  for (int k = 0; k < 2; ++k) {
    const EigenData phi = eigh(corr.phi_r(k + 1).transpose());
    const EigenData psi = eigh(corr.psi_r(k + 1));
    prob.lambda[idx(k)] = phi.values;
    prob.sigma[idx(k)] = psi.values;
    u_psi[idx(k)] = psi.basis;
  }

  const std::array<const BackwardEstimate*, 2> est{&est1, &est2};
  for (int i = 0; i < 2; ++i) {
    const double sigma_bar = effective_noise_var(*est[idx(i)], cfg.sigma_source_sq(i + 1), cfg.sigmar_sq);
    const ComplexMatrix e = effective_matrix_e(est[idx(i)]->h_hat, sigma_bar / cfg.sigmar_sq);
    for (int k = 0; k < 2; ++k) {
      const RealVector inv_diag =
          inverse_diagonal(rotated_effective_matrix(e, u_psi[idx(k)]), prob.regularized);
      prob.delta[idx(i)][idx(k)] = variant == DeltaVariant::paper_scalar
                                       ? inv_diag
                                       : RealVector(inv_diag.cwiseInverse());
    }
  }
  prob.validate();
  return prob;
}

double objective_direction(const ScalarProblem& prob, int k, int s, double gamma) {
  double total = 0.0;
  for (int i = 0; i < 2; ++i)
    for (int l = 0; l < prob.nr(); ++l) total += 1.0 / (prob.a(k, s, l) + gamma * prob.b(i, k, l));
  return total;
}

double objective_source(const ScalarProblem& prob, const Allocation& gamma, int i) {
  double total = 0.0;
  for (int k = 0; k < 2; ++k)
    for (int s = 0; s < prob.n(k); ++s)
      for (int l = 0; l < prob.nr(); ++l)
        total += 1.0 / (prob.a(k, s, l) + gamma[idx(k)](s) * prob.b(i, k, l));
  return total;
}

double objective_j(const ScalarProblem& prob, const Allocation& gamma) {
  return objective_source(prob, gamma, 0) + objective_source(prob, gamma, 1);
}

double upper_bound_trace_form(const ScalarProblem& prob, const Allocation& gamma, int i) {
  const double sr_inv = 1.0 / prob.sigmar_sq;
  double total = 0.0;
  for (int k = 0; k < 2; ++k) {
    const ComplexMatrix lam_k = gamma[idx(k)].cast<Complex>().asDiagonal();
    const ComplexMatrix d = prob.delta[idx(i)][idx(k)].cast<Complex>().asDiagonal();
    const ComplexMatrix prior_prec =
        kron(prob.lambda[idx(k)].cwiseInverse().cast<Complex>().asDiagonal(),
             prob.sigma[idx(k)].cwiseInverse().cast<Complex>().asDiagonal());
    ComplexMatrix m = prob.variant == DeltaVariant::paper_scalar
                          ? ComplexMatrix(kron(lam_k, d) + sr_inv * prior_prec)
                          : ComplexMatrix(sr_inv * kron(lam_k, d) + prior_prec);
    total += m.inverse().trace().real();
  }
  return total;
}

double gradient_residual(const ScalarProblem& prob, double gamma, int k, int s, double mu_k) {
  double g = 0.0;
  for (int i = 0; i < 2; ++i) {
    for (int l = 0; l < prob.nr(); ++l) {
      const double b = prob.b(i, k, l);
      const double den = prob.a(k, s, l) + gamma * b;
      g += b / (den * den);
    }
  }
  return mu_k - g;
}

double second_derivative(const ScalarProblem& prob, double gamma, int k, int s) {
  double h = 0.0;
  for (int i = 0; i < 2; ++i) {
    for (int l = 0; l < prob.nr(); ++l) {
      const double b = prob.b(i, k, l);
      const double den = prob.a(k, s, l) + gamma * b;
      h += 2.0 * b * b / (den * den * den);
    }
  }
  return h;
}

InnerResult inner_bisection(const ScalarProblem& prob, int k, int s, double mu_k, double upper,
                            double tol, int max_iter) {
  if (!(mu_k > 0.0)) throw std::invalid_argument("inner_bisection: mu must be positive");
  if (!(tol > 0.0)) throw std::invalid_argument("inner_bisection: tol must be positive");
  InnerResult res;
  // complementary slackness: the direction stays off when it cannot pay mu
  double f_lo = gradient_residual(prob, 0.0, k, s, mu_k);
  if (f_lo >= 0.0) return res;
  double f_hi = gradient_residual(prob, upper, k, s, mu_k);
  if (f_hi <= 0.0) {
    res.gamma = upper;
    return res;
  }
  double lo = 0.0;
  double hi = upper;
  while (hi - lo > tol) {
    if (res.iterations >= max_iter)
      throw NumericalError("inner bisection did not converge for direction (" + std::to_string(k) +
                           ", " + std::to_string(s) + ") after " + std::to_string(max_iter) +
                           " iterations");
    ++res.iterations;
    const double mid = 0.5 * (lo + hi);
    const double f = gradient_residual(prob, mid, k, s, mu_k);
    if (f <= 0.0) {
      lo = mid;
      f_lo = f;
    } else {
      hi = mid;
      f_hi = f;
    }
  }
  // secant step inside the final bracket
  res.gamma = lo - f_lo * (hi - lo) / (f_hi - f_lo);
  res.gamma = std::clamp(res.gamma, lo, hi);
  return res;
}

PowerAllocation optimize_allocation(const ScalarProblem& prob, const BisectionOptions& opt) {
  prob.validate();
  PowerAllocation out;
  out.converged = true;
  for (int k = 0; k < 2; ++k) {
    const double p = prob.p[idx(k)];
    const Eigen::Index n = prob.n(k);
    out.initial_gamma[idx(k)] = RealVector::Constant(n, std::sqrt(p / static_cast<double>(n)));
    RealVector gamma = RealVector::Zero(n);

    double mu_hi = 0.0;
    for (int s = 0; s < n; ++s) mu_hi = std::max(mu_hi, -gradient_residual(prob, 0.0, k, s, 0.0));
    // Below max_s g_s(p) some direction sits at the cap gamma = p, so the
    // total is already >= p. Starting there keeps the bracket valid and makes
    // mu the true multiplier when one direction takes the whole budget.
    double mu_lo = opt.mu_floor;
    for (int s = 0; s < n; ++s) mu_lo = std::max(mu_lo, -gradient_residual(prob, p, k, s, 0.0));
    mu_lo = std::min(mu_lo, mu_hi);
    const double tol_inner = opt.tol_inner_rel * p;
    const double tol_outer = opt.tol_outer_rel * p;

    auto allocate = [&](double mu) {
      for (int s = 0; s < n; ++s) {
        const InnerResult r = inner_bisection(prob, k, s, mu, p, tol_inner, opt.max_iter);
        gamma(s) = r.gamma;
        out.inner_iterations += r.iterations;
      }
      return gamma.sum();
    };

    double mu = mu_lo;
    int it = 1;
    bool done = std::abs(allocate(mu) - p) <= tol_outer;
    while (!done && it < opt.max_iter) {
      ++it;
      mu = 0.5 * (mu_lo + mu_hi);
      const double excess = allocate(mu) - p;
      if (std::abs(excess) <= tol_outer) {
        done = true;
        break;
      }
      // total power decreases in mu
      if (excess < 0.0)
        mu_hi = mu;
      else
        mu_lo = mu;
    }
    out.outer_iterations[idx(k)] = it;
    out.mu[idx(k)] = mu;
    out.gamma[idx(k)] = gamma;
    if (!done) out.converged = false;

    for (int s = 0; s < n; ++s) {
      const double f = gradient_residual(prob, gamma(s), k, s, mu);
      const double r = gamma(s) > 0.0 ? std::abs(f) / mu : std::max(0.0, -f) / mu;
      out.kkt_residual = std::max(out.kkt_residual, r);
    }
    out.slackness_residual = std::max(out.slackness_residual, std::abs(mu * (gamma.sum() - p)));
  }
  if (out.kkt_residual > opt.kkt_tol) out.converged = false;
  return out;
}

ProposedDesign proposed_training(const BackwardEstimate& est1, const BackwardEstimate& est2,
                                 const CorrelationSet& corr, const SystemConfig& cfg,
                                 DeltaVariant variant, const BisectionOptions& opt) {
  ProposedDesign d;
  d.problem = scalar_problem_from(est1, est2, corr, cfg, variant);
  d.allocation = optimize_allocation(d.problem, opt);
  if (!d.allocation.converged)
    throw NumericalError("power allocation did not converge (kkt residual " +
                         std::to_string(d.allocation.kkt_residual) + ")");
  const auto [xi1, xi2] = build_xi_split(cfg.n1, cfg.n2, cfg.l);
  d.training.scheme = SourceScheme::proposed;
  d.training.x1 = assemble_training(eigh(corr.phi_r1.transpose()).basis, d.allocation.gamma[0], xi1);
  d.training.x2 = assemble_training(eigh(corr.phi_r2.transpose()).basis, d.allocation.gamma[1], xi2);
  return d;
}

SourceTraining orthogonal_training(const SystemConfig& cfg) {
  const auto [xi1, xi2] = build_xi_split(cfg.n1, cfg.n2, cfg.l);
  SourceTraining t;
  t.scheme = SourceScheme::orthogonal;
  t.x1 = std::sqrt(cfg.p1 / cfg.n1) * xi1;
  t.x2 = std::sqrt(cfg.p2 / cfg.n2) * xi2;
  return t;
}

SourceTraining diagonal_training(const SystemConfig& cfg, const RealVector& loadings1,
                                 const RealVector& loadings2) {
  auto check = [](const RealVector& w, int n, double p, const char* who) {
    if (w.size() != n) throw std::invalid_argument(std::string(who) + ": wrong number of loadings");
    if ((w.array() < 0.0).any()) throw std::invalid_argument(std::string(who) + ": negative loading");
    if (std::abs(w.sum() - p) > 1e-9 * p)
      throw std::invalid_argument(std::string(who) + ": loadings must sum to the power budget");
  };
  check(loadings1, cfg.n1, cfg.p1, "diagonal pilot S1");
  check(loadings2, cfg.n2, cfg.p2, "diagonal pilot S2");
  const auto [xi1, xi2] = build_xi_split(cfg.n1, cfg.n2, cfg.l);
  SourceTraining t;
  t.scheme = SourceScheme::diagonal;
  t.x1 = loadings1.cwiseSqrt().cast<Complex>().asDiagonal() * xi1;
  t.x2 = loadings2.cwiseSqrt().cast<Complex>().asDiagonal() * xi2;
  return t;
}

SourceTraining baseline_training(SourceScheme scheme, const SystemConfig& cfg, RngStream& stream) {
  switch (scheme) {
    case SourceScheme::orthogonal:
      return orthogonal_training(cfg);
    case SourceScheme::diagonal: {
      RngStream s1 = stream.substream(kTagLoadings1);
      RngStream s2 = stream.substream(kTagLoadings2);
      return diagonal_training(cfg, dirichlet_loadings(cfg.n1, cfg.p1, s1),
                               dirichlet_loadings(cfg.n2, cfg.p2, s2));
    }
    case SourceScheme::proposed:
      break;
  }
  throw std::invalid_argument("baseline_training: proposed pilots need stage-one estimates");
}

}  // namespace twr
