#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "mixcontrast/errors.hpp"
#include "mixcontrast/expression_matrix.hpp"
#include "mixcontrast/stats.hpp"

namespace mixcontrast {

inline constexpr double kRhoCap = 0.99;
inline constexpr double kVarianceFloor = 1e-10;

// Parameters of one mixture component: class means beta, gene-specific
// random-effect scales sigma_b with shared correlation rho, isotropic
// sample-shared variance sigma_c_sq and error variance sigma_e_sq.
struct ComponentParams {
  double pi = 1.0;
  Eigen::VectorXd beta;     // m
  Eigen::VectorXd sigma_b;  // m, > 0
  double rho = 0.0;         // shared across components, |rho| <= 0.99
  double sigma_c_sq = 0.0;
  double sigma_e_sq = 1.0;
};

// B_i: diagonal sigma_bh^2, off-diagonal rho * sigma_bh * sigma_bk.
inline Eigen::MatrixXd build_B(const Eigen::VectorXd& sigma_b, double rho) {
  if ((sigma_b.array() <= 0.0).any()) {
    throw DomainError("sigma_b components must be positive");
  }
  if (std::abs(rho) > kRhoCap) {
    throw DomainError("|rho| must be <= " + std::to_string(kRhoCap));
  }
  const Eigen::Index m = sigma_b.size();
  Eigen::MatrixXd B(m, m);
  for (Eigen::Index h = 0; h < m; ++h) {
    for (Eigen::Index k = 0; k < m; ++k) {
      B(h, k) = (h == k) ? sigma_b[h] * sigma_b[h] : rho * sigma_b[h] * sigma_b[k];
    }
  }
  return B;
}

// Covariance of a profile conditional on component membership and on c_i:
// Sigma_i = U B_i U^T + sigma_e^2 I_p.
inline Eigen::MatrixXd conditional_covariance(const ComponentParams& comp,
                                              const DesignMatrices& design) {
  const Eigen::MatrixXd B = build_B(comp.sigma_b, comp.rho);
  Eigen::MatrixXd sigma = design.U() * B * design.U().transpose();
  sigma.diagonal().array() += comp.sigma_e_sq;
  return sigma;
}

struct MixtureModel {
  int g = 0;
  std::vector<ComponentParams> components;
  DesignMatrices design;
  Eigen::MatrixXd tau;    // n x g, rows on the simplex
  Eigen::VectorXi z_map;  // n, MAP component index (0-based)
  Eigen::VectorXi n_map;  // g, MAP counts
  Eigen::MatrixXd c_hat;  // g x p, component-shared BLUPs from the final E-step
  double log_likelihood = 0.0;
  double bic = 0.0;

  Eigen::Index m() const { return design.m(); }
  Eigen::Index p() const { return design.p(); }
};

namespace detail {

// Cholesky-based multivariate normal log-density.
struct GaussianLogDensity {
  Eigen::LLT<Eigen::MatrixXd> llt;
  double log_det = 0.0;
  Eigen::Index dim = 0;

  explicit GaussianLogDensity(const Eigen::MatrixXd& cov, const std::string& what) {
    dim = cov.rows();
    llt.compute(cov);
    if (llt.info() != Eigen::Success) {
      throw NumericalError("covariance not positive definite: " + what);
    }
    log_det = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  }

  double operator()(const Eigen::VectorXd& resid) const {
    const double quad = resid.dot(llt.solve(resid));
    return -0.5 * (static_cast<double>(dim) * std::log(2.0 * std::numbers::pi) +
                   log_det + quad);
  }
};

}  // namespace detail

// Posterior membership probabilities tau_i(y; Psi, c_i), Eq.-style
// log-sum-exp arithmetic so densities far below underflow still normalize.
inline Eigen::VectorXd posterior_tau(const Eigen::VectorXd& y,
                                     const MixtureModel& model,
                                     const Eigen::MatrixXd& c_hats) {
  const int g = model.g;
  Eigen::VectorXd logw(g);
  for (int i = 0; i < g; ++i) {
    const auto& comp = model.components[static_cast<std::size_t>(i)];
    const Eigen::MatrixXd sigma = conditional_covariance(comp, model.design);
    detail::GaussianLogDensity dens(sigma, "component " + std::to_string(i + 1));
    const Eigen::VectorXd mean = model.design.X * comp.beta + c_hats.row(i).transpose();
    logw[i] = std::log(comp.pi) + dens(y - mean);
  }
  return normalize_log_weights(logw);
}

}  // namespace mixcontrast
