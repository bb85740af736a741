#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "mixcontrast/em.hpp"
#include "mixcontrast/errors.hpp"
#include "mixcontrast/mixture_model.hpp"

namespace mixcontrast {

// BLUPs of the fixed and random effects for every (gene, component) pair.
struct RandomEffectsEstimates {
  std::vector<Eigen::MatrixXd> b_hat;  // g entries of n x m
  Eigen::MatrixXd c_hat;               // g x p
  Eigen::MatrixXd beta_hat;            // g x m
};

// Computes b_hat for every (j, i) pair and solves the c_hat normal equations
// exactly at the final posteriors, so the estimates agree with joint-Gaussian
// conditioning at the fitted parameters.
inline RandomEffectsEstimates estimate_blups(const ExpressionMatrix& data,
                                             const MixtureModel& model) {
  const Eigen::Index n = data.n();
  const Eigen::Index p = data.p();
  const Eigen::Index m = model.m();
  const int g = model.g;
  if (model.tau.rows() != n || model.tau.cols() != g) {
    throw DomainError("model posteriors do not match the data dimensions");
  }

  RandomEffectsEstimates out;
  out.b_hat.assign(static_cast<std::size_t>(g), Eigen::MatrixXd(n, m));
  out.c_hat.resize(g, p);
  out.beta_hat.resize(g, m);

  for (int i = 0; i < g; ++i) {
    const auto& comp = model.components[static_cast<std::size_t>(i)];
    out.beta_hat.row(i) = comp.beta.transpose();
    const Eigen::MatrixXd sigma = conditional_covariance(comp, model.design);
    Eigen::LLT<Eigen::MatrixXd> llt(sigma);
    if (llt.info() != Eigen::Success) {
      throw NumericalError("covariance not positive definite: component " +
                           std::to_string(i + 1));
    }
    const Eigen::VectorXd xbeta = model.design.X * comp.beta;

    // c_i = (T_i Sigma^{-1} + I/sc^2)^{-1} Sigma^{-1} sum_j tau_ij (y_j - X beta_i)
    if (comp.sigma_c_sq <= kVarianceFloor) {
      out.c_hat.row(i).setZero();
    } else {
      const double ti = model.tau.col(i).sum();
      Eigen::VectorXd wsum = Eigen::VectorXd::Zero(p);
      for (Eigen::Index j = 0; j < n; ++j) {
        wsum += model.tau(j, i) * (data.values.row(j).transpose() - xbeta);
      }
      Eigen::MatrixXd lhs = ti * llt.solve(Eigen::MatrixXd::Identity(p, p));
      lhs.diagonal().array() += 1.0 / comp.sigma_c_sq;
      out.c_hat.row(i) = lhs.ldlt().solve(llt.solve(wsum)).transpose();
    }

    const Eigen::MatrixXd B = build_B(comp.sigma_b, comp.rho);
    const Eigen::MatrixXd blup_op = llt.solve(model.design.X * B).transpose();  // m x p
    const Eigen::VectorXd mean = xbeta + out.c_hat.row(i).transpose();
    for (Eigen::Index j = 0; j < n; ++j) {
      out.b_hat[static_cast<std::size_t>(i)].row(j) =
          (blup_op * (data.values.row(j).transpose() - mean)).transpose();
    }
  }
  return out;
}

// Zero-sum contrast between a class pair: +1/-1 in the beta partition and in
// one gene slot of the b partition, zeros over c.
struct ContrastVector {
  int class_a = 0;  // 0-based, +1 coefficient
  int class_b = 1;  // 0-based, -1 coefficient
  int slot = 0;     // 0-based position within the component membership
  int n_prime = 1;
  Eigen::Index m = 2;
  Eigen::Index p = 0;

  // full (m + m*n_prime + p)-dimensional form; test-oracle scale only
  Eigen::VectorXd dense() const {
    Eigen::VectorXd d = Eigen::VectorXd::Zero(m + m * n_prime + p);
    d[class_a] = 1.0;
    d[class_b] = -1.0;
    d[m + static_cast<Eigen::Index>(slot) * m + class_a] = 1.0;
    d[m + static_cast<Eigen::Index>(slot) * m + class_b] = -1.0;
    return d;
  }
};

// The distinct blocks of the bordered precision matrix for one component,
// with the per-gene replication kept implicit, plus the Schur-reduced
// (m+p)-dimensional inverse used for contrast variances.
struct OmegaBlocks {
  int component = 0;
  int n_prime = 0;
  Eigen::Index m = 0;
  Eigen::Index p = 0;

  Eigen::MatrixXd F;   // X^T A^{-1} X, per-gene beta/b coupling (m x m)
  Eigen::MatrixXd G;   // X^T A^{-1} X + B^{-1}, per-gene b block (m x m)
  Eigen::MatrixXd K;   // X^T A^{-1} V = X^T / sigma_e^2 (m x p)
  double c_diag = 0.0; // per-gene c block is c_diag * I_p before the n' factor

  Eigen::MatrixXd G_inv;  // m x m
  Eigen::MatrixXd W;      // inverse of the (m+p) Schur complement over (beta, c)

  Eigen::MatrixXd omega_beta() const { return static_cast<double>(n_prime) * F; }
  Eigen::MatrixXd omega_beta_b_block() const { return F; }
  Eigen::MatrixXd omega_beta_c() const { return static_cast<double>(n_prime) * K; }
  Eigen::MatrixXd omega_b_block() const { return G; }
  Eigen::MatrixXd omega_b_c_block() const { return K; }
  Eigen::MatrixXd omega_c() const {
    return static_cast<double>(n_prime) * c_diag * Eigen::MatrixXd::Identity(p, p);
  }
};

// Builds the blocks for component i with n' = n_i (member) or n_i + 1 (a
// foreign gene treated as appended to the component).
inline OmegaBlocks assemble_omega(const MixtureModel& model, int i, bool member) {
  const auto& comp = model.components[static_cast<std::size_t>(i)];
  const int n_i = model.n_map.size() > 0 ? model.n_map[i] : 0;
  if (member && n_i == 0) {
    throw DomainError("component " + std::to_string(i + 1) + " has no MAP members");
  }
  OmegaBlocks blocks;
  blocks.component = i;
  blocks.n_prime = member ? n_i : n_i + 1;
  blocks.m = model.m();
  blocks.p = model.p();
  const double np = static_cast<double>(blocks.n_prime);

  const double inv_se = 1.0 / comp.sigma_e_sq;
  blocks.F = model.design.X.transpose() * model.design.X * inv_se;
  const Eigen::MatrixXd B = build_B(comp.sigma_b, comp.rho);
  blocks.G = blocks.F + B.inverse();
  blocks.K = model.design.X.transpose() * inv_se;
  const double inv_sc = comp.sigma_c_sq <= kVarianceFloor ? 1.0 / kVarianceFloor
                                                          : 1.0 / comp.sigma_c_sq;
  blocks.c_diag = inv_se + inv_sc;

  Eigen::LLT<Eigen::MatrixXd> g_llt(blocks.G);
  if (g_llt.info() != Eigen::Success) {
    throw NumericalError("indefinite per-gene block in component " + std::to_string(i + 1));
  }
  blocks.G_inv = g_llt.solve(Eigen::MatrixXd::Identity(blocks.m, blocks.m));

  // Schur complement over (beta, c) after eliminating the n' identical b blocks
  const Eigen::Index m = blocks.m;
  const Eigen::Index p = blocks.p;
  Eigen::MatrixXd S(m + p, m + p);
  S.topLeftCorner(m, m) = np * (blocks.F - blocks.F * blocks.G_inv * blocks.F);
  S.topRightCorner(m, p) = np * (blocks.K - blocks.F * blocks.G_inv * blocks.K);
  S.bottomLeftCorner(p, m) = S.topRightCorner(m, p).transpose();
  S.bottomRightCorner(p, p) = -np * blocks.K.transpose() * blocks.G_inv * blocks.K;
  S.bottomRightCorner(p, p).diagonal().array() += np * blocks.c_diag;

  Eigen::LLT<Eigen::MatrixXd> s_llt(S);
  if (s_llt.info() != Eigen::Success) {
    throw NumericalError("indefinite reduced system in component " + std::to_string(i + 1));
  }
  blocks.W = s_llt.solve(Eigen::MatrixXd::Identity(m + p, m + p));
  return blocks;
}

// lambda^2 = d^T Omega_i d without materializing the (m + m n' + p) system.
// The b partition is eliminated by Schur complement; the result depends on
// the slot only through the component, so every slot shares one value.
inline double contrast_variance(const OmegaBlocks& blocks, const ContrastVector& d) {
  if (d.n_prime != blocks.n_prime || d.m != blocks.m || d.p != blocks.p) {
    throw DomainError("contrast vector dimensioned for a different component");
  }
  const Eigen::Index m = blocks.m;
  const Eigen::Index p = blocks.p;
  const Eigen::MatrixXd W_bb = blocks.W.topLeftCorner(m, m);
  const Eigen::MatrixXd W_bc = blocks.W.topRightCorner(m, p);

  // (Omega)_{beta, b_t} and (Omega)_{b_t, b_t} from the block-inverse identity
  const Eigen::MatrixXd cross =
      -(W_bb * blocks.F + W_bc * blocks.K.transpose()) * blocks.G_inv;
  Eigen::MatrixXd J(m, m + p);
  J.leftCols(m) = blocks.F;
  J.rightCols(p) = blocks.K;
  const Eigen::MatrixXd bt_bt =
      blocks.G_inv + blocks.G_inv * J * blocks.W * J.transpose() * blocks.G_inv;

  const Eigen::MatrixXd lambda_mat = W_bb + cross + cross.transpose() + bt_bt;
  Eigen::VectorXd u = Eigen::VectorXd::Zero(m);
  u[d.class_a] = 1.0;
  u[d.class_b] = -1.0;
  const double lambda_sq = u.dot(lambda_mat * u);
  if (!(lambda_sq > 0.0) || !std::isfinite(lambda_sq)) {
    throw NumericalError("non-positive contrast variance in component " +
                         std::to_string(blocks.component + 1));
  }
  return lambda_sq;
}

// S_ij = (beta_1i - beta_2i + b_1ij - b_2ij) / lambda_ij for the two-class
// contrast; the c partition of d is zero so the shared effects drop out.
inline double normalized_contrast(Eigen::Index j, int i,
                                  const RandomEffectsEstimates& estimates,
                                  const OmegaBlocks& blocks) {
  if (blocks.m != 2) throw DomainError("contrast statistic requires m = 2 classes");
  ContrastVector d;
  d.n_prime = blocks.n_prime;
  d.m = blocks.m;
  d.p = blocks.p;
  const double lambda = std::sqrt(contrast_variance(blocks, d));
  const double numer = estimates.beta_hat(i, 0) - estimates.beta_hat(i, 1) +
                       estimates.b_hat[static_cast<std::size_t>(i)](j, 0) -
                       estimates.b_hat[static_cast<std::size_t>(i)](j, 1);
  return numer / lambda;
}

// W_j = sum_i tau_ij * S_ij with member/appended blocks chosen by MAP.
inline double weighted_statistic(Eigen::Index j, const MixtureModel& model,
                                 const RandomEffectsEstimates& estimates,
                                 const std::vector<OmegaBlocks>& member_blocks,
                                 const std::vector<OmegaBlocks>& appended_blocks) {
  double w = 0.0;
  for (int i = 0; i < model.g; ++i) {
    const OmegaBlocks& blocks = (model.z_map[j] == i)
                                    ? member_blocks[static_cast<std::size_t>(i)]
                                    : appended_blocks[static_cast<std::size_t>(i)];
    w += model.tau(j, i) * normalized_contrast(j, i, estimates, blocks);
  }
  return w;
}

struct RankedGene {
  Eigen::Index feature = 0;  // 0-based row index
  int rank = 0;              // 1-based
  double w = 0.0;
  bool up = false;  // positive W
};

// Descending |W|, ties broken by ascending feature index.
inline std::vector<RankedGene> rank_genes(const Eigen::VectorXd& w) {
  if (!w.allFinite()) throw DomainError("non-finite statistic in ranking");
  std::vector<Eigen::Index> order(static_cast<std::size_t>(w.size()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    return std::abs(w[a]) > std::abs(w[b]);
  });
  std::vector<RankedGene> out;
  out.reserve(order.size());
  for (std::size_t r = 0; r < order.size(); ++r) {
    out.push_back({order[r], static_cast<int>(r + 1), w[order[r]], w[order[r]] > 0.0});
  }
  return out;
}

inline std::vector<RankedGene> top_k(const std::vector<RankedGene>& ranked, int k) {
  if (k < 0 || static_cast<std::size_t>(k) > ranked.size()) {
    throw DomainError("top-k request out of range: k = " + std::to_string(k));
  }
  return {ranked.begin(), ranked.begin() + k};
}

}  // namespace mixcontrast
