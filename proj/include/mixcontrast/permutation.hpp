#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "mixcontrast/contrast.hpp"
#include "mixcontrast/errors.hpp"
#include "mixcontrast/mixture_model.hpp"
#include "mixcontrast/stats.hpp"

namespace mixcontrast {

// B column arrangements of the class labels; perms[b][s] is the source
// column whose value lands in position s.
struct PermutationPlan {
  int B = 0;
  std::vector<std::vector<int>> perms;
  std::uint64_t seed = 0;
  bool sampled_with_replacement = false;
};

namespace detail {

// number of distinct arrangements of the label multiset: p! / prod p_h!
inline double distinct_label_arrangements(const std::vector<int>& labels) {
  std::vector<int> counts;
  for (int c : labels) {
    if (static_cast<std::size_t>(c) > counts.size()) counts.resize(static_cast<std::size_t>(c), 0);
    counts[static_cast<std::size_t>(c - 1)]++;
  }
  double lg = std::lgamma(static_cast<double>(labels.size()) + 1.0);
  for (int cnt : counts) lg -= std::lgamma(static_cast<double>(cnt) + 1.0);
  return std::round(std::exp(lg));
}

inline std::vector<int> induced_labels(const std::vector<int>& labels,
                                       const std::vector<int>& perm) {
  std::vector<int> out(labels.size());
  for (std::size_t s = 0; s < labels.size(); ++s) {
    out[s] = labels[static_cast<std::size_t>(perm[s])];
  }
  return out;
}

}  // namespace detail

// Draws B non-identity label arrangements, distinct when the label multiset
// admits that many, otherwise with replacement (flagged).
inline PermutationPlan permute_labels(const std::vector<int>& labels, int B,
                                      std::uint64_t seed) {
  if (B < 1) throw DomainError("number of permutations must be >= 1");
  const std::size_t p = labels.size();
  if (p < 4) throw DomainError("need at least 4 samples to permute");
  const double distinct = detail::distinct_label_arrangements(labels) - 1.0;
  if (distinct < 2.0) throw DomainError("label multiset admits fewer than 2 non-identity arrangements");

  PermutationPlan plan;
  plan.B = B;
  plan.seed = seed;
  plan.sampled_with_replacement = static_cast<double>(B) > distinct;

  std::mt19937_64 rng(derive_seed(seed, 0xB0B));
  std::set<std::vector<int>> seen;
  std::vector<int> perm(p);
  std::iota(perm.begin(), perm.end(), 0);
  while (static_cast<int>(plan.perms.size()) < B) {
    std::shuffle(perm.begin(), perm.end(), rng);
    const std::vector<int> key = detail::induced_labels(labels, perm);
    if (key == labels) continue;  // identity in label space
    if (!plan.sampled_with_replacement && !seen.insert(key).second) continue;
    plan.perms.push_back(perm);
  }
  return plan;
}

// Scores a profile against the fitted model: recomputes tau and the
// gene-specific BLUPs from the profile while keeping beta, c, the variance
// components and the contrast denominators fixed. The same path scores the
// original profiles and the permuted replicates.
class ContrastScorer {
 public:
  ContrastScorer(const MixtureModel& model, const RandomEffectsEstimates& estimates)
      : model_(model) {
    const int g = model.g;
    if (model.m() != 2) throw DomainError("contrast statistic requires m = 2 classes");
    comps_.reserve(static_cast<std::size_t>(g));
    for (int i = 0; i < g; ++i) {
      const auto& comp = model.components[static_cast<std::size_t>(i)];
      PerComponent pc{detail::GaussianLogDensity(conditional_covariance(comp, model.design),
                                                 "component " + std::to_string(i + 1)),
                      {}, {}, 0.0, 0.0, 0.0, 0.0};
      pc.mean = model.design.X * comp.beta + estimates.c_hat.row(i).transpose();
      const Eigen::MatrixXd B = build_B(comp.sigma_b, comp.rho);
      pc.blup_op = pc.dens.llt.solve(model.design.X * B).transpose();
      pc.log_pi = std::log(comp.pi);
      pc.beta_diff = comp.beta[0] - comp.beta[1];
      ContrastVector d;
      d.m = 2;
      d.p = model.p();
      if (model.n_map[i] > 0) {
        const OmegaBlocks member = assemble_omega(model, i, true);
        d.n_prime = member.n_prime;
        pc.lambda_member = std::sqrt(contrast_variance(member, d));
      }
      const OmegaBlocks appended = assemble_omega(model, i, false);
      d.n_prime = appended.n_prime;
      pc.lambda_appended = std::sqrt(contrast_variance(appended, d));
      comps_.push_back(std::move(pc));
    }
  }

  struct Score {
    double w = 0.0;
    Eigen::VectorXd tau;
    Eigen::VectorXd s_hat;
  };

  // map_cluster: the gene's MAP component from the original fit (0-based)
  Score score(const Eigen::VectorXd& y, int map_cluster) const {
    const int g = static_cast<int>(comps_.size());
    Score out;
    out.tau.resize(g);
    out.s_hat.resize(g);
    Eigen::VectorXd logw(g);
    for (int i = 0; i < g; ++i) {
      const auto& pc = comps_[static_cast<std::size_t>(i)];
      const Eigen::VectorXd resid = y - pc.mean;
      logw[i] = pc.log_pi + pc.dens(resid);
      const Eigen::VectorXd b = pc.blup_op * resid;
      const double lambda = (i == map_cluster) ? pc.lambda_member : pc.lambda_appended;
      out.s_hat[i] = (pc.beta_diff + b[0] - b[1]) / lambda;
    }
    out.tau = normalize_log_weights(logw);
    out.w = out.tau.dot(out.s_hat);
    return out;
  }

 private:
  struct PerComponent {
    detail::GaussianLogDensity dens;
    Eigen::VectorXd mean;
    Eigen::MatrixXd blup_op;
    double log_pi = 0.0;
    double beta_diff = 0.0;
    double lambda_member = 0.0;
    double lambda_appended = 0.0;
  };
  const MixtureModel& model_;
  std::vector<PerComponent> comps_;
};

struct StatisticTable {
  Eigen::VectorXd w;    // n
  Eigen::MatrixXd tau;  // n x g, the posteriors entering W
};

inline StatisticTable compute_statistics(const ExpressionMatrix& data,
                                         const MixtureModel& model,
                                         const RandomEffectsEstimates& estimates) {
  const ContrastScorer scorer(model, estimates);
  StatisticTable out;
  out.w.resize(data.n());
  out.tau.resize(data.n(), model.g);
  parallel_for(static_cast<std::size_t>(data.n()), [&](std::size_t js) {
    const Eigen::Index j = static_cast<Eigen::Index>(js);
    const auto s = scorer.score(data.values.row(j).transpose(), model.z_map[j]);
    out.w[j] = s.w;
    out.tau.row(j) = s.tau.transpose();
  });
  return out;
}

// n x B matrix of permutation replicates W^(b). The fitted model, c_hat, and
// the contrast denominators are reused; only the profile is permuted.
inline Eigen::MatrixXd replicate_statistics(const ExpressionMatrix& data,
                                            const MixtureModel& model,
                                            const RandomEffectsEstimates& estimates,
                                            const PermutationPlan& plan) {
  const ContrastScorer scorer(model, estimates);
  const Eigen::Index n = data.n();
  const Eigen::Index p = data.p();
  Eigen::MatrixXd out(n, plan.B);
  parallel_for(static_cast<std::size_t>(n) * static_cast<std::size_t>(plan.B),
               [&](std::size_t idx) {
                 const Eigen::Index j = static_cast<Eigen::Index>(idx / static_cast<std::size_t>(plan.B));
                 const int b = static_cast<int>(idx % static_cast<std::size_t>(plan.B));
                 const auto& perm = plan.perms[static_cast<std::size_t>(b)];
                 Eigen::VectorXd y(p);
                 for (Eigen::Index s = 0; s < p; ++s) {
                   y[s] = data.values(j, perm[static_cast<std::size_t>(s)]);
                 }
                 out(j, b) = scorer.score(y, model.z_map[j]).w;
               });
  if (!out.allFinite()) throw NumericalError("non-finite permutation replicate");
  return out;
}

// Location-scale t fitted to the pooled replicates.
struct NullDistribution {
  double mu = 0.0;
  double s = 1.0;
  double nu = 30.0;
  double log_likelihood = 0.0;
};

namespace detail {

// location/scale ML at fixed nu via the usual t EM weights
inline double t_profile_loglik(const std::vector<double>& x, double nu,
                               double* mu_out, double* s_out) {
  double mu = mixcontrast::mean(std::span<const double>(x.data(), x.size()));
  double s2 = 0.0;
  for (double v : x) s2 += (v - mu) * (v - mu);
  s2 /= static_cast<double>(x.size());
  for (int iter = 0; iter < 200; ++iter) {
    double wsum = 0.0, wx = 0.0;
    for (double v : x) {
      const double d2 = (v - mu) * (v - mu) / s2;
      const double w = (nu + 1.0) / (nu + d2);
      wsum += w;
      wx += w * v;
    }
    const double mu_new = wx / wsum;
    double s2_new = 0.0;
    for (double v : x) {
      const double d2 = (v - mu) * (v - mu) / s2;
      const double w = (nu + 1.0) / (nu + d2);
      s2_new += w * (v - mu_new) * (v - mu_new);
    }
    s2_new /= static_cast<double>(x.size());
    const bool done = std::abs(mu_new - mu) < 1e-12 * (1.0 + std::abs(mu)) &&
                      std::abs(s2_new - s2) < 1e-12 * s2;
    mu = mu_new;
    s2 = std::max(s2_new, 1e-300);
    if (done) break;
  }
  const double s = std::sqrt(s2);
  const double nn = static_cast<double>(x.size());
  double ll = nn * (std::lgamma((nu + 1.0) / 2.0) - std::lgamma(nu / 2.0) -
                    0.5 * std::log(nu * std::numbers::pi) - std::log(s));
  for (double v : x) {
    const double d2 = (v - mu) * (v - mu) / s2;
    ll -= 0.5 * (nu + 1.0) * std::log1p(d2 / nu);
  }
  *mu_out = mu;
  *s_out = s;
  return ll;
}

}  // namespace detail

// ML fit of the location-scale t by golden-section profile search over
// nu in [1, 200].
inline NullDistribution fit_t_df(const std::vector<double>& pooled) {
  if (pooled.size() < 500) throw DomainError("need at least 500 pooled null values");
  for (double v : pooled) {
    if (!std::isfinite(v)) throw DomainError("non-finite pooled null value");
  }
  const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
  double lo = 1.0, hi = 200.0;
  double mu = 0.0, s = 1.0;
  auto eval = [&](double nu) { return detail::t_profile_loglik(pooled, nu, &mu, &s); };
  double a = hi - gr * (hi - lo);
  double b = lo + gr * (hi - lo);
  double fa = eval(a), fb = eval(b);
  while (hi - lo > 1e-4) {
    if (fa < fb) {
      lo = a;
      a = b;
      fa = fb;
      b = lo + gr * (hi - lo);
      fb = eval(b);
    } else {
      hi = b;
      b = a;
      fb = fa;
      a = hi - gr * (hi - lo);
      fa = eval(a);
    }
  }
  NullDistribution out;
  out.nu = (lo + hi) / 2.0;
  out.log_likelihood = detail::t_profile_loglik(pooled, out.nu, &out.mu, &out.s);
  out.s = s;
  out.mu = mu;
  return out;
}

// Two-sided P-values from the fitted t null.
inline Eigen::VectorXd p_values(const Eigen::VectorXd& w, const NullDistribution& null) {
  const boost::math::students_t dist(null.nu);
  Eigen::VectorXd out(w.size());
  for (Eigen::Index j = 0; j < w.size(); ++j) {
    const double z = std::abs((w[j] - null.mu) / null.s);
    out[j] = 2.0 * boost::math::cdf(boost::math::complement(dist, z));
  }
  return out;
}

}  // namespace mixcontrast
