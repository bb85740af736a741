#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "mixcontrast/errors.hpp"
#include "mixcontrast/expression_matrix.hpp"
#include "mixcontrast/mixture_model.hpp"
#include "mixcontrast/stats.hpp"

namespace mixcontrast {

struct EmConfig {
  int max_iter = 2000;
  double rel_tol = 1e-8;
  int n_starts = 10;
  std::uint64_t seed = 0;
  int g_min = 1;
  int g_max = 1;

  void validate() const {
    if (max_iter < 1) throw DomainError("max_iter must be >= 1");
    if (rel_tol <= 0.0) throw DomainError("rel_tol must be > 0");
    if (n_starts < 1) throw DomainError("n_starts must be >= 1");
    if (g_min < 1 || g_max < g_min) throw DomainError("invalid g range");
  }
};

struct FitTrace {
  std::vector<double> log_likelihoods;
  bool converged = false;
  int iterations = 0;
  int best_start = 0;
  bool variance_floored = false;
};

// E-step outputs: posteriors, gene-specific BLUPs, per-component conditional
// covariance of b, and the proposed shared-effect update.
struct EStepResult {
  Eigen::MatrixXd tau;                  // n x g
  std::vector<Eigen::MatrixXd> b_hat;   // g entries of n x m
  std::vector<Eigen::MatrixXd> r_cond;  // g entries of m x m
  Eigen::MatrixXd c_next;               // g x p, one coordinate update of c_hat
  double log_likelihood = 0.0;
};

namespace detail {

// Per-component quantities reused across genes.
struct ComponentWork {
  Eigen::MatrixXd B;        // m x m
  GaussianLogDensity dens;  // of Sigma = X B X^T + sigma_e^2 I
  Eigen::MatrixXd blup_op;  // B X^T Sigma^{-1}, m x p
  Eigen::MatrixXd r_cond;   // B - B X^T Sigma^{-1} X B
  Eigen::VectorXd mean;     // X beta + c_hat

  ComponentWork(const ComponentParams& comp, const DesignMatrices& design,
                const Eigen::VectorXd& c_row, int index)
      : B(build_B(comp.sigma_b, comp.rho)),
        dens(conditional_covariance(comp, design),
             "component " + std::to_string(index + 1)) {
    const Eigen::MatrixXd xb = design.X * B;           // p x m
    blup_op = dens.llt.solve(xb).transpose();          // m x p
    r_cond = B - blup_op * xb;
    mean = design.X * comp.beta + c_row;
  }
};

inline double conditional_log_likelihood(const ExpressionMatrix& data,
                                         const DesignMatrices& design,
                                         const std::vector<ComponentParams>& comps,
                                         const Eigen::MatrixXd& c_hat) {
  const Eigen::Index n = data.n();
  const int g = static_cast<int>(comps.size());
  std::vector<GaussianLogDensity> dens;
  std::vector<Eigen::VectorXd> means;
  dens.reserve(static_cast<std::size_t>(g));
  for (int i = 0; i < g; ++i) {
    dens.emplace_back(conditional_covariance(comps[static_cast<std::size_t>(i)], design),
                      "component " + std::to_string(i + 1));
    means.push_back(design.X * comps[static_cast<std::size_t>(i)].beta +
                    c_hat.row(i).transpose());
  }
  std::vector<double> per_gene(static_cast<std::size_t>(n));
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t j) {
    Eigen::VectorXd logw(g);
    for (int i = 0; i < g; ++i) {
      logw[i] = std::log(comps[static_cast<std::size_t>(i)].pi) +
                dens[static_cast<std::size_t>(i)](
                    data.values.row(static_cast<Eigen::Index>(j)).transpose() -
                    means[static_cast<std::size_t>(i)]);
    }
    per_gene[j] = log_sum_exp(std::span<const double>(logw.data(), static_cast<std::size_t>(g)));
  });
  double ll = 0.0;
  for (double v : per_gene) ll += v;
  return ll;
}

}  // namespace detail

// One E-step at the current parameters and c_hat. The c update is a single
// coordinate-ascent iterate of the penalized normal equations.
inline EStepResult e_step(const ExpressionMatrix& data, const MixtureModel& model,
                          const Eigen::MatrixXd& c_hat) {
  const Eigen::Index n = data.n();
  const Eigen::Index p = data.p();
  const Eigen::Index m = model.m();
  const int g = model.g;

  std::vector<detail::ComponentWork> work;
  work.reserve(static_cast<std::size_t>(g));
  for (int i = 0; i < g; ++i) {
    work.emplace_back(model.components[static_cast<std::size_t>(i)], model.design,
                      c_hat.row(i).transpose(), i);
  }

  EStepResult out;
  out.tau.resize(n, g);
  out.b_hat.assign(static_cast<std::size_t>(g), Eigen::MatrixXd(n, m));
  out.r_cond.resize(static_cast<std::size_t>(g));
  for (int i = 0; i < g; ++i) out.r_cond[static_cast<std::size_t>(i)] = work[static_cast<std::size_t>(i)].r_cond;

  std::vector<double> per_gene_ll(static_cast<std::size_t>(n));
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t js) {
    const Eigen::Index j = static_cast<Eigen::Index>(js);
    const Eigen::VectorXd y = data.values.row(j).transpose();
    Eigen::VectorXd logw(g);
    for (int i = 0; i < g; ++i) {
      const auto& w = work[static_cast<std::size_t>(i)];
      const Eigen::VectorXd resid = y - w.mean;
      logw[i] = std::log(model.components[static_cast<std::size_t>(i)].pi) + w.dens(resid);
      out.b_hat[static_cast<std::size_t>(i)].row(j) = (w.blup_op * resid).transpose();
    }
    per_gene_ll[js] = log_sum_exp(std::span<const double>(logw.data(), static_cast<std::size_t>(g)));
    out.tau.row(j) = normalize_log_weights(logw).transpose();
  });
  out.log_likelihood = std::accumulate(per_gene_ll.begin(), per_gene_ll.end(), 0.0);

  // c update: c_i <- sum_j tau_ij (y_j - X beta_i - X bhat_ij) / (T_i + se^2/sc^2)
  out.c_next.resize(g, p);
  for (int i = 0; i < g; ++i) {
    const auto& comp = model.components[static_cast<std::size_t>(i)];
    if (comp.sigma_c_sq <= kVarianceFloor) {
      out.c_next.row(i).setZero();
      continue;
    }
    const Eigen::VectorXd xbeta = model.design.X * comp.beta;
    Eigen::VectorXd num = Eigen::VectorXd::Zero(p);
    double ti = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      const double t = out.tau(j, i);
      ti += t;
      num += t * (data.values.row(j).transpose() - xbeta -
                  model.design.X * out.b_hat[static_cast<std::size_t>(i)].row(j).transpose());
    }
    out.c_next.row(i) = (num / (ti + comp.sigma_e_sq / comp.sigma_c_sq)).transpose();
  }
  return out;
}

// M-step: exact conditional maximizers for pi, beta, sigma_e given the E-step
// moments; (sigma_b, rho) by per-component moment matching with the shared rho
// taken as the tau-weighted average of component correlations.
inline std::vector<ComponentParams> m_step(const ExpressionMatrix& data,
                                           const EStepResult& estep,
                                           const MixtureModel& model,
                                           bool* floored = nullptr) {
  const Eigen::Index n = data.n();
  const Eigen::Index p = data.p();
  const Eigen::Index m = model.m();
  const int g = model.g;
  const std::vector<int> p_h = data.class_sizes();

  std::vector<ComponentParams> out = model.components;
  double rho_num = 0.0, rho_den = 0.0;
  bool any_floor = false;

  for (int i = 0; i < g; ++i) {
    auto& comp = out[static_cast<std::size_t>(i)];
    const Eigen::MatrixXd& bh = estep.b_hat[static_cast<std::size_t>(i)];
    const Eigen::VectorXd c_row = estep.c_next.row(i).transpose();
    const double ti = estep.tau.col(i).sum();
    comp.pi = std::max(ti / static_cast<double>(n), 1e-12);

    // beta: tau-weighted least squares of (y - U bhat - c) on the indicators
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(m);
    for (Eigen::Index j = 0; j < n; ++j) {
      const double t = estep.tau(j, i);
      for (Eigen::Index s = 0; s < p; ++s) {
        const int h = data.class_of_sample[static_cast<std::size_t>(s)] - 1;
        beta[h] += t * (data.values(j, s) - bh(j, h) - c_row[s]);
      }
    }
    for (Eigen::Index h = 0; h < m; ++h) {
      beta[h] /= std::max(ti, 1e-300) * static_cast<double>(p_h[static_cast<std::size_t>(h)]);
    }
    comp.beta = beta;

    // B moments: S = sum_j tau (bhat bhat^T) / T + R
    Eigen::MatrixXd S = Eigen::MatrixXd::Zero(m, m);
    for (Eigen::Index j = 0; j < n; ++j) {
      S += estep.tau(j, i) * bh.row(j).transpose() * bh.row(j);
    }
    S /= std::max(ti, 1e-300);
    S += estep.r_cond[static_cast<std::size_t>(i)];
    for (Eigen::Index h = 0; h < m; ++h) {
      double v = S(h, h);
      if (v < kVarianceFloor) {
        v = kVarianceFloor;
        any_floor = true;
      }
      comp.sigma_b[h] = std::sqrt(v);
    }
    double corr_sum = 0.0;
    int corr_count = 0;
    for (Eigen::Index h = 0; h < m; ++h) {
      for (Eigen::Index k = h + 1; k < m; ++k) {
        corr_sum += S(h, k) / (comp.sigma_b[h] * comp.sigma_b[k]);
        ++corr_count;
      }
    }
    if (corr_count > 0) {
      rho_num += ti * (corr_sum / corr_count);
      rho_den += ti;
    }

    // sigma_e^2 from the expected residual quadratic form, with the new beta
    double tr_xrx = 0.0;
    for (Eigen::Index h = 0; h < m; ++h) {
      tr_xrx += static_cast<double>(p_h[static_cast<std::size_t>(h)]) *
                estep.r_cond[static_cast<std::size_t>(i)](h, h);
    }
    double rss = 0.0;
    const Eigen::VectorXd xbeta = model.design.X * beta;
    for (Eigen::Index j = 0; j < n; ++j) {
      const Eigen::VectorXd resid = data.values.row(j).transpose() - xbeta -
                                    model.design.X * bh.row(j).transpose() - c_row;
      rss += estep.tau(j, i) * (resid.squaredNorm() + tr_xrx);
    }
    double se = rss / (std::max(ti, 1e-300) * static_cast<double>(p));
    if (se < kVarianceFloor) {
      se = kVarianceFloor;
      any_floor = true;
    }
    comp.sigma_e_sq = se;

    // sigma_c^2 from the shared-effect posterior moments
    const double v_c = (comp.sigma_c_sq <= kVarianceFloor)
                           ? 0.0
                           : 1.0 / (ti / comp.sigma_e_sq + 1.0 / comp.sigma_c_sq);
    double sc = (c_row.squaredNorm() + static_cast<double>(p) * v_c) / static_cast<double>(p);
    if (sc < kVarianceFloor) {
      sc = kVarianceFloor;
      any_floor = true;
    }
    comp.sigma_c_sq = sc;
  }

  // renormalize pi and set the shared rho
  double pi_sum = 0.0;
  for (const auto& c : out) pi_sum += c.pi;
  const double rho = rho_den > 0.0
                         ? std::clamp(rho_num / rho_den, -kRhoCap, kRhoCap)
                         : 0.0;
  for (auto& c : out) {
    c.pi /= pi_sum;
    c.rho = rho;
  }
  if (floored && any_floor) *floored = true;
  return out;
}

namespace detail {

// k-means with k-means++ seeding; retries seeding when a cluster empties.
inline std::vector<int> kmeans_rows(const Eigen::MatrixXd& rows, int k,
                                    std::mt19937_64& rng) {
  const Eigen::Index n = rows.rows();
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int attempt = 0; attempt < 20; ++attempt) {
    // k-means++ seeding
    Eigen::MatrixXd centers(k, rows.cols());
    std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
    centers.row(0) = rows.row(pick(rng));
    Eigen::VectorXd d2 = (rows.rowwise() - centers.row(0)).rowwise().squaredNorm();
    for (int c = 1; c < k; ++c) {
      const double total = d2.sum();
      Eigen::Index chosen = 0;
      if (total > 0.0) {
        double target = unif(rng) * total;
        for (Eigen::Index j = 0; j < n; ++j) {
          target -= d2[j];
          if (target <= 0.0) {
            chosen = j;
            break;
          }
        }
      } else {
        chosen = pick(rng);
      }
      centers.row(c) = rows.row(chosen);
      d2 = d2.cwiseMin((rows.rowwise() - centers.row(c)).rowwise().squaredNorm());
    }

    std::vector<int> assign(static_cast<std::size_t>(n), 0);
    bool empty = false;
    for (int iter = 0; iter < 100; ++iter) {
      bool changed = false;
      for (Eigen::Index j = 0; j < n; ++j) {
        int best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (int c = 0; c < k; ++c) {
          const double d = (rows.row(j) - centers.row(c)).squaredNorm();
          if (d < best_d) {
            best_d = d;
            best = c;
          }
        }
        if (assign[static_cast<std::size_t>(j)] != best) {
          assign[static_cast<std::size_t>(j)] = best;
          changed = true;
        }
      }
      std::vector<int> counts(static_cast<std::size_t>(k), 0);
      centers.setZero();
      for (Eigen::Index j = 0; j < n; ++j) {
        counts[static_cast<std::size_t>(assign[static_cast<std::size_t>(j)])]++;
        centers.row(assign[static_cast<std::size_t>(j)]) += rows.row(j);
      }
      empty = false;
      for (int c = 0; c < k; ++c) {
        if (counts[static_cast<std::size_t>(c)] == 0) {
          empty = true;
        } else {
          centers.row(c) /= static_cast<double>(counts[static_cast<std::size_t>(c)]);
        }
      }
      if (empty || !changed) break;
    }
    if (!empty) return assign;
  }
  throw DataError("k-means produced an empty cluster after 20 attempts");
}

}  // namespace detail

// Deterministic initialization: k-means on the profile rows, class means per
// cluster for beta, within-cluster between-gene spread for sigma_b.
inline MixtureModel initialize(const ExpressionMatrix& data, int g, std::uint64_t seed) {
  const Eigen::Index n = data.n();
  const Eigen::Index p = data.p();
  if (g < 1) throw DomainError("g must be >= 1");
  if (g > 1 && g > n / 10) {
    throw DomainError("g = " + std::to_string(g) + " too large for n = " + std::to_string(n));
  }

  MixtureModel model;
  model.g = g;
  model.design = build_design_matrices(data.class_of_sample);
  const Eigen::Index m = model.m();
  const std::vector<int> p_h = data.class_sizes();

  std::mt19937_64 rng(seed);
  std::vector<int> assign(static_cast<std::size_t>(n), 0);
  if (g > 1) assign = detail::kmeans_rows(data.values, g, rng);

  // per-gene class means, used for beta and sigma_b initialization
  Eigen::MatrixXd gene_class_mean(n, m);
  for (Eigen::Index j = 0; j < n; ++j) {
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(m);
    for (Eigen::Index s = 0; s < p; ++s) {
      acc[data.class_of_sample[static_cast<std::size_t>(s)] - 1] += data.values(j, s);
    }
    for (Eigen::Index h = 0; h < m; ++h) {
      gene_class_mean(j, h) = acc[h] / static_cast<double>(p_h[static_cast<std::size_t>(h)]);
    }
  }

  model.components.resize(static_cast<std::size_t>(g));
  double resid_ss = 0.0;
  double resid_dof = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index s = 0; s < p; ++s) {
      const int h = data.class_of_sample[static_cast<std::size_t>(s)] - 1;
      const double r = data.values(j, s) - gene_class_mean(j, h);
      resid_ss += r * r;
    }
  }
  for (Eigen::Index h = 0; h < m; ++h) {
    resid_dof += static_cast<double>(n) * (static_cast<double>(p_h[static_cast<std::size_t>(h)]) - 1.0);
  }
  const double pooled_se = std::max(resid_dof > 0.0 ? resid_ss / resid_dof : 1.0, 1e-4);

  for (int i = 0; i < g; ++i) {
    auto& comp = model.components[static_cast<std::size_t>(i)];
    std::vector<Eigen::Index> members;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (assign[static_cast<std::size_t>(j)] == i) members.push_back(j);
    }
    comp.beta.resize(m);
    comp.sigma_b.resize(m);
    for (Eigen::Index h = 0; h < m; ++h) {
      double mu = 0.0;
      for (Eigen::Index j : members) mu += gene_class_mean(j, h);
      mu /= static_cast<double>(members.size());
      comp.beta[h] = mu;
      double ss = 0.0;
      for (Eigen::Index j : members) {
        ss += (gene_class_mean(j, h) - mu) * (gene_class_mean(j, h) - mu);
      }
      const double sd = members.size() > 1
                            ? std::sqrt(ss / static_cast<double>(members.size() - 1))
                            : 0.1;
      comp.sigma_b[h] = std::max(sd, 0.05);
    }
    comp.rho = 0.0;
    comp.sigma_c_sq = 0.01;
    comp.sigma_e_sq = pooled_se;
    comp.pi = std::max(static_cast<double>(members.size()) / static_cast<double>(n),
                       1.0 / (10.0 * static_cast<double>(g)));
  }
  double pi_sum = 0.0;
  for (const auto& c : model.components) pi_sum += c.pi;
  for (auto& c : model.components) c.pi /= pi_sum;

  model.c_hat = Eigen::MatrixXd::Zero(g, p);
  model.tau = Eigen::MatrixXd::Zero(n, g);
  for (Eigen::Index j = 0; j < n; ++j) model.tau(j, assign[static_cast<std::size_t>(j)]) = 1.0;
  model.z_map = Eigen::Map<const Eigen::VectorXi>(assign.data(), n).eval();
  model.n_map = Eigen::VectorXi::Zero(g);
  for (int a : assign) model.n_map[a]++;
  return model;
}

namespace detail {

inline std::vector<ComponentParams> interpolate_params(
    const std::vector<ComponentParams>& a, const std::vector<ComponentParams>& b,
    double t) {
  std::vector<ComponentParams> out = a;
  for (std::size_t i = 0; i < a.size(); ++i) {
    out[i].pi = (1 - t) * a[i].pi + t * b[i].pi;
    out[i].beta = (1 - t) * a[i].beta + t * b[i].beta;
    out[i].sigma_b = (1 - t) * a[i].sigma_b + t * b[i].sigma_b;
    out[i].rho = (1 - t) * a[i].rho + t * b[i].rho;
    out[i].sigma_c_sq = (1 - t) * a[i].sigma_c_sq + t * b[i].sigma_c_sq;
    out[i].sigma_e_sq = (1 - t) * a[i].sigma_e_sq + t * b[i].sigma_e_sq;
  }
  return out;
}

struct EmRun {
  MixtureModel model;
  FitTrace trace;
};

// One EM run from a given initialization. Each iteration's accepted state is
// checked against the previous conditional log-likelihood; steps that would
// decrease it (possible for the shared-rho projection and the c update) are
// damped toward the previous state.
inline EmRun run_em(const ExpressionMatrix& data, MixtureModel model,
                    const EmConfig& config) {
  FitTrace trace;
  EStepResult estep = e_step(data, model, model.c_hat);
  double prev_ll = estep.log_likelihood;
  trace.log_likelihoods.push_back(prev_ll);

  for (int iter = 0; iter < config.max_iter; ++iter) {
    trace.iterations = iter + 1;
    const std::vector<ComponentParams> cand =
        m_step(data, estep, model, &trace.variance_floored);
    Eigen::MatrixXd c_cand = estep.c_next;

    double step = 1.0;
    std::vector<ComponentParams> accepted;
    Eigen::MatrixXd c_accepted;
    double ll_accepted = -std::numeric_limits<double>::infinity();
    bool ok = false;
    for (int halvings = 0; halvings < 12; ++halvings) {
      const std::vector<ComponentParams> trial =
          interpolate_params(model.components, cand, step);
      const Eigen::MatrixXd c_trial =
          (1 - step) * model.c_hat + step * c_cand;
      const double ll = conditional_log_likelihood(data, model.design, trial, c_trial);
      if (std::isfinite(ll) && ll >= prev_ll - 1e-12) {
        accepted = trial;
        c_accepted = c_trial;
        ll_accepted = ll;
        ok = true;
        break;
      }
      step *= 0.5;
    }
    if (!ok) {
      trace.converged = true;
      break;
    }
    model.components = accepted;
    model.c_hat = c_accepted;

    estep = e_step(data, model, model.c_hat);
    const double ll = estep.log_likelihood;
    if (!std::isfinite(ll)) throw NumericalError("non-finite log-likelihood");
    trace.log_likelihoods.push_back(ll);
    const double rel = std::abs(ll - prev_ll) / (1.0 + std::abs(prev_ll));
    prev_ll = ll;
    if (rel < config.rel_tol) {
      trace.converged = true;
      break;
    }
  }

  // finalize posteriors and MAP assignments
  model.tau = estep.tau;
  model.log_likelihood = prev_ll;
  model.z_map.resize(data.n());
  model.n_map = Eigen::VectorXi::Zero(model.g);
  for (Eigen::Index j = 0; j < data.n(); ++j) {
    Eigen::Index arg = 0;
    estep.tau.row(j).maxCoeff(&arg);
    model.z_map[j] = static_cast<int>(arg);
    model.n_map[arg]++;
  }
  return {std::move(model), std::move(trace)};
}

}  // namespace detail

inline double bic(const MixtureModel& model, const ExpressionMatrix& data) {
  const double m = static_cast<double>(model.m());
  const double g = static_cast<double>(model.g);
  const double d = (g - 1.0) + g * m + g * m + g + g + 1.0;
  return -2.0 * model.log_likelihood + d * std::log(static_cast<double>(data.n()));
}

// Best-of-n_starts EM fit. Components whose MAP count reaches zero cause a
// refit with g reduced by one.
inline std::pair<MixtureModel, FitTrace> fit_mixture(const ExpressionMatrix& data,
                                                     int g, const EmConfig& config) {
  config.validate();
  while (true) {
    std::optional<detail::EmRun> best;
    std::string last_error = "no starts attempted";
    int failures = 0;
    for (int s = 0; s < config.n_starts; ++s) {
      const std::uint64_t start_seed =
          derive_seed(config.seed, static_cast<std::uint64_t>(g) * 1000 + static_cast<std::uint64_t>(s));
      try {
        MixtureModel init = initialize(data, g, start_seed);
        detail::EmRun run = detail::run_em(data, std::move(init), config);
        run.trace.best_start = s;
        if (!best || run.model.log_likelihood > best->model.log_likelihood) {
          best = std::move(run);
        }
      } catch (const std::exception& e) {
        ++failures;
        last_error = e.what();
      }
    }
    if (!best) {
      throw NumericalError("all " + std::to_string(config.n_starts) +
                           " starts failed; last error: " + last_error);
    }
    if (g > 1 && (best->model.n_map.array() == 0).any()) {
      --g;
      continue;
    }
    best->model.bic = bic(best->model, data);
    return {std::move(best->model), std::move(best->trace)};
  }
}

struct GBicRow {
  int g = 0;
  double log_likelihood = 0.0;
  double bic = 0.0;
  bool converged = false;
  int iterations = 0;
  bool failed = false;
  std::string error;
};

// Fits every g in [g_min, g_max]; returns the argmin-BIC model (ties toward
// smaller g) and the full table sorted ascending in g.
inline std::pair<MixtureModel, std::vector<GBicRow>> select_g(
    const ExpressionMatrix& data, const EmConfig& config) {
  config.validate();
  std::vector<GBicRow> table;
  std::optional<MixtureModel> best;
  for (int g = config.g_min; g <= config.g_max; ++g) {
    GBicRow row;
    row.g = g;
    try {
      auto [model, trace] = fit_mixture(data, g, config);
      row.log_likelihood = model.log_likelihood;
      row.bic = model.bic;
      row.converged = trace.converged;
      row.iterations = trace.iterations;
      if (!best || model.bic < best->bic) best = std::move(model);
    } catch (const std::exception& e) {
      row.failed = true;
      row.error = e.what();
    }
    table.push_back(std::move(row));
  }
  if (!best) throw NumericalError("every g in the range failed to fit");
  return {std::move(*best), std::move(table)};
}

}  // namespace mixcontrast
