#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "mixcontrast/errors.hpp"

namespace mixcontrast {

struct BhResult {
  std::vector<bool> selected;
  Eigen::VectorXd q;  // monotone step-up q-values, capped at 1
};

// Benjamini-Hochberg step-up at level alpha.
inline BhResult benjamini_hochberg(const Eigen::VectorXd& p, double alpha) {
  if (alpha <= 0.0 || alpha >= 1.0) throw DomainError("alpha must be in (0,1)");
  const Eigen::Index n = p.size();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](Eigen::Index a, Eigen::Index b) { return p[a] < p[b]; });

  BhResult out;
  out.selected.assign(static_cast<std::size_t>(n), false);
  out.q.resize(n);
  double running = 1.0;
  Eigen::Index k_star = -1;
  for (Eigen::Index r = n - 1; r >= 0; --r) {
    const Eigen::Index j = order[static_cast<std::size_t>(r)];
    const double rank = static_cast<double>(r + 1);
    running = std::min(running, static_cast<double>(n) * p[j] / rank);
    out.q[j] = running;
    if (k_star < 0 && p[j] <= alpha * rank / static_cast<double>(n)) k_star = r;
  }
  for (Eigen::Index r = 0; r <= k_star; ++r) {
    out.selected[static_cast<std::size_t>(order[static_cast<std::size_t>(r)])] = true;
  }
  return out;
}

// z_j = Phi^{-1}(1 - P_j); boundary P clamped into (0,1).
inline Eigen::VectorXd z_scores(const Eigen::VectorXd& p, bool* clamped = nullptr) {
  const boost::math::normal norm;
  Eigen::VectorXd out(p.size());
  for (Eigen::Index j = 0; j < p.size(); ++j) {
    double pj = p[j];
    if (pj <= 0.0 || pj >= 1.0) {
      pj = std::clamp(pj, 1e-15, 1.0 - 1e-15);
      if (clamped) *clamped = true;
    }
    out[j] = boost::math::quantile(norm, 1.0 - pj);
  }
  return out;
}

// pi0 N(mu0, sd0^2) + (1 - pi0) N(mu1, sd1^2) fitted to the z-scores; the
// smaller-mean component is the null and tau0(z) estimates the local FDR.
struct TwoNormalFit {
  double pi0 = 0.9;
  double mu0 = 0.0, sd0 = 1.0;
  double mu1 = 0.0, sd1 = 1.0;
  Eigen::VectorXd local_fdr;
  bool degenerate = false;
};

// fix_null pins the null component at N(0,1) (theoretical-null mode).
inline TwoNormalFit fit_two_normal_mixture(const Eigen::VectorXd& z, bool fix_null = false) {
  const Eigen::Index n = z.size();
  if (n < 100) throw DomainError("need at least 100 z-scores");

  TwoNormalFit fit;
  fit.mu0 = 0.0;
  fit.sd0 = 1.0;
  {
    std::vector<double> sorted(z.data(), z.data() + n);
    std::sort(sorted.begin(), sorted.end());
    fit.mu1 = sorted[static_cast<std::size_t>(0.9 * static_cast<double>(n - 1))];
  }
  fit.sd1 = 1.0;
  fit.pi0 = 0.9;

  auto log_norm = [](double x, double mu, double sd) {
    const double d = (x - mu) / sd;
    return -0.5 * d * d - std::log(sd) - 0.5 * std::log(2.0 * M_PI);
  };

  Eigen::VectorXd t0(n);
  double prev_ll = -std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < 5000; ++iter) {
    double ll = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      const double l0 = std::log(fit.pi0) + log_norm(z[j], fit.mu0, fit.sd0);
      const double l1 = std::log1p(-fit.pi0) + log_norm(z[j], fit.mu1, fit.sd1);
      const double mx = std::max(l0, l1);
      const double lse = mx + std::log(std::exp(l0 - mx) + std::exp(l1 - mx));
      t0[j] = std::exp(l0 - lse);
      ll += lse;
    }
    const double w0 = t0.sum();
    const double w1 = static_cast<double>(n) - w0;
    fit.pi0 = std::clamp(w0 / static_cast<double>(n), 1e-6, 1.0 - 1e-6);
    if (!fix_null) {
      fit.mu0 = (t0.array() * z.array()).sum() / w0;
    }
    fit.mu1 = ((1.0 - t0.array()) * z.array()).sum() / w1;
    double v0 = fix_null ? 1.0 : (t0.array() * (z.array() - fit.mu0).square()).sum() / w0;
    double v1 = ((1.0 - t0.array()) * (z.array() - fit.mu1).square()).sum() / w1;
    if (v0 < 1e-12 || v1 < 1e-12) {
      v0 = std::max(v0, 1e-12);
      v1 = std::max(v1, 1e-12);
      fit.degenerate = true;
    }
    fit.sd0 = std::sqrt(v0);
    fit.sd1 = std::sqrt(v1);
    if (std::abs(ll - prev_ll) / (1.0 + std::abs(prev_ll)) < 1e-8) break;
    prev_ll = ll;
  }
  if (fit.sd0 < 1e-6 || fit.sd1 < 1e-6) {
    fit.sd0 = std::max(fit.sd0, 1e-6);
    fit.sd1 = std::max(fit.sd1, 1e-6);
    fit.degenerate = true;
  }

  // null = smaller-mean component
  if (fit.mu0 > fit.mu1) {
    std::swap(fit.mu0, fit.mu1);
    std::swap(fit.sd0, fit.sd1);
    fit.pi0 = 1.0 - fit.pi0;
    t0 = (1.0 - t0.array()).matrix();
  }
  // final responsibilities at the converged parameters
  fit.local_fdr.resize(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const double l0 = std::log(fit.pi0) + log_norm(z[j], fit.mu0, fit.sd0);
    const double l1 = std::log1p(-fit.pi0) + log_norm(z[j], fit.mu1, fit.sd1);
    const double mx = std::max(l0, l1);
    fit.local_fdr[j] = std::exp(l0 - mx) / (std::exp(l0 - mx) + std::exp(l1 - mx));
  }
  return fit;
}

struct LocalFdrSelection {
  std::vector<bool> selected;
  double implied_fdr = 0.0;  // mean local FDR over the selection
  bool empty = false;
};

inline LocalFdrSelection select_by_local_fdr(const Eigen::VectorXd& local_fdr, double c0) {
  if (c0 <= 0.0 || c0 > 1.0) throw DomainError("c0 must be in (0,1]");
  LocalFdrSelection out;
  out.selected.assign(static_cast<std::size_t>(local_fdr.size()), false);
  double acc = 0.0;
  int count = 0;
  for (Eigen::Index j = 0; j < local_fdr.size(); ++j) {
    if (local_fdr[j] < c0) {
      out.selected[static_cast<std::size_t>(j)] = true;
      acc += local_fdr[j];
      ++count;
    }
  }
  out.empty = count == 0;
  out.implied_fdr = count > 0 ? acc / count : 0.0;
  return out;
}

enum class DeLabel { kNull, kUp, kDown };

struct SimulationTruth {
  std::vector<DeLabel> de_label;
  std::vector<double> shift;

  int de_count() const {
    int c = 0;
    for (auto l : de_label) c += l != DeLabel::kNull;
    return c;
  }
};

struct EvaluationMetrics {
  int n_selected = 0;
  double fdp = 0.0;
  double fndp = 0.0;
  double power = 0.0;
};

inline EvaluationMetrics evaluate_against_truth(const std::vector<bool>& selected,
                                                const SimulationTruth& truth) {
  if (selected.size() != truth.de_label.size()) {
    throw DomainError("truth length does not match selection length");
  }
  const int n = static_cast<int>(selected.size());
  int nr = 0, false_pos = 0, true_pos = 0;
  for (int j = 0; j < n; ++j) {
    if (!selected[static_cast<std::size_t>(j)]) continue;
    ++nr;
    if (truth.de_label[static_cast<std::size_t>(j)] == DeLabel::kNull) {
      ++false_pos;
    } else {
      ++true_pos;
    }
  }
  const int de_total = truth.de_count();
  EvaluationMetrics out;
  out.n_selected = nr;
  out.fdp = nr > 0 ? static_cast<double>(false_pos) / nr : 0.0;
  out.power = de_total > 0 ? static_cast<double>(true_pos) / de_total : 0.0;
  out.fndp = (n - nr) > 0 ? static_cast<double>(de_total - true_pos) / (n - nr) : 0.0;
  return out;
}

// FDP among the top-k features of a ranking (0-based feature indices in rank
// order), for k = 1..K.
inline std::vector<double> fdp_curve(const std::vector<Eigen::Index>& rank_order,
                                     const SimulationTruth& truth, int K) {
  if (K < 1 || static_cast<std::size_t>(K) > rank_order.size()) {
    throw DomainError("curve cut-off out of range");
  }
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(K));
  int nulls = 0;
  for (int k = 0; k < K; ++k) {
    const Eigen::Index j = rank_order[static_cast<std::size_t>(k)];
    if (truth.de_label[static_cast<std::size_t>(j)] == DeLabel::kNull) ++nulls;
    out.push_back(static_cast<double>(nulls) / static_cast<double>(k + 1));
  }
  return out;
}

}  // namespace mixcontrast
