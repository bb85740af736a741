#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <thread>
#include <vector>

#include "mixcontrast/errors.hpp"

namespace mixcontrast {

// ---- seeding -------------------------------------------------------------

// splitmix64 step; used to derive independent sub-seeds from a master seed.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  return splitmix64(master ^ splitmix64(stream + 1));
}

// ---- thread pool-free deterministic parallel for --------------------------

namespace detail {
inline int& thread_cap() {
  static int cap = static_cast<int>(std::thread::hardware_concurrency());
  return cap;
}
}  // namespace detail

inline void set_max_threads(int t) { detail::thread_cap() = std::max(1, t); }
inline int max_threads() { return std::max(1, detail::thread_cap()); }

// Runs fn(i) for i in [0, count). Each index is processed exactly once and
// results must be written to disjoint slots so the outcome is independent of
// the thread count.
template <typename Fn>
void parallel_for(std::size_t count, Fn&& fn) {
  const int nt = static_cast<int>(
      std::min<std::size_t>(static_cast<std::size_t>(max_threads()), count));
  if (nt <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::thread> workers;
  workers.reserve(static_cast<std::size_t>(nt));
  for (int t = 0; t < nt; ++t) {
    workers.emplace_back([&, t] {
      for (std::size_t i = static_cast<std::size_t>(t); i < count;
           i += static_cast<std::size_t>(nt)) {
        fn(i);
      }
    });
  }
  for (auto& w : workers) w.join();
}

// ---- small numeric helpers -------------------------------------------------

inline double log_sum_exp(std::span<const double> logs) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : logs) mx = std::max(mx, v);
  if (!std::isfinite(mx)) return mx;
  double acc = 0.0;
  for (double v : logs) acc += std::exp(v - mx);
  return mx + std::log(acc);
}

// exp-normalizes a vector of log weights onto the simplex.
inline Eigen::VectorXd normalize_log_weights(const Eigen::VectorXd& logw) {
  const double mx = logw.maxCoeff();
  if (!std::isfinite(mx)) return Eigen::VectorXd::Constant(logw.size(), 1.0 / static_cast<double>(logw.size()));
  Eigen::VectorXd out = (logw.array() - mx).exp();
  out /= out.sum();
  return out;
}

inline double mean(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

// sample standard deviation, (n-1) denominator
inline double sample_sd(std::span<const double> x) {
  const double mu = mean(x);
  double ss = 0.0;
  for (double v : x) ss += (v - mu) * (v - mu);
  return std::sqrt(ss / static_cast<double>(x.size() - 1));
}

// One-sample Kolmogorov-Smirnov distance from U(0,1).
inline double ks_distance_uniform(std::vector<double> x) {
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double lo = static_cast<double>(i) / n;
    const double hi = static_cast<double>(i + 1) / n;
    d = std::max(d, std::max(std::abs(x[i] - lo), std::abs(x[i] - hi)));
  }
  return d;
}

}  // namespace mixcontrast
