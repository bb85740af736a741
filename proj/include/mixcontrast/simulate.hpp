#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "mixcontrast/errors.hpp"
#include "mixcontrast/expression_matrix.hpp"
#include "mixcontrast/fdr.hpp"
#include "mixcontrast/mixture_model.hpp"
#include "mixcontrast/stats.hpp"

namespace mixcontrast {

// Correlated-blocks generator: per sample, each block of features is
// equicorrelated multivariate normal; a +-delta class-2 shift is injected
// into a random 20% of features (half up, half down).
struct SimConfig {
  int n = 3000;
  int p1 = 10;
  int p2 = 10;
  int block_size = 500;
  int n_blocks = 6;
  double base_mean = 10.0;
  double sigma_sq = 4.0;
  double rho_sim = 0.0;
  double delta = 2.0;
  double de_fraction = 0.2;
  std::uint64_t seed = 0;
  bool stratify_blocks = false;  // diagnostic: spread DE picks evenly per block

  void validate() const {
    if (n != block_size * n_blocks) throw DomainError("n must equal block_size * n_blocks");
    if (p1 < 2 || p2 < 2) throw DomainError("both class sizes must be >= 2");
    if (rho_sim < 0.0 || rho_sim >= 1.0) throw DomainError("rho_sim must be in [0,1)");
    if (de_fraction < 0.0 || de_fraction > 1.0) throw DomainError("de_fraction must be in [0,1]");
    const double de = de_fraction * n;
    if (std::abs(de - std::round(de)) > 1e-9) throw DomainError("de_fraction * n must be an integer");
    if (static_cast<int>(std::round(de)) % 2 != 0) throw DomainError("DE count must split evenly into up and down");
  }
};

inline std::pair<ExpressionMatrix, SimulationTruth> generate_dataset(const SimConfig& config) {
  config.validate();
  const int n = config.n;
  const int p = config.p1 + config.p2;
  const double sigma = std::sqrt(config.sigma_sq);
  const double sqrt_rho = std::sqrt(config.rho_sim);
  const double sqrt_1mrho = std::sqrt(1.0 - config.rho_sim);

  ExpressionMatrix data;
  data.values.resize(n, p);
  data.feature_ids.reserve(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j) data.feature_ids.push_back("g" + std::to_string(j + 1));
  data.sample_ids.reserve(static_cast<std::size_t>(p));
  data.class_of_sample.reserve(static_cast<std::size_t>(p));
  for (int s = 0; s < p; ++s) {
    data.sample_ids.push_back("s" + std::to_string(s + 1));
    data.class_of_sample.push_back(s < config.p1 ? 1 : 2);
  }

  // per-sample derived seeds keep the output independent of evaluation order
  for (int s = 0; s < p; ++s) {
    std::mt19937_64 rng(derive_seed(config.seed, static_cast<std::uint64_t>(s)));
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int blk = 0; blk < config.n_blocks; ++blk) {
      const double shared = gauss(rng);  // equicorrelation factor, one per (block, sample)
      for (int r = 0; r < config.block_size; ++r) {
        const int j = blk * config.block_size + r;
        data.values(j, s) =
            config.base_mean + sigma * (sqrt_rho * shared + sqrt_1mrho * gauss(rng));
      }
    }
  }

  // DE selection: uniform without replacement, first half up, second half down
  const int de_total = static_cast<int>(std::round(config.de_fraction * n));
  std::mt19937_64 pick_rng(derive_seed(config.seed, 0xDE));
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  std::vector<int> chosen;
  if (config.stratify_blocks) {
    const int per_block = de_total / config.n_blocks;
    for (int blk = 0; blk < config.n_blocks; ++blk) {
      std::vector<int> blk_idx(idx.begin() + blk * config.block_size,
                               idx.begin() + (blk + 1) * config.block_size);
      std::shuffle(blk_idx.begin(), blk_idx.end(), pick_rng);
      chosen.insert(chosen.end(), blk_idx.begin(), blk_idx.begin() + per_block);
    }
  } else {
    std::shuffle(idx.begin(), idx.end(), pick_rng);
    chosen.assign(idx.begin(), idx.begin() + de_total);
  }

  SimulationTruth truth;
  truth.de_label.assign(static_cast<std::size_t>(n), DeLabel::kNull);
  truth.shift.assign(static_cast<std::size_t>(n), 0.0);
  for (int k = 0; k < de_total; ++k) {
    const int j = chosen[static_cast<std::size_t>(k)];
    const bool up = k < de_total / 2;
    truth.de_label[static_cast<std::size_t>(j)] = up ? DeLabel::kUp : DeLabel::kDown;
    truth.shift[static_cast<std::size_t>(j)] = up ? config.delta : -config.delta;
    for (int s = config.p1; s < p; ++s) {
      data.values(j, s) += truth.shift[static_cast<std::size_t>(j)];
    }
  }
  data.standardized = false;
  return {std::move(data), std::move(truth)};
}

inline void save_truth(const SimulationTruth& truth,
                       const std::vector<std::string>& feature_ids,
                       const std::string& path) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot write truth file: " + path);
  f << "feature_id\tde_label\tshift\n";
  char buf[64];
  for (std::size_t j = 0; j < truth.de_label.size(); ++j) {
    const char* label = truth.de_label[j] == DeLabel::kNull
                            ? "null"
                            : (truth.de_label[j] == DeLabel::kUp ? "up" : "down");
    std::snprintf(buf, sizeof(buf), "%.17g", truth.shift[j]);
    f << feature_ids[j] << '\t' << label << '\t' << buf << '\n';
  }
}

inline SimulationTruth load_truth(const std::string& path,
                                  const std::vector<std::string>& feature_ids) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open truth file: " + path);
  std::string line;
  std::getline(f, line);  // header
  SimulationTruth truth;
  truth.de_label.assign(feature_ids.size(), DeLabel::kNull);
  truth.shift.assign(feature_ids.size(), 0.0);
  std::size_t row = 0;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    const auto parts = detail::split_tabs(line);
    if (parts.size() != 3) throw DataError("malformed truth line: " + line);
    if (row >= feature_ids.size() || parts[0] != feature_ids[row]) {
      throw DataError("truth file feature ids do not match the data");
    }
    if (parts[1] == "up") {
      truth.de_label[row] = DeLabel::kUp;
    } else if (parts[1] == "down") {
      truth.de_label[row] = DeLabel::kDown;
    } else if (parts[1] != "null") {
      throw DataError("unknown de_label: " + parts[1]);
    }
    truth.shift[row] = std::stod(parts[2]);
    ++row;
  }
  if (row != feature_ids.size()) throw DataError("truth file row count does not match the data");
  return truth;
}

// Draws profiles from the component LMMs at known parameters; used by the
// recovery and calibration tests.
inline ExpressionMatrix simulate_from_model(const std::vector<ComponentParams>& comps,
                                            const std::vector<int>& class_of_sample,
                                            int n, std::uint64_t seed,
                                            std::vector<int>* z_true = nullptr) {
  const DesignMatrices design = build_design_matrices(class_of_sample);
  const Eigen::Index p = design.p();
  const Eigen::Index m = design.m();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> weights;
  for (const auto& c : comps) weights.push_back(c.pi);
  std::discrete_distribution<int> comp_pick(weights.begin(), weights.end());

  ExpressionMatrix data;
  data.values.resize(n, p);
  data.class_of_sample = class_of_sample;
  for (Eigen::Index s = 0; s < p; ++s) data.sample_ids.push_back("s" + std::to_string(s + 1));
  for (int j = 0; j < n; ++j) data.feature_ids.push_back("g" + std::to_string(j + 1));

  // one shared c draw per component
  std::vector<Eigen::VectorXd> c_draw;
  for (const auto& comp : comps) {
    Eigen::VectorXd c(p);
    const double sc = std::sqrt(comp.sigma_c_sq);
    for (Eigen::Index s = 0; s < p; ++s) c[s] = sc * gauss(rng);
    c_draw.push_back(std::move(c));
  }

  if (z_true) z_true->assign(static_cast<std::size_t>(n), 0);
  for (int j = 0; j < n; ++j) {
    const int i = comp_pick(rng);
    if (z_true) (*z_true)[static_cast<std::size_t>(j)] = i;
    const auto& comp = comps[static_cast<std::size_t>(i)];
    const Eigen::MatrixXd B = build_B(comp.sigma_b, comp.rho);
    const Eigen::MatrixXd L = Eigen::LLT<Eigen::MatrixXd>(B).matrixL();
    Eigen::VectorXd u(m);
    for (Eigen::Index h = 0; h < m; ++h) u[h] = gauss(rng);
    const Eigen::VectorXd b = L * u;
    const double se = std::sqrt(comp.sigma_e_sq);
    for (Eigen::Index s = 0; s < p; ++s) {
      const int h = class_of_sample[static_cast<std::size_t>(s)] - 1;
      data.values(j, s) = comp.beta[h] + b[h] + c_draw[static_cast<std::size_t>(i)][s] + se * gauss(rng);
    }
  }
  data.standardized = false;
  return data;
}

}  // namespace mixcontrast
