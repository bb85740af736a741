#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "mixcontrast/em.hpp"
#include "mixcontrast/errors.hpp"
#include "mixcontrast/simulate.hpp"

using namespace mixcontrast;

namespace {

ComponentParams make_component(std::initializer_list<double> beta,
                               std::initializer_list<double> sigma_b, double rho, double sc2,
                               double se2, double pi = 1.0) {
  ComponentParams c;
  c.pi = pi;
  c.beta = Eigen::VectorXd(static_cast<Eigen::Index>(beta.size()));
  std::copy(beta.begin(), beta.end(), c.beta.data());
  c.sigma_b = Eigen::VectorXd(static_cast<Eigen::Index>(sigma_b.size()));
  std::copy(sigma_b.begin(), sigma_b.end(), c.sigma_b.data());
  c.rho = rho;
  c.sigma_c_sq = sc2;
  c.sigma_e_sq = se2;
  return c;
}

ExpressionMatrix gaussian_rows(int n, const std::vector<int>& labels, std::uint64_t seed,
                             double shift = 0.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  ExpressionMatrix data;
  data.values.resize(n, static_cast<Eigen::Index>(labels.size()));
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index s = 0; s < data.p(); ++s) data.values(j, s) = gauss(rng) + shift;
  }
  for (int j = 0; j < n; ++j) data.feature_ids.push_back("f" + std::to_string(j));
  for (std::size_t s = 0; s < labels.size(); ++s) data.sample_ids.push_back("s" + std::to_string(s));
  data.class_of_sample = labels;
  data.standardized = true;
  return data;
}

// fraction of rows whose labels agree up to the best component permutation (g=2)
double map_accuracy2(const Eigen::VectorXi& z, const std::vector<int>& truth) {
  int agree = 0, flip = 0;
  for (Eigen::Index j = 0; j < z.size(); ++j) {
    if (z[j] == truth[static_cast<std::size_t>(j)]) ++agree;
    if (z[j] == 1 - truth[static_cast<std::size_t>(j)]) ++flip;
  }
  return static_cast<double>(std::max(agree, flip)) / static_cast<double>(z.size());
}

}  // namespace

TEST_CASE("single-component initialization uses overall class means") {
  ExpressionMatrix data = gaussian_rows(60, {1, 1, 1, 2, 2, 2}, 31);
  data.values.leftCols(3).array() += 1.0;
  const MixtureModel init = initialize(data, 1, 5);
  REQUIRE(init.g == 1);
  CHECK(init.components[0].pi == 1.0);
  const double mean1 = data.values.leftCols(3).mean();
  const double mean2 = data.values.rightCols(3).mean();
  CHECK_THAT(init.components[0].beta[0], Catch::Matchers::WithinAbs(mean1, 1e-12));
  CHECK_THAT(init.components[0].beta[1], Catch::Matchers::WithinAbs(mean2, 1e-12));
}

TEST_CASE("initialization separates well-separated row groups") {
  ExpressionMatrix data = gaussian_rows(200, {1, 1, 1, 2, 2, 2}, 32);
  std::vector<int> truth(200, 0);
  for (int j = 100; j < 200; ++j) {
    data.values.row(j).array() += 10.0;  // 10-sigma gap
    truth[static_cast<std::size_t>(j)] = 1;
  }
  const MixtureModel init = initialize(data, 2, 7);
  CHECK(map_accuracy2(init.z_map, truth) >= 0.95);
}

TEST_CASE("initialization is deterministic in the seed") {
  const ExpressionMatrix data = gaussian_rows(80, {1, 1, 2, 2}, 33);
  const MixtureModel a = initialize(data, 2, 42);
  const MixtureModel b = initialize(data, 2, 42);
  CHECK(a.components[0].beta == b.components[0].beta);
  CHECK(a.components[1].beta == b.components[1].beta);
  CHECK(a.tau == b.tau);
}

TEST_CASE("initialization rejects g beyond n/10") {
  const ExpressionMatrix data = gaussian_rows(30, {1, 1, 2, 2}, 34);
  CHECK_THROWS_AS(initialize(data, 4, 1), DomainError);
}

TEST_CASE("e-step shrinks b to zero when the residual vanishes") {
  MixtureModel model;
  model.g = 1;
  model.design = build_design_matrices({1, 1, 2, 2});
  model.components.push_back(make_component({1.0, -1.0}, {0.5, 0.5}, 0.2, 0.01, 1.0));
  ExpressionMatrix data;
  data.values.resize(1, 4);
  data.values.row(0) << 1, 1, -1, -1;  // y = X beta exactly
  data.class_of_sample = {1, 1, 2, 2};
  data.standardized = true;
  const EStepResult res = e_step(data, model, Eigen::MatrixXd::Zero(1, 4));
  CHECK(res.b_hat[0].row(0).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(res.tau(0, 0) == 1.0);
}

TEST_CASE("e-step b estimates vanish in the sigma_b to zero limit") {
  MixtureModel model;
  model.g = 1;
  model.design = build_design_matrices({1, 1, 2, 2});
  model.components.push_back(make_component({0.0, 0.0}, {1e-8, 1e-8}, 0.0, 0.01, 1.0));
  ExpressionMatrix data;
  data.values.resize(1, 4);
  data.values.row(0) << 2, -1, 3, 0.5;
  data.class_of_sample = {1, 1, 2, 2};
  data.standardized = true;
  const EStepResult res = e_step(data, model, Eigen::MatrixXd::Zero(1, 4));
  CHECK(res.b_hat[0].row(0).norm() < 1e-6);
}

TEST_CASE("m-step recovers per-class means when one component owns everything") {
  const ExpressionMatrix data = gaussian_rows(50, {1, 1, 1, 2, 2, 2}, 35);
  MixtureModel model;
  model.g = 1;
  model.design = build_design_matrices(data.class_of_sample);
  model.components.push_back(make_component({0.0, 0.0}, {0.5, 0.5}, 0.0, 0.01, 1.0));
  EStepResult estep;
  estep.tau = Eigen::MatrixXd::Ones(50, 1);
  estep.b_hat = {Eigen::MatrixXd::Zero(50, 2)};
  estep.r_cond = {Eigen::MatrixXd::Zero(2, 2)};
  estep.c_next = Eigen::MatrixXd::Zero(1, 6);
  const auto updated = m_step(data, estep, model);
  const double mean1 = data.values.leftCols(3).mean();
  const double mean2 = data.values.rightCols(3).mean();
  CHECK_THAT(updated[0].beta[0], Catch::Matchers::WithinAbs(mean1, 1e-10));
  CHECK_THAT(updated[0].beta[1], Catch::Matchers::WithinAbs(mean2, 1e-10));
  CHECK(updated[0].pi == 1.0);
}

TEST_CASE("m-step mixing proportions follow the posteriors") {
  const ExpressionMatrix data = gaussian_rows(40, {1, 1, 2, 2}, 36);
  MixtureModel model;
  model.g = 2;
  model.design = build_design_matrices(data.class_of_sample);
  model.components.push_back(make_component({0.0, 0.0}, {0.5, 0.5}, 0.0, 0.01, 1.0, 0.5));
  model.components.push_back(make_component({0.0, 0.0}, {0.5, 0.5}, 0.0, 0.01, 1.0, 0.5));
  EStepResult estep;
  estep.tau = Eigen::MatrixXd::Constant(40, 2, 0.5);
  estep.b_hat = {Eigen::MatrixXd::Zero(40, 2), Eigen::MatrixXd::Zero(40, 2)};
  estep.r_cond = {Eigen::MatrixXd::Zero(2, 2), Eigen::MatrixXd::Zero(2, 2)};
  estep.c_next = Eigen::MatrixXd::Zero(2, 4);
  const auto updated = m_step(data, estep, model);
  CHECK_THAT(updated[0].pi, Catch::Matchers::WithinAbs(0.5, 1e-14));
  CHECK_THAT(updated[1].pi, Catch::Matchers::WithinAbs(0.5, 1e-14));
}

TEST_CASE("fit recovers a single-component model") {
  // small sigma_c: the shared per-sample effect shifts realized class means
  // by ~sqrt(sigma_c_sq / p_h), which the +-0.1 beta check must dominate
  const auto truth = make_component({1.0, -1.0}, {0.4, 0.4}, 0.3, 0.001, 0.8);
  int ok = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    ExpressionMatrix data = simulate_from_model({truth}, {1, 1, 1, 1, 1, 2, 2, 2, 2, 2}, 500, seed);
    data.standardized = true;  // fit on the generated scale
    EmConfig config;
    config.n_starts = 2;
    config.seed = seed;
    const auto [model, trace] = fit_mixture(data, 1, config);
    const bool beta_ok = std::abs(model.components[0].beta[0] - 1.0) < 0.1 &&
                         std::abs(model.components[0].beta[1] + 1.0) < 0.1;
    const bool var_ok = std::abs(model.components[0].sigma_e_sq - 0.8) < 0.16;
    if (beta_ok && var_ok) ++ok;
    for (std::size_t it = 1; it < trace.log_likelihoods.size(); ++it) {
      CHECK(trace.log_likelihoods[it] >= trace.log_likelihoods[it - 1] - 1e-9);
    }
  }
  CHECK(ok >= 4);
}

TEST_CASE("fit separates two components with a beta gap of 3") {
  const auto comp1 = make_component({1.5, -1.5}, {0.4, 0.4}, 0.2, 0.01, 1.0, 0.5);
  const auto comp2 = make_component({-1.5, 1.5}, {0.4, 0.4}, 0.2, 0.01, 1.0, 0.5);
  std::vector<int> z_true;
  ExpressionMatrix data = simulate_from_model({comp1, comp2}, {1, 1, 1, 1, 2, 2, 2, 2}, 400, 77,
                                              &z_true);
  data.standardized = true;
  EmConfig config;
  config.n_starts = 3;
  config.seed = 9;
  const auto [model, trace] = fit_mixture(data, 2, config);
  REQUIRE(model.g == 2);
  CHECK(map_accuracy2(model.z_map, z_true) >= 0.95);
}

TEST_CASE("bic direct formula") {
  ExpressionMatrix data = gaussian_rows(1000, {1, 1, 2, 2}, 37);
  MixtureModel model;
  model.g = 1;
  model.design = build_design_matrices(data.class_of_sample);
  model.log_likelihood = -100.0;
  // d = 0 + 2 + 2 + 1 + 1 + 1 = 7
  CHECK_THAT(bic(model, data), Catch::Matchers::WithinAbs(200.0 + 7.0 * std::log(1000.0), 1e-3));
  CHECK_THAT(bic(model, data), Catch::Matchers::WithinAbs(248.354, 5e-4));
  CHECK(bic(model, data) == bic(model, data));
}

TEST_CASE("row permutation permutes posteriors and preserves the likelihood") {
  const auto truth = make_component({0.5, -0.5}, {0.3, 0.3}, 0.0, 0.01, 1.0);
  ExpressionMatrix data = simulate_from_model({truth}, {1, 1, 1, 2, 2, 2}, 120, 21);
  data.standardized = true;
  EmConfig config;
  config.n_starts = 1;
  config.seed = 3;
  const auto [model, trace] = fit_mixture(data, 1, config);

  ExpressionMatrix reversed = data;
  for (Eigen::Index j = 0; j < data.n(); ++j) {
    reversed.values.row(j) = data.values.row(data.n() - 1 - j);
  }
  // same parameters evaluated on the permuted rows
  const double ll = detail::conditional_log_likelihood(reversed, model.design, model.components,
                                                       model.c_hat);
  CHECK_THAT(ll, Catch::Matchers::WithinAbs(model.log_likelihood, 1e-8));
}

TEST_CASE("component relabeling leaves likelihood and bic unchanged") {
  const auto comp1 = make_component({1.0, -1.0}, {0.3, 0.3}, 0.1, 0.01, 1.0, 0.6);
  const auto comp2 = make_component({-1.0, 1.0}, {0.3, 0.3}, 0.1, 0.01, 1.0, 0.4);
  ExpressionMatrix data = simulate_from_model({comp1, comp2}, {1, 1, 1, 2, 2, 2}, 150, 55);
  data.standardized = true;

  MixtureModel model;
  model.g = 2;
  model.design = build_design_matrices(data.class_of_sample);
  model.components = {comp1, comp2};
  model.c_hat = Eigen::MatrixXd::Zero(2, 6);
  MixtureModel swapped = model;
  std::swap(swapped.components[0], swapped.components[1]);
  swapped.c_hat = model.c_hat;  // zero either way

  const double ll_a = detail::conditional_log_likelihood(data, model.design, model.components,
                                                         model.c_hat);
  const double ll_b = detail::conditional_log_likelihood(data, swapped.design, swapped.components,
                                                         swapped.c_hat);
  CHECK_THAT(ll_a, Catch::Matchers::WithinAbs(ll_b, 1e-9));
}

TEST_CASE("select_g with a singleton range returns that fit") {
  const auto truth = make_component({0.8, -0.8}, {0.3, 0.3}, 0.0, 0.01, 1.0);
  ExpressionMatrix data = simulate_from_model({truth}, {1, 1, 1, 2, 2, 2}, 100, 61);
  data.standardized = true;
  EmConfig config;
  config.n_starts = 1;
  config.seed = 2;
  config.g_min = config.g_max = 2;
  const auto [model, table] = select_g(data, config);
  REQUIRE(table.size() == 1);
  CHECK(table[0].g == 2);
  CHECK(model.g <= 2);  // empty components may be dropped
}

TEST_CASE("select_g table is sorted ascending in g and prefers the simpler model") {
  const auto truth = make_component({1.0, -1.0}, {0.3, 0.3}, 0.0, 0.01, 1.0);
  ExpressionMatrix data = simulate_from_model({truth}, {1, 1, 1, 2, 2, 2}, 200, 63);
  data.standardized = true;
  EmConfig config;
  config.n_starts = 2;
  config.seed = 5;
  config.g_min = 1;
  config.g_max = 2;
  const auto [model, table] = select_g(data, config);
  REQUIRE(table.size() == 2);
  CHECK(table[0].g == 1);
  CHECK(table[1].g == 2);
  CHECK(model.g == 1);  // one-component truth
}
