#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "mixcontrast/errors.hpp"
#include "mixcontrast/fdr.hpp"

using namespace mixcontrast;

TEST_CASE("benjamini-hochberg step-up on a hand example") {
  Eigen::VectorXd p(3);
  p << 0.01, 0.02, 0.5;
  const BhResult res = benjamini_hochberg(p, 0.05);
  CHECK(res.selected == std::vector<bool>{true, true, false});
  CHECK_THAT(res.q[0], Catch::Matchers::WithinAbs(0.03, 1e-12));  // min(3*0.01/1, 3*0.02/2)
  CHECK_THAT(res.q[1], Catch::Matchers::WithinAbs(0.03, 1e-12));
  CHECK_THAT(res.q[2], Catch::Matchers::WithinAbs(0.5, 1e-12));
}

TEST_CASE("benjamini-hochberg edge cases") {
  Eigen::VectorXd all_one = Eigen::VectorXd::Ones(5);
  CHECK(benjamini_hochberg(all_one, 0.05).selected == std::vector<bool>(5, false));

  Eigen::VectorXd single(1);
  single << 0.001;
  CHECK(benjamini_hochberg(single, 0.05).selected == std::vector<bool>{true});

  CHECK_THROWS_AS(benjamini_hochberg(single, 0.0), DomainError);
}

TEST_CASE("benjamini-hochberg controls fdr on planted signal") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  double fdr_sum = 0.0;
  const int n = 1000, n_de = 100, seeds = 20;
  for (int rep = 0; rep < seeds; ++rep) {
    Eigen::VectorXd p(n);
    for (int j = 0; j < n_de; ++j) p[j] = unif(rng) * 1e-4;  // strong sub-uniform signal
    for (int j = n_de; j < n; ++j) p[j] = unif(rng);
    const BhResult res = benjamini_hochberg(p, 0.05);
    int nr = 0, fp = 0;
    for (int j = 0; j < n; ++j) {
      if (!res.selected[static_cast<std::size_t>(j)]) continue;
      ++nr;
      if (j >= n_de) ++fp;
    }
    fdr_sum += nr > 0 ? static_cast<double>(fp) / nr : 0.0;
  }
  CHECK(fdr_sum / seeds <= 0.05 + 0.02);
}

TEST_CASE("z-score transform") {
  Eigen::VectorXd p(3);
  p << 0.5, 0.025, 0.9;
  const Eigen::VectorXd z = z_scores(p);
  CHECK_THAT(z[0], Catch::Matchers::WithinAbs(0.0, 1e-12));
  CHECK_THAT(z[1], Catch::Matchers::WithinAbs(1.9600, 1e-4));
  CHECK(z[2] < 0.0);
  CHECK(z[1] > z[0]);  // strictly decreasing in P

  bool clamped = false;
  Eigen::VectorXd boundary(2);
  boundary << 0.0, 1.0;
  const Eigen::VectorXd zb = z_scores(boundary, &clamped);
  CHECK(clamped);
  CHECK(std::isfinite(zb[0]));
  CHECK(std::isfinite(zb[1]));
}

TEST_CASE("two-normal mixture recovers a planted alternative") {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> null_draw(0.0, 1.0), alt_draw(3.0, 1.0);
  int ok = 0;
  for (int rep = 0; rep < 5; ++rep) {
    Eigen::VectorXd z(5000);
    for (int j = 0; j < 5000; ++j) z[j] = j < 4500 ? null_draw(rng) : alt_draw(rng);
    const TwoNormalFit fit = fit_two_normal_mixture(z);
    if (fit.pi0 >= 0.85 && fit.pi0 <= 0.95 && fit.mu1 >= 2.5 && fit.mu1 <= 3.5) ++ok;
  }
  CHECK(ok >= 4);
}

TEST_CASE("two-normal mixture on pure null keeps pi0 high") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::VectorXd z(5000);
  for (Eigen::Index j = 0; j < z.size(); ++j) z[j] = gauss(rng);
  CHECK(fit_two_normal_mixture(z).pi0 >= 0.95);
}

TEST_CASE("theoretical-null mode pins the null component") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> null_draw(0.0, 1.0), alt_draw(3.0, 1.0);
  Eigen::VectorXd z(2000);
  for (int j = 0; j < 2000; ++j) z[j] = j < 1800 ? null_draw(rng) : alt_draw(rng);
  const TwoNormalFit fit = fit_two_normal_mixture(z, true);
  CHECK(fit.mu0 == 0.0);
  CHECK(fit.sd0 == 1.0);
}

TEST_CASE("local fdr is monotone above the crossing for equal variances") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> null_draw(0.0, 1.0), alt_draw(3.0, 1.0);
  Eigen::VectorXd z(4000);
  for (int j = 0; j < 4000; ++j) z[j] = j < 3600 ? null_draw(rng) : alt_draw(rng);
  const TwoNormalFit fit = fit_two_normal_mixture(z);
  // evaluate the fitted posterior on a grid above the component means
  auto tau0 = [&](double v) {
    const double l0 = std::log(fit.pi0) - 0.5 * std::pow((v - fit.mu0) / fit.sd0, 2) - std::log(fit.sd0);
    const double l1 = std::log1p(-fit.pi0) - 0.5 * std::pow((v - fit.mu1) / fit.sd1, 2) - std::log(fit.sd1);
    return 1.0 / (1.0 + std::exp(l1 - l0));
  };
  double prev = tau0(fit.mu1);
  for (double v = fit.mu1 + 0.25; v < fit.mu1 + 4.0; v += 0.25) {
    const double cur = tau0(v);
    CHECK(cur <= prev + 1e-9);
    prev = cur;
  }
}

TEST_CASE("local-fdr selection rule") {
  Eigen::VectorXd lf(2);
  lf << 0.01, 0.5;
  const LocalFdrSelection sel = select_by_local_fdr(lf, 0.1);
  CHECK(sel.selected == std::vector<bool>{true, false});
  CHECK_THAT(sel.implied_fdr, Catch::Matchers::WithinAbs(0.01, 1e-14));
  CHECK_FALSE(sel.empty);

  Eigen::VectorXd high(3);
  high << 0.4, 0.9, 0.2;
  const LocalFdrSelection none = select_by_local_fdr(high, 0.1);
  CHECK(none.empty);
  CHECK(none.implied_fdr == 0.0);

  const LocalFdrSelection all = select_by_local_fdr(high, 1.0);
  CHECK(all.selected == std::vector<bool>{true, true, true});

  CHECK_THROWS_AS(select_by_local_fdr(high, 0.0), DomainError);
}

TEST_CASE("evaluation metrics against truth") {
  SimulationTruth truth;
  truth.de_label = {DeLabel::kUp, DeLabel::kNull, DeLabel::kDown, DeLabel::kNull, DeLabel::kNull};
  truth.shift = {2, 0, -2, 0, 0};

  const EvaluationMetrics perfect = evaluate_against_truth({true, false, true, false, false}, truth);
  CHECK(perfect.fdp == 0.0);
  CHECK(perfect.power == 1.0);
  CHECK(perfect.fndp == 0.0);

  const EvaluationMetrics empty = evaluate_against_truth({false, false, false, false, false}, truth);
  CHECK(empty.fdp == 0.0);
  CHECK(empty.power == 0.0);
  CHECK_THAT(empty.fndp, Catch::Matchers::WithinAbs(2.0 / 5.0, 1e-14));

  const EvaluationMetrics mixed = evaluate_against_truth({true, true, false, false, false}, truth);
  CHECK_THAT(mixed.fdp, Catch::Matchers::WithinAbs(0.5, 1e-14));
  CHECK_THAT(mixed.power, Catch::Matchers::WithinAbs(0.5, 1e-14));
  // confusion-matrix accounting reconciles exactly
  const double fn = mixed.fndp * (5.0 - mixed.n_selected);
  CHECK_THAT(fn + mixed.power * 2.0, Catch::Matchers::WithinAbs(2.0, 1e-12));

  CHECK_THROWS_AS(evaluate_against_truth({true, false}, truth), DomainError);
}

TEST_CASE("fdp curve counts nulls among the top ranks") {
  SimulationTruth truth;
  truth.de_label = {DeLabel::kUp, DeLabel::kNull, DeLabel::kDown, DeLabel::kNull};
  truth.shift = {2, 0, -2, 0};
  const std::vector<Eigen::Index> order = {0, 1, 2, 3};
  const std::vector<double> curve = fdp_curve(order, truth, 4);
  REQUIRE(curve.size() == 4);
  CHECK(curve[0] == 0.0);
  CHECK_THAT(curve[1], Catch::Matchers::WithinAbs(0.5, 1e-14));
  CHECK_THAT(curve[2], Catch::Matchers::WithinAbs(1.0 / 3.0, 1e-14));
  CHECK_THAT(curve[3], Catch::Matchers::WithinAbs(0.5, 1e-14));
  CHECK_THROWS_AS(fdp_curve(order, truth, 5), DomainError);
}
