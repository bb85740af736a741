#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "mixcontrast/errors.hpp"
#include "mixcontrast/expression_matrix.hpp"

using namespace mixcontrast;
namespace fs = std::filesystem;

namespace {

fs::path write_temp(const std::string& name, const std::string& content) {
  const fs::path path = fs::temp_directory_path() / name;
  std::ofstream f(path);
  f << content;
  return path;
}

}  // namespace

TEST_CASE("loading rejects a class with fewer than 2 samples") {
  const auto m = write_temp("em_small.tsv", "id\ts1\ts2\ts3\nf1\t1\t2\t3\nf2\t4\t5\t6\n");
  const auto l = write_temp("em_small_labels.tsv", "s1\t1\ns2\t1\ns3\t2\n");
  REQUIRE_THROWS_MATCHES(load_expression_matrix(m.string(), l.string()), DataError,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::ContainsSubstring("class 2 has fewer than 2 samples")));
}

TEST_CASE("loading a 3x4 matrix with two balanced classes") {
  const auto m = write_temp("em_34.tsv",
                            "id\ts1\ts2\ts3\ts4\n"
                            "f1\t1\t2\t3\t4\n"
                            "f2\t5\t6\t7\t8\n"
                            "f3\t9\t10\t11\t12\n");
  const auto l = write_temp("em_34_labels.tsv", "s1\t1\ns2\t1\ns3\t2\ns4\t2\n");
  const ExpressionMatrix data = load_expression_matrix(m.string(), l.string());
  CHECK(data.n() == 3);
  CHECK(data.p() == 4);
  CHECK(data.num_classes() == 2);
  CHECK(data.values(1, 2) == 7.0);
  CHECK_FALSE(data.standardized);
}

TEST_CASE("non-numeric cell is reported with its position") {
  const auto m = write_temp("em_na.tsv",
                            "id\ts1\ts2\ts3\ts4\n"
                            "f1\t1\t2\t3\t4\n"
                            "f2\t5\tNA\t7\t8\n");
  const auto l = write_temp("em_na_labels.tsv", "s1\t1\ns2\t1\ns3\t2\ns4\t2\n");
  REQUIRE_THROWS_MATCHES(load_expression_matrix(m.string(), l.string()), DataError,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::ContainsSubstring("row 2, column 3")));
}

TEST_CASE("duplicate feature ids are rejected") {
  const auto m = write_temp("em_dup.tsv",
                            "id\ts1\ts2\ts3\ts4\nf1\t1\t2\t3\t4\nf1\t5\t6\t7\t8\n");
  const auto l = write_temp("em_dup_labels.tsv", "s1\t1\ns2\t1\ns3\t2\ns4\t2\n");
  CHECK_THROWS_AS(load_expression_matrix(m.string(), l.string()), DataError);
}

TEST_CASE("column standardization maps (1,2,3) to (-1,0,1)") {
  ExpressionMatrix data;
  data.values.resize(3, 2);
  data.values.col(0) << 1, 2, 3;
  data.values.col(1) << 10, 14, 12;
  data.feature_ids = {"f1", "f2", "f3"};
  data.sample_ids = {"s1", "s2"};
  data.class_of_sample = {1, 1};
  const ExpressionMatrix out = column_standardize(data);
  CHECK(out.standardized);
  CHECK_THAT(out.values(0, 0), Catch::Matchers::WithinAbs(-1.0, 1e-12));
  CHECK_THAT(out.values(1, 0), Catch::Matchers::WithinAbs(0.0, 1e-12));
  CHECK_THAT(out.values(2, 0), Catch::Matchers::WithinAbs(1.0, 1e-12));
}

TEST_CASE("constant column is rejected by name") {
  ExpressionMatrix data;
  data.values.resize(3, 1);
  data.values.col(0) << 5, 5, 5;
  data.feature_ids = {"f1", "f2", "f3"};
  data.sample_ids = {"s1"};
  data.class_of_sample = {1};
  REQUIRE_THROWS_MATCHES(column_standardize(data), DataError,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::ContainsSubstring("constant column")));
}

TEST_CASE("standardized columns have mean 0 and sd 1; effectively idempotent") {
  ExpressionMatrix data;
  data.values = Eigen::MatrixXd::Random(40, 6) * 3.0;
  data.values.array() += 10.0;
  for (int j = 0; j < 40; ++j) data.feature_ids.push_back("f" + std::to_string(j));
  for (int s = 0; s < 6; ++s) data.sample_ids.push_back("s" + std::to_string(s));
  data.class_of_sample = {1, 1, 1, 2, 2, 2};
  const ExpressionMatrix once = column_standardize(data);
  const double n = 40.0;
  for (Eigen::Index c = 0; c < once.p(); ++c) {
    const double mu = once.values.col(c).mean();
    const double sd = std::sqrt((once.values.col(c).array() - mu).square().sum() / (n - 1.0));
    CHECK(std::abs(mu) < 1e-10);
    CHECK(std::abs(sd - 1.0) < 1e-10);
  }
  ExpressionMatrix again = once;
  again.standardized = false;  // bypass the flag to probe the fixed point
  const ExpressionMatrix twice = column_standardize(again);
  CHECK((twice.values - once.values).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("design matrices from labels (1,1,2)") {
  const DesignMatrices d = build_design_matrices({1, 1, 2});
  Eigen::MatrixXd expect(3, 2);
  expect << 1, 0, 1, 0, 0, 1;
  CHECK(d.X == expect);
  CHECK(d.U() == expect);
  CHECK(d.p() == 3);
  CHECK(d.m() == 2);
}

TEST_CASE("single-class design is a column of ones") {
  const DesignMatrices d = build_design_matrices({1, 1});
  CHECK(d.X == Eigen::MatrixXd::Ones(2, 1));
}

TEST_CASE("X^T X is the diagonal of class sizes") {
  const DesignMatrices d = build_design_matrices({1, 1, 1, 2, 2, 3, 3, 3, 3});
  const Eigen::MatrixXd xtx = d.X.transpose() * d.X;
  Eigen::MatrixXd expect = Eigen::MatrixXd::Zero(3, 3);
  expect.diagonal() << 3, 2, 4;
  CHECK(xtx == expect);
}

TEST_CASE("non-contiguous class labels are rejected") {
  CHECK_THROWS_AS(build_design_matrices({1, 1, 3, 3}), DataError);
  CHECK_THROWS_AS(build_design_matrices({0, 0, 1, 1}), DataError);
}

TEST_CASE("save and reload round-trips values bit-exactly") {
  ExpressionMatrix data;
  data.values = Eigen::MatrixXd::Random(25, 4);
  data.values(3, 2) = 1.0 / 3.0;
  data.values(7, 1) = -1e-17;
  for (int j = 0; j < 25; ++j) data.feature_ids.push_back("f" + std::to_string(j));
  data.sample_ids = {"s1", "s2", "s3", "s4"};
  data.class_of_sample = {1, 1, 2, 2};
  const fs::path m = fs::temp_directory_path() / "em_rt.tsv";
  const fs::path l = fs::temp_directory_path() / "em_rt_labels.tsv";
  save_expression_matrix(data, m.string(), l.string());
  const ExpressionMatrix back = load_expression_matrix(m.string(), l.string());
  REQUIRE(back.values.rows() == data.values.rows());
  CHECK(back.values == data.values);
  CHECK(back.feature_ids == data.feature_ids);
  CHECK(back.class_of_sample == data.class_of_sample);
}
