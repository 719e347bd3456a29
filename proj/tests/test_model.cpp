#include <cmath>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "qcomp/error.hpp"
#include "qcomp/model.hpp"
#include "test_support.hpp"

namespace qcomp {
namespace {

using testing::make_row;
using testing::names;
using testing::random_spd;

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

TEST(CalibrateTest, Examples) {
  ModelParams params = identity_params(AssaySchema(names(2)));
  EXPECT_EQ(calibrate(params, vec({1.3, -0.2})), vec({1.3, -0.2}));

  params.B.setZero();
  params.b = vec({0.5, 0.5});
  EXPECT_EQ(calibrate(params, vec({7, -9})), vec({0.5, 0.5}));

  params.B << 1.0, 0.5, 0.0, 1.0;
  params.b = vec({0.1, -0.1});
  const Eigen::VectorXd mu = calibrate(params, vec({1, 2}));
  EXPECT_NEAR(mu[0], 1.1, 1e-15);
  EXPECT_NEAR(mu[1], 2.4, 1e-15);
}

TEST(CalibrateTest, RejectsNonFinite) {
  const ModelParams params = identity_params(AssaySchema(names(2)));
  EXPECT_THROW(calibrate(params, vec({1.0, kMissing})), InputError);
  EXPECT_THROW(calibrate(params, vec({1.0})), InputError);
}

TEST(CalibrateTest, IsAffine) {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const Index p = 1 + static_cast<Index>(rng.below(6));
    ModelParams params = identity_params(AssaySchema(names(p)));
    for (Index i = 0; i < p; ++i) {
      params.b[i] = rng.normal();
      for (Index j = 0; j < p; ++j) params.B(i, j) = rng.normal();
    }
    Eigen::VectorXd f1(p), f2(p);
    for (Index j = 0; j < p; ++j) {
      f1[j] = rng.normal();
      f2[j] = rng.normal();
    }
    const Eigen::VectorXd lhs = calibrate(params, f1 + f2) - calibrate(params, f1) -
                                calibrate(params, f2) + calibrate(params, Eigen::VectorXd::Zero(p));
    EXPECT_LT(lhs.cwiseAbs().maxCoeff(), 1e-12);
  }
}

Dataset residual_dataset() {
  // Assay 0 residuals {-2, 0, 2}: n-1 std = 2. Assay 1 residuals {1, 1, 1}: zero spread.
  Dataset data{AssaySchema(names(2)), {}};
  data.rows.push_back(make_row("a", {-2.0, 1.0}, {0.0, 0.0}));
  data.rows.push_back(make_row("b", {1.0, 2.0}, {1.0, 1.0}));
  data.rows.push_back(make_row("c", {4.0, 3.0}, {2.0, 2.0}));
  return data;
}

TEST(InitParamsTest, IdentityMode) {
  const auto params = init_params(residual_dataset(), 1, InitMode::identity);
  EXPECT_EQ(params.sigma(), Eigen::MatrixXd::Identity(2, 2));
  EXPECT_EQ(params.B, Eigen::MatrixXd::Identity(2, 2));
  EXPECT_EQ(params.b, Eigen::VectorXd::Zero(2));
}

TEST(InitParamsTest, ResidualModeUsesResidualStd) {
  const auto params = init_params(residual_dataset(), 1, InitMode::residual);
  EXPECT_NEAR(params.cov.lower()(0, 0), 2.0, 1e-14);
  EXPECT_NEAR(params.sigma()(0, 0), 4.0, 1e-13);
  // Zero-spread assay falls back to a unit diagonal.
  EXPECT_EQ(params.cov.lower()(1, 1), 1.0);
  EXPECT_EQ(params.cov.strict_lower[0], 0.0);
}

TEST(InitParamsTest, UnobservedAssayFallsBack) {
  Dataset data{AssaySchema(names(2)), {}};
  data.rows.push_back(make_row("a", {1.0, kMissing}, {0.0, 0.0}));
  data.rows.push_back(make_row("b", {3.0, kMissing}, {0.0, 0.0}));
  const auto params = init_params(data, 0, InitMode::residual);
  EXPECT_NEAR(params.cov.lower()(0, 0), std::sqrt(2.0), 1e-14);
  EXPECT_EQ(params.cov.lower()(1, 1), 1.0);
}

TEST(InitParamsTest, RandomModeIsSeededAndSmall) {
  Dataset data{AssaySchema(names(4)), {}};
  Rng rng(3);
  for (const auto& r : testing::random_rows(4, 50, rng, 0.2)) data.rows.push_back(r);
  const auto a = init_params(data, 11, InitMode::random);
  const auto b = init_params(data, 11, InitMode::random);
  const auto c = init_params(data, 12, InitMode::random);
  EXPECT_EQ(serialize_model(a), serialize_model(b));
  EXPECT_NE(a.cov.strict_lower, c.cov.strict_lower);
  EXPECT_LE(a.cov.strict_lower.cwiseAbs().maxCoeff(), 0.01);
  EXPECT_GT(a.cov.strict_lower.cwiseAbs().maxCoeff(), 0.0);
  const auto residual = init_params(data, 11, InitMode::residual);
  EXPECT_EQ(a.cov.log_diag, residual.cov.log_diag);
}

TEST(InitParamsTest, EmptyDatasetRejected) {
  EXPECT_THROW(init_params(Dataset{AssaySchema(names(2)), {}}, 0, InitMode::residual), InputError);
}

ModelParams random_model(Index p, Rng& rng) {
  ModelParams params = identity_params(AssaySchema(names(p)));
  for (Index i = 0; i < p; ++i) {
    params.b[i] = rng.normal() / 3.0;
    for (Index j = 0; j < p; ++j) params.B(i, j) = rng.normal();
  }
  params.cov = CovarianceFactor::from_covariance(random_spd(p, rng));
  params.stats.enabled = true;
  for (Index j = 0; j < p; ++j) {
    params.stats.mean[j] = rng.normal() * 10;
    params.stats.std[j] = 0.1 + rng.uniform() * 5;
  }
  params.training = {4, 77, 1.0 / 3.0, "random"};
  return params;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("qcomp_test_" + name);
}

TEST(ModelFileTest, RoundTripIsExact) {
  Rng rng(9);
  const ModelParams params = random_model(5, rng);
  const auto path = temp_path("roundtrip.json");
  save_model(params, path);
  const ModelParams back = load_model(path);
  std::filesystem::remove(path);
  EXPECT_EQ(back.assay_names, params.assay_names);
  EXPECT_EQ(back.B, params.B);
  EXPECT_EQ(back.b, params.b);
  EXPECT_EQ(back.cov.log_diag, params.cov.log_diag);
  EXPECT_EQ(back.cov.strict_lower, params.cov.strict_lower);
  EXPECT_EQ(back.stats.mean, params.stats.mean);
  EXPECT_EQ(back.stats.std, params.stats.std);
  EXPECT_EQ(back.stats.enabled, params.stats.enabled);
  EXPECT_EQ(back.training.epochs, 4);
  EXPECT_EQ(back.training.seed, 77u);
  EXPECT_EQ(back.training.final_loss, 1.0 / 3.0);
  EXPECT_EQ(back.training.init_mode, "random");
  EXPECT_EQ(back.fingerprint(), params.fingerprint());
}

TEST(ModelFileTest, RoundTripPreservesLoglik) {
  Rng rng(10);
  for (int trial = 0; trial < 20; ++trial) {
    const Index p = 1 + static_cast<Index>(rng.below(6));
    const ModelParams params = random_model(p, rng);
    const ModelParams back = deserialize_model(serialize_model(params));
    std::vector<Index> all;
    for (Index j = 0; j < p; ++j) all.push_back(j);
    const auto part = MaskPartition::from_observed(all, p);
    Eigen::VectorXd f(p), y(p);
    for (Index j = 0; j < p; ++j) {
      f[j] = rng.normal();
      y[j] = rng.normal();
    }
    const double a = marginal_loglik(extract_blocks(calibrate(params, f), params.sigma(), part), y);
    const double b = marginal_loglik(extract_blocks(calibrate(back, f), back.sigma(), part), y);
    EXPECT_NEAR(a, b, 1e-12 * std::max(1.0, std::abs(a)));
  }
}

TEST(ModelFileTest, ReorderedSchemaIsRejected) {
  const ModelParams params = identity_params(AssaySchema({"logD", "sol"}));
  EXPECT_NO_THROW(check_schema(params, AssaySchema({"logD", "sol"})));
  EXPECT_THROW(check_schema(params, AssaySchema({"sol", "logD"})), InputError);
}

TEST(ModelFileTest, TruncatedFileIsCorrupt) {
  const std::string text = serialize_model(identity_params(AssaySchema(names(3))));
  try {
    deserialize_model(text.substr(0, text.size() / 2));
    FAIL() << "expected InputError";
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("corrupt"), std::string::npos);
  }
}

TEST(ModelFileTest, VersionMismatchIsRejected) {
  std::string text = serialize_model(identity_params(AssaySchema(names(2))));
  const auto pos = text.find("\"format_version\": 1");
  ASSERT_NE(pos, std::string::npos) << text;
  text.replace(pos, 19, "\"format_version\": 2");
  try {
    deserialize_model(text);
    FAIL() << "expected InputError";
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("version"), std::string::npos);
  }
}

TEST(ModelFileTest, MissingFileIsInputError) {
  EXPECT_THROW(load_model(temp_path("does_not_exist.json")), InputError);
}

TEST(DataScaleTest, MatchesDirectComputation) {
  Rng rng(12);
  const ModelParams params = random_model(3, rng);
  const auto ds = to_data_scale(params);
  // mu_data for f_data must equal de-standardized mu for standardized f.
  Eigen::VectorXd f_data(3);
  for (Index j = 0; j < 3; ++j) f_data[j] = rng.normal() * 4;
  const Eigen::VectorXd f_std =
      (f_data - params.stats.mean).cwiseQuotient(params.stats.std);
  const Eigen::VectorXd mu_std = calibrate(params, f_std);
  const Eigen::VectorXd expected = mu_std.cwiseProduct(params.stats.std) + params.stats.mean;
  const Eigen::VectorXd got = ds.B.transpose() * f_data + ds.b;
  EXPECT_LT((got - expected).cwiseAbs().maxCoeff(), 1e-10);
  const Eigen::MatrixXd s = params.stats.std.asDiagonal();
  EXPECT_LT((ds.sigma - s * params.sigma() * s).cwiseAbs().maxCoeff(), 1e-10);
}

}  // namespace
}  // namespace qcomp
