#include <sstream>

#include <gtest/gtest.h>

#include "qcomp/completion.hpp"
#include "qcomp/error.hpp"
#include "qcomp/evaluation.hpp"
#include "test_support.hpp"

namespace qcomp {
namespace {

using testing::make_row;
using testing::params_with;
using testing::params_with_sigma;
using testing::random_spd;

Eigen::MatrixXd bivariate(double rho) {
  Eigen::MatrixXd s(2, 2);
  s << 1.0, rho, rho, 1.0;
  return s;
}

Eigen::MatrixXd three_assays() {
  Eigen::MatrixXd s(3, 3);
  s << 1.0, 0.9, 0.1, 0.9, 1.0, 0.1, 0.1, 0.1, 1.0;
  return s;
}

TEST(CompleteRowTest, BivariateExample) {
  const auto params = params_with_sigma(bivariate(0.8));
  const auto result = complete_row(params, make_row("x", {kMissing, 1.0}, {0.0, 0.0}));
  ASSERT_EQ(result.partition.missing, std::vector<Index>{0});
  EXPECT_NEAR(result.mean[0], 0.8, 1e-15);
  EXPECT_NEAR(result.cov(0, 0), 0.36, 1e-15);
  EXPECT_NEAR(result.goc[0], 0.64, 1e-15);
  EXPECT_FALSE(result.jittered);
}

TEST(CompleteRowTest, NothingObservedGivesCalibratedPrior) {
  auto params = params_with_sigma(bivariate(0.8));
  auto result = complete_row(params, make_row("x", {kMissing, kMissing}, {0.0, 0.0}));
  EXPECT_EQ(result.mean, Eigen::VectorXd::Zero(2));
  EXPECT_EQ(result.cov, bivariate(0.8));
  EXPECT_EQ(result.goc, Eigen::VectorXd::Zero(2));

  params.B << 2.0, 0.0, 1.0, 1.0;
  params.b << 0.5, -0.5;
  const Eigen::VectorXd f = (Eigen::VectorXd(2) << 1.0, 3.0).finished();
  result = complete_row(params, make_row("x", {kMissing, kMissing}, {1.0, 3.0}));
  EXPECT_EQ(result.mean, calibrate(params, f));
}

TEST(CompleteRowTest, NothingMissingGivesEmptyResult) {
  const auto result = complete_row(params_with_sigma(bivariate(0.5)), make_row("x", {1, 2}, {0, 0}));
  EXPECT_EQ(result.mean.size(), 0);
  EXPECT_EQ(result.cov.size(), 0);
  EXPECT_EQ(result.goc.size(), 0);
}

TEST(CompleteRowTest, DiagonalCovarianceIgnoresObservations) {
  Eigen::MatrixXd sigma = Eigen::Vector3d(1.0, 2.0, 0.5).asDiagonal();
  const auto params = params_with_sigma(sigma);
  const auto result = complete_row(params, make_row("x", {kMissing, 5.0, kMissing}, {0.3, 0.0, -0.7}));
  EXPECT_EQ(result.mean, Eigen::Vector2d(0.3, -0.7));
  EXPECT_LT((result.cov - Eigen::Matrix2d(Eigen::Vector2d(1.0, 0.5).asDiagonal())).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_EQ(result.goc, Eigen::VectorXd::Zero(2));
}

TEST(CompleteRowTest, DestandardizesOutputs) {
  auto params = params_with_sigma(bivariate(0.8));
  params.stats.enabled = true;
  params.stats.mean << 10.0, -3.0;
  params.stats.std << 2.0, 0.5;
  // Observed assay 1 at one standard deviation above its (zero) calibrated mean.
  const auto result = complete_row(params, make_row("x", {kMissing, -3.0 + 0.5}, {10.0, -3.0}));
  EXPECT_NEAR(result.mean[0], 10.0 + 0.8 * 2.0, 1e-14);
  EXPECT_NEAR(result.cov(0, 0), 0.36 * 4.0, 1e-14);
  EXPECT_NEAR(result.goc[0], 0.64, 1e-15);
}

TEST(CompleteRowTest, SchemaLengthMismatchIsRejected) {
  const auto params = params_with_sigma(bivariate(0.8));
  EXPECT_THROW(complete_row(params, make_row("x", {1.0}, {0.0})), InputError);
}

TEST(GainOfCertaintyTest, Examples) {
  const auto bi = params_with_sigma(bivariate(0.8));
  EXPECT_NEAR(gain_of_certainty(bi, MaskPartition::from_observed({1}, 2))[0], 0.64, 1e-15);
  EXPECT_EQ(gain_of_certainty(bi, MaskPartition::from_observed({}, 2)), Eigen::VectorXd::Zero(2));

  const auto tri = params_with_sigma(three_assays());
  const Eigen::VectorXd goc = gain_of_certainty(tri, MaskPartition::from_observed({1, 2}, 3));
  EXPECT_NEAR(goc[0], (0.81 - 0.018 + 0.01) / 0.99, 1e-14);
  EXPECT_NEAR(goc[0], 0.8101, 1e-4);
  // Reference: Gauss-Jordan inverse of the observed block.
  Eigen::MatrixXd soo(2, 2);
  soo << 1.0, 0.1, 0.1, 1.0;
  const Eigen::RowVector2d smo(0.9, 0.1);
  EXPECT_NEAR(goc[0], (smo * oracle::explicit_inverse(soo) * smo.transpose())(0, 0), 1e-14);
}

TEST(GainOfCertaintyTest, DependsOnlyOnMask) {
  const auto params = params_with_sigma(three_assays());
  const Completer completer(params);
  const auto a = completer.complete(make_row("a", {kMissing, 0.1, 3.0}, {0.0, 1.0, 2.0}));
  const auto b = completer.complete(make_row("b", {kMissing, -8.0, 0.2}, {5.0, -1.0, 0.0}));
  EXPECT_EQ(a.goc, b.goc);
  EXPECT_NE(a.mean, b.mean);
}

TEST(GainOfCertaintyTest, VarianceDecomposition) {
  Rng rng(31);
  for (int trial = 0; trial < 300; ++trial) {
    const Index p = 2 + static_cast<Index>(rng.below(5));
    const Eigen::MatrixXd sigma = random_spd(p, rng);
    const auto params = params_with_sigma(sigma);
    std::vector<double> y(static_cast<std::size_t>(p)), f(static_cast<std::size_t>(p), 0.0);
    for (auto& v : y) v = rng.uniform() < 0.5 ? kMissing : rng.normal();
    const auto result = complete_row(params, make_row("r", y, f));
    for (Index k = 0; k < result.partition.num_missing(); ++k) {
      const Index j = result.partition.missing[static_cast<std::size_t>(k)];
      EXPECT_NEAR(result.goc[k] + result.cov(k, k), sigma(j, j), 1e-10);
      EXPECT_GE(result.goc[k], 0.0);
      EXPECT_GE(result.cov(k, k), 0.0);
    }
  }
}

TEST(GainOfCertaintyTest, MonotoneInObservedSet) {
  Rng rng(32);
  for (int trial = 0; trial < 30; ++trial) {
    const Index p = 2 + static_cast<Index>(rng.below(5));
    const auto params = params_with_sigma(random_spd(p, rng));
    const unsigned full = 1u << p;
    for (unsigned mask = 0; mask < full; ++mask) {
      std::vector<Index> obs;
      for (Index j = 0; j < p; ++j) {
        if (mask & (1u << j)) obs.push_back(j);
      }
      const auto part = MaskPartition::from_observed(obs, p);
      if (part.num_missing() < 2) continue;
      const Eigen::VectorXd before = gain_of_certainty(params, part);
      for (std::size_t add = 0; add < part.missing.size(); ++add) {
        auto more = obs;
        more.push_back(part.missing[add]);
        std::sort(more.begin(), more.end());
        const auto bigger = MaskPartition::from_observed(more, p);
        const Eigen::VectorXd after = gain_of_certainty(params, bigger);
        for (std::size_t k = 0, m = 0; k < part.missing.size(); ++k) {
          if (k == add) continue;
          EXPECT_GE(after[static_cast<Index>(m)], before[static_cast<Index>(k)] - 1e-12);
          ++m;
        }
      }
    }
  }
}

TEST(CompositeUncertaintyTest, BivariateExample) {
  const auto params = params_with_sigma(bivariate(0.8));
  SparseRow row = make_row("x", {kMissing, 1.0}, {0.0, 0.0});
  row.sigma_f = Eigen::Vector2d(0.5, 0.0);
  const auto cond = complete_row(params, row);
  const Eigen::VectorXd var = composite_uncertainty(params, row, cond);
  ASSERT_EQ(var.size(), 1);
  EXPECT_NEAR(var[0], 0.61, 1e-12);
}

TEST(CompositeUncertaintyTest, ObservedPredictionVarianceIsPropagated) {
  // sigma_f on the observed assay enters through D^2 = 0.64.
  const auto params = params_with_sigma(bivariate(0.8));
  SparseRow row = make_row("x", {kMissing, 1.0}, {0.0, 0.0});
  row.sigma_f = Eigen::Vector2d(0.0, 0.5);
  const auto cond = complete_row(params, row);
  EXPECT_NEAR(composite_uncertainty(params, row, cond)[0], 0.64 * 0.25 + 0.36, 1e-12);
}

TEST(CompositeUncertaintyTest, ZeroPredictionStdOrZeroCalibration) {
  Rng rng(2);
  const Eigen::MatrixXd sigma = random_spd(4, rng);
  auto params = params_with_sigma(sigma);
  SparseRow row = make_row("x", {kMissing, 0.3, kMissing, -1.0}, {0.1, 0.2, 0.3, 0.4});
  row.sigma_f = Eigen::VectorXd::Zero(4);
  auto cond = complete_row(params, row);
  EXPECT_EQ(composite_uncertainty(params, row, cond), cond.cov.diagonal());

  params.B.setZero();
  row.sigma_f = Eigen::Vector4d(0.3, 0.4, 0.5, 0.6);
  cond = complete_row(params, row);
  EXPECT_EQ(composite_uncertainty(params, row, cond), cond.cov.diagonal());
}

TEST(CompositeUncertaintyTest, RequiresPredictionStd) {
  const auto params = params_with_sigma(bivariate(0.8));
  const SparseRow row = make_row("x", {kMissing, 1.0}, {0.0, 0.0});
  EXPECT_THROW(composite_uncertainty(params, row, complete_row(params, row)), InputError);
}

TEST(CompositeUncertaintyTest, DataScale) {
  auto params = params_with_sigma(bivariate(0.8));
  params.stats.enabled = true;
  params.stats.mean << 1.0, 2.0;
  params.stats.std << 3.0, 3.0;
  SparseRow row = make_row("x", {kMissing, 2.0}, {1.0, 2.0});
  row.sigma_f = Eigen::Vector2d(1.5, 0.0);  // 0.5 in standardized units
  const auto cond = complete_row(params, row);
  EXPECT_NEAR(composite_uncertainty(params, row, cond)[0], 0.61 * 9.0, 1e-12);
}

TEST(CompleterTest, CompleteAllMatchesRowByRow) {
  Rng rng(8);
  const auto params = params_with_sigma(random_spd(4, rng));
  Dataset data{params.schema(), testing::random_rows(4, 200, rng, 0.5)};
  for (auto& row : data.rows) row.sigma_f = Eigen::VectorXd::Constant(4, 0.2);
  const Completer completer(params);
  const auto all = completer.complete_all(data, true);
  ASSERT_EQ(all.size(), data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto one = complete_row(params, data.rows[i]);
    EXPECT_EQ(all[i].mean, one.mean);
    EXPECT_EQ(all[i].cov, one.cov);
    ASSERT_TRUE(all[i].composite_var.has_value());
  }
}

TEST(CompleterTest, RejectsOtherSchema) {
  const auto params = params_with_sigma(bivariate(0.5));
  Dataset data{AssaySchema({"x", "y"}), {make_row("a", {1.0, kMissing}, {0.0, 0.0})}};
  EXPECT_THROW(Completer(params).complete_all(data, false), InputError);
}

TEST(CompleterTest, EmpiricalCalibration) {
  // Fixed pattern: assays 0 and 2 missing. Residual variance of the completion
  // against the hidden truth must match the conditional variance.
  Eigen::MatrixXd sigma(4, 4);
  sigma << 1.0, 0.6, 0.3, 0.2, 0.6, 1.5, 0.4, 0.1, 0.3, 0.4, 0.8, 0.3, 0.2, 0.1, 0.3, 1.2;
  auto spec = SyntheticSpec::with_covariance(sigma, 20000, 99);
  const auto synth = generate_synthetic(spec);
  const auto params = params_with_sigma(sigma);
  const Completer completer(params);
  Eigen::Vector2d sum = Eigen::Vector2d::Zero(), sq = Eigen::Vector2d::Zero();
  Eigen::VectorXd cond_var;
  const std::size_t n = synth.data.size();
  for (std::size_t i = 0; i < n; ++i) {
    SparseRow row = synth.data.rows[i];
    row.y[0] = kMissing;
    row.y[2] = kMissing;
    const auto result = completer.complete(row);
    cond_var = result.cov.diagonal();
    const Eigen::Vector2d r(synth.oracle[i].full_y[0] - result.mean[0],
                            synth.oracle[i].full_y[2] - result.mean[1]);
    sum += r;
    sq += r.cwiseProduct(r);
  }
  const Eigen::Vector2d mean = sum / n;
  const Eigen::Vector2d var = (sq - n * mean.cwiseProduct(mean)) / (n - 1.0);
  for (Index k = 0; k < 2; ++k) {
    EXPECT_NEAR(var[k] / cond_var[k], 1.0, 0.05);
  }
}

TEST(WriteCompletionsTest, Layout) {
  const auto params = params_with_sigma(bivariate(0.8));
  Dataset data{params.schema(), {make_row("c1", {kMissing, 1.0}, {0.0, 0.0})}};
  const auto results = Completer(params).complete_all(data, false);
  std::ostringstream out;
  write_completions(out, data, results, {true, false});
  const std::string text = out.str();
  const std::string head = "compound_id,A0,A0.source,A0.condstd,A1,A1.source,A1.condstd\nc1,0.8,completed,";
  ASSERT_EQ(text.substr(0, head.size()), head);
  const std::string rest = text.substr(head.size());
  EXPECT_NEAR(std::stod(rest.substr(0, rest.find(','))), 0.6, 1e-15);
  EXPECT_EQ(rest.substr(rest.find(',')), ",1,observed,\n");
}

}  // namespace
}  // namespace qcomp
