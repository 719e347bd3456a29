#include <cmath>
#include <numbers>

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include "qcomp/error.hpp"
#include "qcomp/evaluation.hpp"
#include "qcomp/gaussian.hpp"
#include "qcomp/parallel.hpp"
#include "test_support.hpp"

namespace qcomp {
namespace {

using testing::random_spd;

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

Eigen::MatrixXd bivariate(double rho) {
  Eigen::MatrixXd s(2, 2);
  s << 1.0, rho, rho, 1.0;
  return s;
}

TEST(CovarianceFactorTest, IdentityMaterializesToIdentity) {
  CovarianceFactor f{Eigen::VectorXd::Zero(2), Eigen::VectorXd::Zero(1)};
  EXPECT_EQ(f.materialize(), Eigen::MatrixXd::Identity(2, 2));
}

TEST(CovarianceFactorTest, TwoByTwoProduct) {
  CovarianceFactor f{Eigen::VectorXd::Zero(2), Eigen::VectorXd::Constant(1, 0.8)};
  Eigen::MatrixXd expected(2, 2);
  expected << 1.0, 0.8, 0.8, 1.64;
  EXPECT_TRUE(f.materialize().isApprox(expected, 1e-15));
  Eigen::MatrixXd l = f.lower();
  EXPECT_TRUE((l * l.transpose()).isApprox(expected, 1e-15));
}

TEST(CovarianceFactorTest, StrictLowerIsRowMajor) {
  Eigen::MatrixXd l(3, 3);
  l << 1, 0, 0, 2, 1, 0, 3, 4, 1;
  const auto f = CovarianceFactor::from_lower(l);
  EXPECT_EQ(f.strict_lower, (Eigen::VectorXd(3) << 2, 3, 4).finished());
  EXPECT_EQ(f.lower(), l);
}

TEST(CovarianceFactorTest, AnyFactorIsPositiveDefiniteAndSymmetric) {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const Index p = 1 + static_cast<Index>(rng.below(7));
    CovarianceFactor f{Eigen::VectorXd(p), Eigen::VectorXd(CovarianceFactor::num_strict_lower(p))};
    for (Index i = 0; i < p; ++i) f.log_diag[i] = rng.uniform(-1.5, 1.5);
    for (Index k = 0; k < f.strict_lower.size(); ++k) f.strict_lower[k] = rng.uniform(-2, 2);
    const Eigen::MatrixXd s = f.materialize();
    EXPECT_EQ(s, s.transpose());
    const double min_eig = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(s).eigenvalues().minCoeff();
    EXPECT_GT(min_eig, 1e-10);
  }
}

TEST(ExtractBlocksTest, GathersByIndex) {
  Eigen::MatrixXd s(3, 3);
  s << 1.0, 0.3, 0.2, 0.3, 2.0, 0.5, 0.2, 0.5, 3.0;
  const Eigen::VectorXd mu = (Eigen::VectorXd(3) << 10, 20, 30).finished();
  const auto pg = extract_blocks(mu, s, MaskPartition::from_observed({0, 2}, 3));
  EXPECT_EQ(pg.sigma_mo, (Eigen::MatrixXd(1, 2) << 0.3, 0.5).finished());
  EXPECT_EQ(pg.sigma_oo, (Eigen::MatrixXd(2, 2) << 1.0, 0.2, 0.2, 3.0).finished());
  EXPECT_EQ(pg.mu_m, Eigen::VectorXd::Constant(1, 20));

  const auto full = extract_blocks(mu, s, MaskPartition::from_observed({0, 1, 2}, 3));
  EXPECT_EQ(full.sigma_oo, s);
  EXPECT_EQ(full.sigma_mm.size(), 0);
  EXPECT_EQ(full.sigma_mo.size(), 0);

  const auto none = extract_blocks(mu, s, MaskPartition::from_observed({}, 3));
  EXPECT_EQ(none.sigma_mm, s);
  EXPECT_EQ(none.sigma_oo.size(), 0);
}

PartitionedGaussian observed_only(const Eigen::MatrixXd& s, const Eigen::VectorXd& mu) {
  const Index p = s.rows();
  std::vector<Index> all(static_cast<std::size_t>(p));
  for (Index i = 0; i < p; ++i) all[static_cast<std::size_t>(i)] = i;
  return extract_blocks(mu, s, MaskPartition::from_observed(all, p));
}

TEST(MarginalLoglikTest, ClosedForms) {
  const auto one = observed_only(Eigen::MatrixXd::Identity(1, 1), Eigen::VectorXd::Zero(1));
  EXPECT_NEAR(marginal_loglik(one, Eigen::VectorXd::Zero(1)), -0.5 * kLog2Pi, 1e-15);
  EXPECT_NEAR(marginal_loglik(one, Eigen::VectorXd::Constant(1, 2.0)), -0.5 * (4.0 + kLog2Pi), 1e-14);
  EXPECT_NEAR(-0.5 * kLog2Pi, -0.918939, 1e-6);
}

TEST(MarginalLoglikTest, BivariateMatchesReferenceOracle) {
  const auto pg = observed_only(bivariate(0.8), Eigen::VectorXd::Zero(2));
  const Eigen::VectorXd r = Eigen::VectorXd::Ones(2);
  // Reference: Eigen LU inverse and determinant.
  const Eigen::MatrixXd s = bivariate(0.8);
  const double quad = r.dot(s.fullPivLu().inverse() * r);
  EXPECT_NEAR(quad, 2.0 / 1.8, 1e-14);
  const double expected = -0.5 * (quad + std::log(s.fullPivLu().determinant()) + 2.0 * kLog2Pi);
  EXPECT_NEAR(marginal_loglik(pg, r), expected, 1e-13);
  EXPECT_NEAR(marginal_loglik(pg, r), -1.882607, 1e-6);
}

TEST(MarginalLoglikTest, AgreesWithBruteForceDensity) {
  Rng rng(17);
  for (int trial = 0; trial < 300; ++trial) {
    const Index p = 1 + static_cast<Index>(rng.below(6));
    const Eigen::MatrixXd s = random_spd(p, rng);
    Eigen::VectorXd mu(p), y(p);
    for (Index j = 0; j < p; ++j) {
      mu[j] = rng.normal();
      y[j] = rng.normal() * 2;
    }
    const double got = marginal_loglik(observed_only(s, mu), y);
    // Explicit inverse and determinant via Eigen's LU, a route distinct from LLT.
    const double want = -0.5 * ((y - mu).dot(s.fullPivLu().inverse() * (y - mu)) +
                                std::log(s.fullPivLu().determinant()) + p * kLog2Pi);
    EXPECT_NEAR(got, want, 1e-8 * std::abs(want));
  }
}

TEST(MarginalLoglikTest, RequiresObservation) {
  const auto pg = extract_blocks(Eigen::VectorXd::Zero(2), Eigen::MatrixXd::Identity(2, 2),
                                 MaskPartition::from_observed({}, 2));
  EXPECT_THROW(marginal_loglik(pg, Eigen::VectorXd(0)), InputError);
}

TEST(ConditionalTest, BivariateExample) {
  const auto pg = extract_blocks(Eigen::VectorXd::Zero(2), bivariate(0.8),
                                 MaskPartition::from_observed({1}, 2));
  const auto c = conditional(pg, Eigen::VectorXd::Constant(1, 1.0));
  EXPECT_NEAR(c.mean[0], 0.8, 1e-15);
  EXPECT_NEAR(c.cov(0, 0), 0.36, 1e-15);
}

TEST(ConditionalTest, BivariateMonteCarloOracle) {
  // Draw 10^6 joint samples, keep those with y2 within 0.01 of 1.0 and compare
  // the empirical conditional mean with 0.8 at three standard errors.
  Rng rng(2024);
  const double rho = 0.8;
  const double s = std::sqrt(1 - rho * rho);
  double sum = 0.0, sq = 0.0;
  std::size_t kept = 0;
  for (int i = 0; i < 1'000'000; ++i) {
    const double z1 = rng.normal(), z2 = rng.normal();
    const double y2 = z1;
    const double y1 = rho * z1 + s * z2;
    if (std::abs(y2 - 1.0) < 0.01) {
      sum += y1;
      sq += y1 * y1;
      ++kept;
    }
  }
  ASSERT_GT(kept, 1000u);
  const double mean = sum / kept;
  const double var = sq / kept - mean * mean;
  const double se = std::sqrt(var / kept);
  EXPECT_NEAR(mean, 0.8, 3 * se);
  EXPECT_NEAR(var, 0.36, 0.03);
}

TEST(ConditionalTest, IdentityCovarianceDoesNotUpdate) {
  const Eigen::VectorXd mu = (Eigen::VectorXd(3) << 1, 2, 3).finished();
  const auto pg = extract_blocks(mu, Eigen::MatrixXd::Identity(3, 3), MaskPartition::from_observed({1}, 3));
  const auto c = conditional(pg, Eigen::VectorXd::Constant(1, 42.0));
  EXPECT_EQ(c.mean, (Eigen::VectorXd(2) << 1, 3).finished());
  EXPECT_EQ(c.cov, Eigen::MatrixXd::Identity(2, 2));
}

TEST(ConditionalTest, NoObservationReturnsPrior) {
  Rng rng(8);
  const Eigen::MatrixXd s = random_spd(4, rng);
  const Eigen::VectorXd mu = Eigen::VectorXd::LinSpaced(4, -1, 1);
  const auto pg = extract_blocks(mu, s, MaskPartition::from_observed({}, 4));
  const auto c = conditional(pg, Eigen::VectorXd(0));
  EXPECT_EQ(c.mean, mu);
  EXPECT_EQ(c.cov, s);
}

TEST(ConditionalTest, LawOfTotalVariance) {
  Rng rng(21);
  for (int trial = 0; trial < 500; ++trial) {
    const Index p = 2 + static_cast<Index>(rng.below(5));
    const Eigen::MatrixXd s = random_spd(p, rng);
    std::vector<Index> obs;
    for (Index j = 0; j < p; ++j) {
      if (rng.uniform() < 0.5) obs.push_back(j);
    }
    const auto part = MaskPartition::from_observed(obs, p);
    if (part.num_missing() == 0) continue;
    const auto pg = extract_blocks(Eigen::VectorXd::Zero(p), s, part);
    const auto c = conditional(pg, Eigen::VectorXd::Zero(part.num_observed()));
    Eigen::MatrixXd explained = Eigen::MatrixXd::Zero(part.num_missing(), part.num_missing());
    if (part.num_observed() > 0) {
      explained = pg.sigma_mo * pg.sigma_oo.fullPivLu().inverse() * pg.sigma_mo.transpose();
    }
    EXPECT_LT((c.cov + explained - pg.sigma_mm).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_EQ(c.cov, c.cov.transpose());
    EXPECT_GT(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(c.cov).eigenvalues().minCoeff(), -1e-12);
  }
}

TEST(BlockFactorTest, JitterRescuesSemidefiniteBlock) {
  Eigen::MatrixXd s(2, 2);
  s << 1.0, 1.0, 1.0, 1.0;  // rank one
  const BlockFactor factor(s);
  EXPECT_TRUE(factor.jittered());
  EXPECT_TRUE(std::isfinite(factor.log_det()));
}

TEST(BlockFactorTest, IndefiniteBlockFails) {
  Eigen::MatrixXd s(2, 2);
  s << 1.0, 2.0, 2.0, 1.0;
  EXPECT_THROW(BlockFactor{s}, NumericalError);
}

TEST(PatternCacheTest, ConcurrentLookupsShareEntries) {
  Rng rng(4);
  const Index p = 6;
  PatternCache cache(random_spd(p, rng));
  std::vector<MaskPartition> parts;
  for (int i = 0; i < 400; ++i) {
    std::vector<Index> obs;
    for (Index j = 0; j < p; ++j) {
      if ((i >> j) & 1) obs.push_back(j);
    }
    parts.push_back(MaskPartition::from_observed(obs, p));
  }
  set_thread_count(4);
  std::vector<std::shared_ptr<const PatternTerms>> got(parts.size());
  parallel_for(parts.size(), [&](std::size_t i) { got[i] = cache.get(parts[i]); });
  set_thread_count(0);
  EXPECT_EQ(cache.size(), 64u);
  for (std::size_t i = 0; i < parts.size(); ++i) {
    EXPECT_EQ(got[i]->partition, parts[i]);
    EXPECT_EQ(got[i].get(), cache.get(parts[i]).get());
  }
}

}  // namespace
}  // namespace qcomp
