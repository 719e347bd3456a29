#pragma once

#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "qcomp/schema.hpp"

namespace qcomp {

// Cholesky factor L of a covariance matrix, stored unconstrained: the log of
// L's diagonal and L's strictly-lower entries in row-major order
// (1,0), (2,0), (2,1), (3,0), ... Any values give a positive-definite L*L^T.
struct CovarianceFactor {
  Eigen::VectorXd log_diag;
  Eigen::VectorXd strict_lower;

  static CovarianceFactor identity(Index p);
  static CovarianceFactor from_lower(const Eigen::MatrixXd& lower);
  // Throws NumericalError when sigma is not positive-definite.
  static CovarianceFactor from_covariance(const Eigen::MatrixXd& sigma);

  Index dim() const { return log_diag.size(); }
  Eigen::MatrixXd lower() const;
  Eigen::MatrixXd materialize() const;

  static Index num_strict_lower(Index p) { return p * (p - 1) / 2; }
  static Index strict_lower_index(Index row, Index col) { return row * (row - 1) / 2 + col; }
};

struct PartitionedGaussian {
  Eigen::VectorXd mu_o;
  Eigen::VectorXd mu_m;
  Eigen::MatrixXd sigma_oo;
  Eigen::MatrixXd sigma_mo;
  Eigen::MatrixXd sigma_mm;
};

PartitionedGaussian extract_blocks(const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma,
                                   const MaskPartition& part);
Eigen::MatrixXd gather_block(const Eigen::MatrixXd& m, std::span<const Index> rows,
                             std::span<const Index> cols);

// Relative diagonal jitter applied once when a block fails to factorize.
inline constexpr double kJitterScale = 1e-8;

// Cholesky factorization of an observed-block covariance. On failure the
// diagonal is raised by kJitterScale * mean(diag) and factorization is retried
// once; a second failure throws NumericalError.
class BlockFactor {
 public:
  explicit BlockFactor(const Eigen::MatrixXd& sigma_oo);

  Index size() const { return size_; }
  bool jittered() const { return jittered_; }
  double log_det() const { return log_det_; }

  Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const;
  Eigen::MatrixXd solve(const Eigen::MatrixXd& rhs) const;
  Eigen::MatrixXd inverse() const;

 private:
  Index size_ = 0;
  bool jittered_ = false;
  double log_det_ = 0.0;
  Eigen::LLT<Eigen::MatrixXd> llt_;
};

// log N(y_o; mu_o, sigma_oo). Requires at least one observation.
double marginal_loglik(const PartitionedGaussian& pg, const Eigen::VectorXd& y_o);

struct ConditionalGaussian {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

// Distribution of the missing block given the observed one. With no
// observations the prior (mu_m, sigma_mm) is returned unchanged.
ConditionalGaussian conditional(const PartitionedGaussian& pg, const Eigen::VectorXd& y_o);

// Everything about a Gaussian conditioning step that depends only on which
// assays are observed.
struct PatternTerms {
  MaskPartition partition;
  Eigen::MatrixXd sigma_oo;
  Eigen::MatrixXd sigma_mo;
  Eigen::MatrixXd sigma_mm;
  std::optional<BlockFactor> factor;  // empty when nothing is observed
  Eigen::MatrixXd precision_oo;       // sigma_oo^{-1}
  Eigen::MatrixXd regression;         // sigma_mo * sigma_oo^{-1}
  Eigen::MatrixXd cond_cov;           // sigma_mm - regression * sigma_mo^T
  Eigen::VectorXd goc;                // diag(regression * sigma_mo^T)
  bool jittered = false;
};

std::shared_ptr<const PatternTerms> build_pattern_terms(const Eigen::MatrixXd& sigma,
                                                        const MaskPartition& part);

// Per-covariance memo of PatternTerms keyed by mask pattern. Safe for
// concurrent use: entries are built outside the lock and published whole.
class PatternCache {
 public:
  explicit PatternCache(Eigen::MatrixXd sigma);

  PatternCache(const PatternCache&) = delete;
  PatternCache& operator=(const PatternCache&) = delete;

  std::shared_ptr<const PatternTerms> get(const MaskPartition& part) const;
  const Eigen::MatrixXd& sigma() const { return sigma_; }
  std::size_t size() const;

 private:
  Eigen::MatrixXd sigma_;
  mutable std::mutex mutex_;
  mutable std::unordered_map<std::string, std::shared_ptr<const PatternTerms>> entries_;
};

}  // namespace qcomp
