#include "qcomp/gaussian.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "qcomp/error.hpp"

namespace qcomp {

CovarianceFactor CovarianceFactor::identity(Index p) {
  return {Eigen::VectorXd::Zero(p), Eigen::VectorXd::Zero(num_strict_lower(p))};
}

CovarianceFactor CovarianceFactor::from_lower(const Eigen::MatrixXd& lower) {
  const Index p = lower.rows();
  if (lower.cols() != p) throw InputError("Cholesky factor must be square");
  CovarianceFactor factor{Eigen::VectorXd(p), Eigen::VectorXd(num_strict_lower(p))};
  for (Index i = 0; i < p; ++i) {
    if (!(lower(i, i) > 0.0)) throw NumericalError("Cholesky factor needs a positive diagonal");
    factor.log_diag[i] = std::log(lower(i, i));
    for (Index j = 0; j < i; ++j) factor.strict_lower[strict_lower_index(i, j)] = lower(i, j);
  }
  return factor;
}

CovarianceFactor CovarianceFactor::from_covariance(const Eigen::MatrixXd& sigma) {
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success) throw NumericalError("covariance is not positive-definite");
  return from_lower(llt.matrixL());
}

Eigen::MatrixXd CovarianceFactor::lower() const {
  const Index p = dim();
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(p, p);
  for (Index i = 0; i < p; ++i) {
    l(i, i) = std::exp(log_diag[i]);
    for (Index j = 0; j < i; ++j) l(i, j) = strict_lower[strict_lower_index(i, j)];
  }
  return l;
}

Eigen::MatrixXd CovarianceFactor::materialize() const {
  const Eigen::MatrixXd l = lower();
  Eigen::MatrixXd sigma = l * l.transpose();
  sigma.triangularView<Eigen::StrictlyUpper>() = sigma.transpose();
  return sigma;
}

Eigen::MatrixXd gather_block(const Eigen::MatrixXd& m, std::span<const Index> rows,
                             std::span<const Index> cols) {
  Eigen::MatrixXd out(static_cast<Index>(rows.size()), static_cast<Index>(cols.size()));
  for (std::size_t a = 0; a < rows.size(); ++a) {
    for (std::size_t c = 0; c < cols.size(); ++c) {
      out(static_cast<Index>(a), static_cast<Index>(c)) = m(rows[a], cols[c]);
    }
  }
  return out;
}

PartitionedGaussian extract_blocks(const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma,
                                   const MaskPartition& part) {
  if (mu.size() != part.dim() || sigma.rows() != part.dim() || sigma.cols() != part.dim()) {
    throw InputError("dimension mismatch between mean, covariance and mask");
  }
  return {gather(mu, part.observed), gather(mu, part.missing),
          gather_block(sigma, part.observed, part.observed),
          gather_block(sigma, part.missing, part.observed),
          gather_block(sigma, part.missing, part.missing)};
}

BlockFactor::BlockFactor(const Eigen::MatrixXd& sigma_oo) : size_(sigma_oo.rows()) {
  llt_.compute(sigma_oo);
  if (llt_.info() != Eigen::Success) {
    const double jitter = kJitterScale * sigma_oo.diagonal().mean();
    Eigen::MatrixXd raised = sigma_oo;
    raised.diagonal().array() += jitter;
    llt_.compute(raised);
    jittered_ = true;
    if (llt_.info() != Eigen::Success || !(jitter > 0.0)) {
      throw NumericalError("observed covariance block (size " + std::to_string(size_) +
                           ") is not positive-definite after jitter");
    }
  }
  const auto& l = llt_.matrixLLT();
  for (Index i = 0; i < size_; ++i) log_det_ += 2.0 * std::log(l(i, i));
  if (!std::isfinite(log_det_)) throw NumericalError("non-finite log-determinant");
}

Eigen::VectorXd BlockFactor::solve(const Eigen::VectorXd& rhs) const { return llt_.solve(rhs); }

Eigen::MatrixXd BlockFactor::solve(const Eigen::MatrixXd& rhs) const { return llt_.solve(rhs); }

Eigen::MatrixXd BlockFactor::inverse() const {
  Eigen::MatrixXd inv = llt_.solve(Eigen::MatrixXd::Identity(size_, size_));
  inv.triangularView<Eigen::StrictlyUpper>() = inv.transpose();
  return inv;
}

double marginal_loglik(const PartitionedGaussian& pg, const Eigen::VectorXd& y_o) {
  const Index p_o = pg.mu_o.size();
  if (p_o == 0) throw InputError("marginal likelihood needs at least one observation");
  if (y_o.size() != p_o) throw InputError("observation length mismatch");
  BlockFactor factor(pg.sigma_oo);
  const Eigen::VectorXd r = y_o - pg.mu_o;
  const double quad = r.dot(factor.solve(r));
  return -0.5 * (quad + factor.log_det() + static_cast<double>(p_o) * std::log(2.0 * std::numbers::pi));
}

ConditionalGaussian conditional(const PartitionedGaussian& pg, const Eigen::VectorXd& y_o) {
  if (pg.mu_o.size() == 0) return {pg.mu_m, pg.sigma_mm};
  if (y_o.size() != pg.mu_o.size()) throw InputError("observation length mismatch");
  BlockFactor factor(pg.sigma_oo);
  // regression^T = sigma_oo^{-1} sigma_mo^T
  const Eigen::MatrixXd regression = factor.solve(Eigen::MatrixXd(pg.sigma_mo.transpose())).transpose();
  ConditionalGaussian out;
  out.mean = pg.mu_m + regression * (y_o - pg.mu_o);
  out.cov = pg.sigma_mm - regression * pg.sigma_mo.transpose();
  out.cov = (0.5 * (out.cov + out.cov.transpose())).eval();
  return out;
}

std::shared_ptr<const PatternTerms> build_pattern_terms(const Eigen::MatrixXd& sigma,
                                                        const MaskPartition& part) {
  auto t = std::make_shared<PatternTerms>();
  t->partition = part;
  t->sigma_oo = gather_block(sigma, part.observed, part.observed);
  t->sigma_mo = gather_block(sigma, part.missing, part.observed);
  t->sigma_mm = gather_block(sigma, part.missing, part.missing);
  const Index p_m = part.num_missing();
  if (part.num_observed() == 0) {
    t->regression = Eigen::MatrixXd::Zero(p_m, 0);
    t->cond_cov = t->sigma_mm;
    t->goc = Eigen::VectorXd::Zero(p_m);
    return t;
  }
  t->factor.emplace(t->sigma_oo);
  t->jittered = t->factor->jittered();
  t->precision_oo = t->factor->inverse();
  t->regression = t->factor->solve(Eigen::MatrixXd(t->sigma_mo.transpose())).transpose();
  const Eigen::MatrixXd explained = t->regression * t->sigma_mo.transpose();
  t->cond_cov = t->sigma_mm - explained;
  t->cond_cov = (0.5 * (t->cond_cov + t->cond_cov.transpose())).eval();
  // Each explained variance is a quadratic form, hence >= 0; clamp rounding.
  t->goc = explained.diagonal().cwiseMax(0.0);
  return t;
}

PatternCache::PatternCache(Eigen::MatrixXd sigma) : sigma_(std::move(sigma)) {}

std::shared_ptr<const PatternTerms> PatternCache::get(const MaskPartition& part) const {
  std::string key = part.key();
  {
    std::lock_guard lock(mutex_);
    auto it = entries_.find(key);
    if (it != entries_.end()) return it->second;
  }
  auto built = build_pattern_terms(sigma_, part);
  std::lock_guard lock(mutex_);
  // Another worker may have published the same pattern meanwhile; both
  // builds are identical, keep the first.
  auto [it, inserted] = entries_.emplace(std::move(key), std::move(built));
  return it->second;
}

std::size_t PatternCache::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

}  // namespace qcomp
