#pragma once

#include <iosfwd>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "qcomp/gaussian.hpp"
#include "qcomp/model.hpp"
#include "qcomp/schema.hpp"

namespace qcomp {

// Completion of one row. mean and cov are in data units; goc is in
// standardized units, so diag(cov)/std^2 + goc equals the prior variance.
struct ConditionalResult {
  MaskPartition partition;
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  Eigen::VectorXd goc;
  std::optional<Eigen::VectorXd> composite_var;
  // The observed block needed diagonal jitter to factorize.
  bool jittered = false;
};

// Holds a model and its pattern cache. Thread-safe for concurrent const use.
class Completer {
 public:
  explicit Completer(ModelParams params);

  const ModelParams& params() const { return params_; }
  const PatternCache& cache() const { return cache_; }

  // Row in data units. With nothing observed the result is the calibrated
  // prior; with nothing missing it is empty.
  ConditionalResult complete(const SparseRow& row) const;
  Eigen::VectorXd gain_of_certainty(const MaskPartition& part) const;

  // Ensemble variance of the calibrated prediction pushed through the
  // conditional mean, plus the conditional variance. Base-prediction stds are
  // treated as uncorrelated across assays. Requires row.sigma_f.
  Eigen::VectorXd composite_uncertainty(const SparseRow& row, const ConditionalResult& cond) const;

  // Completes every row in parallel; composite variances are attached when
  // requested and the dataset carries sigma_f.
  std::vector<ConditionalResult> complete_all(const Dataset& data, bool with_composite) const;

 private:
  void check_row(const SparseRow& row) const;

  ModelParams params_;
  PatternCache cache_;
};

ConditionalResult complete_row(const ModelParams& params, const SparseRow& row);
Eigen::VectorXd gain_of_certainty(const ModelParams& params, const MaskPartition& part);
Eigen::VectorXd composite_uncertainty(const ModelParams& params, const SparseRow& row,
                                      const ConditionalResult& cond);

struct CompletionColumns {
  bool conditional_std = false;
  bool composite_std = false;
};

// One row per compound: per assay the completed value, X.source
// (observed|completed) and the optional X.condstd / X.compstd columns.
void write_completions(std::ostream& out, const Dataset& data,
                       const std::vector<ConditionalResult>& results, CompletionColumns columns);

}  // namespace qcomp
