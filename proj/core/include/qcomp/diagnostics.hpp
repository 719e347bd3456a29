#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qcomp/model.hpp"
#include "qcomp/schema.hpp"

namespace qcomp {

// Screening heuristics for the "Gaussian-plausible" flag.
inline constexpr double kSkewnessThreshold = 0.5;
inline constexpr double kExcessKurtosisThreshold = 1.0;
// Pairs with fewer co-observations get no correlation entry.
inline constexpr std::size_t kMinCoObservations = 10;

struct HistogramSpec {
  int bins = 40;
  double lo = -4.0;
  double hi = 4.0;

  double edge(int i) const { return lo + (hi - lo) * i / bins; }
};

struct AssayResidualStats {
  std::string name;
  std::size_t count = 0;
  double mean = 0.0;
  double std = 0.0;
  std::optional<double> skewness;
  std::optional<double> excess_kurtosis;
  bool gaussian_plausible = false;
  // Values outside [lo, hi) land in the edge bins, so counts sum to `count`.
  std::vector<std::size_t> histogram;
};

struct ResidualDiagnostics {
  HistogramSpec histogram;
  std::vector<AssayResidualStats> assays;
  std::vector<std::vector<std::optional<double>>> correlation;
  std::vector<std::vector<std::size_t>> co_observed;
};

// Residuals y - mu in standardized units, scaled by the model's marginal std
// per assay. `data` is in data units.
ResidualDiagnostics residual_report(const ModelParams& params, const Dataset& data,
                                    const HistogramSpec& spec = {});

// Same summaries from a residual matrix (rows x assays, kMissing for gaps).
ResidualDiagnostics summarize_residuals(const Eigen::MatrixXd& residuals,
                                        const std::vector<std::string>& names,
                                        const HistogramSpec& spec = {});

void write_diagnostics_csv(std::ostream& out, const ResidualDiagnostics& diag);
void write_histogram_csv(std::ostream& out, const ResidualDiagnostics& diag);
void write_correlation_csv(std::ostream& out, const ResidualDiagnostics& diag);

}  // namespace qcomp
