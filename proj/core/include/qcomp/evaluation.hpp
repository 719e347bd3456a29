#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "qcomp/gaussian.hpp"
#include "qcomp/model.hpp"
#include "qcomp/schema.hpp"

namespace qcomp {

// Squared sample Pearson correlation. Empty when either input is constant or
// shorter than two entries; throws InputError on a length mismatch.
std::optional<double> pearson_r2(std::span<const double> pred, std::span<const double> truth);

enum class Protocol { column_mask, group_mask };
std::string to_string(Protocol protocol);

struct AssayScore {
  Index assay = 0;
  std::string name;
  std::size_t count = 0;
  bool skipped = false;  // fewer than two truth values
  std::optional<double> qcomp;
  std::optional<double> base;
  // A mean imputer predicts one constant per assay, so it explains none of
  // the variance: scored 0 whenever the assay is evaluated.
  std::optional<double> mean_imputer;
};

struct MetricSummary {
  double mean = 0.0;
  std::size_t defined = 0;
  std::size_t excluded = 0;
};

struct BenchmarkReport {
  Protocol protocol = Protocol::column_mask;
  std::vector<AssayScore> assays;

  MetricSummary summarize(std::optional<double> AssayScore::*metric) const;
};

struct ScatterPoint {
  Index assay = 0;
  std::string compound_id;
  double truth = 0.0;
  double qcomp = 0.0;
  double base = 0.0;
};

// Hide assay i on every test row that measured it, complete, and score
// against the hidden truth; repeat for every assay.
BenchmarkReport column_mask_benchmark(const ModelParams& params, const Dataset& test,
                                      std::vector<ScatterPoint>* scatter = nullptr);

// As above, but when the target belongs to a group the whole group is hidden.
// Groups must be disjoint; throws InputError otherwise.
BenchmarkReport group_mask_benchmark(const ModelParams& params, const Dataset& test,
                                     const std::vector<std::vector<Index>>& groups,
                                     std::vector<ScatterPoint>* scatter = nullptr);

// "A,B;C,D" with names or indices.
std::vector<std::vector<Index>> parse_groups(std::string_view text, const AssaySchema& schema);

// Seed-ensemble summary: mean and std (n-1) of each metric across reports.
struct SeededScore {
  std::string name;
  std::size_t seeds_defined = 0;
  double qcomp_mean = 0.0, qcomp_std = 0.0;
  double base_mean = 0.0, base_std = 0.0;
};
std::vector<SeededScore> aggregate_seeds(const std::vector<BenchmarkReport>& reports);

void write_report_csv(std::ostream& out, const BenchmarkReport& report);
void print_report_table(std::ostream& out, const BenchmarkReport& report);
void write_seed_summary_csv(std::ostream& out, const std::vector<SeededScore>& scores);
void write_scatter_csv(std::ostream& out, const std::vector<ScatterPoint>& points,
                       const AssaySchema& schema);

std::pair<Dataset, Dataset> split_random(const Dataset& data, double test_fraction,
                                         std::uint64_t seed);
// Oldest rows train, newest test; requires dates on every row.
std::pair<Dataset, Dataset> split_temporal(const Dataset& data, double test_fraction);

// Straightforward dense routines (Gauss-Jordan inverse, elimination
// determinant) kept apart from the Cholesky path they are used to check.
namespace oracle {
Eigen::MatrixXd explicit_inverse(const Eigen::MatrixXd& m);
double explicit_determinant(const Eigen::MatrixXd& m);
ConditionalGaussian brute_force_conditional(const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma,
                                            const MaskPartition& part, const Eigen::VectorXd& y);
double brute_force_loglik(const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma,
                          const MaskPartition& part, const Eigen::VectorXd& y);
}  // namespace oracle

struct Missingness {
  enum class Kind { uniform, per_assay, grouped };
  Kind kind = Kind::uniform;
  double rate = 0.0;                       // uniform, grouped
  std::vector<double> rates;               // per_assay
  std::vector<std::vector<Index>> groups;  // grouped: each group hidden together
};

struct SyntheticSpec {
  std::vector<std::string> names;
  std::size_t n = 0;
  Eigen::MatrixXd B;
  Eigen::VectorXd b;
  Eigen::MatrixXd sigma;
  Missingness missingness;
  std::uint64_t seed = 0;
  std::optional<Eigen::VectorXd> pred_std;

  Index dim() const { return static_cast<Index>(names.size()); }
  void validate() const;
  // B = I, b = 0, no missingness, names A0..A{p-1}.
  static SyntheticSpec with_covariance(Eigen::MatrixXd sigma, std::size_t n, std::uint64_t seed);
};

SyntheticSpec load_synthetic_spec(const std::filesystem::path& path);

struct OracleRow {
  Eigen::VectorXd full_y;  // before masking
  Eigen::VectorXd mu;      // f*B + b
  ConditionalGaussian conditional;
  double loglik = 0.0;     // of the observed block; 0 when nothing observed
};

struct SyntheticData {
  Dataset data;
  std::vector<OracleRow> oracle;
};

// f ~ N(0, I), y ~ N(f*B + b, Sigma), then masked. The oracle fields use the
// brute-force routines above.
SyntheticData generate_synthetic(const SyntheticSpec& spec);

// compound_id, per assay X.true, X.oracle_mean, X.oracle_var (missing cells only).
void write_oracle_csv(std::ostream& out, const SyntheticData& synth);

}  // namespace qcomp
