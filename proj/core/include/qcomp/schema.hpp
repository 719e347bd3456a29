#pragma once

#include <cmath>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace qcomp {

using Index = Eigen::Index;

// Missing activity values are stored as quiet NaN. Present values are always
// finite, so the sentinel is unambiguous.
inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();
inline bool is_missing(double v) { return std::isnan(v); }

// Ordered, unique, non-empty assay names.
class AssaySchema {
 public:
  explicit AssaySchema(std::vector<std::string> names);

  Index size() const { return static_cast<Index>(names_.size()); }
  const std::vector<std::string>& names() const { return names_; }
  const std::string& name(Index i) const { return names_.at(static_cast<std::size_t>(i)); }

  std::optional<Index> index_of(std::string_view name) const;
  // Accepts an assay name or a decimal index; throws InputError otherwise.
  Index resolve(std::string_view name_or_index) const;

  // Order-sensitive hash of the assay names (16 hex digits).
  std::string fingerprint() const;

  bool operator==(const AssaySchema& other) const = default;

 private:
  std::vector<std::string> names_;
};

std::string schema_fingerprint(const std::vector<std::string>& names);

// One compound. y and f have length p; missing y entries are kMissing.
struct SparseRow {
  std::string compound_id;
  Eigen::VectorXd y;
  Eigen::VectorXd f;
  std::optional<Eigen::VectorXd> sigma_f;
  // Only populated when the schema config declares a date column.
  std::string date;
};

// Global assay indices split into observed and missing, both increasing.
struct MaskPartition {
  std::vector<Index> observed;
  std::vector<Index> missing;

  Index dim() const { return static_cast<Index>(observed.size() + missing.size()); }
  Index num_observed() const { return static_cast<Index>(observed.size()); }
  Index num_missing() const { return static_cast<Index>(missing.size()); }

  // One character per assay: 'o' observed, 'm' missing.
  std::string key() const;

  static MaskPartition from_observed(std::vector<Index> observed, Index p);

  bool operator==(const MaskPartition& other) const = default;
};

MaskPartition partition_row(const SparseRow& row);

Eigen::VectorXd gather(const Eigen::VectorXd& v, std::span<const Index> idx);
// Inverse of the two gathers: writes values back to their global positions.
Eigen::VectorXd compose(const MaskPartition& part, const Eigen::VectorXd& observed_values,
                        const Eigen::VectorXd& missing_values);

struct StandardizationStats {
  Eigen::VectorXd mean;
  Eigen::VectorXd std;
  bool enabled = false;

  static StandardizationStats identity(Index p);
  Index dim() const { return mean.size(); }
};

struct Dataset {
  AssaySchema schema;
  std::vector<SparseRow> rows;

  Index num_assays() const { return schema.size(); }
  std::size_t size() const { return rows.size(); }
  bool empty() const { return rows.empty(); }
  bool has_sigma_f() const;

  // Checks row lengths, dense finite f, finite y, non-negative sigma_f and
  // unique compound ids. Throws InputError.
  void validate() const;
};

struct SchemaConfig {
  AssaySchema schema{{"_"}};
  bool standardize = true;
  std::vector<std::string> missing_tokens{"NA", "NaN", ""};
  std::string id_column = "compound_id";
  std::optional<std::string> date_column;
};

// Reads the JSON schema config: {"assays": [...], "standardize": bool,
// "missing_tokens": [...], "id_column": str, "date_column": str}.
SchemaConfig load_schema_config(const std::filesystem::path& path);
SchemaConfig default_schema_config(AssaySchema schema);

// CSV layout: id column, then for every assay X the columns X and X.pred,
// optionally X.std (all assays or none). Column order is free.
Dataset load_dataset(const std::filesystem::path& path, const SchemaConfig& config);
Dataset read_dataset(std::istream& in, const SchemaConfig& config);
void write_dataset(std::ostream& out, const Dataset& data, const SchemaConfig& config);

// Per-assay mean and sample std (n-1) of observed y. Observed y, every f
// entry and sigma_f are mapped to standardized units. Disabled: identity.
std::pair<Dataset, StandardizationStats> standardize(const Dataset& data, bool enabled = true);
Dataset apply_standardization(const Dataset& data, const StandardizationStats& stats);
Dataset inverse_standardize(const Dataset& data, const StandardizationStats& stats);

}  // namespace qcomp
