#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qcomp/gaussian.hpp"
#include "qcomp/schema.hpp"

namespace qcomp {

inline constexpr int kModelFormatVersion = 1;

enum class InitMode { identity, residual, random };

std::string to_string(InitMode mode);
InitMode parse_init_mode(std::string_view text);

struct TrainingMetadata {
  int epochs = 0;
  std::uint64_t seed = 0;
  double final_loss = 0.0;
  std::string init_mode = "identity";
};

// Calibration map mu = f*B + b and the deviation covariance, all in
// standardized units. `stats` maps data units to standardized units.
struct ModelParams {
  std::vector<std::string> assay_names;
  Eigen::MatrixXd B;
  Eigen::VectorXd b;
  CovarianceFactor cov;
  StandardizationStats stats;
  TrainingMetadata training;

  Index dim() const { return b.size(); }
  std::string fingerprint() const { return schema_fingerprint(assay_names); }
  AssaySchema schema() const { return AssaySchema(assay_names); }
  Eigen::MatrixXd sigma() const { return cov.materialize(); }

  // Dimension consistency; throws InputError.
  void validate() const;
};

ModelParams identity_params(const AssaySchema& schema);

// mu_j = sum_k f_k B_kj + b_j. Throws InputError on non-finite f.
Eigen::VectorXd calibrate(const ModelParams& params, const Eigen::VectorXd& f);

// B = I, b = 0. Covariance factor per mode:
//   identity: L = I
//   residual: diag(L) = sample std of (y - f) per assay, zero off-diagonal
//   random:   residual plus strict-lower entries ~ U(-0.01, 0.01)
// Assays with fewer than two observed residuals (or zero spread) fall back to
// a unit diagonal with a logged warning. `data` is expected in the units the
// model is fitted in (standardized, usually).
ModelParams init_params(const Dataset& data, std::uint64_t seed, InitMode mode);

void save_model(const ModelParams& params, const std::filesystem::path& path);
ModelParams load_model(const std::filesystem::path& path);
std::string serialize_model(const ModelParams& params);
ModelParams deserialize_model(const std::string& text);

// Throws InputError when the model was trained on a different assay list
// (including a reordering).
void check_schema(const ModelParams& params, const AssaySchema& schema);

// B, b and Sigma expressed in data units: B_data = S^{-1} B S,
// b_data = m - m B_data + b S, Sigma_data = S Sigma S with S = diag(std).
struct DataScaleParameters {
  Eigen::MatrixXd B;
  Eigen::VectorXd b;
  Eigen::MatrixXd sigma;
};
DataScaleParameters to_data_scale(const ModelParams& params);

}  // namespace qcomp
