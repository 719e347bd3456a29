#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qcomp/model.hpp"
#include "qcomp/schema.hpp"

namespace qcomp {

enum class OptimizerKind { adam, sgd };

std::string to_string(OptimizerKind kind);
OptimizerKind parse_optimizer(std::string_view text);

struct TrainConfig {
  int epochs = 4;
  int batch_size = 5000;
  double initial_lr = 0.003;
  double lr_decay_factor = 0.5;
  int decay_every_epochs = 1;
  std::uint64_t seed = 0;
  OptimizerKind optimizer = OptimizerKind::adam;
  bool grad_check = false;

  // Throws InputError on out-of-range fields.
  void validate() const;
  double learning_rate(int epoch) const;
};

// Reads the "train" object of a JSON config (or the top level when there is
// none). Keys missing from the file keep the values in `base`.
TrainConfig load_train_config(const std::filesystem::path& path, TrainConfig base = {});

// Gradient of the loss in the layout of the trainable parameters.
struct Gradient {
  Eigen::MatrixXd B;
  Eigen::VectorXd b;
  Eigen::VectorXd log_diag;
  Eigen::VectorXd strict_lower;

  static Gradient zeros(Index p);
  Eigen::VectorXd flatten() const;
};

// Flat parameter vector: B row-major, b, log_diag, strict_lower.
Eigen::VectorXd flatten_params(const ModelParams& params);
void unflatten_params(const Eigen::VectorXd& flat, ModelParams& params);
Gradient unflatten_gradient(const Eigen::VectorXd& flat, Index p);
Index num_trainable(Index p);

// Negative log marginal likelihood summed over rows with at least one
// observation; rows are in the model's (standardized) units.
double loss(const ModelParams& params, std::span<const SparseRow> rows);

struct LossGradient {
  double loss = 0.0;
  Gradient grad;
  std::size_t rows_used = 0;
};

LossGradient loss_gradient(const ModelParams& params, std::span<const SparseRow> rows);

// Central differences over every trainable parameter. Used by grad_check.
Gradient finite_difference_gradient(const ModelParams& params, std::span<const SparseRow> rows,
                                    double step = 1e-5);
double max_relative_error(const Gradient& analytic, const Gradient& numeric);

struct TrainResult {
  ModelParams params;
  // Per epoch: summed batch loss divided by the number of contributing rows.
  std::vector<double> epoch_loss;
};

// Mini-batch descent on `data` (already in model units). Rows are shuffled per
// epoch with the config seed; the last partial batch is kept.
TrainResult train(const Dataset& data, const TrainConfig& config, ModelParams init);

}  // namespace qcomp
