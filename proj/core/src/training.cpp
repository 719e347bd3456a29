#include "qcomp/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "qcomp/error.hpp"
#include "qcomp/gaussian.hpp"
#include "qcomp/parallel.hpp"
#include "qcomp/random.hpp"

namespace qcomp {

std::string to_string(OptimizerKind kind) {
  return kind == OptimizerKind::adam ? "adam" : "sgd";
}

OptimizerKind parse_optimizer(std::string_view text) {
  if (text == "adam") return OptimizerKind::adam;
  if (text == "sgd") return OptimizerKind::sgd;
  throw InputError("unknown optimizer '" + std::string(text) + "' (expected adam or sgd)");
}

void TrainConfig::validate() const {
  if (epochs < 1) throw InputError("epochs must be >= 1");
  if (batch_size < 1) throw InputError("batch_size must be >= 1");
  if (!(initial_lr > 0.0)) throw InputError("initial_lr must be > 0");
  if (!(lr_decay_factor > 0.0 && lr_decay_factor <= 1.0)) {
    throw InputError("lr_decay_factor must be in (0, 1]");
  }
  if (decay_every_epochs < 1) throw InputError("decay_every_epochs must be >= 1");
}

double TrainConfig::learning_rate(int epoch) const {
  return initial_lr * std::pow(lr_decay_factor, epoch / decay_every_epochs);
}

TrainConfig load_train_config(const std::filesystem::path& path, TrainConfig base) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config " + path.string());
  try {
    nlohmann::json doc = nlohmann::json::parse(in);
    const nlohmann::json& t = doc.contains("train") ? doc.at("train") : doc;
    base.epochs = t.value("epochs", base.epochs);
    base.batch_size = t.value("batch_size", base.batch_size);
    base.initial_lr = t.value("initial_lr", base.initial_lr);
    base.lr_decay_factor = t.value("lr_decay_factor", base.lr_decay_factor);
    base.decay_every_epochs = t.value("decay_every_epochs", base.decay_every_epochs);
    base.seed = t.value("seed", base.seed);
    if (t.contains("optimizer")) base.optimizer = parse_optimizer(t.at("optimizer").get<std::string>());
    base.grad_check = t.value("grad_check", base.grad_check);
  } catch (const nlohmann::json::exception& e) {
    throw InputError("invalid config " + path.string() + ": " + e.what());
  }
  return base;
}

Gradient Gradient::zeros(Index p) {
  return {Eigen::MatrixXd::Zero(p, p), Eigen::VectorXd::Zero(p), Eigen::VectorXd::Zero(p),
          Eigen::VectorXd::Zero(CovarianceFactor::num_strict_lower(p))};
}

Index num_trainable(Index p) { return p * p + 2 * p + CovarianceFactor::num_strict_lower(p); }

namespace {

Eigen::VectorXd pack(const Eigen::MatrixXd& B, const Eigen::VectorXd& b,
                     const Eigen::VectorXd& log_diag, const Eigen::VectorXd& strict_lower) {
  const Index p = b.size();
  Eigen::VectorXd flat(num_trainable(p));
  Index k = 0;
  for (Index i = 0; i < p; ++i) {
    for (Index j = 0; j < p; ++j) flat[k++] = B(i, j);
  }
  flat.segment(k, p) = b;
  k += p;
  flat.segment(k, p) = log_diag;
  k += p;
  flat.segment(k, strict_lower.size()) = strict_lower;
  return flat;
}

void unpack(const Eigen::VectorXd& flat, Index p, Eigen::MatrixXd& B, Eigen::VectorXd& b,
            Eigen::VectorXd& log_diag, Eigen::VectorXd& strict_lower) {
  if (flat.size() != num_trainable(p)) throw InputError("flat parameter length mismatch");
  B.resize(p, p);
  Index k = 0;
  for (Index i = 0; i < p; ++i) {
    for (Index j = 0; j < p; ++j) B(i, j) = flat[k++];
  }
  b = flat.segment(k, p);
  k += p;
  log_diag = flat.segment(k, p);
  k += p;
  strict_lower = flat.segment(k, CovarianceFactor::num_strict_lower(p));
}

// Rows per work unit. Fixed so that the reduction order, and therefore the
// floating-point result, does not depend on the number of threads.
constexpr std::size_t kChunkRows = 128;

struct Accumulator {
  double loss = 0.0;
  std::size_t rows = 0;
  Eigen::MatrixXd d_sigma;  // d loss / d Sigma (symmetric)
  Eigen::MatrixXd d_B;
  Eigen::VectorXd d_b;
};

template <typename RowAt>
Accumulator accumulate(const ModelParams& params, std::size_t n, RowAt&& row_at, bool with_grad) {
  const Index p = params.dim();
  const double log_2pi = std::log(2.0 * std::numbers::pi);
  PatternCache cache(params.sigma());

  const std::size_t chunks = (n + kChunkRows - 1) / kChunkRows;
  std::vector<Accumulator> partial(chunks);
  parallel_for(chunks, [&](std::size_t c) {
    Accumulator& acc = partial[c];
    if (with_grad) {
      acc.d_sigma = Eigen::MatrixXd::Zero(p, p);
      acc.d_B = Eigen::MatrixXd::Zero(p, p);
      acc.d_b = Eigen::VectorXd::Zero(p);
    }
    const std::size_t end = std::min(n, (c + 1) * kChunkRows);
    for (std::size_t i = c * kChunkRows; i < end; ++i) {
      const SparseRow& row = row_at(i);
      if (row.y.size() != p || row.f.size() != p) {
        throw InputError("compound '" + row.compound_id + "': row length does not match model");
      }
      const MaskPartition part = partition_row(row);
      if (part.num_observed() == 0) continue;
      const auto terms = cache.get(part);
      const Eigen::VectorXd mu = calibrate(params, row.f);
      const Eigen::VectorXd resid = gather(row.y, part.observed) - gather(mu, part.observed);
      const Eigen::VectorXd alpha = terms->factor->solve(resid);
      const auto p_o = part.num_observed();
      acc.loss += 0.5 * (resid.dot(alpha) + terms->factor->log_det() +
                         static_cast<double>(p_o) * log_2pi);
      ++acc.rows;
      if (!with_grad) continue;
      for (Index a = 0; a < p_o; ++a) {
        const Index ga = part.observed[static_cast<std::size_t>(a)];
        for (Index b = 0; b < p_o; ++b) {
          const Index gb = part.observed[static_cast<std::size_t>(b)];
          acc.d_sigma(ga, gb) += 0.5 * (terms->precision_oo(a, b) - alpha[a] * alpha[b]);
        }
        // d loss / d mu_ga = -alpha_a; mu = f*B + b.
        acc.d_b[ga] -= alpha[a];
        acc.d_B.col(ga) -= alpha[a] * row.f;
      }
    }
  });

  Accumulator total;
  if (with_grad) {
    total.d_sigma = Eigen::MatrixXd::Zero(p, p);
    total.d_B = Eigen::MatrixXd::Zero(p, p);
    total.d_b = Eigen::VectorXd::Zero(p);
  }
  for (const auto& acc : partial) {
    total.loss += acc.loss;
    total.rows += acc.rows;
    if (with_grad) {
      total.d_sigma += acc.d_sigma;
      total.d_B += acc.d_B;
      total.d_b += acc.d_b;
    }
  }
  return total;
}

LossGradient finish_gradient(const ModelParams& params, Accumulator acc) {
  const Index p = params.dim();
  LossGradient out;
  out.loss = acc.loss;
  out.rows_used = acc.rows;
  out.grad = Gradient::zeros(p);
  out.grad.B = std::move(acc.d_B);
  out.grad.b = std::move(acc.d_b);
  // Sigma = L L^T with symmetric dSigma gives dL = 2 dSigma L (lower part).
  const Eigen::MatrixXd lower = params.cov.lower();
  const Eigen::MatrixXd d_lower = 2.0 * acc.d_sigma * lower;
  for (Index i = 0; i < p; ++i) {
    out.grad.log_diag[i] = d_lower(i, i) * lower(i, i);
    for (Index j = 0; j < i; ++j) {
      out.grad.strict_lower[CovarianceFactor::strict_lower_index(i, j)] = d_lower(i, j);
    }
  }
  return out;
}

LossGradient batch_loss_gradient(const ModelParams& params, const Dataset& data,
                                 std::span<const std::size_t> batch) {
  return finish_gradient(
      params, accumulate(params, batch.size(),
                         [&](std::size_t i) -> const SparseRow& { return data.rows[batch[i]]; },
                         true));
}

}  // namespace

Eigen::VectorXd Gradient::flatten() const { return pack(B, b, log_diag, strict_lower); }

Eigen::VectorXd flatten_params(const ModelParams& params) {
  return pack(params.B, params.b, params.cov.log_diag, params.cov.strict_lower);
}

void unflatten_params(const Eigen::VectorXd& flat, ModelParams& params) {
  unpack(flat, params.dim(), params.B, params.b, params.cov.log_diag, params.cov.strict_lower);
}

Gradient unflatten_gradient(const Eigen::VectorXd& flat, Index p) {
  Gradient g;
  unpack(flat, p, g.B, g.b, g.log_diag, g.strict_lower);
  return g;
}

double loss(const ModelParams& params, std::span<const SparseRow> rows) {
  return accumulate(params, rows.size(),
                    [&](std::size_t i) -> const SparseRow& { return rows[i]; }, false)
      .loss;
}

LossGradient loss_gradient(const ModelParams& params, std::span<const SparseRow> rows) {
  return finish_gradient(
      params, accumulate(params, rows.size(),
                         [&](std::size_t i) -> const SparseRow& { return rows[i]; }, true));
}

Gradient finite_difference_gradient(const ModelParams& params, std::span<const SparseRow> rows,
                                    double step) {
  const Eigen::VectorXd theta = flatten_params(params);
  Eigen::VectorXd grad(theta.size());
  ModelParams probe = params;
  for (Index k = 0; k < theta.size(); ++k) {
    Eigen::VectorXd shifted = theta;
    shifted[k] = theta[k] + step;
    unflatten_params(shifted, probe);
    const double up = loss(probe, rows);
    shifted[k] = theta[k] - step;
    unflatten_params(shifted, probe);
    const double down = loss(probe, rows);
    grad[k] = (up - down) / (2.0 * step);
  }
  return unflatten_gradient(grad, params.dim());
}

double max_relative_error(const Gradient& analytic, const Gradient& numeric) {
  const Eigen::VectorXd a = analytic.flatten();
  const Eigen::VectorXd n = numeric.flatten();
  double worst = 0.0;
  for (Index k = 0; k < a.size(); ++k) {
    const double scale = std::max({std::abs(a[k]), std::abs(n[k]), 1e-6});
    worst = std::max(worst, std::abs(a[k] - n[k]) / scale);
  }
  return worst;
}

namespace {

class Optimizer {
 public:
  Optimizer(OptimizerKind kind, Index size)
      : kind_(kind), m_(Eigen::VectorXd::Zero(size)), v_(Eigen::VectorXd::Zero(size)) {}

  void step(Eigen::VectorXd& theta, const Eigen::VectorXd& grad, double lr) {
    if (kind_ == OptimizerKind::sgd) {
      theta -= lr * grad;
      return;
    }
    ++t_;
    m_ = kBeta1 * m_ + (1.0 - kBeta1) * grad;
    v_ = kBeta2 * v_ + (1.0 - kBeta2) * grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(kBeta1, t_);
    const double c2 = 1.0 - std::pow(kBeta2, t_);
    theta.array() -= lr * (m_.array() / c1) / ((v_.array() / c2).sqrt() + kEpsilon);
  }

 private:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEpsilon = 1e-8;

  OptimizerKind kind_;
  Eigen::VectorXd m_, v_;
  int t_ = 0;
};

constexpr std::size_t kGradCheckRows = 64;
constexpr double kGradCheckTolerance = 1e-4;

}  // namespace

TrainResult train(const Dataset& data, const TrainConfig& config, ModelParams init) {
  config.validate();
  init.validate();
  if (init.fingerprint() != data.schema.fingerprint()) {
    throw InputError("initial parameters were built for a different schema");
  }
  const bool any_observed = std::any_of(data.rows.begin(), data.rows.end(), [](const SparseRow& r) {
    return r.y.size() > 0 && !r.y.array().isNaN().all();
  });
  if (!any_observed) throw InputError("training data has no observed activity values");

  const Index p = init.dim();
  const std::size_t n = data.size();
  const std::size_t batch_size = static_cast<std::size_t>(config.batch_size);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(config.seed);

  TrainResult result;
  result.params = std::move(init);
  Eigen::VectorXd theta = flatten_params(result.params);
  Optimizer optimizer(config.optimizer, num_trainable(p));

  std::size_t batch_index = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    const double lr = config.learning_rate(epoch);
    double epoch_loss = 0.0;
    std::size_t epoch_rows = 0;
    for (std::size_t start = 0; start < n; start += batch_size, ++batch_index) {
      const std::span<const std::size_t> batch(order.data() + start,
                                               std::min(batch_size, n - start));
      LossGradient lg;
      try {
        lg = batch_loss_gradient(result.params, data, batch);
      } catch (const NumericalError& e) {
        throw NumericalError("epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(batch_index) + ": " + e.what());
      }
      if (!std::isfinite(lg.loss) || !lg.grad.flatten().allFinite()) {
        throw NumericalError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(batch_index));
      }
      if (lg.rows_used == 0) continue;

      if (config.grad_check && batch_index == 0) {
        std::vector<SparseRow> sample;
        for (std::size_t i = 0; i < std::min(batch.size(), kGradCheckRows); ++i) {
          sample.push_back(data.rows[batch[i]]);
        }
        const double err = max_relative_error(loss_gradient(result.params, sample).grad,
                                              finite_difference_gradient(result.params, sample));
        spdlog::info("gradient check: max relative error {:.3e}", err);
        if (err > kGradCheckTolerance) {
          throw NumericalError("gradient check failed: relative error " + std::to_string(err));
        }
      }

      epoch_loss += lg.loss;
      epoch_rows += lg.rows_used;
      // Step on the per-row mean so the learning rate is batch-size independent.
      const Eigen::VectorXd grad = lg.grad.flatten() / static_cast<double>(lg.rows_used);
      optimizer.step(theta, grad, lr);
      unflatten_params(theta, result.params);
    }
    const double mean_loss = epoch_rows == 0 ? 0.0 : epoch_loss / static_cast<double>(epoch_rows);
    result.epoch_loss.push_back(mean_loss);
    spdlog::debug("epoch {} lr {:.3g} mean loss {:.6f}", epoch, lr, mean_loss);
  }
  result.params.training.epochs = config.epochs;
  result.params.training.seed = config.seed;
  result.params.training.final_loss = result.epoch_loss.back();
  return result;
}

}  // namespace qcomp
