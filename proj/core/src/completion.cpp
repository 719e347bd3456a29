#include "qcomp/completion.hpp"

#include <cmath>
#include <ostream>

#include "csv.hpp"
#include "qcomp/error.hpp"
#include "qcomp/parallel.hpp"

namespace qcomp {

Completer::Completer(ModelParams params)
    : params_((params.validate(), std::move(params))), cache_(params_.sigma()) {}

void Completer::check_row(const SparseRow& row) const {
  if (row.y.size() != params_.dim() || row.f.size() != params_.dim()) {
    throw InputError("compound '" + row.compound_id + "': row length does not match the model");
  }
}

ConditionalResult Completer::complete(const SparseRow& row) const {
  check_row(row);
  const auto& stats = params_.stats;
  Eigen::VectorXd y = row.y;
  Eigen::VectorXd f = row.f;
  if (stats.enabled) {
    y = (y - stats.mean).cwiseQuotient(stats.std);
    f = (f - stats.mean).cwiseQuotient(stats.std);
  }
  const Eigen::VectorXd mu = calibrate(params_, f);
  const MaskPartition part = partition_row(row);
  const auto terms = cache_.get(part);

  ConditionalResult out;
  out.partition = part;
  out.goc = terms->goc;
  out.jittered = terms->jittered;
  Eigen::VectorXd mean = gather(mu, part.missing);
  if (part.num_observed() > 0) {
    mean += terms->regression * (gather(y, part.observed) - gather(mu, part.observed));
  }
  out.mean = std::move(mean);
  out.cov = terms->cond_cov;
  if (stats.enabled) {
    const Eigen::VectorXd s = gather(stats.std, part.missing);
    out.mean = out.mean.cwiseProduct(s) + gather(stats.mean, part.missing);
    out.cov = s.asDiagonal() * out.cov * s.asDiagonal();
  }
  return out;
}

Eigen::VectorXd Completer::gain_of_certainty(const MaskPartition& part) const {
  if (part.dim() != params_.dim()) throw InputError("mask length does not match the model");
  return cache_.get(part)->goc;
}

Eigen::VectorXd Completer::composite_uncertainty(const SparseRow& row,
                                                 const ConditionalResult& cond) const {
  check_row(row);
  if (!row.sigma_f) {
    throw InputError("compound '" + row.compound_id +
                     "': composite uncertainty needs base-prediction stds (.std columns)");
  }
  const auto& stats = params_.stats;
  Eigen::VectorXd sigma_f = *row.sigma_f;
  if (stats.enabled) sigma_f = sigma_f.cwiseQuotient(stats.std);

  // diag(B^T diag(sigma_f^2) B)
  const Eigen::VectorXd mu_var = params_.B.cwiseAbs2().transpose() * sigma_f.cwiseAbs2();
  const auto terms = cache_.get(cond.partition);
  const Index p_m = cond.partition.num_missing();
  Eigen::VectorXd out(p_m);
  const Eigen::VectorXd mu_var_o = gather(mu_var, cond.partition.observed);
  for (Index a = 0; a < p_m; ++a) {
    double v = mu_var[cond.partition.missing[static_cast<std::size_t>(a)]];
    if (cond.partition.num_observed() > 0) {
      v += terms->regression.row(a).cwiseAbs2().dot(mu_var_o);
    }
    out[a] = v + terms->cond_cov(a, a);
  }
  if (stats.enabled) {
    out = out.cwiseProduct(gather(stats.std, cond.partition.missing).cwiseAbs2());
  }
  return out;
}

std::vector<ConditionalResult> Completer::complete_all(const Dataset& data,
                                                       bool with_composite) const {
  check_schema(params_, data.schema);
  const bool composite = with_composite && data.has_sigma_f();
  std::vector<ConditionalResult> results(data.size());
  parallel_for(data.size(), [&](std::size_t i) {
    results[i] = complete(data.rows[i]);
    if (composite) results[i].composite_var = composite_uncertainty(data.rows[i], results[i]);
  });
  return results;
}

ConditionalResult complete_row(const ModelParams& params, const SparseRow& row) {
  return Completer(params).complete(row);
}

Eigen::VectorXd gain_of_certainty(const ModelParams& params, const MaskPartition& part) {
  return Completer(params).gain_of_certainty(part);
}

Eigen::VectorXd composite_uncertainty(const ModelParams& params, const SparseRow& row,
                                      const ConditionalResult& cond) {
  return Completer(params).composite_uncertainty(row, cond);
}

void write_completions(std::ostream& out, const Dataset& data,
                       const std::vector<ConditionalResult>& results, CompletionColumns columns) {
  if (results.size() != data.size()) throw InputError("completion results do not match the data");
  out << "compound_id";
  for (const auto& n : data.schema.names()) {
    out << ',' << csv::escape(n) << ',' << csv::escape(n + ".source");
    if (columns.conditional_std) out << ',' << csv::escape(n + ".condstd");
    if (columns.composite_std) out << ',' << csv::escape(n + ".compstd");
  }
  out << '\n';
  for (std::size_t i = 0; i < data.size(); ++i) {
    const SparseRow& row = data.rows[i];
    const ConditionalResult& res = results[i];
    std::vector<Index> slot(static_cast<std::size_t>(data.num_assays()), -1);
    for (std::size_t a = 0; a < res.partition.missing.size(); ++a) {
      slot[static_cast<std::size_t>(res.partition.missing[a])] = static_cast<Index>(a);
    }
    out << csv::escape(row.compound_id);
    for (Index j = 0; j < data.num_assays(); ++j) {
      const Index a = slot[static_cast<std::size_t>(j)];
      if (a < 0) {
        out << ',' << csv::format_double(row.y[j]) << ",observed";
        if (columns.conditional_std) out << ',';
        if (columns.composite_std) out << ',';
        continue;
      }
      out << ',' << csv::format_double(res.mean[a]) << ",completed";
      if (columns.conditional_std) {
        out << ',' << csv::format_double(std::sqrt(std::max(0.0, res.cov(a, a))));
      }
      if (columns.composite_std) {
        out << ',';
        if (res.composite_var) out << csv::format_double(std::sqrt(std::max(0.0, (*res.composite_var)[a])));
      }
    }
    out << '\n';
  }
}

}  // namespace qcomp
