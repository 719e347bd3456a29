#include "qcomp/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "csv.hpp"
#include "qcomp/error.hpp"

namespace qcomp {

ResidualDiagnostics residual_report(const ModelParams& params, const Dataset& data,
                                    const HistogramSpec& spec) {
  check_schema(params, data.schema);
  const Index p = params.dim();
  const Eigen::VectorXd scale = params.sigma().diagonal().cwiseSqrt();
  const Dataset standardized = apply_standardization(data, params.stats);
  Eigen::MatrixXd residuals(static_cast<Index>(data.size()), p);
  for (std::size_t i = 0; i < standardized.size(); ++i) {
    const auto& row = standardized.rows[i];
    const Eigen::VectorXd mu = calibrate(params, row.f);
    for (Index j = 0; j < p; ++j) {
      residuals(static_cast<Index>(i), j) =
          is_missing(row.y[j]) ? kMissing : (row.y[j] - mu[j]) / scale[j];
    }
  }
  return summarize_residuals(residuals, params.assay_names, spec);
}

ResidualDiagnostics summarize_residuals(const Eigen::MatrixXd& residuals,
                                        const std::vector<std::string>& names,
                                        const HistogramSpec& spec) {
  const Index p = residuals.cols();
  const Index n = residuals.rows();
  if (static_cast<Index>(names.size()) != p) throw InputError("residual names do not match columns");
  if (spec.bins < 1 || !(spec.hi > spec.lo)) throw InputError("invalid histogram spec");

  ResidualDiagnostics diag;
  diag.histogram = spec;
  for (Index j = 0; j < p; ++j) {
    AssayResidualStats s;
    s.name = names[static_cast<std::size_t>(j)];
    s.histogram.assign(static_cast<std::size_t>(spec.bins), 0);
    double sum = 0.0;
    for (Index i = 0; i < n; ++i) {
      const double r = residuals(i, j);
      if (is_missing(r)) continue;
      sum += r;
      ++s.count;
      int bin = static_cast<int>(std::floor((r - spec.lo) / (spec.hi - spec.lo) * spec.bins));
      bin = std::clamp(bin, 0, spec.bins - 1);
      ++s.histogram[static_cast<std::size_t>(bin)];
    }
    if (s.count > 0) {
      s.mean = sum / static_cast<double>(s.count);
      double m2 = 0.0, m3 = 0.0, m4 = 0.0;
      for (Index i = 0; i < n; ++i) {
        const double r = residuals(i, j);
        if (is_missing(r)) continue;
        const double d = r - s.mean;
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
      }
      const double cnt = static_cast<double>(s.count);
      s.std = s.count > 1 ? std::sqrt(m2 / (cnt - 1.0)) : 0.0;
      m2 /= cnt;
      m3 /= cnt;
      m4 /= cnt;
      if (s.count >= 3 && m2 > 0.0) {
        s.skewness = m3 / std::pow(m2, 1.5);
        s.excess_kurtosis = m4 / (m2 * m2) - 3.0;
        s.gaussian_plausible = std::abs(*s.skewness) < kSkewnessThreshold &&
                               std::abs(*s.excess_kurtosis) < kExcessKurtosisThreshold;
      }
    }
    diag.assays.push_back(std::move(s));
  }

  const auto pu = static_cast<std::size_t>(p);
  diag.correlation.assign(pu, std::vector<std::optional<double>>(pu));
  diag.co_observed.assign(pu, std::vector<std::size_t>(pu, 0));
  for (Index a = 0; a < p; ++a) {
    for (Index b = a; b < p; ++b) {
      std::size_t count = 0;
      double sa = 0.0, sb = 0.0;
      for (Index i = 0; i < n; ++i) {
        if (is_missing(residuals(i, a)) || is_missing(residuals(i, b))) continue;
        sa += residuals(i, a);
        sb += residuals(i, b);
        ++count;
      }
      const auto ua = static_cast<std::size_t>(a), ub = static_cast<std::size_t>(b);
      diag.co_observed[ua][ub] = diag.co_observed[ub][ua] = count;
      if (count < kMinCoObservations) continue;
      const double ma = sa / static_cast<double>(count), mb = sb / static_cast<double>(count);
      double sab = 0.0, saa = 0.0, sbb = 0.0;
      for (Index i = 0; i < n; ++i) {
        if (is_missing(residuals(i, a)) || is_missing(residuals(i, b))) continue;
        const double da = residuals(i, a) - ma, db = residuals(i, b) - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
      }
      if (!(saa > 0.0) || !(sbb > 0.0)) continue;
      const double r = a == b ? 1.0 : std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
      diag.correlation[ua][ub] = diag.correlation[ub][ua] = r;
    }
  }
  return diag;
}

namespace {

std::string cell(const std::optional<double>& v) { return v ? csv::format_double(*v) : ""; }

}  // namespace

void write_diagnostics_csv(std::ostream& out, const ResidualDiagnostics& diag) {
  out << "assay,count,mean,std,skewness,excess_kurtosis,gaussian_plausible\n";
  for (const auto& s : diag.assays) {
    out << csv::escape(s.name) << ',' << s.count << ',' << csv::format_double(s.mean) << ','
        << csv::format_double(s.std) << ',' << cell(s.skewness) << ',' << cell(s.excess_kurtosis)
        << ',' << (s.gaussian_plausible ? "yes" : "no") << '\n';
  }
}

void write_histogram_csv(std::ostream& out, const ResidualDiagnostics& diag) {
  out << "assay,bin_lo,bin_hi,count\n";
  const auto& h = diag.histogram;
  for (const auto& s : diag.assays) {
    for (int b = 0; b < h.bins; ++b) {
      out << csv::escape(s.name) << ',' << csv::format_double(h.edge(b)) << ','
          << csv::format_double(h.edge(b + 1)) << ',' << s.histogram[static_cast<std::size_t>(b)]
          << '\n';
    }
  }
}

void write_correlation_csv(std::ostream& out, const ResidualDiagnostics& diag) {
  out << "assay";
  for (const auto& s : diag.assays) out << ',' << csv::escape(s.name);
  out << '\n';
  for (std::size_t a = 0; a < diag.assays.size(); ++a) {
    out << csv::escape(diag.assays[a].name);
    for (std::size_t b = 0; b < diag.assays.size(); ++b) out << ',' << cell(diag.correlation[a][b]);
    out << '\n';
  }
}

}  // namespace qcomp
