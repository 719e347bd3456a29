#include "qcomp/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "csv.hpp"
#include "qcomp/completion.hpp"
#include "qcomp/error.hpp"
#include "qcomp/parallel.hpp"
#include "qcomp/random.hpp"

namespace qcomp {

std::optional<double> pearson_r2(std::span<const double> pred, std::span<const double> truth) {
  if (pred.size() != truth.size()) throw InputError("pearson_r2: length mismatch");
  const std::size_t n = pred.size();
  if (n < 2) return std::nullopt;
  const double mp = std::accumulate(pred.begin(), pred.end(), 0.0) / static_cast<double>(n);
  const double mt = std::accumulate(truth.begin(), truth.end(), 0.0) / static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = pred[i] - mp;
    const double dy = truth[i] - mt;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) return std::nullopt;
  const double r2 = (sxy * sxy) / (sxx * syy);
  return std::clamp(r2, 0.0, 1.0);
}

std::string to_string(Protocol protocol) {
  return protocol == Protocol::column_mask ? "column-mask" : "group-mask";
}

MetricSummary BenchmarkReport::summarize(std::optional<double> AssayScore::*metric) const {
  MetricSummary s;
  double sum = 0.0;
  for (const auto& a : assays) {
    const auto& v = a.*metric;
    if (v && !a.skipped) {
      sum += *v;
      ++s.defined;
    } else {
      ++s.excluded;
    }
  }
  s.mean = s.defined == 0 ? std::nan("") : sum / static_cast<double>(s.defined);
  return s;
}

namespace {

void check_groups(const std::vector<std::vector<Index>>& groups, Index p) {
  std::vector<int> owner(static_cast<std::size_t>(p), -1);
  for (std::size_t g = 0; g < groups.size(); ++g) {
    for (Index i : groups[g]) {
      if (i < 0 || i >= p) throw InputError("group member index out of range");
      auto& o = owner[static_cast<std::size_t>(i)];
      if (o >= 0 && o != static_cast<int>(g)) throw InputError("assay groups overlap");
      if (o == static_cast<int>(g)) throw InputError("assay listed twice in one group");
      o = static_cast<int>(g);
    }
  }
}

BenchmarkReport run_benchmark(const ModelParams& params, const Dataset& test,
                              const std::vector<std::vector<Index>>& groups, Protocol protocol,
                              std::vector<ScatterPoint>* scatter) {
  const Index p = params.dim();
  check_schema(params, test.schema);
  check_groups(groups, p);
  // mask_of[i]: assays hidden when assay i is the target.
  std::vector<std::vector<Index>> mask_of(static_cast<std::size_t>(p));
  for (Index i = 0; i < p; ++i) mask_of[static_cast<std::size_t>(i)] = {i};
  for (const auto& g : groups) {
    for (Index i : g) mask_of[static_cast<std::size_t>(i)] = g;
  }

  BenchmarkReport report;
  report.protocol = protocol;
  if (test.empty()) return report;

  const Completer completer(params);
  report.assays.resize(static_cast<std::size_t>(p));
  std::vector<std::vector<ScatterPoint>> points(static_cast<std::size_t>(p));

  parallel_for(static_cast<std::size_t>(p), [&](std::size_t ai) {
    const Index target = static_cast<Index>(ai);
    AssayScore& score = report.assays[ai];
    score.assay = target;
    score.name = params.assay_names[ai];
    std::vector<double> truth, qcomp, base;
    for (const auto& row : test.rows) {
      if (is_missing(row.y[target])) continue;
      SparseRow masked = row;
      for (Index h : mask_of[ai]) masked.y[h] = kMissing;
      const ConditionalResult res = completer.complete(masked);
      const auto& miss = res.partition.missing;
      const auto pos = std::lower_bound(miss.begin(), miss.end(), target) - miss.begin();
      truth.push_back(row.y[target]);
      qcomp.push_back(res.mean[pos]);
      base.push_back(row.f[target]);
      if (scatter) points[ai].push_back({target, row.compound_id, truth.back(), qcomp.back(), base.back()});
    }
    score.count = truth.size();
    if (truth.size() < 2) {
      score.skipped = true;
      return;
    }
    score.qcomp = pearson_r2(qcomp, truth);
    score.base = pearson_r2(base, truth);
    score.mean_imputer = 0.0;
  });

  for (const auto& s : report.assays) {
    if (s.skipped) spdlog::warn("assay '{}' has {} truth values; skipped", s.name, s.count);
  }
  if (scatter) {
    for (auto& pts : points) scatter->insert(scatter->end(), pts.begin(), pts.end());
  }
  return report;
}

}  // namespace

BenchmarkReport column_mask_benchmark(const ModelParams& params, const Dataset& test,
                                      std::vector<ScatterPoint>* scatter) {
  return run_benchmark(params, test, {}, Protocol::column_mask, scatter);
}

BenchmarkReport group_mask_benchmark(const ModelParams& params, const Dataset& test,
                                     const std::vector<std::vector<Index>>& groups,
                                     std::vector<ScatterPoint>* scatter) {
  return run_benchmark(params, test, groups, Protocol::group_mask, scatter);
}

std::vector<std::vector<Index>> parse_groups(std::string_view text, const AssaySchema& schema) {
  std::vector<std::vector<Index>> groups;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find(';', start);
    if (end == std::string_view::npos) end = text.size();
    std::vector<Index> group;
    for (const auto& field : csv::split(text.substr(start, end - start))) {
      if (!field.empty()) group.push_back(schema.resolve(field));
    }
    if (!group.empty()) groups.push_back(std::move(group));
    start = end + 1;
  }
  check_groups(groups, schema.size());
  return groups;
}

std::vector<SeededScore> aggregate_seeds(const std::vector<BenchmarkReport>& reports) {
  std::vector<SeededScore> out;
  if (reports.empty()) return out;
  const std::size_t na = reports.front().assays.size();
  for (std::size_t a = 0; a < na; ++a) {
    SeededScore s;
    s.name = reports.front().assays[a].name;
    std::vector<double> q, b;
    for (const auto& r : reports) {
      const auto& sc = r.assays.at(a);
      if (sc.qcomp && sc.base) {
        q.push_back(*sc.qcomp);
        b.push_back(*sc.base);
      }
    }
    s.seeds_defined = q.size();
    auto mean_std = [](const std::vector<double>& v, double& mean, double& sd) {
      if (v.empty()) {
        mean = sd = std::nan("");
        return;
      }
      mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
      double ss = 0.0;
      for (double x : v) ss += (x - mean) * (x - mean);
      sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
    };
    mean_std(q, s.qcomp_mean, s.qcomp_std);
    mean_std(b, s.base_mean, s.base_std);
    out.push_back(std::move(s));
  }
  return out;
}

namespace {

std::string cell(const std::optional<double>& v) { return v ? csv::format_double(*v) : ""; }

std::string status(const AssayScore& s) {
  if (s.skipped) return "skipped";
  std::string st;
  if (!s.qcomp) st += "undefined_qcomp;";
  if (!s.base) st += "undefined_base;";
  if (st.empty()) return "ok";
  st.pop_back();
  return st;
}

}  // namespace

void write_report_csv(std::ostream& out, const BenchmarkReport& report) {
  out << "protocol,assay,count,status,r2_qcomp,r2_base,r2_mean_imputer\n";
  for (const auto& s : report.assays) {
    out << to_string(report.protocol) << ',' << csv::escape(s.name) << ',' << s.count << ','
        << status(s) << ',' << cell(s.qcomp) << ',' << cell(s.base) << ',' << cell(s.mean_imputer)
        << '\n';
  }
}

void print_report_table(std::ostream& out, const BenchmarkReport& report) {
  std::size_t width = 5;
  for (const auto& s : report.assays) width = std::max(width, s.name.size());
  const int w = static_cast<int>(width) + 2;
  const auto old_flags = out.flags();
  const auto old_precision = out.precision();
  auto num = [&](const std::optional<double>& v) {
    std::ostringstream s;
    if (v) {
      s << std::fixed << std::setprecision(4) << *v;
    } else {
      s << "undef";
    }
    return s.str();
  };
  out << "Benchmark (" << to_string(report.protocol) << ")\n";
  out << std::left << std::setw(w) << "assay" << std::right << std::setw(8) << "count"
      << std::setw(10) << "qcomp" << std::setw(10) << "base" << std::setw(10) << "mean" << '\n';
  for (const auto& s : report.assays) {
    out << std::left << std::setw(w) << s.name << std::right << std::setw(8) << s.count;
    if (s.skipped) {
      out << std::setw(30) << "skipped" << '\n';
      continue;
    }
    out << std::setw(10) << num(s.qcomp) << std::setw(10) << num(s.base) << std::setw(10)
        << num(s.mean_imputer) << '\n';
  }
  auto summary_line = [&](const char* label, std::optional<double> AssayScore::*metric) {
    const auto m = report.summarize(metric);
    out << std::left << std::setw(w) << label << std::right << std::setw(8) << m.defined
        << std::setw(10) << num(m.defined ? std::optional<double>(m.mean) : std::nullopt);
    if (m.excluded) out << "  (" << m.excluded << " undefined excluded)";
    out << '\n';
  };
  summary_line("mean qcomp", &AssayScore::qcomp);
  summary_line("mean base", &AssayScore::base);
  summary_line("mean imputer", &AssayScore::mean_imputer);
  out.flags(old_flags);
  out.precision(old_precision);
}

void write_seed_summary_csv(std::ostream& out, const std::vector<SeededScore>& scores) {
  out << "assay,seeds,r2_qcomp_mean,r2_qcomp_std,r2_base_mean,r2_base_std\n";
  auto num = [](double v) { return std::isfinite(v) ? csv::format_double(v) : std::string(); };
  for (const auto& s : scores) {
    out << csv::escape(s.name) << ',' << s.seeds_defined << ',' << num(s.qcomp_mean) << ','
        << num(s.qcomp_std) << ',' << num(s.base_mean) << ',' << num(s.base_std) << '\n';
  }
}

void write_scatter_csv(std::ostream& out, const std::vector<ScatterPoint>& points,
                       const AssaySchema& schema) {
  out << "assay,compound_id,truth,qcomp,base\n";
  for (const auto& pt : points) {
    out << csv::escape(schema.name(pt.assay)) << ',' << csv::escape(pt.compound_id) << ','
        << csv::format_double(pt.truth) << ',' << csv::format_double(pt.qcomp) << ','
        << csv::format_double(pt.base) << '\n';
  }
}

namespace {

std::pair<Dataset, Dataset> split_by(const Dataset& data, const std::vector<std::size_t>& order,
                                     std::size_t n_test) {
  std::vector<bool> in_test(data.size(), false);
  for (std::size_t k = 0; k < n_test; ++k) in_test[order[k]] = true;
  Dataset train{data.schema, {}}, test{data.schema, {}};
  for (std::size_t i = 0; i < data.size(); ++i) {
    (in_test[i] ? test : train).rows.push_back(data.rows[i]);
  }
  return {std::move(train), std::move(test)};
}

std::size_t test_count(double fraction, std::size_t n) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw InputError("test fraction must be in [0, 1]");
  return static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
}

}  // namespace

std::pair<Dataset, Dataset> split_random(const Dataset& data, double test_fraction,
                                         std::uint64_t seed) {
  const std::size_t n_test = test_count(test_fraction, data.size());
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(order.begin(), order.end());
  return split_by(data, order, n_test);
}

std::pair<Dataset, Dataset> split_temporal(const Dataset& data, double test_fraction) {
  const std::size_t n_test = test_count(test_fraction, data.size());
  for (const auto& row : data.rows) {
    if (row.date.empty()) {
      throw InputError("temporal split needs a declared date column with a value on every row");
    }
  }
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  // Newest first; the first n_test go to the test split.
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return data.rows[a].date > data.rows[b].date;
  });
  return split_by(data, order, n_test);
}

namespace oracle {

Eigen::MatrixXd explicit_inverse(const Eigen::MatrixXd& m) {
  const Index n = m.rows();
  if (m.cols() != n) throw InputError("explicit_inverse: matrix must be square");
  Eigen::MatrixXd a = m;
  Eigen::MatrixXd inv = Eigen::MatrixXd::Identity(n, n);
  for (Index col = 0; col < n; ++col) {
    Index pivot = col;
    for (Index r = col + 1; r < n; ++r) {
      if (std::abs(a(r, col)) > std::abs(a(pivot, col))) pivot = r;
    }
    if (a(pivot, col) == 0.0) throw NumericalError("explicit_inverse: singular matrix");
    if (pivot != col) {
      for (Index c = 0; c < n; ++c) {
        std::swap(a(col, c), a(pivot, c));
        std::swap(inv(col, c), inv(pivot, c));
      }
    }
    const double d = a(col, col);
    for (Index c = 0; c < n; ++c) {
      a(col, c) /= d;
      inv(col, c) /= d;
    }
    for (Index r = 0; r < n; ++r) {
      if (r == col) continue;
      const double factor = a(r, col);
      if (factor == 0.0) continue;
      for (Index c = 0; c < n; ++c) {
        a(r, c) -= factor * a(col, c);
        inv(r, c) -= factor * inv(col, c);
      }
    }
  }
  return inv;
}

double explicit_determinant(const Eigen::MatrixXd& m) {
  const Index n = m.rows();
  if (m.cols() != n) throw InputError("explicit_determinant: matrix must be square");
  Eigen::MatrixXd a = m;
  double det = 1.0;
  for (Index col = 0; col < n; ++col) {
    Index pivot = col;
    for (Index r = col + 1; r < n; ++r) {
      if (std::abs(a(r, col)) > std::abs(a(pivot, col))) pivot = r;
    }
    if (a(pivot, col) == 0.0) return 0.0;
    if (pivot != col) {
      for (Index c = 0; c < n; ++c) std::swap(a(col, c), a(pivot, c));
      det = -det;
    }
    det *= a(col, col);
    for (Index r = col + 1; r < n; ++r) {
      const double factor = a(r, col) / a(col, col);
      for (Index c = col; c < n; ++c) a(r, c) -= factor * a(col, c);
    }
  }
  return det;
}

namespace {

Eigen::MatrixXd block(const Eigen::MatrixXd& m, const std::vector<Index>& rows,
                      const std::vector<Index>& cols) {
  Eigen::MatrixXd out(static_cast<Index>(rows.size()), static_cast<Index>(cols.size()));
  for (std::size_t a = 0; a < rows.size(); ++a) {
    for (std::size_t c = 0; c < cols.size(); ++c) out(static_cast<Index>(a), static_cast<Index>(c)) = m(rows[a], cols[c]);
  }
  return out;
}

Eigen::VectorXd pick(const Eigen::VectorXd& v, const std::vector<Index>& idx) {
  Eigen::VectorXd out(static_cast<Index>(idx.size()));
  for (std::size_t a = 0; a < idx.size(); ++a) out[static_cast<Index>(a)] = v[idx[a]];
  return out;
}

}  // namespace

ConditionalGaussian brute_force_conditional(const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma,
                                            const MaskPartition& part, const Eigen::VectorXd& y) {
  const Eigen::VectorXd mu_m = pick(mu, part.missing);
  const Eigen::MatrixXd s_mm = block(sigma, part.missing, part.missing);
  if (part.observed.empty()) return {mu_m, s_mm};
  const Eigen::MatrixXd inv = explicit_inverse(block(sigma, part.observed, part.observed));
  const Eigen::MatrixXd s_mo = block(sigma, part.missing, part.observed);
  const Eigen::VectorXd r = pick(y, part.observed) - pick(mu, part.observed);
  return {mu_m + s_mo * (inv * r), s_mm - s_mo * inv * s_mo.transpose()};
}

double brute_force_loglik(const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma,
                          const MaskPartition& part, const Eigen::VectorXd& y) {
  if (part.observed.empty()) return 0.0;
  const Eigen::MatrixXd s_oo = block(sigma, part.observed, part.observed);
  const Eigen::VectorXd r = pick(y, part.observed) - pick(mu, part.observed);
  const double quad = r.dot(explicit_inverse(s_oo) * r);
  return -0.5 * (quad + std::log(explicit_determinant(s_oo)) +
                 static_cast<double>(part.observed.size()) * std::log(2.0 * std::numbers::pi));
}

}  // namespace oracle

void SyntheticSpec::validate() const {
  const Index p = dim();
  AssaySchema check(names);
  if (B.rows() != p || B.cols() != p || b.size() != p || sigma.rows() != p || sigma.cols() != p) {
    throw InputError("synthetic spec: parameter dimensions do not match the assay count");
  }
  if (!sigma.isApprox(sigma.transpose(), 1e-12)) throw InputError("synthetic spec: sigma not symmetric");
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success) throw InputError("synthetic spec: sigma not positive-definite");
  auto check_rate = [](double r) {
    if (!(r >= 0.0 && r < 1.0)) throw InputError("synthetic spec: missing rates must be in [0, 1)");
  };
  switch (missingness.kind) {
    case Missingness::Kind::uniform: check_rate(missingness.rate); break;
    case Missingness::Kind::per_assay:
      if (static_cast<Index>(missingness.rates.size()) != p) {
        throw InputError("synthetic spec: need one missing rate per assay");
      }
      for (double r : missingness.rates) check_rate(r);
      break;
    case Missingness::Kind::grouped: {
      check_rate(missingness.rate);
      std::set<Index> seen;
      for (const auto& g : missingness.groups) {
        for (Index i : g) {
          if (i < 0 || i >= p || !seen.insert(i).second) {
            throw InputError("synthetic spec: missingness groups must be disjoint assay indices");
          }
        }
      }
      break;
    }
  }
  if (pred_std && (pred_std->size() != p || (pred_std->array() < 0.0).any())) {
    throw InputError("synthetic spec: pred_std must hold p non-negative values");
  }
}

SyntheticSpec SyntheticSpec::with_covariance(Eigen::MatrixXd sigma, std::size_t n, std::uint64_t seed) {
  const Index p = sigma.rows();
  SyntheticSpec spec;
  for (Index j = 0; j < p; ++j) spec.names.push_back("A" + std::to_string(j));
  spec.n = n;
  spec.B = Eigen::MatrixXd::Identity(p, p);
  spec.b = Eigen::VectorXd::Zero(p);
  spec.sigma = std::move(sigma);
  spec.seed = seed;
  return spec;
}

namespace {

Eigen::MatrixXd read_matrix(const nlohmann::json& j, Index p, const char* field) {
  auto rows = j.get<std::vector<std::vector<double>>>();
  if (static_cast<Index>(rows.size()) != p) {
    throw InputError(std::string("synthetic spec: '") + field + "' must be p x p");
  }
  Eigen::MatrixXd m(p, p);
  for (Index i = 0; i < p; ++i) {
    if (static_cast<Index>(rows[static_cast<std::size_t>(i)].size()) != p) {
      throw InputError(std::string("synthetic spec: '") + field + "' must be p x p");
    }
    for (Index k = 0; k < p; ++k) m(i, k) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
  }
  return m;
}

Eigen::VectorXd read_vector(const nlohmann::json& j, Index p, const char* field) {
  auto v = j.get<std::vector<double>>();
  if (static_cast<Index>(v.size()) != p) {
    throw InputError(std::string("synthetic spec: '") + field + "' must have p entries");
  }
  return Eigen::Map<Eigen::VectorXd>(v.data(), p);
}

}  // namespace

SyntheticSpec load_synthetic_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open synthetic spec " + path.string());
  try {
    nlohmann::json doc = nlohmann::json::parse(in);
    SyntheticSpec spec;
    if (doc.contains("assays")) {
      spec.names = doc.at("assays").get<std::vector<std::string>>();
    } else {
      const Index p = doc.at("p").get<Index>();
      for (Index j = 0; j < p; ++j) spec.names.push_back("A" + std::to_string(j));
    }
    const Index p = spec.dim();
    if (p < 1) throw InputError("synthetic spec: need at least one assay");
    spec.n = doc.at("n").get<std::size_t>();
    spec.seed = doc.value("seed", std::uint64_t{0});
    spec.sigma = read_matrix(doc.at("sigma"), p, "sigma");
    spec.B = doc.contains("B") ? read_matrix(doc.at("B"), p, "B") : Eigen::MatrixXd::Identity(p, p);
    spec.b = doc.contains("b") ? read_vector(doc.at("b"), p, "b") : Eigen::VectorXd::Zero(p);
    if (doc.contains("pred_std")) spec.pred_std = read_vector(doc.at("pred_std"), p, "pred_std");
    if (doc.contains("missingness")) {
      const auto& m = doc.at("missingness");
      const std::string type = m.value("type", std::string("uniform"));
      if (type == "uniform") {
        spec.missingness.kind = Missingness::Kind::uniform;
        spec.missingness.rate = m.at("rate").get<double>();
      } else if (type == "per_assay") {
        spec.missingness.kind = Missingness::Kind::per_assay;
        spec.missingness.rates = m.at("rates").get<std::vector<double>>();
      } else if (type == "grouped") {
        spec.missingness.kind = Missingness::Kind::grouped;
        spec.missingness.rate = m.at("rate").get<double>();
        const AssaySchema schema(spec.names);
        for (const auto& g : m.at("groups")) {
          std::vector<Index> group;
          for (const auto& member : g) {
            group.push_back(member.is_string() ? schema.resolve(member.get<std::string>())
                                               : member.get<Index>());
          }
          spec.missingness.groups.push_back(std::move(group));
        }
      } else {
        throw InputError("synthetic spec: unknown missingness type '" + type + "'");
      }
    }
    spec.validate();
    return spec;
  } catch (const nlohmann::json::exception& e) {
    throw InputError("invalid synthetic spec " + path.string() + ": " + e.what());
  }
}

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const Index p = spec.dim();
  const Eigen::MatrixXd chol = Eigen::LLT<Eigen::MatrixXd>(spec.sigma).matrixL();
  Rng rng(spec.seed);

  // Units hidden together: explicit groups plus singletons for everything else.
  std::vector<std::vector<Index>> units;
  std::vector<double> unit_rate;
  if (spec.missingness.kind == Missingness::Kind::grouped) {
    std::vector<bool> grouped(static_cast<std::size_t>(p), false);
    for (const auto& g : spec.missingness.groups) {
      units.push_back(g);
      for (Index i : g) grouped[static_cast<std::size_t>(i)] = true;
    }
    for (Index j = 0; j < p; ++j) {
      if (!grouped[static_cast<std::size_t>(j)]) units.push_back({j});
    }
    unit_rate.assign(units.size(), spec.missingness.rate);
  } else {
    for (Index j = 0; j < p; ++j) {
      units.push_back({j});
      unit_rate.push_back(spec.missingness.kind == Missingness::Kind::uniform
                              ? spec.missingness.rate
                              : spec.missingness.rates[static_cast<std::size_t>(j)]);
    }
  }

  const int width = std::max<int>(6, static_cast<int>(std::to_string(spec.n).size()));
  SyntheticData out{Dataset{AssaySchema(spec.names), {}}, {}};
  out.data.rows.reserve(spec.n);
  out.oracle.reserve(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) {
    SparseRow row;
    std::string id = std::to_string(i);
    row.compound_id = "c" + std::string(static_cast<std::size_t>(width) - std::min<std::size_t>(id.size(), width), '0') + id;
    row.f.resize(p);
    for (Index j = 0; j < p; ++j) row.f[j] = rng.normal();
    Eigen::VectorXd z(p);
    for (Index j = 0; j < p; ++j) z[j] = rng.normal();
    OracleRow oracle;
    oracle.mu = spec.B.transpose() * row.f + spec.b;
    oracle.full_y = oracle.mu + chol * z;
    row.y = oracle.full_y;
    for (std::size_t u = 0; u < units.size(); ++u) {
      const double draw = rng.uniform();
      if (draw < unit_rate[u]) {
        for (Index j : units[u]) row.y[j] = kMissing;
      }
    }
    if (spec.pred_std) row.sigma_f = *spec.pred_std;
    const MaskPartition part = partition_row(row);
    oracle.conditional = oracle::brute_force_conditional(oracle.mu, spec.sigma, part, row.y);
    oracle.loglik = oracle::brute_force_loglik(oracle.mu, spec.sigma, part, row.y);
    out.data.rows.push_back(std::move(row));
    out.oracle.push_back(std::move(oracle));
  }
  return out;
}

void write_oracle_csv(std::ostream& out, const SyntheticData& synth) {
  const auto& schema = synth.data.schema;
  out << "compound_id";
  for (const auto& n : schema.names()) {
    out << ',' << csv::escape(n + ".true") << ',' << csv::escape(n + ".oracle_mean") << ','
        << csv::escape(n + ".oracle_var");
  }
  out << '\n';
  for (std::size_t i = 0; i < synth.data.size(); ++i) {
    const auto& row = synth.data.rows[i];
    const auto& orc = synth.oracle[i];
    const MaskPartition part = partition_row(row);
    out << csv::escape(row.compound_id);
    std::size_t a = 0;
    for (Index j = 0; j < schema.size(); ++j) {
      out << ',' << csv::format_double(orc.full_y[j]);
      if (a < part.missing.size() && part.missing[a] == j) {
        out << ',' << csv::format_double(orc.conditional.mean[static_cast<Index>(a)]) << ','
            << csv::format_double(orc.conditional.cov(static_cast<Index>(a), static_cast<Index>(a)));
        ++a;
      } else {
        out << ",,";
      }
    }
    out << '\n';
  }
}

}  // namespace qcomp
