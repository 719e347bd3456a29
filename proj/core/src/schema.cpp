#include "qcomp/schema.hpp"

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "csv.hpp"
#include "qcomp/error.hpp"

namespace qcomp {

AssaySchema::AssaySchema(std::vector<std::string> names) : names_(std::move(names)) {
  if (names_.empty()) throw InputError("assay schema must list at least one assay");
  std::unordered_set<std::string> seen;
  for (const auto& n : names_) {
    if (n.empty()) throw InputError("assay names must be non-empty");
    if (!seen.insert(n).second) throw InputError("duplicate assay name '" + n + "'");
  }
}

std::optional<Index> AssaySchema::index_of(std::string_view name) const {
  auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) return std::nullopt;
  return static_cast<Index>(it - names_.begin());
}

Index AssaySchema::resolve(std::string_view name_or_index) const {
  if (auto idx = index_of(name_or_index)) return *idx;
  Index value = 0;
  auto [ptr, ec] = std::from_chars(name_or_index.data(),
                                   name_or_index.data() + name_or_index.size(), value);
  if (ec == std::errc() && ptr == name_or_index.data() + name_or_index.size() && value >= 0 &&
      value < size()) {
    return value;
  }
  throw InputError("unknown assay '" + std::string(name_or_index) + "'");
}

std::string AssaySchema::fingerprint() const { return schema_fingerprint(names_); }

std::string schema_fingerprint(const std::vector<std::string>& names) {
  // FNV-1a over the names, each terminated by a 0x1f separator.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](unsigned char c) {
    h ^= c;
    h *= 0x100000001b3ULL;
  };
  for (const auto& n : names) {
    for (unsigned char c : n) mix(c);
    mix(0x1f);
  }
  char buf[17];
  static constexpr char kHex[] = "0123456789abcdef";
  for (int i = 15; i >= 0; --i) {
    buf[i] = kHex[h & 0xf];
    h >>= 4;
  }
  buf[16] = '\0';
  return buf;
}

std::string MaskPartition::key() const {
  std::string k(static_cast<std::size_t>(dim()), 'm');
  for (Index i : observed) k[static_cast<std::size_t>(i)] = 'o';
  return k;
}

MaskPartition MaskPartition::from_observed(std::vector<Index> observed, Index p) {
  std::sort(observed.begin(), observed.end());
  observed.erase(std::unique(observed.begin(), observed.end()), observed.end());
  MaskPartition part;
  std::vector<bool> is_obs(static_cast<std::size_t>(p), false);
  for (Index i : observed) {
    if (i < 0 || i >= p) throw InputError("assay index out of range");
    is_obs[static_cast<std::size_t>(i)] = true;
  }
  part.observed = std::move(observed);
  for (Index i = 0; i < p; ++i) {
    if (!is_obs[static_cast<std::size_t>(i)]) part.missing.push_back(i);
  }
  return part;
}

MaskPartition partition_row(const SparseRow& row) {
  MaskPartition part;
  for (Index i = 0; i < row.y.size(); ++i) {
    (is_missing(row.y[i]) ? part.missing : part.observed).push_back(i);
  }
  return part;
}

Eigen::VectorXd gather(const Eigen::VectorXd& v, std::span<const Index> idx) {
  Eigen::VectorXd out(static_cast<Index>(idx.size()));
  for (std::size_t a = 0; a < idx.size(); ++a) out[static_cast<Index>(a)] = v[idx[a]];
  return out;
}

Eigen::VectorXd compose(const MaskPartition& part, const Eigen::VectorXd& observed_values,
                        const Eigen::VectorXd& missing_values) {
  Eigen::VectorXd out(part.dim());
  for (std::size_t a = 0; a < part.observed.size(); ++a) {
    out[part.observed[a]] = observed_values[static_cast<Index>(a)];
  }
  for (std::size_t a = 0; a < part.missing.size(); ++a) {
    out[part.missing[a]] = missing_values[static_cast<Index>(a)];
  }
  return out;
}

StandardizationStats StandardizationStats::identity(Index p) {
  return {Eigen::VectorXd::Zero(p), Eigen::VectorXd::Ones(p), false};
}

bool Dataset::has_sigma_f() const {
  return !rows.empty() && std::all_of(rows.begin(), rows.end(),
                                      [](const SparseRow& r) { return r.sigma_f.has_value(); });
}

void Dataset::validate() const {
  const Index p = schema.size();
  std::unordered_set<std::string> ids;
  for (const auto& row : rows) {
    const std::string where = "compound '" + row.compound_id + "'";
    if (row.y.size() != p || row.f.size() != p) {
      throw InputError(where + ": row length does not match schema");
    }
    for (Index j = 0; j < p; ++j) {
      if (!std::isfinite(row.f[j])) throw InputError(where + ": dense prediction required");
      if (!is_missing(row.y[j]) && !std::isfinite(row.y[j])) {
        throw InputError(where + ": non-finite activity value");
      }
    }
    if (row.sigma_f) {
      if (row.sigma_f->size() != p) throw InputError(where + ": std vector length mismatch");
      for (Index j = 0; j < p; ++j) {
        if (!std::isfinite((*row.sigma_f)[j]) || (*row.sigma_f)[j] < 0.0) {
          throw InputError(where + ": prediction std must be finite and non-negative");
        }
      }
    }
    if (!ids.insert(row.compound_id).second) {
      throw InputError("duplicate compound id '" + row.compound_id + "'");
    }
  }
}

SchemaConfig default_schema_config(AssaySchema schema) {
  SchemaConfig config;
  config.schema = std::move(schema);
  return config;
}

SchemaConfig load_schema_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open schema config " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw InputError("malformed schema config " + path.string() + ": " + e.what());
  }
  try {
    if (!doc.contains("assays")) throw InputError("schema config lacks an \"assays\" list");
    SchemaConfig config;
    config.schema = AssaySchema(doc.at("assays").get<std::vector<std::string>>());
    config.standardize = doc.value("standardize", true);
    if (doc.contains("missing_tokens")) {
      config.missing_tokens = doc.at("missing_tokens").get<std::vector<std::string>>();
    }
    config.id_column = doc.value("id_column", std::string("compound_id"));
    if (doc.contains("date_column") && !doc.at("date_column").is_null()) {
      config.date_column = doc.at("date_column").get<std::string>();
    }
    return config;
  } catch (const nlohmann::json::exception& e) {
    throw InputError("invalid schema config " + path.string() + ": " + e.what());
  }
}

namespace {

struct ColumnMap {
  std::size_t id = 0;
  std::optional<std::size_t> date;
  std::vector<std::size_t> y, f;
  std::vector<std::size_t> std;  // empty when the table has no std columns
  std::size_t width = 0;
};

ColumnMap map_header(const std::vector<std::string>& header, const SchemaConfig& config) {
  std::unordered_map<std::string, std::size_t> pos;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (!pos.emplace(header[c], c).second) {
      throw InputError("header mismatch: duplicate column '" + header[c] + "'");
    }
  }
  std::unordered_set<std::string> used;
  auto take = [&](const std::string& name) -> std::optional<std::size_t> {
    auto it = pos.find(name);
    if (it == pos.end()) return std::nullopt;
    used.insert(name);
    return it->second;
  };
  auto require = [&](const std::string& name) {
    auto c = take(name);
    if (!c) throw InputError("header mismatch: missing column '" + name + "'");
    return *c;
  };

  ColumnMap map;
  map.width = header.size();
  map.id = require(config.id_column);
  if (config.date_column) map.date = require(*config.date_column);
  std::size_t std_found = 0;
  std::vector<std::optional<std::size_t>> stds;
  for (const auto& name : config.schema.names()) {
    map.y.push_back(require(name));
    map.f.push_back(require(name + ".pred"));
    stds.push_back(take(name + ".std"));
    if (stds.back()) ++std_found;
  }
  if (std_found != 0 && std_found != stds.size()) {
    throw InputError("header mismatch: .std columns must be given for all assays or none");
  }
  if (std_found != 0) {
    for (auto& s : stds) map.std.push_back(*s);
  }
  for (const auto& h : header) {
    if (!used.count(h)) throw InputError("header mismatch: unexpected column '" + h + "'");
  }
  return map;
}

}  // namespace

Dataset read_dataset(std::istream& in, const SchemaConfig& config) {
  const Index p = config.schema.size();
  std::string line;
  std::size_t line_no = 0;
  if (!csv::next_line(in, line, line_no)) throw InputError("data file has no header row");
  const ColumnMap map = map_header(csv::split(line), config);

  auto is_missing_token = [&](const std::string& cell) {
    return std::find(config.missing_tokens.begin(), config.missing_tokens.end(), cell) !=
           config.missing_tokens.end();
  };

  Dataset data{config.schema, {}};
  std::unordered_set<std::string> ids;
  while (csv::next_line(in, line, line_no)) {
    const auto cells = csv::split(line);
    const std::string where = "line " + std::to_string(line_no);
    if (cells.size() != map.width) {
      throw InputError(where + ": expected " + std::to_string(map.width) + " fields, found " +
                       std::to_string(cells.size()));
    }
    SparseRow row;
    row.compound_id = cells[map.id];
    if (row.compound_id.empty()) throw InputError(where + ": empty compound id");
    if (!ids.insert(row.compound_id).second) {
      throw InputError(where + ": duplicate compound id '" + row.compound_id + "'");
    }
    if (map.date) row.date = cells[*map.date];
    row.y.resize(p);
    row.f.resize(p);
    if (!map.std.empty()) row.sigma_f = Eigen::VectorXd(p);

    auto number = [&](const std::string& cell, const std::string& column) {
      auto v = csv::parse_double(cell);
      if (!v) throw InputError(where + ": non-numeric value '" + cell + "' in column " + column);
      if (!std::isfinite(*v)) {
        throw InputError(where + ": non-finite value in column " + column);
      }
      return *v;
    };

    for (Index j = 0; j < p; ++j) {
      const auto& name = config.schema.name(j);
      const auto& ycell = cells[map.y[static_cast<std::size_t>(j)]];
      row.y[j] = is_missing_token(ycell) ? kMissing : number(ycell, name);

      const auto& fcell = cells[map.f[static_cast<std::size_t>(j)]];
      if (is_missing_token(fcell)) {
        throw InputError(where + ": dense prediction required in column " + name + ".pred");
      }
      row.f[j] = number(fcell, name + ".pred");

      if (row.sigma_f) {
        const auto& scell = cells[map.std[static_cast<std::size_t>(j)]];
        if (is_missing_token(scell)) {
          throw InputError(where + ": prediction std required in column " + name + ".std");
        }
        double s = number(scell, name + ".std");
        if (s < 0.0) throw InputError(where + ": negative std in column " + name + ".std");
        (*row.sigma_f)[j] = s;
      }
    }
    data.rows.push_back(std::move(row));
  }
  return data;
}

Dataset load_dataset(const std::filesystem::path& path, const SchemaConfig& config) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open data file " + path.string());
  try {
    return read_dataset(in, config);
  } catch (const InputError& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

void write_dataset(std::ostream& out, const Dataset& data, const SchemaConfig& config) {
  const bool with_std = data.has_sigma_f();
  out << csv::escape(config.id_column);
  if (config.date_column) out << ',' << csv::escape(*config.date_column);
  for (const auto& n : data.schema.names()) {
    out << ',' << csv::escape(n) << ',' << csv::escape(n + ".pred");
    if (with_std) out << ',' << csv::escape(n + ".std");
  }
  out << '\n';
  const std::string missing = config.missing_tokens.empty() ? "NA" : config.missing_tokens.front();
  for (const auto& row : data.rows) {
    out << csv::escape(row.compound_id);
    if (config.date_column) out << ',' << csv::escape(row.date);
    for (Index j = 0; j < data.num_assays(); ++j) {
      out << ',' << (is_missing(row.y[j]) ? missing : csv::format_double(row.y[j]));
      out << ',' << csv::format_double(row.f[j]);
      if (with_std) out << ',' << csv::format_double((*row.sigma_f)[j]);
    }
    out << '\n';
  }
}

std::pair<Dataset, StandardizationStats> standardize(const Dataset& data, bool enabled) {
  const Index p = data.num_assays();
  if (!enabled) return {data, StandardizationStats::identity(p)};

  StandardizationStats stats{Eigen::VectorXd(p), Eigen::VectorXd(p), true};
  for (Index j = 0; j < p; ++j) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& row : data.rows) {
      if (!is_missing(row.y[j])) {
        sum += row.y[j];
        ++n;
      }
    }
    const auto& name = data.schema.name(j);
    if (n < 2) {
      throw InputError("assay '" + name + "' needs at least two observed values to standardize");
    }
    const double mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (const auto& row : data.rows) {
      if (!is_missing(row.y[j])) ss += (row.y[j] - mean) * (row.y[j] - mean);
    }
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    if (!(sd > 0.0)) throw InputError("assay '" + name + "' has zero variance");
    stats.mean[j] = mean;
    stats.std[j] = sd;
  }
  return {apply_standardization(data, stats), stats};
}

Dataset apply_standardization(const Dataset& data, const StandardizationStats& stats) {
  if (!stats.enabled) return data;
  Dataset out = data;
  for (auto& row : out.rows) {
    for (Index j = 0; j < row.y.size(); ++j) {
      if (!is_missing(row.y[j])) row.y[j] = (row.y[j] - stats.mean[j]) / stats.std[j];
      row.f[j] = (row.f[j] - stats.mean[j]) / stats.std[j];
    }
    if (row.sigma_f) *row.sigma_f = row.sigma_f->cwiseQuotient(stats.std);
  }
  return out;
}

Dataset inverse_standardize(const Dataset& data, const StandardizationStats& stats) {
  if (!stats.enabled) return data;
  Dataset out = data;
  for (auto& row : out.rows) {
    for (Index j = 0; j < row.y.size(); ++j) {
      if (!is_missing(row.y[j])) row.y[j] = row.y[j] * stats.std[j] + stats.mean[j];
      row.f[j] = row.f[j] * stats.std[j] + stats.mean[j];
    }
    if (row.sigma_f) *row.sigma_f = row.sigma_f->cwiseProduct(stats.std);
  }
  return out;
}

}  // namespace qcomp
