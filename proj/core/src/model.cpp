#include "qcomp/model.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "qcomp/error.hpp"
#include "qcomp/random.hpp"

namespace qcomp {

std::string to_string(InitMode mode) {
  switch (mode) {
    case InitMode::identity: return "identity";
    case InitMode::residual: return "residual";
    case InitMode::random: return "random";
  }
  return "unknown";
}

InitMode parse_init_mode(std::string_view text) {
  if (text == "identity") return InitMode::identity;
  if (text == "residual") return InitMode::residual;
  if (text == "random") return InitMode::random;
  throw InputError("unknown init mode '" + std::string(text) + "'");
}

void ModelParams::validate() const {
  const Index p = static_cast<Index>(assay_names.size());
  if (p < 1) throw InputError("model has no assays");
  if (B.rows() != p || B.cols() != p || b.size() != p || cov.log_diag.size() != p ||
      cov.strict_lower.size() != CovarianceFactor::num_strict_lower(p) || stats.mean.size() != p ||
      stats.std.size() != p) {
    throw InputError("model parameter dimensions are inconsistent");
  }
  if (!B.allFinite() || !b.allFinite() || !cov.log_diag.allFinite() ||
      !cov.strict_lower.allFinite()) {
    throw InputError("model parameters contain non-finite values");
  }
  if (stats.enabled && !(stats.std.array() > 0.0).all()) {
    throw InputError("standardization std must be positive");
  }
}

ModelParams identity_params(const AssaySchema& schema) {
  const Index p = schema.size();
  ModelParams params;
  params.assay_names = schema.names();
  params.B = Eigen::MatrixXd::Identity(p, p);
  params.b = Eigen::VectorXd::Zero(p);
  params.cov = CovarianceFactor::identity(p);
  params.stats = StandardizationStats::identity(p);
  return params;
}

Eigen::VectorXd calibrate(const ModelParams& params, const Eigen::VectorXd& f) {
  if (f.size() != params.dim()) throw InputError("prediction vector length mismatch");
  if (!f.allFinite()) throw InputError("non-finite base prediction");
  return params.B.transpose() * f + params.b;
}

ModelParams init_params(const Dataset& data, std::uint64_t seed, InitMode mode) {
  if (data.empty()) throw InputError("cannot initialize a model from an empty dataset");
  const Index p = data.num_assays();
  ModelParams params = identity_params(data.schema);
  params.training.seed = seed;
  params.training.init_mode = to_string(mode);
  if (mode == InitMode::identity) return params;

  for (Index j = 0; j < p; ++j) {
    double sum = 0.0, sq = 0.0;
    std::size_t n = 0;
    for (const auto& row : data.rows) {
      if (is_missing(row.y[j])) continue;
      const double r = row.y[j] - row.f[j];
      sum += r;
      sq += r * r;
      ++n;
    }
    double sd = 0.0;
    if (n >= 2) {
      const double mean = sum / static_cast<double>(n);
      sd = std::sqrt(std::max(0.0, (sq - static_cast<double>(n) * mean * mean) /
                                       static_cast<double>(n - 1)));
    }
    if (!(sd > 0.0) || !std::isfinite(sd)) {
      spdlog::warn("assay '{}' has too few observed residuals; using unit initial variance",
                   data.schema.name(j));
      sd = 1.0;
    }
    params.cov.log_diag[j] = std::log(sd);
  }

  if (mode == InitMode::random) {
    Rng rng(seed);
    for (Index k = 0; k < params.cov.strict_lower.size(); ++k) {
      params.cov.strict_lower[k] = rng.uniform(-0.01, 0.01);
    }
  }
  return params;
}

namespace {

nlohmann::json to_array(const Eigen::VectorXd& v) {
  return nlohmann::json(std::vector<double>(v.data(), v.data() + v.size()));
}

Eigen::VectorXd from_array(const nlohmann::json& j, Index expected, const char* field) {
  auto values = j.get<std::vector<double>>();
  if (static_cast<Index>(values.size()) != expected) {
    throw InputError(std::string("corrupt model file: field '") + field + "' has wrong length");
  }
  return Eigen::Map<Eigen::VectorXd>(values.data(), expected);
}

}  // namespace

std::string serialize_model(const ModelParams& params) {
  params.validate();
  const Index p = params.dim();
  Eigen::VectorXd b_rows(p * p);
  for (Index i = 0; i < p; ++i) {
    for (Index j = 0; j < p; ++j) b_rows[i * p + j] = params.B(i, j);
  }
  nlohmann::ordered_json doc;
  doc["format_version"] = kModelFormatVersion;
  doc["schema_fingerprint"] = params.fingerprint();
  doc["p"] = p;
  doc["assays"] = params.assay_names;
  doc["B"] = to_array(b_rows);
  doc["b"] = to_array(params.b);
  doc["log_diag"] = to_array(params.cov.log_diag);
  doc["strict_lower"] = to_array(params.cov.strict_lower);
  doc["standardization"] = {{"enabled", params.stats.enabled},
                            {"mean", to_array(params.stats.mean)},
                            {"std", to_array(params.stats.std)}};
  doc["training"] = {{"epochs", params.training.epochs},
                     {"seed", params.training.seed},
                     {"final_loss", std::isfinite(params.training.final_loss)
                                        ? nlohmann::json(params.training.final_loss)
                                        : nlohmann::json(nullptr)},
                     {"init_mode", params.training.init_mode}};
  return doc.dump(2) + "\n";
}

ModelParams deserialize_model(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("corrupt model file: ") + e.what());
  }
  try {
    if (!doc.is_object() || !doc.contains("format_version")) {
      throw InputError("corrupt model file: no format_version");
    }
    const int version = doc.at("format_version").get<int>();
    if (version != kModelFormatVersion) {
      throw InputError("unsupported model format_version " + std::to_string(version) +
                       " (expected " + std::to_string(kModelFormatVersion) + ")");
    }
    ModelParams params;
    params.assay_names = doc.at("assays").get<std::vector<std::string>>();
    const Index p = doc.at("p").get<Index>();
    if (p != static_cast<Index>(params.assay_names.size()) || p < 1) {
      throw InputError("corrupt model file: p does not match the assay list");
    }
    if (doc.at("schema_fingerprint").get<std::string>() != params.fingerprint()) {
      throw InputError("corrupt model file: schema fingerprint does not match its assay list");
    }
    Eigen::VectorXd b_rows = from_array(doc.at("B"), p * p, "B");
    params.B.resize(p, p);
    for (Index i = 0; i < p; ++i) {
      for (Index j = 0; j < p; ++j) params.B(i, j) = b_rows[i * p + j];
    }
    params.b = from_array(doc.at("b"), p, "b");
    params.cov.log_diag = from_array(doc.at("log_diag"), p, "log_diag");
    params.cov.strict_lower =
        from_array(doc.at("strict_lower"), CovarianceFactor::num_strict_lower(p), "strict_lower");
    const auto& st = doc.at("standardization");
    params.stats.enabled = st.at("enabled").get<bool>();
    params.stats.mean = from_array(st.at("mean"), p, "standardization.mean");
    params.stats.std = from_array(st.at("std"), p, "standardization.std");
    const auto& tr = doc.at("training");
    params.training.epochs = tr.at("epochs").get<int>();
    params.training.seed = tr.at("seed").get<std::uint64_t>();
    params.training.final_loss =
        tr.at("final_loss").is_null() ? std::nan("") : tr.at("final_loss").get<double>();
    params.training.init_mode = tr.at("init_mode").get<std::string>();
    params.validate();
    return params;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("corrupt model file: ") + e.what());
  }
}

void save_model(const ModelParams& params, const std::filesystem::path& path) {
  const std::string text = serialize_model(params);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write model file " + path.string());
  out << text;
  if (!out) throw InputError("failed writing model file " + path.string());
}

ModelParams load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open model file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  try {
    return deserialize_model(buffer.str());
  } catch (const InputError& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

void check_schema(const ModelParams& params, const AssaySchema& schema) {
  if (params.fingerprint() != schema.fingerprint()) {
    throw InputError("schema fingerprint mismatch: model " + params.fingerprint() + ", data " +
                     schema.fingerprint());
  }
}

DataScaleParameters to_data_scale(const ModelParams& params) {
  const Eigen::VectorXd& m = params.stats.mean;
  const Eigen::VectorXd& s = params.stats.std;
  DataScaleParameters out;
  out.B = s.cwiseInverse().asDiagonal() * params.B * s.asDiagonal();
  out.b = m - out.B.transpose() * m + params.b.cwiseProduct(s);
  out.sigma = s.asDiagonal() * params.sigma() * s.asDiagonal();
  return out;
}

}  // namespace qcomp
