#include "cli.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include "qcomp/completion.hpp"
#include "qcomp/diagnostics.hpp"
#include "qcomp/error.hpp"
#include "qcomp/evaluation.hpp"
#include "qcomp/model.hpp"
#include "qcomp/parallel.hpp"
#include "qcomp/planner.hpp"
#include "qcomp/schema.hpp"
#include "qcomp/training.hpp"

namespace qcomp::cli {

namespace {

// Installs a logger writing to `err` for the duration of one run.
class ScopedLogger {
 public:
  ScopedLogger(std::ostream& err, bool verbose) : previous_(spdlog::default_logger()) {
    auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(err, true);
    auto logger = std::make_shared<spdlog::logger>("qcomp", std::move(sink));
    logger->set_pattern("[%l] %v");
    logger->set_level(verbose ? spdlog::level::debug : spdlog::level::info);
    spdlog::set_default_logger(std::move(logger));
  }
  ~ScopedLogger() { spdlog::set_default_logger(previous_); }

  ScopedLogger(const ScopedLogger&) = delete;
  ScopedLogger& operator=(const ScopedLogger&) = delete;

 private:
  std::shared_ptr<spdlog::logger> previous_;
};

void apply_threads(std::optional<unsigned> flag) {
  if (flag) {
    set_thread_count(*flag);
    return;
  }
  if (const char* env = std::getenv("QCOMP_THREADS")) {
    unsigned value = 0;
    const std::string_view text(env);
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size()) {
      throw InputError("QCOMP_THREADS must be a non-negative integer");
    }
    set_thread_count(value);
    return;
  }
  set_thread_count(0);
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> items;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto first = item.find_first_not_of(" \t");
    if (first == std::string::npos) continue;
    const auto last = item.find_last_not_of(" \t");
    items.push_back(item.substr(first, last - first + 1));
  }
  return items;
}

std::vector<Index> resolve_list(const std::string& text, const AssaySchema& schema) {
  std::vector<Index> out;
  for (const auto& item : split_list(text)) out.push_back(schema.resolve(item));
  return out;
}

// Writes through a file, or standard output for "-".
template <typename Fn>
void emit(const std::string& path, std::ostream& out, Fn&& write) {
  if (path == "-") {
    write(out);
    return;
  }
  std::ofstream file(path, std::ios::binary);
  if (!file) throw InputError("cannot write " + path);
  write(file);
  if (!file) throw InputError("failed writing " + path);
}

SchemaConfig schema_for_model(const ModelParams& model, const std::string& schema_path) {
  if (schema_path.empty()) return default_schema_config(model.schema());
  SchemaConfig config = load_schema_config(schema_path);
  check_schema(model, config.schema);
  return config;
}

struct TrainFlags {
  std::optional<int> epochs, batch_size, decay_every;
  std::optional<double> lr, lr_decay;
  std::optional<std::string> optimizer;
  bool grad_check = false;
};

void add_train_flags(CLI::App* cmd, TrainFlags& flags) {
  cmd->add_option("--epochs", flags.epochs, "Number of epochs (default 4)");
  cmd->add_option("--batch-size", flags.batch_size, "Rows per mini-batch (default 5000)");
  cmd->add_option("--lr", flags.lr, "Initial learning rate (default 0.003)");
  cmd->add_option("--lr-decay", flags.lr_decay, "Learning-rate decay factor in (0,1] (default 0.5)");
  cmd->add_option("--decay-every", flags.decay_every, "Epochs between decays (default 1)");
  cmd->add_option("--optimizer", flags.optimizer, "adam or sgd (default adam)");
  cmd->add_flag("--grad-check", flags.grad_check,
                "Compare the analytic gradient with finite differences on the first batch");
}

TrainConfig resolve_train_config(const std::string& config_path, const std::string& schema_path,
                                 const TrainFlags& flags, std::uint64_t seed) {
  TrainConfig config;
  if (!config_path.empty()) {
    config = load_train_config(config_path);
  } else if (!schema_path.empty()) {
    config = load_train_config(schema_path);
  }
  if (flags.epochs) config.epochs = *flags.epochs;
  if (flags.batch_size) config.batch_size = *flags.batch_size;
  if (flags.lr) config.initial_lr = *flags.lr;
  if (flags.lr_decay) config.lr_decay_factor = *flags.lr_decay;
  if (flags.decay_every) config.decay_every_epochs = *flags.decay_every;
  if (flags.optimizer) config.optimizer = parse_optimizer(*flags.optimizer);
  if (flags.grad_check) config.grad_check = true;
  config.seed = seed;
  config.validate();
  return config;
}

TrainResult fit(const Dataset& data, bool standardize_data, const TrainConfig& config,
                InitMode init_mode) {
  auto [model_data, stats] = standardize(data, standardize_data);
  ModelParams init = init_params(model_data, config.seed, init_mode);
  TrainResult result = train(model_data, config, std::move(init));
  for (std::size_t e = 0; e < result.epoch_loss.size(); ++e) {
    spdlog::info("epoch {}: mean loss {:.6f}", e + 1, result.epoch_loss[e]);
  }
  result.params.stats = stats;
  return result;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"qcomp: calibrated multivariate-Gaussian completion of sparse assay tables"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Debug logging");

  std::optional<unsigned> threads;
  std::uint64_t seed = 0;
  auto add_threads = [&](CLI::App* cmd) {
    cmd->add_option("--threads", threads,
                    "Worker threads (default: QCOMP_THREADS, else all cores); results do not depend on it");
  };
  auto add_seed = [&](CLI::App* cmd) {
    cmd->add_option("--seed", seed, "Seed for every random choice in this run (default 0)");
  };

  // train
  std::string data_path, schema_path, config_path, out_path, model_path, loss_out;
  std::string init_mode_text = "random";
  TrainFlags train_flags;
  auto* train_cmd = app.add_subcommand("train", "Fit a model and write it to a model file");
  train_cmd->add_option("--data", data_path, "Training CSV")->required();
  train_cmd->add_option("--schema", schema_path, "Schema config (JSON)")->required();
  train_cmd->add_option("--config", config_path,
                        "Training config (JSON with a \"train\" object); defaults to the schema file");
  train_cmd->add_option("--out", out_path, "Model file to write")->required();
  train_cmd->add_option("--init", init_mode_text,
                        "Covariance init: identity, residual or random (residual plus tiny off-diagonals; default)");
  train_cmd->add_option("--loss-out", loss_out, "Optional CSV of per-epoch mean loss");
  add_train_flags(train_cmd, train_flags);
  add_seed(train_cmd);
  add_threads(train_cmd);

  // complete
  bool cond_std = false, comp_std = false;
  auto* complete_cmd = app.add_subcommand("complete", "Fill missing assay values");
  complete_cmd->add_option("--model", model_path, "Model file")->required();
  complete_cmd->add_option("--data", data_path, "Input CSV")->required();
  complete_cmd->add_option("--out", out_path, "Output CSV ('-' for standard output)")->required();
  complete_cmd->add_option("--schema", schema_path,
                           "Schema config; checked against the model fingerprint");
  complete_cmd->add_flag("--condstd", cond_std, "Add X.condstd columns (conditional std)");
  complete_cmd->add_flag("--compstd", comp_std,
                         "Add X.compstd columns (composite std; needs X.std input columns)");
  add_threads(complete_cmd);

  // goc
  std::string pattern;
  auto* goc_cmd = app.add_subcommand("goc", "Print the gain of certainty for a mask pattern");
  goc_cmd->add_option("--model", model_path, "Model file")->required();
  goc_cmd->add_option("--pattern", pattern, "Observed assays, e.g. \"obs=a,b\"")->required();
  add_threads(goc_cmd);

  // plan
  std::string target, candidates_text, observed_text, plan_out;
  double threshold = kDefaultStopThreshold;
  auto* plan_cmd = app.add_subcommand("plan", "Greedy measurement order for a target assay");
  plan_cmd->add_option("--model", model_path, "Model file")->required();
  plan_cmd->add_option("--target", target, "Target assay (name or index)")->required();
  plan_cmd->add_option("--candidates", candidates_text,
                       "Comma-separated candidate assays (default: all others not observed)");
  plan_cmd->add_option("--observed", observed_text, "Comma-separated assays already measured");
  plan_cmd->add_option("--threshold", threshold, "Stop when the best gain falls below this (default 0.001)");
  plan_cmd->add_option("--out", plan_out, "Optional plan CSV");
  add_threads(plan_cmd);

  // benchmark
  std::string test_path, groups_text, scatter_out, train_path;
  int seeds = 5;
  auto* bench_cmd = app.add_subcommand("benchmark", "Column- or group-mask r^2 benchmark");
  bench_cmd->add_option("--model", model_path, "Model file")->required();
  bench_cmd->add_option("--test", test_path, "Test CSV")->required();
  bench_cmd->add_option("--schema", schema_path, "Schema config; checked against the model");
  bench_cmd->add_option("--groups", groups_text, "Assay groups hidden together, e.g. \"a,b;c,d\"");
  bench_cmd->add_option("--seeds", seeds,
                        "With --train: refit this many times (seeds --seed, --seed+1, ...) and report mean/std");
  bench_cmd->add_option("--train", train_path, "Training CSV used to refit per seed");
  bench_cmd->add_option("--config", config_path, "Training config for refits");
  bench_cmd->add_option("--out", out_path, "Report CSV ('-' for standard output)")->required();
  bench_cmd->add_option("--scatter", scatter_out, "Optional per-assay scatter CSV");
  add_train_flags(bench_cmd, train_flags);
  add_seed(bench_cmd);
  add_threads(bench_cmd);

  // diagnose
  int bins = HistogramSpec{}.bins;
  double range = HistogramSpec{}.hi;
  auto* diag_cmd = app.add_subcommand("diagnose", "Residual normality diagnostics");
  diag_cmd->add_option("--model", model_path, "Model file")->required();
  diag_cmd->add_option("--data", data_path, "CSV with observed values")->required();
  diag_cmd->add_option("--schema", schema_path, "Schema config; checked against the model");
  diag_cmd->add_option("--out", out_path,
                       "Output prefix: writes PREFIX.summary.csv, PREFIX.hist.csv, PREFIX.corr.csv")
      ->required();
  diag_cmd->add_option("--bins", bins, "Histogram bins (default 40)");
  diag_cmd->add_option("--range", range, "Histogram covers [-range, range) (default 4)");
  add_threads(diag_cmd);

  // synth
  std::string spec_path;
  std::optional<std::uint64_t> synth_seed;
  auto* synth_cmd = app.add_subcommand(
      "synth", "Generate a synthetic dataset with oracle completions (OUT, OUT.oracle.csv, OUT.schema.json)");
  synth_cmd->add_option("--spec", spec_path, "Synthetic spec (JSON)")->required();
  synth_cmd->add_option("--out", out_path, "Output data CSV")->required();
  synth_cmd->add_option("--seed", synth_seed, "Overrides the seed in the spec");
  add_threads(synth_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitInput;
  }

  ScopedLogger logger(err, verbose);
  try {
    apply_threads(threads);

    if (*train_cmd) {
      const SchemaConfig schema = load_schema_config(schema_path);
      const Dataset data = load_dataset(data_path, schema);
      const TrainConfig config = resolve_train_config(config_path, schema_path, train_flags, seed);
      spdlog::info("training on {} rows, {} assays", data.size(), data.num_assays());
      const TrainResult result = fit(data, schema.standardize, config, parse_init_mode(init_mode_text));
      save_model(result.params, out_path);
      if (!loss_out.empty()) {
        emit(loss_out, out, [&](std::ostream& o) {
          o << "epoch,mean_loss\n";
          o.precision(17);
          for (std::size_t e = 0; e < result.epoch_loss.size(); ++e) {
            o << e + 1 << ',' << result.epoch_loss[e] << '\n';
          }
        });
      }
      spdlog::info("model written to {}", out_path);
    } else if (*complete_cmd) {
      const ModelParams model = load_model(model_path);
      const SchemaConfig schema = schema_for_model(model, schema_path);
      const Dataset data = load_dataset(data_path, schema);
      if (comp_std && !data.has_sigma_f() && !data.empty()) {
        throw InputError("--compstd needs X.std columns in the data");
      }
      const Completer completer(model);
      const auto results = completer.complete_all(data, comp_std);
      std::size_t jittered = 0;
      for (const auto& r : results) jittered += r.jittered ? 1 : 0;
      if (jittered) spdlog::warn("{} rows needed diagonal jitter on the observed block", jittered);
      emit(out_path, out, [&](std::ostream& o) {
        write_completions(o, data, results, {cond_std, comp_std});
      });
    } else if (*goc_cmd) {
      const ModelParams model = load_model(model_path);
      const AssaySchema schema = model.schema();
      if (pattern.rfind("obs=", 0) != 0) throw InputError("--pattern must look like \"obs=a,b\"");
      const MaskPartition part =
          MaskPartition::from_observed(resolve_list(pattern.substr(4), schema), schema.size());
      const Eigen::VectorXd goc = gain_of_certainty(model, part);
      out << "assay,goc\n";
      out.precision(17);
      for (std::size_t a = 0; a < part.missing.size(); ++a) {
        out << schema.name(part.missing[a]) << ',' << goc[static_cast<Index>(a)] << '\n';
      }
    } else if (*plan_cmd) {
      const ModelParams model = load_model(model_path);
      const AssaySchema schema = model.schema();
      const Index tgt = schema.resolve(target);
      const std::vector<Index> observed = resolve_list(observed_text, schema);
      std::vector<Index> candidates;
      if (candidates_text.empty()) {
        for (Index j = 0; j < schema.size(); ++j) {
          if (j != tgt && std::find(observed.begin(), observed.end(), j) == observed.end()) {
            candidates.push_back(j);
          }
        }
      } else {
        candidates = resolve_list(candidates_text, schema);
      }
      const auto plan = greedy_plan(model, tgt, candidates, observed, threshold);
      print_plan_table(out, plan, schema.name(tgt));
      if (!plan_out.empty()) emit(plan_out, out, [&](std::ostream& o) { write_plan_csv(o, plan); });
    } else if (*bench_cmd) {
      const ModelParams model = load_model(model_path);
      const SchemaConfig schema = schema_for_model(model, schema_path);
      const Dataset test = load_dataset(test_path, schema);
      const auto groups = groups_text.empty() ? std::vector<std::vector<Index>>{}
                                              : parse_groups(groups_text, schema.schema);
      auto bench = [&](const ModelParams& m, std::vector<ScatterPoint>* scatter) {
        return groups.empty() ? column_mask_benchmark(m, test, scatter)
                              : group_mask_benchmark(m, test, groups, scatter);
      };
      std::vector<ScatterPoint> scatter;
      std::vector<ScatterPoint>* scatter_ptr = scatter_out.empty() ? nullptr : &scatter;
      if (train_path.empty()) {
        if (seeds > 1) {
          spdlog::info("--seeds needs --train to refit; scoring the given model once");
        }
        const BenchmarkReport report = bench(model, scatter_ptr);
        print_report_table(out, report);
        emit(out_path, out, [&](std::ostream& o) { write_report_csv(o, report); });
      } else {
        if (seeds < 1) throw InputError("--seeds must be >= 1");
        const Dataset train_data = load_dataset(train_path, schema);
        const InitMode mode = parse_init_mode(model.training.init_mode);
        std::vector<BenchmarkReport> reports;
        for (int s = 0; s < seeds; ++s) {
          const std::uint64_t run_seed = seed + static_cast<std::uint64_t>(s);
          const TrainConfig config = resolve_train_config(config_path, schema_path, train_flags, run_seed);
          spdlog::info("refit {} of {} (seed {})", s + 1, seeds, run_seed);
          const ModelParams refit = fit(train_data, schema.standardize, config, mode).params;
          reports.push_back(bench(refit, s == 0 ? scatter_ptr : nullptr));
          print_report_table(out, reports.back());
        }
        const auto summary = aggregate_seeds(reports);
        emit(out_path, out, [&](std::ostream& o) { write_seed_summary_csv(o, summary); });
      }
      if (scatter_ptr) {
        emit(scatter_out, out, [&](std::ostream& o) { write_scatter_csv(o, scatter, schema.schema); });
      }
    } else if (*diag_cmd) {
      const ModelParams model = load_model(model_path);
      const SchemaConfig schema = schema_for_model(model, schema_path);
      const Dataset data = load_dataset(data_path, schema);
      if (data.empty()) throw InputError("diagnostics need at least one row");
      if (!(range > 0.0)) throw InputError("--range must be positive");
      const ResidualDiagnostics diag = residual_report(model, data, {bins, -range, range});
      emit(out_path + ".summary.csv", out, [&](std::ostream& o) { write_diagnostics_csv(o, diag); });
      emit(out_path + ".hist.csv", out, [&](std::ostream& o) { write_histogram_csv(o, diag); });
      emit(out_path + ".corr.csv", out, [&](std::ostream& o) { write_correlation_csv(o, diag); });
      write_diagnostics_csv(out, diag);
    } else if (*synth_cmd) {
      SyntheticSpec spec = load_synthetic_spec(spec_path);
      if (synth_seed) spec.seed = *synth_seed;
      const SyntheticData synth = generate_synthetic(spec);
      SchemaConfig schema = default_schema_config(synth.data.schema);
      std::filesystem::path base(out_path);
      const std::string stem = (base.parent_path() / base.stem()).string();
      emit(out_path, out, [&](std::ostream& o) { write_dataset(o, synth.data, schema); });
      emit(stem + ".oracle.csv", out, [&](std::ostream& o) { write_oracle_csv(o, synth); });
      emit(stem + ".schema.json", out, [&](std::ostream& o) {
        nlohmann::ordered_json doc;
        doc["assays"] = schema.schema.names();
        doc["standardize"] = true;
        o << doc.dump(2) << '\n';
      });
      spdlog::info("wrote {} rows to {}", synth.data.size(), out_path);
    }
  } catch (const NumericalError& e) {
    spdlog::error("{}", e.what());
    return kExitNumerical;
  } catch (const InputError& e) {
    spdlog::error("{}", e.what());
    return kExitInput;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitInput;
  }
  return kExitOk;
}

}  // namespace qcomp::cli
