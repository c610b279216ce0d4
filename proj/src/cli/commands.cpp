#include "latentiv/cli.hpp"

#include <filesystem>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "latentiv/bench.hpp"
#include "latentiv/config_io.hpp"
#include "latentiv/datagen.hpp"
#include "latentiv/error.hpp"
#include "latentiv/estimate.hpp"
#include "latentiv/factor.hpp"
#include "latentiv/format.hpp"
#include "latentiv/ingest.hpp"

namespace latentiv::cli {

namespace {

namespace fs = std::filesystem;
using estimate::EstimatorId;

// Everything any subcommand may read from the command line. Optionals stay
// empty unless the flag was given, so they layer over config-file values.
struct Flags {
  std::string config_path;
  std::string out_dir = ".";
  std::string input;
  std::string schema_path;
  std::string model_path;
  std::optional<std::size_t> n, t, p, replicate, replicates, epochs, batch_size, hidden,
      latent_dim;
  std::vector<std::size_t> n_list, p_list;
  std::optional<std::uint64_t> seed;
  std::optional<double> keep_prob;
  std::vector<std::string> estimators;
  std::string profile = "desk";
  bool dry_run = false;
  std::size_t threads = std::max(1u, std::thread::hardware_concurrency());
};

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

nlohmann::json load_config(const std::string& path) {
  if (path.empty()) return nlohmann::json::object();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(ingest::read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw UsageError("config file '" + path + "': " + e.what());
  }
  if (!j.is_object()) throw UsageError("config file must hold a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (key != "simulation" && key != "train" && key != "estimator_options" && key != "bench" &&
        key != "schema") {
      throw UsageError("config file: unknown section '" + key + "'");
    }
  }
  return j;
}

void apply_train_flags(const Flags& f, factor::TrainConfig& c) {
  if (f.epochs) c.epochs = *f.epochs;
  if (f.batch_size) c.batch_size = *f.batch_size;
  if (f.hidden) c.hidden_units = *f.hidden;
  if (f.latent_dim) c.latent_dim = *f.latent_dim;
  if (f.keep_prob) c.keep_probability = *f.keep_prob;
}

factor::TrainConfig resolve_train(const Flags& f, const nlohmann::json& config) {
  factor::TrainConfig c;
  if (config.contains("train")) apply_json(config.at("train"), c);
  apply_train_flags(f, c);
  if (f.seed) c.seed = *f.seed;
  c.validate();
  return c;
}

estimate::EstimatorOptions resolve_options(const nlohmann::json& config) {
  estimate::EstimatorOptions o;
  if (config.contains("estimator_options")) apply_json(config.at("estimator_options"), o);
  return o;
}

std::vector<EstimatorId> parse_estimators(const std::vector<std::string>& names) {
  std::vector<EstimatorId> ids;
  for (const auto& name : names) ids.push_back(estimate::estimator_from_string(name));
  return ids;
}

fs::path prepare_out(const std::string& dir) {
  fs::path p(dir);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot create output directory '" + dir + "': " + ec.message());
  return p;
}

void write(const fs::path& path, const std::string& contents) {
  ingest::write_file(path.string(), contents);
}

// Schema from --schema, the config file, or the layout written by simulate.
ingest::PanelSchema resolve_schema(const Flags& f, const nlohmann::json& config,
                                   const std::string& csv_text) {
  if (!f.schema_path.empty()) return ingest::PanelSchema::from_json(ingest::read_file(f.schema_path));
  if (config.contains("schema")) return ingest::PanelSchema::from_json(config.at("schema").dump());
  const auto header = ingest::parse_csv(csv_text.substr(0, csv_text.find('\n') + 1)).header;
  std::size_t k = 0;
  while (std::find(header.begin(), header.end(), "X" + std::to_string(k + 1)) != header.end()) ++k;
  if (k == 0) throw UsageError("--schema is required for CSV files not written by simulate");
  return ingest::panel_csv_schema(k);
}

std::string latents_csv(const LatentPanel& latents) {
  std::ostringstream out;
  out << "id,t";
  for (std::size_t d = 0; d < latents.dim(); ++d) out << ",L" << (d + 1);
  out << '\n';
  for (std::size_t i = 0; i < latents.n(); ++i) {
    for (std::size_t t = 1; t <= latents.t_steps(); ++t) {
      out << i << ',' << t;
      for (std::size_t d = 0; d < latents.dim(); ++d) out << ',' << format_double(latents.at(i, t, d));
      out << '\n';
    }
  }
  return out.str();
}

std::string training_json(const factor::TrainResult& result) {
  nlohmann::ordered_json j;
  j["train_config"] = to_json(result.params.train_config);
  j["initial_loss"] = result.initial_loss;
  j["final_loss"] = result.final_loss;
  j["epoch_losses"] = result.epoch_losses;
  return j.dump(2) + "\n";
}

std::string cell(const estimate::StepOutcome& step) {
  if (step.estimate) return format_fixed(step.estimate->beta_hat, 4);
  return step.error ? std::string(to_string(*step.error)) : std::string("-");
}

void print_series_table(std::ostream& out, const std::vector<estimate::EffectSeries>& series,
                        const std::vector<std::string>& names) {
  out << std::left << std::setw(6) << "t";
  for (const auto& name : names) out << std::setw(20) << name;
  out << '\n';
  if (series.empty()) return;
  for (std::size_t s = 0; s < series.front().steps.size(); ++s) {
    out << std::setw(6) << series.front().steps[s].t;
    for (const auto& sr : series) out << std::setw(20) << cell(sr.steps[s]);
    out << '\n';
  }
}

int cmd_simulate(const Flags& f, std::ostream& out) {
  const auto config = load_config(f.config_path);
  datagen::SimConfig sim;
  if (config.contains("simulation")) apply_json(config.at("simulation"), sim);
  if (f.n) sim.n_individuals = *f.n;
  if (f.t) sim.t_steps = *f.t;
  if (f.p) sim.p_order = *f.p;
  if (f.seed) sim.master_seed = *f.seed;
  sim.validate();
  const std::uint64_t replicate = f.replicate.value_or(0);
  const auto panel = datagen::simulate_panel(sim, replicate);
  const auto dir = prepare_out(f.out_dir);
  write(dir / "panel.csv", ingest::panel_csv(panel.observed));
  write(dir / "truth.json", datagen::truth_sidecar_json(sim, panel, replicate));
  out << "simulated n=" << sim.n_individuals << " T=" << sim.t_steps << " p=" << sim.p_order
      << " seed=" << sim.master_seed << " replicate=" << replicate
      << " true_effect=" << format_double(panel.true_effect) << "\n"
      << "wrote " << (dir / "panel.csv").string() << " and " << (dir / "truth.json").string()
      << "\n";
  return 0;
}

struct InputPanel {
  ingest::PanelSchema schema;
  ingest::LoadedPanels loaded;
};

InputPanel load_input(const Flags& f, const nlohmann::json& config) {
  if (f.input.empty()) throw UsageError("--input is required");
  const std::string text = ingest::read_file(f.input);
  InputPanel in;
  in.schema = resolve_schema(f, config, text);
  in.loaded = ingest::load_panel_text(text, in.schema);
  return in;
}

int cmd_train(const Flags& f, std::ostream& out) {
  const auto config = load_config(f.config_path);
  const auto tc = resolve_train(f, config);
  const auto in = load_input(f, config);
  const auto& panel = in.loaded.panels.front();
  const auto result = factor::train(panel, tc);
  const auto latents = factor::infer_latents(result.params, panel);
  const auto dir = prepare_out(f.out_dir);
  write(dir / "model.json", factor::to_checkpoint_json(result.params));
  write(dir / "latents.csv", latents_csv(latents));
  write(dir / "training.json", training_json(result));
  out << "trained on n=" << panel.n() << " T=" << panel.t_steps() << " k=" << panel.k() << " for "
      << tc.epochs << " epochs: loss " << format_fixed(result.initial_loss, 4) << " -> "
      << format_fixed(result.final_loss, 4) << "\n"
      << "wrote " << (dir / "model.json").string() << "\n";
  return 0;
}

int cmd_estimate(const Flags& f, std::ostream& out) {
  const auto config = load_config(f.config_path);
  const auto options = resolve_options(config);
  const auto ids = parse_estimators(
      f.estimators.empty() ? std::vector<std::string>{"naive", "adjusted_ols", "linear_dml", "tsls"}
                           : f.estimators);
  const auto in = load_input(f, config);
  const auto& panel = in.loaded.panels.front();

  std::optional<LatentPanel> latents;
  nlohmann::ordered_json run;
  run["input"] = f.input;
  run["schema"] = nlohmann::ordered_json::parse(in.schema.to_json());
  run["estimator_options"] = to_json(options);
  for (auto id : ids) {
    if (id == EstimatorId::oracle_tsls) {
      throw UsageError("oracle_tsls needs the generator's instrument and is only available in benchmark");
    }
    if (id == EstimatorId::tsls && !latents) {
      factor::FactorParams params;
      if (!f.model_path.empty()) {
        params = factor::from_checkpoint_json(ingest::read_file(f.model_path));
        run["model"] = f.model_path;
      } else {
        const auto tc = resolve_train(f, config);
        params = factor::train(panel, tc).params;
        run["train_config"] = to_json(tc);
      }
      latents = factor::infer_latents(params, panel);
    }
  }

  const auto dir = prepare_out(f.out_dir);
  std::vector<estimate::EffectSeries> all;
  std::vector<std::string> names;
  for (auto id : ids) {
    auto series = estimate::effect_series(panel, latents ? &*latents : nullptr, id, options);
    const std::string name(estimate::to_string(id));
    write(dir / ("series_" + name + ".csv"), estimate::series_csv(series));
    write(dir / ("series_" + name + ".json"), estimate::series_json(series));
    names.push_back(name);
    all.push_back(std::move(series));
  }
  run["estimators"] = names;
  write(dir / "run.json", run.dump(2) + "\n");
  out << "effect estimates (beta_hat) on n=" << panel.n() << " T=" << panel.t_steps() << "\n";
  print_series_table(out, all, names);
  return 0;
}

int cmd_benchmark(const Flags& f, std::ostream& out, std::ostream& err) {
  const auto config = load_config(f.config_path);
  auto spec = bench::BenchSpec::for_profile(bench::profile_from_string(f.profile));
  if (config.contains("simulation")) apply_json(config.at("simulation"), spec.simulation);
  if (config.contains("train")) apply_json(config.at("train"), spec.train_config);
  if (config.contains("estimator_options")) apply_json(config.at("estimator_options"), spec.estimator_options);
  if (config.contains("bench")) {
    const auto& b = config.at("bench");
    for (const auto& [key, value] : b.items()) {
      try {
        if (key == "sample_sizes") spec.sample_sizes = value.get<std::vector<std::size_t>>();
        else if (key == "p_orders") spec.p_orders = value.get<std::vector<std::size_t>>();
        else if (key == "replicates") spec.replicates = value.get<std::size_t>();
        else if (key == "t_report") spec.t_report = value.get<std::vector<std::size_t>>();
        else if (key == "master_seed") spec.master_seed = value.get<std::uint64_t>();
        else if (key == "estimators") spec.estimators = parse_estimators(value.get<std::vector<std::string>>());
        else throw UsageError("config file: unknown bench key '" + key + "'");
      } catch (const nlohmann::json::exception&) {
        throw UsageError("config file: bench key '" + key + "' has the wrong type");
      }
    }
  }
  if (!f.n_list.empty()) spec.sample_sizes = f.n_list;
  if (!f.p_list.empty()) spec.p_orders = f.p_list;
  if (f.t) {
    spec.simulation.t_steps = *f.t;
    std::erase_if(spec.t_report, [&](std::size_t t) { return t > *f.t; });
    if (spec.t_report.empty()) spec.t_report = {*f.t};
  }
  if (f.replicates) spec.replicates = *f.replicates;
  if (f.seed) spec.master_seed = *f.seed;
  if (!f.estimators.empty()) spec.estimators = parse_estimators(f.estimators);
  apply_train_flags(f, spec.train_config);
  spec.validate();
  if (f.dry_run) {
    out << bench::spec_json(spec);
    return 0;
  }

  const auto dir = prepare_out(f.out_dir);
  err << "benchmark: " << spec.sample_sizes.size() * spec.p_orders.size() * spec.replicates
      << " replicates on " << f.threads << " thread(s)\n";
  const auto report =
      bench::run_benchmark(spec, f.threads, [&err](const std::string& line) { err << line << "\n"; });
  write(dir / "report.json", bench::report_json(report));
  write(dir / "report.csv", bench::report_csv(report));
  const auto table = bench::sensitivity_table(report, spec.p_orders);
  write(dir / "table.csv", table.to_csv());
  write(dir / "table.txt", table.to_text());
  std::size_t failed = 0;
  for (const auto& r : report.replicates) failed += r.failure ? 1 : 0;
  out << "mean absolute error (+- std over replicates)\n" << table.to_text();
  if (failed > 0) out << failed << " replicate(s) failed; see report.json\n";
  out << "wrote " << (dir / "report.json").string() << "\n";
  return 0;
}

int cmd_case_study(const Flags& f, std::ostream& out) {
  const auto config = load_config(f.config_path);
  const auto tc = resolve_train(f, config);
  const auto options = resolve_options(config);
  const auto schema = ingest::PanelSchema::from_json(ingest::read_file(f.schema_path));
  if (f.input.empty()) throw UsageError("--input is required");
  const auto dir = prepare_out(f.out_dir);
  ingest::LoadedPanels loaded;
  try {
    loaded = ingest::load_panel(f.input, schema);
  } catch (const Error& e) {
    nlohmann::ordered_json j;
    j["error_code"] = std::string(to_string(e.code()));
    j["message"] = e.what();
    write(dir / "ingest_report.json", j.dump(2) + "\n");
    throw;
  }
  write(dir / "ingest_report.json", loaded.report.to_json());
  const auto result = ingest::case_study_run(loaded, schema, tc, options);
  std::vector<estimate::EffectSeries> all;
  std::vector<std::string> names;
  for (const auto& s : result.series) {
    write(dir / ("series_" + s.treatment + ".csv"), estimate::series_csv(s.series));
    write(dir / ("series_" + s.treatment + ".json"), estimate::series_json(s.series));
    names.push_back(s.treatment);
    all.push_back(s.series);
  }
  nlohmann::ordered_json run;
  run["input"] = f.input;
  run["schema"] = nlohmann::ordered_json::parse(schema.to_json());
  run["train_config"] = to_json(tc);
  run["estimator_options"] = to_json(options);
  write(dir / "case_study.json", run.dump(2) + "\n");
  out << "loaded " << result.report.individuals << " individuals x " << result.report.t_steps
      << " steps (" << result.report.rows_dropped << " of " << result.report.rows_read
      << " rows dropped)\n"
      << "TSLS effect per treatment (beta_hat)\n";
  print_series_table(out, all, names);
  return 0;
}

int cmd_report(const Flags& f, std::ostream& out) {
  if (f.input.empty()) throw UsageError("--input is required");
  const auto report = bench::report_from_json(ingest::read_file(f.input));
  const auto p_values = f.p_list.empty() ? report.spec.p_orders : f.p_list;
  const auto table = bench::sensitivity_table(
      report, p_values, f.n_list.empty() ? std::nullopt : std::optional<std::size_t>(f.n_list.front()));
  if (f.out_dir != ".") {
    const auto dir = prepare_out(f.out_dir);
    write(dir / "table.csv", table.to_csv());
    write(dir / "table.txt", table.to_text());
  }
  out << table.to_text();
  return 0;
}

void add_train_flags(CLI::App* app, Flags& f) {
  app->add_option("--epochs", f.epochs, "Training epochs");
  app->add_option("--batch-size", f.batch_size, "Minibatch size");
  app->add_option("--hidden", f.hidden, "LSTM hidden units");
  app->add_option("--latent-dim", f.latent_dim, "Latent dimension");
  app->add_option("--keep-prob", f.keep_prob, "Dropout keep probability");
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  Flags f;
  CLI::App app{"Time-dependent instrumental variable workbench", "latentiv"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  auto common = [&f](CLI::App* sub) {
    sub->add_option("--config", f.config_path, "JSON config file (flags override it)")
        ->check(CLI::ExistingFile);
    sub->add_option("--out", f.out_dir, "Output directory");
  };

  auto* simulate = app.add_subcommand("simulate", "Generate a synthetic panel");
  common(simulate);
  simulate->add_option("--n", f.n, "Individuals");
  simulate->add_option("--t", f.t, "Timesteps");
  simulate->add_option("--p", f.p, "Autoregressive order");
  simulate->add_option("--seed", f.seed, "Master seed");
  simulate->add_option("--replicate", f.replicate, "Replicate index");

  auto* train = app.add_subcommand("train", "Fit the factor model and infer latents");
  common(train);
  train->add_option("--input", f.input, "Panel CSV")->check(CLI::ExistingFile);
  train->add_option("--schema", f.schema_path, "Schema JSON")->check(CLI::ExistingFile);
  train->add_option("--seed", f.seed, "Training seed");
  add_train_flags(train, f);

  auto* est = app.add_subcommand("estimate", "Per-step effect estimates");
  common(est);
  est->add_option("--input", f.input, "Panel CSV")->check(CLI::ExistingFile);
  est->add_option("--schema", f.schema_path, "Schema JSON")->check(CLI::ExistingFile);
  est->add_option("--model", f.model_path, "Factor-model checkpoint for tsls")
      ->check(CLI::ExistingFile);
  est->add_option("--estimators", f.estimators, "Comma-separated estimator ids")->delimiter(',');
  est->add_option("--seed", f.seed, "Training seed when no --model is given");
  add_train_flags(est, f);

  auto* bench_cmd = app.add_subcommand("benchmark", "Replicate grid over sample size and p");
  common(bench_cmd);
  bench_cmd->add_option("--profile", f.profile, "desk or paper")
      ->check(CLI::IsMember({"desk", "paper"}));
  bench_cmd->add_option("--n", f.n_list, "Sample sizes (comma-separated)")->delimiter(',');
  bench_cmd->add_option("--p", f.p_list, "Autoregressive orders (comma-separated)")->delimiter(',');
  bench_cmd->add_option("--t", f.t, "Timesteps");
  bench_cmd->add_option("--replicates", f.replicates, "Replicates per cell");
  bench_cmd->add_option("--seed", f.seed, "Master seed");
  bench_cmd->add_option("--estimators", f.estimators, "Comma-separated estimator ids")
      ->delimiter(',');
  bench_cmd->add_option("--threads", f.threads, "Worker threads")->check(CLI::PositiveNumber);
  bench_cmd->add_flag("--dry-run", f.dry_run, "Print the resolved spec and exit");
  add_train_flags(bench_cmd, f);

  auto* cs = app.add_subcommand("case-study", "Real-data workflow: one TSLS series per treatment");
  common(cs);
  cs->add_option("--input", f.input, "Panel CSV")->required()->check(CLI::ExistingFile);
  cs->add_option("--schema", f.schema_path, "Schema JSON")->required()->check(CLI::ExistingFile);
  cs->add_option("--seed", f.seed, "Training seed");
  add_train_flags(cs, f);

  auto* rep = app.add_subcommand("report", "Format a benchmark report as a sensitivity table");
  common(rep);
  rep->add_option("--input", f.input, "report.json")->required()->check(CLI::ExistingFile);
  rep->add_option("--n", f.n_list, "Sample size of the table");
  rep->add_option("--p", f.p_list, "Autoregressive orders (comma-separated)")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (simulate->parsed()) return cmd_simulate(f, out);
    if (train->parsed()) return cmd_train(f, out);
    if (est->parsed()) return cmd_estimate(f, out);
    if (bench_cmd->parsed()) return cmd_benchmark(f, out, err);
    if (cs->parsed()) return cmd_case_study(f, out);
    if (rep->parsed()) return cmd_report(f, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return e.code() == ErrorCode::InvalidConfig ? 2 : 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace latentiv::cli
