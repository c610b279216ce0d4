#include "latentiv/bench.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "latentiv/config_io.hpp"
#include "latentiv/error.hpp"
#include "latentiv/format.hpp"
#include "latentiv/numkit.hpp"

namespace latentiv::bench {

namespace {

using estimate::EstimatorId;

constexpr int kReportVersion = 1;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void require(bool ok, const std::string& message) {
  if (!ok) throw Error(ErrorCode::InvalidConfig, message);
}

std::string label(EstimatorId id) {
  switch (id) {
    case EstimatorId::naive: return "Baseline";
    case EstimatorId::tsls: return "TIFM";
    default: return std::string(estimate::to_string(id));
  }
}

nlohmann::json number_or_null(double v) {
  return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}

nlohmann::json optional_number(const std::optional<double>& v) {
  return v ? number_or_null(*v) : nlohmann::json(nullptr);
}

std::optional<double> read_optional(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

struct Task {
  std::size_t sample_size;
  std::size_t p;
  std::size_t replicate;
};

std::vector<Task> grid(const BenchSpec& spec) {
  std::vector<Task> tasks;
  for (std::size_t n : spec.sample_sizes)
    for (std::size_t p : spec.p_orders)
      for (std::size_t r = 0; r < spec.replicates; ++r) tasks.push_back({n, p, r});
  return tasks;
}

void finish_stats(CellStats& cell) {
  std::vector<double> ok;
  for (const auto& v : cell.per_replicate) {
    if (v.abs_error) ok.push_back(*v.abs_error);
  }
  cell.n_ok = ok.size();
  cell.n_failed = cell.per_replicate.size() - ok.size();
  if (ok.empty()) {
    cell.mean_abs_error = kNaN;
    cell.std_abs_error = kNaN;
    return;
  }
  double sum = 0.0;
  for (double v : ok) sum += v;
  cell.mean_abs_error = sum / static_cast<double>(ok.size());
  double ss = 0.0;
  for (double v : ok) ss += (v - cell.mean_abs_error) * (v - cell.mean_abs_error);
  cell.std_abs_error = ok.size() > 1 ? std::sqrt(ss / static_cast<double>(ok.size() - 1)) : 0.0;
}

nlohmann::ordered_json spec_to_json(const BenchSpec& spec) {
  nlohmann::ordered_json j;
  j["sample_sizes"] = spec.sample_sizes;
  j["p_orders"] = spec.p_orders;
  j["replicates"] = spec.replicates;
  j["t_report"] = spec.t_report;
  auto names = nlohmann::ordered_json::array();
  for (auto e : spec.estimators) names.push_back(std::string(estimate::to_string(e)));
  j["estimators"] = names;
  j["master_seed"] = spec.master_seed;
  j["train_config"] = to_json(spec.train_config);
  j["simulation"] = to_json(spec.simulation);
  j["estimator_options"] = to_json(spec.estimator_options);
  return j;
}

BenchSpec spec_from_json(const nlohmann::json& j) {
  BenchSpec spec;
  spec.sample_sizes = j.at("sample_sizes").get<std::vector<std::size_t>>();
  spec.p_orders = j.at("p_orders").get<std::vector<std::size_t>>();
  spec.replicates = j.at("replicates").get<std::size_t>();
  spec.t_report = j.at("t_report").get<std::vector<std::size_t>>();
  spec.estimators.clear();
  for (const auto& name : j.at("estimators")) {
    spec.estimators.push_back(estimate::estimator_from_string(name.get<std::string>()));
  }
  spec.master_seed = j.at("master_seed").get<std::uint64_t>();
  apply_json(j.at("train_config"), spec.train_config);
  apply_json(j.at("simulation"), spec.simulation);
  apply_json(j.at("estimator_options"), spec.estimator_options);
  return spec;
}

}  // namespace

std::string spec_json(const BenchSpec& spec) { return spec_to_json(spec).dump(2) + "\n"; }

std::string_view to_string(Profile profile) {
  return profile == Profile::desk ? "desk" : "paper";
}

Profile profile_from_string(std::string_view name) {
  if (name == "desk") return Profile::desk;
  if (name == "paper") return Profile::paper;
  throw Error(ErrorCode::InvalidConfig, "unknown profile '" + std::string(name) + "'");
}

BenchSpec BenchSpec::for_profile(Profile profile) {
  BenchSpec spec;
  if (profile == Profile::desk) {
    spec.sample_sizes = {2000, 5000};
    spec.replicates = 10;
  }
  return spec;
}

void BenchSpec::validate() const {
  require(!sample_sizes.empty(), "sample_sizes must not be empty");
  require(!p_orders.empty(), "p_orders must not be empty");
  require(replicates >= 1, "replicates >= 1 required");
  require(!estimators.empty(), "estimators must not be empty");
  for (std::size_t n : sample_sizes) require(n >= 2, "sample sizes must be >= 2");
  for (std::size_t t : t_report) {
    require(t >= 1 && t <= simulation.t_steps,
            "t_report entries must lie in 1.." + std::to_string(simulation.t_steps));
  }
  auto sorted = estimators;
  std::sort(sorted.begin(), sorted.end());
  require(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end(),
          "estimators must be distinct");
  datagen::SimConfig probe = simulation;
  for (std::size_t n : sample_sizes) {
    for (std::size_t p : p_orders) {
      probe.n_individuals = n;
      probe.p_order = p;
      probe.validate();
    }
  }
  train_config.validate();
}

double abs_error(const estimate::EffectEstimate& estimate, double truth) {
  return std::abs(estimate.beta_hat - truth);
}

std::uint64_t train_seed(std::uint64_t master_seed, std::size_t sample_size, std::size_t p,
                         std::size_t replicate) {
  std::uint64_t h = numkit::mix64(master_seed ^ 0x7472'6169'6e00ULL);
  h = numkit::mix64(h ^ sample_size);
  h = numkit::mix64(h ^ p);
  return numkit::mix64(h ^ replicate);
}

ReplicateResult run_replicate(const BenchSpec& spec, std::size_t sample_size, std::size_t p,
                              std::size_t replicate) {
  ReplicateResult out;
  out.sample_size = sample_size;
  out.p = p;
  out.replicate = replicate;
  out.train_seed = train_seed(spec.master_seed, sample_size, p, replicate);

  const std::size_t n_est = spec.estimators.size();
  out.values.assign(n_est, std::vector<ReplicateValue>(spec.t_report.size()));
  auto fail_all = [&](std::size_t e, const std::string& code) {
    for (auto& v : out.values[e]) v.error = code;
  };

  std::optional<datagen::SyntheticPanel> panel;
  try {
    datagen::SimConfig sim = spec.simulation;
    sim.n_individuals = sample_size;
    sim.p_order = p;
    sim.master_seed = spec.master_seed;
    panel = datagen::simulate_panel(sim, replicate);
  } catch (const std::exception& e) {
    out.failure = std::string("generation: ") + e.what();
    for (std::size_t i = 0; i < n_est; ++i) fail_all(i, "GenerationFailed");
    return out;
  }

  // Latents are built only for estimators that need them.
  std::optional<LatentPanel> learned;
  std::optional<LatentPanel> oracle;
  std::string latent_error;
  const bool need_learned =
      std::find(spec.estimators.begin(), spec.estimators.end(), EstimatorId::tsls) !=
      spec.estimators.end();
  if (need_learned) {
    try {
      factor::TrainConfig tc = spec.train_config;
      tc.seed = out.train_seed;
      auto trained = factor::train(panel->observed, tc);
      out.trained = true;
      out.train_final_loss = trained.final_loss;
      learned = factor::infer_latents(trained.params, panel->observed);
    } catch (const Error& e) {
      out.failure = std::string("training: ") + e.what();
      latent_error = std::string(to_string(e.code()));
    } catch (const std::exception& e) {
      out.failure = std::string("training: ") + e.what();
      latent_error = "TrainingFailed";
    }
  }

  for (std::size_t ei = 0; ei < n_est; ++ei) {
    const EstimatorId id = spec.estimators[ei];
    const LatentPanel* latents = nullptr;
    if (id == EstimatorId::tsls) {
      if (!learned) {
        fail_all(ei, latent_error);
        out.series.push_back({id, {}, panel->observed.fingerprint(), 0, spec.estimator_options});
        continue;
      }
      latents = &*learned;
    } else if (id == EstimatorId::oracle_tsls) {
      if (!oracle) oracle = panel->oracle_latents();
      latents = &*oracle;
    }
    auto series = estimate::effect_series(panel->observed, latents, id, spec.estimator_options);
    for (std::size_t j = 0; j < spec.t_report.size(); ++j) {
      const auto& step = series.steps.at(spec.t_report[j] - 1);
      ReplicateValue& v = out.values[ei][j];
      if (step.estimate) {
        v.beta_hat = step.estimate->beta_hat;
        const double err = abs_error(*step.estimate, panel->true_effect);
        if (std::isfinite(err)) {
          v.abs_error = err;
        } else {
          v.error = "NonFiniteEstimate";
        }
      } else {
        v.error = step.error ? std::string(to_string(*step.error)) : "Failed";
      }
    }
    out.series.push_back(std::move(series));
  }
  return out;
}

const CellStats* BenchReport::find(const CellKey& key) const {
  const auto it = std::lower_bound(cells.begin(), cells.end(), key,
                                   [](const auto& cell, const CellKey& k) { return cell.first < k; });
  if (it == cells.end() || it->first != key) return nullptr;
  return &it->second;
}

BenchReport run_benchmark(const BenchSpec& spec, std::size_t threads, const LogFn& log) {
  spec.validate();
  const auto tasks = grid(spec);
  std::vector<ReplicateResult> results(tasks.size());
  std::atomic<std::size_t> next{0};
  std::mutex log_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < tasks.size(); i = next++) {
      const Task& task = tasks[i];
      results[i] = run_replicate(spec, task.sample_size, task.p, task.replicate);
      if (log) {
        std::ostringstream line;
        line << "replicate n=" << task.sample_size << " p=" << task.p << " r=" << task.replicate
             << (results[i].failure ? " failed: " + *results[i].failure : " done");
        std::lock_guard<std::mutex> lock(log_mutex);
        log(line.str());
      }
    }
  };
  const std::size_t pool = std::max<std::size_t>(1, std::min(threads, tasks.size()));
  if (pool == 1) {
    worker();
  } else {
    std::vector<std::thread> workers;
    for (std::size_t w = 0; w < pool; ++w) workers.emplace_back(worker);
    for (auto& w : workers) w.join();
  }

  // Fold in grid order so the result never depends on completion order.
  std::map<CellKey, CellStats> cells;
  for (const auto& r : results) {
    for (std::size_t ei = 0; ei < spec.estimators.size(); ++ei) {
      for (std::size_t j = 0; j < spec.t_report.size(); ++j) {
        CellKey key{r.sample_size, r.p, spec.estimators[ei], spec.t_report[j]};
        cells[key].per_replicate.push_back(r.values[ei][j]);
      }
    }
  }
  BenchReport report;
  report.spec = spec;
  for (auto& [key, cell] : cells) {
    finish_stats(cell);
    report.cells.emplace_back(key, std::move(cell));
  }
  report.replicates = std::move(results);
  return report;
}

std::string report_json(const BenchReport& report) {
  nlohmann::ordered_json j;
  j["format"] = "latentiv.bench";
  j["version"] = kReportVersion;
  j["code_version"] = kCodeVersion;
  j["spec"] = spec_to_json(report.spec);
  auto cells = nlohmann::ordered_json::array();
  for (const auto& [key, cell] : report.cells) {
    nlohmann::ordered_json c;
    c["sample_size"] = key.sample_size;
    c["p"] = key.p;
    c["estimator"] = estimate::to_string(key.estimator);
    c["t"] = key.t;
    c["mean_abs_error"] = number_or_null(cell.mean_abs_error);
    c["std_abs_error"] = number_or_null(cell.std_abs_error);
    c["n_ok"] = cell.n_ok;
    c["n_failed"] = cell.n_failed;
    auto reps = nlohmann::ordered_json::array();
    for (const auto& v : cell.per_replicate) {
      nlohmann::ordered_json rv;
      rv["beta_hat"] = optional_number(v.beta_hat);
      rv["abs_error"] = optional_number(v.abs_error);
      if (!v.error.empty()) rv["error"] = v.error;
      reps.push_back(std::move(rv));
    }
    c["replicates"] = std::move(reps);
    cells.push_back(std::move(c));
  }
  j["cells"] = std::move(cells);
  auto reps = nlohmann::ordered_json::array();
  for (const auto& r : report.replicates) {
    nlohmann::ordered_json rj;
    rj["sample_size"] = r.sample_size;
    rj["p"] = r.p;
    rj["replicate"] = r.replicate;
    rj["data_seed"] = {{"master_seed", report.spec.master_seed}, {"stream", r.replicate}};
    rj["train_seed"] = r.train_seed;
    rj["trained"] = r.trained;
    rj["train_final_loss"] = optional_number(r.train_final_loss);
    rj["failure"] = r.failure ? nlohmann::ordered_json(*r.failure) : nlohmann::ordered_json();
    reps.push_back(std::move(rj));
  }
  j["replicates"] = std::move(reps);
  return j.dump(2) + "\n";
}

BenchReport report_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.at("format") != "latentiv.bench" || j.at("version") != kReportVersion) {
      throw Error(ErrorCode::InvalidConfig, "not a benchmark report");
    }
    BenchReport report;
    report.spec = spec_from_json(j.at("spec"));
    for (const auto& c : j.at("cells")) {
      CellKey key{c.at("sample_size").get<std::size_t>(), c.at("p").get<std::size_t>(),
                  estimate::estimator_from_string(c.at("estimator").get<std::string>()),
                  c.at("t").get<std::size_t>()};
      CellStats cell;
      for (const auto& rv : c.at("replicates")) {
        ReplicateValue v;
        v.beta_hat = read_optional(rv.at("beta_hat"));
        v.abs_error = read_optional(rv.at("abs_error"));
        if (rv.contains("error")) v.error = rv.at("error").get<std::string>();
        cell.per_replicate.push_back(std::move(v));
      }
      finish_stats(cell);
      report.cells.emplace_back(key, std::move(cell));
    }
    std::sort(report.cells.begin(), report.cells.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    for (const auto& rj : j.at("replicates")) {
      ReplicateResult r;
      r.sample_size = rj.at("sample_size").get<std::size_t>();
      r.p = rj.at("p").get<std::size_t>();
      r.replicate = rj.at("replicate").get<std::size_t>();
      r.train_seed = rj.at("train_seed").get<std::uint64_t>();
      r.trained = rj.at("trained").get<bool>();
      r.train_final_loss = read_optional(rj.at("train_final_loss"));
      if (!rj.at("failure").is_null()) r.failure = rj.at("failure").get<std::string>();
      report.replicates.push_back(std::move(r));
    }
    return report;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::UnparseableValue, std::string("benchmark report: ") + e.what());
  }
}

std::string report_csv(const BenchReport& report) {
  std::ostringstream out;
  out << "sample_size,p,estimator,t,replicate,beta_hat,abs_error,error\n";
  for (const auto& [key, cell] : report.cells) {
    for (std::size_t r = 0; r < cell.per_replicate.size(); ++r) {
      const auto& v = cell.per_replicate[r];
      out << key.sample_size << ',' << key.p << ',' << estimate::to_string(key.estimator) << ','
          << key.t << ',' << r << ',';
      if (v.beta_hat) out << format_double(*v.beta_hat);
      out << ',';
      if (v.abs_error) out << format_double(*v.abs_error);
      out << ',' << v.error << '\n';
    }
  }
  return out.str();
}

SensitivityTable sensitivity_table(const BenchReport& report,
                                   const std::vector<std::size_t>& p_values,
                                   std::optional<std::size_t> sample_size) {
  SensitivityTable table;
  table.t_report = report.spec.t_report;
  if (p_values.empty()) return table;
  if (sample_size) {
    table.sample_size = *sample_size;
  } else {
    for (const auto& cell : report.cells) {
      table.sample_size = std::max(table.sample_size, cell.first.sample_size);
    }
  }
  for (std::size_t p : p_values) {
    for (EstimatorId id : report.spec.estimators) {
      TableRow row;
      row.p = p;
      row.estimator = id;
      for (std::size_t t : table.t_report) {
        const CellStats* cell = report.find({table.sample_size, p, id, t});
        if (cell == nullptr) {
          throw Error(ErrorCode::MissingCell,
                      "no cell for n=" + std::to_string(table.sample_size) +
                          " p=" + std::to_string(p) + " " +
                          std::string(estimate::to_string(id)) + " t=" + std::to_string(t));
        }
        row.mean.push_back(cell->mean_abs_error);
        row.std.push_back(cell->std_abs_error);
      }
      table.rows.push_back(std::move(row));
    }
  }
  return table;
}

std::string SensitivityTable::to_text() const {
  std::vector<std::vector<std::string>> cells;
  std::size_t width = 16;
  for (const auto& row : rows) {
    auto& line = cells.emplace_back();
    for (std::size_t j = 0; j < row.mean.size(); ++j) {
      line.push_back(std::isfinite(row.mean[j])
                         ? format_fixed(row.mean[j], 3) + "+-" + format_fixed(row.std[j], 3)
                         : std::string("n/a"));
      width = std::max(width, line.back().size() + 2);
    }
  }
  std::ostringstream out;
  out << "N = " << sample_size << "\n";
  out << std::left << std::setw(4) << "p" << std::setw(14) << "method";
  for (std::size_t t : t_report) out << std::setw(static_cast<int>(width)) << ("time-step-" + std::to_string(t));
  out << "\n";
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out << std::setw(4) << rows[r].p << std::setw(14) << label(rows[r].estimator);
    for (const auto& cell : cells[r]) out << std::setw(static_cast<int>(width)) << cell;
    out << "\n";
  }
  return out.str();
}

std::string SensitivityTable::to_csv() const {
  std::ostringstream out;
  out << "sample_size,p,estimator,t,mean_abs_error,std_abs_error\n";
  for (const auto& row : rows) {
    for (std::size_t j = 0; j < t_report.size(); ++j) {
      out << sample_size << ',' << row.p << ',' << estimate::to_string(row.estimator) << ','
          << t_report[j] << ',' << format_double(row.mean[j]) << ','
          << format_double(row.std[j]) << '\n';
    }
  }
  return out.str();
}

SensitivityTable SensitivityTable::from_csv(const std::string& text) {
  SensitivityTable table;
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) ||
      line != "sample_size,p,estimator,t,mean_abs_error,std_abs_error") {
    throw Error(ErrorCode::MissingColumn, "sensitivity table header not recognised");
  }
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string field; std::getline(ss, field, ',');) f.push_back(field);
    if (f.size() != 6) {
      throw Error(ErrorCode::UnparseableValue, "line " + std::to_string(line_no) + ": expected 6 fields");
    }
    double n = 0, p = 0, t = 0, mean = 0, sd = 0;
    if (!parse_double(f[0], n) || !parse_double(f[1], p) || !parse_double(f[3], t) ||
        !parse_double(f[4], mean) || !parse_double(f[5], sd)) {
      throw Error(ErrorCode::UnparseableValue, "line " + std::to_string(line_no));
    }
    table.sample_size = static_cast<std::size_t>(n);
    const auto id = estimate::estimator_from_string(f[2]);
    const auto ts = static_cast<std::size_t>(t);
    if (std::find(table.t_report.begin(), table.t_report.end(), ts) == table.t_report.end()) {
      table.t_report.push_back(ts);
    }
    auto row = std::find_if(table.rows.begin(), table.rows.end(), [&](const TableRow& r) {
      return r.p == static_cast<std::size_t>(p) && r.estimator == id;
    });
    if (row == table.rows.end()) {
      table.rows.push_back({static_cast<std::size_t>(p), id, {}, {}});
      row = std::prev(table.rows.end());
    }
    row->mean.push_back(mean);
    row->std.push_back(sd);
  }
  return table;
}

}  // namespace latentiv::bench
