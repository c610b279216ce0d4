#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "latentiv/datagen.hpp"
#include "latentiv/estimate.hpp"
#include "latentiv/factor.hpp"

namespace latentiv::bench {

inline constexpr const char* kCodeVersion = "0.1.0";

enum class Profile { desk, paper };

std::string_view to_string(Profile profile);
Profile profile_from_string(std::string_view name);

struct BenchSpec {
  std::vector<std::size_t> sample_sizes{2000, 4000, 6000, 8000};
  std::vector<std::size_t> p_orders{1, 3};
  std::size_t replicates = 30;
  std::vector<std::size_t> t_report{1, 5, 10, 15, 20};
  std::vector<estimate::EstimatorId> estimators{estimate::EstimatorId::naive,
                                                estimate::EstimatorId::tsls};
  std::uint64_t master_seed = 0;
  factor::TrainConfig train_config;
  // Base generator settings; n_individuals, p_order and master_seed are
  // replaced per grid cell.
  datagen::SimConfig simulation;
  estimate::EstimatorOptions estimator_options = ridge_on();

  static BenchSpec for_profile(Profile profile);
  void validate() const;

 private:
  static estimate::EstimatorOptions ridge_on() {
    estimate::EstimatorOptions o;
    o.allow_ridge = true;
    return o;
  }
};

std::string spec_json(const BenchSpec& spec);

double abs_error(const estimate::EffectEstimate& estimate, double truth);

// Seed of the factor model for one replicate; independent of the estimator
// list so adding estimators never perturbs existing ones.
std::uint64_t train_seed(std::uint64_t master_seed, std::size_t sample_size, std::size_t p,
                         std::size_t replicate);

struct ReplicateValue {
  std::optional<double> beta_hat;
  std::optional<double> abs_error;
  std::string error;  // error code name when the step or replicate failed
};

struct ReplicateResult {
  std::size_t sample_size = 0;
  std::size_t p = 0;
  std::size_t replicate = 0;
  std::uint64_t train_seed = 0;
  bool trained = false;
  std::optional<double> train_final_loss;
  // Set when the replicate could not produce latents (generation or training
  // failure); latent-free estimators still run when the panel exists.
  std::optional<std::string> failure;
  std::vector<estimate::EffectSeries> series;  // one per spec estimator, spec order
  // values[e][j] belongs to estimator e at spec.t_report[j].
  std::vector<std::vector<ReplicateValue>> values;
};

ReplicateResult run_replicate(const BenchSpec& spec, std::size_t sample_size, std::size_t p,
                              std::size_t replicate);

struct CellKey {
  std::size_t sample_size = 0;
  std::size_t p = 0;
  estimate::EstimatorId estimator = estimate::EstimatorId::naive;
  std::size_t t = 0;
  auto operator<=>(const CellKey&) const = default;
};

struct CellStats {
  double mean_abs_error = 0.0;  // NaN when n_ok == 0
  double std_abs_error = 0.0;   // sample standard deviation; NaN when n_ok == 0, 0 when 1
  std::size_t n_ok = 0;
  std::size_t n_failed = 0;
  std::vector<ReplicateValue> per_replicate;  // replicate order
};

struct BenchReport {
  BenchSpec spec;
  std::vector<std::pair<CellKey, CellStats>> cells;  // sorted by key
  // Grid order. Reloaded reports carry the metadata only, not the series.
  std::vector<ReplicateResult> replicates;

  const CellStats* find(const CellKey& key) const;
};

using LogFn = std::function<void(const std::string&)>;

// Runs every (sample_size, p, replicate) on a pool of `threads` workers.
// The report depends only on the spec, never on threads or timing.
BenchReport run_benchmark(const BenchSpec& spec, std::size_t threads = 1,
                          const LogFn& log = {});

std::string report_json(const BenchReport& report);
BenchReport report_from_json(const std::string& text);
// One row per cell per replicate.
std::string report_csv(const BenchReport& report);

struct TableRow {
  std::size_t p = 0;
  estimate::EstimatorId estimator = estimate::EstimatorId::naive;
  std::vector<double> mean;
  std::vector<double> std;
  bool operator==(const TableRow&) const = default;
};

struct SensitivityTable {
  std::size_t sample_size = 0;
  std::vector<std::size_t> t_report;
  std::vector<TableRow> rows;

  std::string to_text() const;
  std::string to_csv() const;
  static SensitivityTable from_csv(const std::string& text);
  bool operator==(const SensitivityTable&) const = default;
};

// Rows for every estimator in the report at each requested p, using the
// largest sample size in the report unless one is given.
SensitivityTable sensitivity_table(const BenchReport& report, const std::vector<std::size_t>& p_values,
                                   std::optional<std::size_t> sample_size = std::nullopt);

}  // namespace latentiv::bench
