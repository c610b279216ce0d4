#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "latentiv/estimate.hpp"
#include "latentiv/factor.hpp"
#include "latentiv/panel.hpp"

namespace latentiv::ingest {

// RFC 4180 style reader: comma separated, double-quoted fields may hold
// commas, quotes ("") and newlines. A UTF-8 BOM and CRLF endings are accepted.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;  // 1-based source line of each row

  std::optional<std::size_t> column(const std::string& name) const;
};

CsvTable parse_csv(const std::string& text);
std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& contents);

enum class Binarization { none, median_split, threshold };

struct PanelSchema {
  // Absent: every row belongs to one individual.
  std::optional<std::string> id_column;
  std::string time_column;
  // One panel (and one effect series) per treatment column.
  std::vector<std::string> treatment_columns;
  std::string outcome_column;
  std::vector<std::string> covariate_columns;
  Binarization binarization = Binarization::median_split;
  double threshold = 0.0;  // used by Binarization::threshold

  // Names distinct, covariates nonempty, at least one treatment.
  void validate() const;
  static PanelSchema from_json(const std::string& text);
  std::string to_json() const;
};

struct BinarizationSummary {
  std::string column;
  Binarization mode = Binarization::none;
  std::optional<double> threshold;
  double treated_fraction = 0.0;  // share of stored W equal to 1 (or mean W for none)
};

struct IngestReport {
  std::size_t rows_read = 0;
  std::size_t rows_kept = 0;
  std::size_t rows_dropped = 0;
  std::size_t individuals = 0;
  std::size_t individuals_dropped = 0;
  std::size_t t_steps = 0;
  std::map<std::string, std::size_t> missing_counts;
  std::vector<BinarizationSummary> binarization;

  std::string to_json() const;
};

struct LoadedPanels {
  std::vector<TrajectoryPanel> panels;  // one per schema treatment column
  IngestReport report;
  std::vector<std::string> individual_ids;  // panel row order
  std::vector<std::string> time_values;     // raw grid, T + 1 entries
};

// Rows are grouped by individual and ordered by time over the grid of all
// distinct time values (numeric order when every value is numeric, byte order
// otherwise). Stored step t takes X and W from grid time t and Y from grid
// time t + 1, so the last grid time only needs Y and the first only X and W.
LoadedPanels load_panel_text(const std::string& text, const PanelSchema& schema);
LoadedPanels load_panel(const std::string& path, const PanelSchema& schema);

// Long-format CSV whose reload with panel_csv_schema(k) reproduces `panel`.
std::string panel_csv(const TrajectoryPanel& panel);
PanelSchema panel_csv_schema(std::size_t k);

struct TreatmentSeries {
  std::string treatment;
  estimate::EffectSeries series;
  double train_final_loss = 0.0;
};

struct CaseStudyResult {
  std::vector<TreatmentSeries> series;
  IngestReport report;
};

// Trains one factor model per treatment panel and runs TSLS on its latents
// at every step.
CaseStudyResult case_study_run(const LoadedPanels& loaded, const PanelSchema& schema,
                               const factor::TrainConfig& train_config,
                               const estimate::EstimatorOptions& options = {});
CaseStudyResult case_study_run(const std::string& path, const PanelSchema& schema,
                               const factor::TrainConfig& train_config,
                               const estimate::EstimatorOptions& options = {});

}  // namespace latentiv::ingest
