#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include <json.hpp>

#include "latentiv/error.hpp"
#include "latentiv/format.hpp"
#include "latentiv/ingest.hpp"

namespace latentiv::ingest {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

bool is_missing(std::string_view raw) {
  const auto s = trim(raw);
  return s.empty() || s == "NA" || s == "N/A" || s == "NaN" || s == "nan" || s == "null" ||
         s == "NULL";
}

std::string_view to_string(Binarization b) {
  switch (b) {
    case Binarization::none: return "none";
    case Binarization::median_split: return "median_split";
    case Binarization::threshold: return "threshold";
  }
  return "none";
}

Binarization binarization_from(const std::string& name) {
  if (name == "none") return Binarization::none;
  if (name == "median_split") return Binarization::median_split;
  if (name == "threshold") return Binarization::threshold;
  throw Error(ErrorCode::InvalidConfig, "unknown binarization '" + name + "'");
}

// Sort keys that are numeric when every key parses as a number.
struct KeyOrder {
  bool numeric = true;
  std::vector<double> values;

  explicit KeyOrder(const std::vector<std::string>& keys) {
    values.resize(keys.size());
    for (std::size_t i = 0; i < keys.size() && numeric; ++i) {
      numeric = parse_double(keys[i], values[i]) && std::isfinite(values[i]);
    }
  }
  // Indices of `keys` in sorted order with duplicates (equal keys) adjacent.
  std::vector<std::size_t> order(const std::vector<std::string>& keys) const {
    std::vector<std::size_t> idx(keys.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return numeric ? values[a] < values[b] : keys[a] < keys[b];
    });
    return idx;
  }
  bool same(const std::vector<std::string>& keys, std::size_t a, std::size_t b) const {
    return numeric ? values[a] == values[b] : keys[a] == keys[b];
  }
};

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

void PanelSchema::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorCode::InvalidConfig, "schema: " + m); };
  if (time_column.empty()) fail("time_column is required");
  if (outcome_column.empty()) fail("outcome_column is required");
  if (treatment_columns.empty()) fail("at least one treatment column is required");
  if (covariate_columns.empty()) fail("covariate_columns must not be empty");
  std::vector<std::string> names{time_column, outcome_column};
  if (id_column) names.push_back(*id_column);
  names.insert(names.end(), treatment_columns.begin(), treatment_columns.end());
  names.insert(names.end(), covariate_columns.begin(), covariate_columns.end());
  std::set<std::string> seen;
  for (const auto& n : names) {
    if (n.empty()) fail("column names must not be empty");
    if (!seen.insert(n).second) fail("column '" + n + "' is used more than once");
  }
  if (binarization == Binarization::threshold && !std::isfinite(threshold)) {
    fail("threshold must be finite");
  }
}

PanelSchema PanelSchema::from_json(const std::string& text) {
  PanelSchema schema;
  try {
    const auto j = nlohmann::json::parse(text);
    if (!j.is_object()) throw Error(ErrorCode::InvalidConfig, "schema must be a JSON object");
    for (const auto& [key, value] : j.items()) {
      if (key == "id_column") {
        if (!value.is_null()) schema.id_column = value.get<std::string>();
      } else if (key == "time_column") {
        schema.time_column = value.get<std::string>();
      } else if (key == "treatment_column") {
        schema.treatment_columns.push_back(value.get<std::string>());
      } else if (key == "treatment_columns") {
        for (const auto& t : value) schema.treatment_columns.push_back(t.get<std::string>());
      } else if (key == "outcome_column") {
        schema.outcome_column = value.get<std::string>();
      } else if (key == "covariate_columns") {
        schema.covariate_columns = value.get<std::vector<std::string>>();
      } else if (key == "binarization") {
        schema.binarization = binarization_from(value.get<std::string>());
      } else if (key == "threshold") {
        schema.threshold = value.get<double>();
      } else {
        throw Error(ErrorCode::InvalidConfig, "schema: unknown key '" + key + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("schema: ") + e.what());
  }
  schema.validate();
  return schema;
}

std::string PanelSchema::to_json() const {
  nlohmann::ordered_json j;
  j["id_column"] = id_column ? nlohmann::ordered_json(*id_column) : nlohmann::ordered_json();
  j["time_column"] = time_column;
  j["treatment_columns"] = treatment_columns;
  j["outcome_column"] = outcome_column;
  j["covariate_columns"] = covariate_columns;
  j["binarization"] = std::string(ingest::to_string(binarization));
  if (binarization == Binarization::threshold) j["threshold"] = threshold;
  return j.dump(2) + "\n";
}

std::string IngestReport::to_json() const {
  nlohmann::ordered_json j;
  j["rows_read"] = rows_read;
  j["rows_kept"] = rows_kept;
  j["rows_dropped"] = rows_dropped;
  j["individuals"] = individuals;
  j["individuals_dropped"] = individuals_dropped;
  j["t_steps"] = t_steps;
  nlohmann::ordered_json missing = nlohmann::ordered_json::object();
  for (const auto& [column, count] : missing_counts) missing[column] = count;
  j["missing_counts"] = missing;
  auto bins = nlohmann::ordered_json::array();
  for (const auto& b : binarization) {
    nlohmann::ordered_json e;
    e["column"] = b.column;
    e["mode"] = std::string(ingest::to_string(b.mode));
    e["threshold"] = b.threshold ? nlohmann::ordered_json(*b.threshold) : nlohmann::ordered_json();
    e["treated_fraction"] = b.treated_fraction;
    bins.push_back(std::move(e));
  }
  j["binarization"] = bins;
  return j.dump(2) + "\n";
}

LoadedPanels load_panel_text(const std::string& text, const PanelSchema& schema) {
  schema.validate();
  const CsvTable table = parse_csv(text);

  auto column = [&](const std::string& name) {
    const auto c = table.column(name);
    if (!c) throw Error(ErrorCode::MissingColumn, "column '" + name + "' not in header");
    return *c;
  };
  const std::optional<std::size_t> id_col =
      schema.id_column ? std::optional<std::size_t>(column(*schema.id_column)) : std::nullopt;
  const std::size_t time_col = column(schema.time_column);
  const std::size_t outcome_col = column(schema.outcome_column);
  std::vector<std::size_t> treat_cols, cov_cols;
  for (const auto& n : schema.treatment_columns) treat_cols.push_back(column(n));
  for (const auto& n : schema.covariate_columns) cov_cols.push_back(column(n));
  const std::size_t k = cov_cols.size();
  const std::size_t n_treat = treat_cols.size();

  IngestReport report;
  report.rows_read = table.rows.size();
  for (const auto& n : schema.covariate_columns) report.missing_counts[n] = 0;
  for (const auto& n : schema.treatment_columns) report.missing_counts[n] = 0;
  report.missing_counts[schema.outcome_column] = 0;
  report.missing_counts[schema.time_column] = 0;
  if (schema.id_column) report.missing_counts[*schema.id_column] = 0;

  auto value_at = [&](std::size_t r, std::size_t c, double& out) {
    const std::string& raw = table.rows[r][c];
    if (is_missing(raw)) return false;
    if (!parse_double(raw, out) || !std::isfinite(out)) {
      throw Error(ErrorCode::UnparseableValue,
                  "row " + std::to_string(r + 1) + " (line " +
                      std::to_string(table.line_numbers[r]) + "), column '" + table.header[c] +
                      "': cannot parse '" + raw + "'");
    }
    return true;
  };

  // Rows with a usable time and id.
  std::vector<std::size_t> timed;
  std::vector<std::string> time_keys;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    bool ok = true;
    if (is_missing(table.rows[r][time_col])) {
      ++report.missing_counts[schema.time_column];
      ok = false;
    }
    if (id_col && is_missing(table.rows[r][*id_col])) {
      ++report.missing_counts[*schema.id_column];
      ok = false;
    }
    if (ok) {
      timed.push_back(r);
      time_keys.emplace_back(trim(table.rows[r][time_col]));
    }
  }

  // Global time grid.
  const KeyOrder time_order(time_keys);
  std::vector<std::size_t> grid_pos(timed.size());
  std::vector<std::string> grid;
  {
    const auto idx = time_order.order(time_keys);
    for (std::size_t q = 0; q < idx.size(); ++q) {
      if (q == 0 || !time_order.same(time_keys, idx[q - 1], idx[q])) grid.push_back(time_keys[idx[q]]);
      grid_pos[idx[q]] = grid.size() - 1;
    }
  }
  if (grid.size() < 2) {
    throw Error(ErrorCode::RaggedPanel, "at least two distinct time values are required");
  }
  const std::size_t last = grid.size() - 1;

  // Parse values and drop rows missing a field required at their grid position.
  struct Row {
    std::string id;
    std::size_t pos;
    std::size_t source;
    std::vector<double> x, w;
    double y = 0.0;
  };
  std::vector<Row> kept;
  std::map<std::string, std::size_t> required_seen, required_missing;
  for (std::size_t q = 0; q < timed.size(); ++q) {
    const std::size_t r = timed[q];
    Row row;
    row.id = id_col ? std::string(trim(table.rows[r][*id_col])) : std::string();
    row.pos = grid_pos[q];
    row.source = r;
    row.x.assign(k, 0.0);
    row.w.assign(n_treat, 0.0);
    bool complete = true;
    auto take = [&](std::size_t c, const std::string& name, bool required, double& out) {
      const bool present = value_at(r, c, out);
      if (!required) return;
      ++required_seen[name];
      if (!present) {
        ++required_missing[name];
        ++report.missing_counts[name];
        complete = false;
      }
    };
    for (std::size_t j = 0; j < k; ++j) {
      take(cov_cols[j], schema.covariate_columns[j], row.pos < last, row.x[j]);
    }
    for (std::size_t j = 0; j < n_treat; ++j) {
      take(treat_cols[j], schema.treatment_columns[j], row.pos < last, row.w[j]);
    }
    take(outcome_col, schema.outcome_column, row.pos > 0, row.y);
    if (complete) kept.push_back(std::move(row));
  }
  for (const auto& [name, seen] : required_seen) {
    if (seen > 0 && required_missing[name] == seen) {
      throw Error(ErrorCode::AllMissingColumn, "column '" + name + "' has no usable values");
    }
  }
  if (kept.empty()) throw Error(ErrorCode::AllMissingColumn, "no rows remain after dropping missing values");

  // Group by individual; keep only individuals covering the whole grid.
  std::vector<std::string> ids;
  for (const auto& row : kept) ids.push_back(row.id);
  const KeyOrder id_order(ids);
  const auto by_id = id_order.order(ids);
  std::vector<std::vector<const Row*>> individuals;
  std::vector<std::string> individual_ids;
  std::size_t rows_in_panel = 0;
  for (std::size_t q = 0; q < by_id.size();) {
    std::size_t end = q + 1;
    while (end < by_id.size() && id_order.same(ids, by_id[q], by_id[end])) ++end;
    std::vector<const Row*> rows;
    for (std::size_t m = q; m < end; ++m) rows.push_back(&kept[by_id[m]]);
    std::sort(rows.begin(), rows.end(), [](const Row* a, const Row* b) { return a->pos < b->pos; });
    for (std::size_t m = 1; m < rows.size(); ++m) {
      if (rows[m]->pos == rows[m - 1]->pos) {
        throw Error(ErrorCode::RaggedPanel,
                    "duplicate time '" + grid[rows[m]->pos] + "' for individual '" +
                        rows[m]->id + "' (line " +
                        std::to_string(table.line_numbers[rows[m]->source]) + ")");
      }
    }
    if (rows.size() == grid.size()) {
      individual_ids.push_back(rows.front()->id);
      individuals.push_back(std::move(rows));
      rows_in_panel += grid.size();
    } else {
      ++report.individuals_dropped;
    }
    q = end;
  }
  if (individuals.empty()) {
    throw Error(ErrorCode::RaggedPanel, "no individual has a value at every one of the " +
                                            std::to_string(grid.size()) + " time points");
  }

  const std::size_t n = individuals.size();
  const std::size_t T = grid.size() - 1;
  LoadedPanels out;
  out.individual_ids = std::move(individual_ids);
  out.time_values = grid;
  for (std::size_t j = 0; j < n_treat; ++j) {
    TrajectoryPanel panel(n, T, k);
    std::vector<double> column_values;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& rows = individuals[i];
      for (std::size_t t = 1; t <= T; ++t) {
        for (std::size_t c = 0; c < k; ++c) panel.covariate(i, t, c) = rows[t - 1]->x[c];
        panel.treatment(i, t) = rows[t - 1]->w[j];
        panel.outcome(i, t) = rows[t]->y;
        column_values.push_back(rows[t - 1]->w[j]);
      }
    }
    // One threshold for the whole column, never per individual.
    BinarizationSummary summary;
    summary.column = schema.treatment_columns[j];
    summary.mode = schema.binarization;
    if (schema.binarization != Binarization::none) {
      const double cut = schema.binarization == Binarization::median_split
                             ? median(column_values)
                             : schema.threshold;
      summary.threshold = cut;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t t = 1; t <= T; ++t)
          panel.treatment(i, t) = panel.treatment(i, t) > cut ? 1.0 : 0.0;
    }
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t t = 1; t <= T; ++t) total += panel.treatment(i, t);
    summary.treated_fraction = total / static_cast<double>(n * T);
    report.binarization.push_back(summary);
    out.panels.push_back(std::move(panel));
  }
  report.individuals = n;
  report.t_steps = T;
  report.rows_kept = rows_in_panel;
  report.rows_dropped = report.rows_read - rows_in_panel;
  out.report = std::move(report);
  return out;
}

LoadedPanels load_panel(const std::string& path, const PanelSchema& schema) {
  return load_panel_text(read_file(path), schema);
}

std::string panel_csv(const TrajectoryPanel& panel) {
  std::ostringstream out;
  out << "id,time,W,Y";
  for (std::size_t j = 0; j < panel.k(); ++j) out << ",X" << (j + 1);
  out << '\n';
  const std::size_t T = panel.t_steps();
  for (std::size_t i = 0; i < panel.n(); ++i) {
    for (std::size_t g = 1; g <= T + 1; ++g) {
      out << i << ',' << g << ',';
      if (g <= T) out << format_double(panel.treatment(i, g));
      out << ',';
      if (g >= 2) out << format_double(panel.outcome(i, g - 1));
      for (std::size_t j = 0; j < panel.k(); ++j) {
        out << ',';
        if (g <= T) out << format_double(panel.covariate(i, g, j));
      }
      out << '\n';
    }
  }
  return out.str();
}

PanelSchema panel_csv_schema(std::size_t k) {
  PanelSchema schema;
  schema.id_column = "id";
  schema.time_column = "time";
  schema.treatment_columns = {"W"};
  schema.outcome_column = "Y";
  for (std::size_t j = 0; j < k; ++j) schema.covariate_columns.push_back("X" + std::to_string(j + 1));
  schema.binarization = Binarization::none;
  return schema;
}

}  // namespace latentiv::ingest
