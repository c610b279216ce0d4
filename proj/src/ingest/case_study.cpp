#include "latentiv/error.hpp"
#include "latentiv/ingest.hpp"

namespace latentiv::ingest {

CaseStudyResult case_study_run(const LoadedPanels& loaded, const PanelSchema& schema,
                               const factor::TrainConfig& train_config,
                               const estimate::EstimatorOptions& options) {
  if (loaded.panels.size() != schema.treatment_columns.size()) {
    throw Error(ErrorCode::DimensionMismatch, "one panel per treatment column expected");
  }
  CaseStudyResult result;
  result.report = loaded.report;
  for (std::size_t j = 0; j < loaded.panels.size(); ++j) {
    const TrajectoryPanel& panel = loaded.panels[j];
    if (panel.n() < 2) {
      throw Error(ErrorCode::InvalidConfig, "case study needs at least two individuals");
    }
    const auto trained = factor::train(panel, train_config);
    const auto latents = factor::infer_latents(trained.params, panel);
    result.series.push_back({schema.treatment_columns[j],
                             estimate::effect_series(panel, &latents, estimate::EstimatorId::tsls,
                                                     options),
                             trained.final_loss});
  }
  return result;
}

CaseStudyResult case_study_run(const std::string& path, const PanelSchema& schema,
                               const factor::TrainConfig& train_config,
                               const estimate::EstimatorOptions& options) {
  return case_study_run(load_panel(path, schema), schema, train_config, options);
}

}  // namespace latentiv::ingest
