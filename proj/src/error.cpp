#include "latentiv/error.hpp"

namespace latentiv {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::RankDeficient: return "RankDeficient";
    case ErrorCode::NegativeScale: return "NegativeScale";
    case ErrorCode::DegenerateTreatment: return "DegenerateTreatment";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::MissingColumn: return "MissingColumn";
    case ErrorCode::RaggedPanel: return "RaggedPanel";
    case ErrorCode::UnparseableValue: return "UnparseableValue";
    case ErrorCode::AllMissingColumn: return "AllMissingColumn";
    case ErrorCode::MissingCell: return "MissingCell";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace latentiv
