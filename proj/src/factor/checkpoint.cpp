#include <json.hpp>

#include "latentiv/config_io.hpp"
#include "latentiv/error.hpp"
#include "latentiv/factor.hpp"

namespace latentiv::factor {

namespace {

constexpr int kCheckpointVersion = 1;

std::vector<double> to_vec(const Vector& v) { return {v.data(), v.data() + v.size()}; }

Vector from_vec(const nlohmann::json& j, Eigen::Index expected, const char* name) {
  const auto values = j.get<std::vector<double>>();
  if (static_cast<Eigen::Index>(values.size()) != expected) {
    throw Error(ErrorCode::DimensionMismatch, std::string("checkpoint tensor ") + name +
                                                  " has wrong length");
  }
  return Eigen::Map<const Vector>(values.data(), expected);
}

}  // namespace

std::string to_checkpoint_json(const FactorParams& params) {
  nlohmann::ordered_json j;
  j["format"] = "latentiv.factor";
  j["version"] = kCheckpointVersion;
  j["shape"] = {{"covariates", params.shape.covariates},
                {"hidden", params.shape.hidden},
                {"fc_units", params.shape.fc_units},
                {"latent_dim", params.shape.latent_dim},
                {"include_treatment_input", params.shape.include_treatment_input}};
  j["train_config"] = to_json(params.train_config);
  j["standardizer"] = {{"mean", to_vec(params.standardizer.mean)},
                       {"scale", to_vec(params.standardizer.scale)}};
  nlohmann::ordered_json tensors = nlohmann::ordered_json::object();
  params.for_each_tensor([&](const std::string& name, std::span<const double> v) {
    tensors[name] = std::vector<double>(v.begin(), v.end());
  });
  j["tensors"] = std::move(tensors);
  return j.dump() + "\n";
}

FactorParams from_checkpoint_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::UnparseableValue, std::string("checkpoint: ") + e.what());
  }
  try {
    if (j.at("format") != "latentiv.factor" || j.at("version").get<int>() != kCheckpointVersion) {
      throw Error(ErrorCode::InvalidConfig, "unsupported checkpoint format or version");
    }
    const auto& s = j.at("shape");
    ModelShape shape{s.at("covariates").get<std::size_t>(), s.at("hidden").get<std::size_t>(),
                     s.at("fc_units").get<std::size_t>(), s.at("latent_dim").get<std::size_t>(),
                     s.at("include_treatment_input").get<bool>()};
    FactorParams p = FactorParams::zeros(shape);
    apply_json(j.at("train_config"), p.train_config);
    const auto k = static_cast<Eigen::Index>(shape.covariates);
    p.standardizer.mean = from_vec(j.at("standardizer").at("mean"), k, "standardizer.mean");
    p.standardizer.scale = from_vec(j.at("standardizer").at("scale"), k, "standardizer.scale");
    const auto& tensors = j.at("tensors");
    p.for_each_tensor([&](const std::string& name, std::span<double> v) {
      const auto values = tensors.at(name).get<std::vector<double>>();
      if (values.size() != v.size()) {
        throw Error(ErrorCode::DimensionMismatch, "checkpoint tensor " + name + " has wrong size");
      }
      std::copy(values.begin(), values.end(), v.begin());
    });
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::UnparseableValue, std::string("checkpoint: ") + e.what());
  }
}

}  // namespace latentiv::factor
