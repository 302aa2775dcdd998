#pragma once

#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>

#include "soilgen/diffusion.hpp"
#include "soilgen/nn/checkpoint.hpp"
#include "soilgen/padding.hpp"
#include "soilgen/wet.hpp"

namespace soilgen::store {

inline constexpr const char* kPaddingKind = "padding";
inline constexpr const char* kSogmKind = "sogm";
inline constexpr const char* kWetKind = "wet";

nlohmann::json to_json(const pad::PaddingConfig& c);
nlohmann::json to_json(const sogm::SogmConfig& c);
nlohmann::json to_json(const wet::WetModelConfig& c);

pad::PaddingConfig padding_config(const nlohmann::json& j);
sogm::SogmConfig sogm_config(const nlohmann::json& j);
wet::WetModelConfig wet_config(const nlohmann::json& j);

/// Checkpoint whose extra block records the model kind, its configuration,
/// and any caller fields (dictionary, normalization, training settings).
void save_model(const std::filesystem::path& path, const nn::ParameterStore& ps,
                const std::string& kind, nlohmann::json config,
                nlohmann::json fields = nlohmann::json::object());

/// Returns the extra block of a checkpoint after checking the model kind.
nlohmann::json load_model_info(const std::filesystem::path& path, const std::string& kind);

}  // namespace soilgen::store
