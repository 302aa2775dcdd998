#pragma once

#include <filesystem>
#include <nlohmann/json.hpp>

#include "soilgen/nn/params.hpp"

namespace soilgen::nn {

/// Binary checkpoint: magic "SGCK0001", a u64-le manifest length, a JSON
/// manifest (parameter names/shapes in store order, step count, an arbitrary
/// "extra" object for model config), then the little-endian f64 payload with
/// value/m/v blocks per parameter. Writing the same state twice produces
/// byte-identical files.
void save_checkpoint(const std::filesystem::path& path, const ParameterStore& ps,
                     const nlohmann::json& extra);

/// Reads just the manifest (including "extra"), so callers can reconstruct a
/// model before loading weights.
nlohmann::json read_checkpoint_manifest(const std::filesystem::path& path);

/// Loads values/m/v into an already-built store. Parameter names and shapes
/// must match the manifest exactly.
void load_checkpoint(const std::filesystem::path& path, ParameterStore& ps);

}  // namespace soilgen::nn
