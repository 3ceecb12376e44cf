#pragma once

#include <string>

#include <json.hpp>

#include "cadvlm/nn/layers.hpp"

namespace cadvlm::nn {

// A checkpoint is a directory holding
//   params.bin    every named array (parameters, then Adam moments) as raw
//                 little-endian float64, back to back
//   manifest.json {"format", "step", "config", "tensors":[{name, shape, offset}]}
// `config` is caller-supplied metadata stored verbatim.
void save_checkpoint(const std::string& dir, const ParamStore& store, const nlohmann::json& config);

// Reads the manifest only.
nlohmann::json read_manifest(const std::string& dir);

// Loads arrays into an existing store. Throws Errc::CheckpointMismatch if a
// parameter is missing or has a different shape, Errc::Io on file errors.
// Returns the stored config.
nlohmann::json load_checkpoint(const std::string& dir, ParamStore& store);

}  // namespace cadvlm::nn
