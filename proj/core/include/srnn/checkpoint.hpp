#pragma once

#include <filesystem>

#include "srnn/models.hpp"

namespace srnn::models {

/// Checkpoint container: magic "SRNNCK01", u32 little-endian header length,
/// UTF-8 JSON header describing the model, then all parameters as
/// little-endian float64 (core params followed by rebound params).
void save_model(const Model& model, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);

}  // namespace srnn::models
