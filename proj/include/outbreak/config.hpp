#pragma once

// Schema-versioned JSON configuration documents. Unknown keys are rejected so
// typos surface as errors instead of silently falling back to defaults.

#include <string>

#include "json.hpp"
#include "outbreak/epi.hpp"
#include "outbreak/sim.hpp"

namespace outbreak {

inline constexpr int kConfigSchemaVersion = 1;

nlohmann::json to_json(const EpiParams& epi);
EpiParams epi_from_json(const nlohmann::json& doc, const EpiParams& base = {});

nlohmann::json to_json(const SystemConfig& config);
/// Reads {"epi": {...}, "mode": ..., ...}; missing keys keep `base` values.
SystemConfig system_from_json(const nlohmann::json& doc, const SystemConfig& base = {});

std::string mode_name(ActivationMode mode);
ActivationMode parse_mode(const std::string& name);

/// Throws InputError when the document is unreadable or not valid JSON.
nlohmann::json read_json_file(const std::string& path);
void write_json_file(const std::string& path, const nlohmann::json& doc);

/// Stable content hash (FNV-1a 64 over the canonical dump).
std::uint64_t content_hash(const nlohmann::json& doc);

}  // namespace outbreak
