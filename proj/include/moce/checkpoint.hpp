#pragma once

// JSON model checkpoints.
//
// {
//   "format_version": 1,
//   "spec":   { architecture and non-trainable settings },
//   "params": { "<parameter path>": number | [..] | [[..], ..] },   matrices row-major
//   "curvatures": [K per modality], "lambda": x,                     informational
//   "state":  { "hbn": { "<modality>": { "curvature": K,
//                          "domains": { "<id>": { "mean": [t, x..], "variance": v } } } },
//               "ebn": { "<modality>": { "domains": { "<id>": { "mean": [..], "variance": v } } } } }
// }
//
// Doubles are written in shortest round-trip form, so save/load is lossless.

#include <filesystem>

#include <json.hpp>

#include "moce/model.hpp"

namespace moce::checkpoint {

inline constexpr int kCheckpointFormatVersion = 1;

nlohmann::json spec_to_json(const model::ModelSpec& spec);
model::ModelSpec spec_from_json(const nlohmann::json& j);

nlohmann::json to_json(const model::MoceModel& m);
/// VersionError on an unsupported format_version, InputError on anything
/// else that does not match the schema or the spec's shapes.
model::MoceModel from_json(const nlohmann::json& j);

void save(const model::MoceModel& m, const std::filesystem::path& path);
model::MoceModel load(const std::filesystem::path& path);

}  // namespace moce::checkpoint
