#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tda/attribution.hpp"
#include "tda/data.hpp"
#include "tda/dataset.hpp"
#include "tda/nn.hpp"

namespace tda {

using Json = nlohmann::json;

// Doubles are written in shortest round-trip form, so to_json/from_json is
// bit-exact for every finite value.

Json to_json(const Vector& v);
Json to_json(const RowMatrix& m);
Vector vector_from_json(const Json& j);
RowMatrix matrix_from_json(const Json& j);

Json to_json(const ModelArch& arch);
ModelArch arch_from_json(const Json& j);

Json to_json(const Model& model);
Model model_from_json(const Json& j);

Json to_json(const Checkpoint& ckpt);
Checkpoint checkpoint_from_json(const Json& j);

Json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const Json& j);

Json to_json(const Dataset& ds);
Dataset dataset_from_json(const Json& j);

Json to_json(const ShortcutPatch& patch);
ShortcutPatch patch_from_json(const Json& j);

Json to_json(const CorruptionRecord& record);
CorruptionRecord record_from_json(const Json& j);

Json to_json(const SubsetSpec& spec);
SubsetSpec subsets_from_json(const Json& j);

/// {"method": ..., "params": {...}, "name": ...}
Json to_json(const ExplainerConfig& cfg);
ExplainerConfig explainer_config_from_json(const Json& j);

Json to_json(const AttributionMatrix& a);
AttributionMatrix attribution_from_json(const Json& j);

/// Stable textual form used on disk: two-space indent, trailing newline.
std::string dump(const Json& j);

Json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const Json& j);
void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace tda
