#pragma once

// Internal JSON (de)serialization for config and stats structs, shared by the
// dataset/checkpoint/experiment writers. Field names are documented in
// docs/schema.md.

#include <nlohmann/json.hpp>

#include "imblab/anchors.hpp"
#include "imblab/detector.hpp"
#include "imblab/evaluator.hpp"
#include "imblab/losses.hpp"
#include "imblab/samplers.hpp"
#include "imblab/scenes.hpp"
#include "imblab/trainer.hpp"

namespace imblab {

void to_json(nlohmann::json& j, const TextureRule& r);
void from_json(const nlohmann::json& j, TextureRule& r);

void to_json(nlohmann::json& j, const DatasetSpec& s);
void from_json(const nlohmann::json& j, DatasetSpec& s);

void to_json(nlohmann::json& j, const AnchorConfig& c);
void from_json(const nlohmann::json& j, AnchorConfig& c);

void to_json(nlohmann::json& j, const LossConfig& c);
void from_json(const nlohmann::json& j, LossConfig& c);

void to_json(nlohmann::json& j, const SamplerConfig& c);
void from_json(const nlohmann::json& j, SamplerConfig& c);

void to_json(nlohmann::json& j, const DetectorConfig& c);
void from_json(const nlohmann::json& j, DetectorConfig& c);

void to_json(nlohmann::json& j, const Schedule& s);
void from_json(const nlohmann::json& j, Schedule& s);

void to_json(nlohmann::json& j, const EvalConfig& c);
void from_json(const nlohmann::json& j, EvalConfig& c);

void to_json(nlohmann::json& j, const ImbalanceStats& s);
void from_json(const nlohmann::json& j, ImbalanceStats& s);

}  // namespace imblab
