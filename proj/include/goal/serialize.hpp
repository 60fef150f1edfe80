#pragma once

// JSON mappings for configuration and report types. Parsing an object rejects
// keys it does not know; absent keys keep their defaults.

#include <nlohmann/json.hpp>

#include "goal/data.hpp"
#include "goal/diagnostics.hpp"
#include "goal/theoremlab.hpp"
#include "goal/trainer.hpp"

namespace goal {

void to_json(nlohmann::json& j, const SyntheticSpec& s);
void from_json(const nlohmann::json& j, SyntheticSpec& s);

void to_json(nlohmann::json& j, const BatchSpec& s);
void from_json(const nlohmann::json& j, BatchSpec& s);

void to_json(nlohmann::json& j, const GoConfig& c);
void from_json(const nlohmann::json& j, GoConfig& c);

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

void to_json(nlohmann::json& j, const EpochRecord& r);
void to_json(nlohmann::json& j, const RunReport& r);

void to_json(nlohmann::json& j, const DominantSimilarity& d);
void to_json(nlohmann::json& j, const DiagnosticsReport& r);
void to_json(nlohmann::json& j, const SweepRow& r);

void to_json(nlohmann::json& j, const Witness& w);
void to_json(nlohmann::json& j, const LambdaResult& r);
void to_json(nlohmann::json& j, const TrialReport& r);
void to_json(nlohmann::json& j, const HarnessConfig& c);
void from_json(const nlohmann::json& j, HarnessConfig& c);

/// Principal-angle matrix as CSV, one row per source class; absent entries
/// are left empty.
std::string heatmap_csv(const AngleMatrix& m);
/// lambda,target_accuracy,source_accuracy,final_l_tb,final_l_db,error
std::string sweep_csv(std::span<const SweepRow> rows);

/// Throws SpecError naming the first key of `j` not in `allowed`, or when `j`
/// is not an object.
void require_known_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                        const char* what);

}  // namespace goal
