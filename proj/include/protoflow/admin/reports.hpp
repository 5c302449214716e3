#pragma once

#include <string>

#include <json.hpp>

#include "protoflow/runtime/engine.hpp"

namespace protoflow::admin {

/// Pooled adherence metrics for a study plus one entry per participant.
nlohmann::json study_metrics(const runtime::Engine& engine, const std::string& study_id, Instant as_of);

inline constexpr const char* kExportHeader =
    "participant_id,study_id,date,final_state,successes,failures,unrecognized,success_rate,error_rate";

/// One row per participant per local day from registration to `as_of`,
/// rebuilt from the audit trail alone. Rates are cumulative to the end of
/// the row's day.
std::string export_csv(const runtime::Engine& engine, const std::string& study_id, Instant as_of);

} // namespace protoflow::admin
