#pragma once

#include <functional>
#include <map>
#include <string>

#include "protoflow/common/time.hpp"
#include "protoflow/convo/backend.hpp"
#include "protoflow/convo/emr.hpp"

namespace protoflow::convo {

struct ValidationContext {
    std::string participant_id;
    const EmrStore* emr = nullptr;
    Instant now{};
    const TimeZone* tz = nullptr;
};

struct ValidationResult {
    bool ok = false;
    std::string note;  // why it failed, for the audit trail
};

using Validator = std::function<ValidationResult(const ToolMatch&, const ValidationContext&)>;

/// `when` must resolve to a time consistent with the medication's schedule on
/// the participant's current local day and not in the future. A morning dose
/// must start before 12:00, an evening dose at or after 12:00. Without a
/// `medication` argument the participant's first listed medication is used.
ValidationResult validate_did_take_medication(const ToolMatch& args, const ValidationContext& ctx);

/// `rating` must be a whole number from 1 to 5.
ValidationResult validate_rating_scale(const ToolMatch& args, const ValidationContext& ctx);

class ValidatorRegistry {
public:
    /// Registry with the built-in validators (did_take_medication, rating_scale).
    static ValidatorRegistry with_builtins();

    void add(const std::string& name, Validator v) { validators_[name] = std::move(v); }
    const Validator* find(const std::string& name) const;

private:
    std::map<std::string, Validator> validators_;
};

} // namespace protoflow::convo
