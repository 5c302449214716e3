#include "protoflow/convo/validators.hpp"

#include "protoflow/convo/time_phrase.hpp"

namespace protoflow::convo {

ValidationResult validate_did_take_medication(const ToolMatch& args, const ValidationContext& ctx) {
    if (!ctx.emr) return {false, "no medical record store configured"};
    const auto* rec = ctx.emr->find(ctx.participant_id);
    if (!rec) return {false, "no medical record for participant " + ctx.participant_id};
    const Medication* med = nullptr;
    if (auto it = args.args.find("medication"); it != args.args.end()) {
        med = rec->find(it->second);
        if (!med) return {false, "medication '" + it->second + "' is not in the medical record"};
    } else if (!rec->medications.empty()) {
        med = &rec->medications.front();
    } else {
        return {false, "medical record lists no medication"};
    }
    auto when = args.args.find("when");
    if (when == args.args.end()) return {false, "no time stated"};
    const auto& tz = ctx.tz ? *ctx.tz : TimeZone::utc();
    auto interval = resolve_time_phrase(when->second, ctx.now, tz);
    if (!interval) return {false, "time phrase '" + when->second + "' not understood"};
    if (interval->start > ctx.now) return {false, "stated time is in the future"};
    if (tz.local_date(interval->start) != tz.local_date(ctx.now)) {
        return {false, "stated time '" + when->second + "' is not today"};
    }
    const auto tod = tz.local_time_of_day(interval->start);
    switch (med->schedule) {
    case DoseSchedule::morning:
        if (tod.hour >= 12) return {false, med->name + " is a morning dose but '" + when->second + "' is after noon"};
        break;
    case DoseSchedule::evening:
        if (tod.hour < 12) return {false, med->name + " is an evening dose but '" + when->second + "' is before noon"};
        break;
    case DoseSchedule::twice_daily: break;
    }
    return {true, ""};
}

ValidationResult validate_rating_scale(const ToolMatch& args, const ValidationContext&) {
    auto it = args.args.find("rating");
    if (it == args.args.end()) return {false, "no rating given"};
    double v = 0;
    try {
        std::size_t used = 0;
        v = std::stod(it->second, &used);
        if (used != it->second.size()) return {false, "rating '" + it->second + "' is not a number"};
    } catch (const std::exception&) {
        return {false, "rating '" + it->second + "' is not a number"};
    }
    if (v < 1 || v > 5 || v != static_cast<int>(v)) return {false, "rating " + it->second + " is not a whole number from 1 to 5"};
    return {true, ""};
}

ValidatorRegistry ValidatorRegistry::with_builtins() {
    ValidatorRegistry r;
    r.add("did_take_medication", validate_did_take_medication);
    r.add("rating_scale", validate_rating_scale);
    return r;
}

const Validator* ValidatorRegistry::find(const std::string& name) const {
    auto it = validators_.find(name);
    return it == validators_.end() ? nullptr : &it->second;
}

} // namespace protoflow::convo
