#include "protoflow/convo/emr.hpp"

#include <set>

#include "protoflow/common/text_config.hpp"

namespace protoflow::convo {

namespace {

std::string lower(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

} // namespace

std::optional<DoseSchedule> parse_schedule(std::string_view s) {
    const auto l = lower(s);
    if (l == "morning") return DoseSchedule::morning;
    if (l == "evening") return DoseSchedule::evening;
    if (l == "twice-daily" || l == "twice_daily") return DoseSchedule::twice_daily;
    return std::nullopt;
}

std::string_view to_string(DoseSchedule s) {
    switch (s) {
    case DoseSchedule::morning: return "morning";
    case DoseSchedule::evening: return "evening";
    case DoseSchedule::twice_daily: return "twice-daily";
    }
    return "?";
}

const Medication* EmrRecord::find(std::string_view name) const {
    const auto l = lower(name);
    for (const auto& m : medications) {
        if (lower(m.name) == l) return &m;
    }
    return nullptr;
}

void EmrStore::put(EmrRecord r) {
    std::set<std::string> names;
    for (const auto& m : r.medications) {
        if (!names.insert(lower(m.name)).second) {
            throw std::invalid_argument("duplicate medication '" + m.name + "' for " + r.participant_id);
        }
    }
    auto id = r.participant_id;
    records_[id] = std::move(r);
}

const EmrRecord* EmrStore::find(const std::string& participant_id) const {
    auto it = records_.find(participant_id);
    return it == records_.end() ? nullptr : &it->second;
}

EmrStore EmrStore::from_config(const nlohmann::json& cfg) {
    EmrStore store;
    if (!cfg.contains("participants")) return store;
    for (const auto& [pid, rec] : cfg.at("participants").items()) {
        EmrRecord r;
        r.participant_id = pid;
        for (const auto& m : rec.value("medications", nlohmann::json::array())) {
            const auto spec = m.get<std::string>();
            const auto colon = spec.rfind(':');
            auto sched = colon == std::string::npos ? std::optional(DoseSchedule::morning)
                                                    : parse_schedule(spec.substr(colon + 1));
            if (!sched) throw std::invalid_argument("bad dose schedule in '" + spec + "'");
            r.medications.push_back({spec.substr(0, colon), *sched});
        }
        for (const auto& a : rec.value("allergies", nlohmann::json::array())) r.allergies.push_back(a.get<std::string>());
        store.put(std::move(r));
    }
    return store;
}

EmrStore EmrStore::load(const std::string& path) { return from_config(load_text_config(path)); }

} // namespace protoflow::convo
