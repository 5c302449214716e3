#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace protoflow::convo {

enum class DoseSchedule { morning, evening, twice_daily };

std::optional<DoseSchedule> parse_schedule(std::string_view s);
std::string_view to_string(DoseSchedule s);

struct Medication {
    std::string name;
    DoseSchedule schedule = DoseSchedule::morning;
};

struct EmrRecord {
    std::string participant_id;
    std::vector<Medication> medications;  // names unique, case-insensitively
    std::vector<std::string> allergies;

    const Medication* find(std::string_view name) const;
};

/// Stand-in for the medical record system validators consult.
///
///   [participants.P001]
///   medications = ["Acebutolol:morning"]
///   allergies = ["penicillin"]
class EmrStore {
public:
    /// Throws std::invalid_argument on duplicate medication names.
    void put(EmrRecord r);
    const EmrRecord* find(const std::string& participant_id) const;
    std::size_t size() const { return records_.size(); }

    static EmrStore from_config(const nlohmann::json& cfg);
    static EmrStore load(const std::string& path);

private:
    std::map<std::string, EmrRecord> records_;
};

} // namespace protoflow::convo
