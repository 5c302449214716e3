#pragma once

#include <map>
#include <memory>
#include <vector>

#include "protoflow/runtime/audit.hpp"
#include "protoflow/runtime/bindings.hpp"
#include "protoflow/study/metrics.hpp"

namespace protoflow::study {

/// Host functions for `meta interpreter "tre"`.
///
/// STARTCAL carries {start_at, start_time} into the transition, ENDCAL
/// carries {end_at}. Guards: no_start_today, end_after_start. The `fast`
/// metric evaluates the window in the context; template fast_feedback
/// renders feedback for the latest one.
class TreBindings : public runtime::HostBindings {
public:
    std::string name() const override { return "tre"; }
    std::set<std::string> guards() const override { return {"no_start_today", "end_after_start"}; }

    runtime::Classification classify(const runtime::ParticipantMachine& m, const gateway::InboundMessage& msg,
                                     const TimeZone& tz) const override;
    std::optional<bool> evaluate_guard(const std::string& guard, const runtime::ParticipantMachine& m,
                                       const runtime::Context& payload, Instant now,
                                       const TimeZone& tz) const override;
    nlohmann::json record_metric(const std::string& metric, runtime::ParticipantMachine& m, Instant now,
                                 const TimeZone& tz) const override;
    std::optional<std::string> render(const std::string& template_id, const runtime::ParticipantMachine& m,
                                      const TemplateSet& templates) const override;
};

/// Generic plus TRE.
std::shared_ptr<runtime::BindingsRegistry> default_bindings();

std::vector<FastRecord> fasts_of(const runtime::ParticipantMachine& m);
ParticipantTally tally(const runtime::ParticipantMachine& m);

/// Folds one audit record into a tally.
void count(ParticipantTally& t, const runtime::AuditRecord& r);

/// The same tallies rebuilt from audit records alone.
std::map<std::string, ParticipantTally> recount(const std::vector<runtime::AuditRecord>& records);

} // namespace protoflow::study
