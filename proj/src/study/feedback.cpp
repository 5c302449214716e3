#include "protoflow/study/feedback.hpp"

namespace protoflow::study {

using namespace std::chrono_literals;

std::string feedback_message(const FastRecord& fast, const TemplateSet* templates) {
    const auto d = fast.end_at - fast.start_at;
    const std::string id = fast.success ? "fast_success" : d > 11h ? "fast_too_long" : "fast_too_short";
    const std::map<std::string, std::string> args{{"duration", format_hours_minutes(d)}};
    if (templates && templates->contains(id)) return templates->render(id, args);
    if (id == "fast_success") {
        return render_text("Great job! Your eating window was {duration}, right inside the 9-11 hour target.", args);
    }
    if (id == "fast_too_long") {
        return render_text("Your eating window was {duration}, which exceeded 11 hours. The target is 9-11 hours.",
                           args);
    }
    return render_text("Your eating window was {duration}, which was under 9 hours. The target is 9-11 hours.", args);
}

} // namespace protoflow::study
