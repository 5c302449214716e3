#include "protoflow/common/templates.hpp"

#include "protoflow/common/text_config.hpp"

namespace protoflow {

TemplateSet TemplateSet::from_config(const nlohmann::json& cfg) {
    TemplateSet t;
    if (cfg.contains("templates")) {
        for (const auto& [k, v] : cfg.at("templates").items()) {
            if (!v.is_string()) throw RenderError("template '" + k + "' must be a string");
            t.texts_[k] = v.get<std::string>();
        }
    }
    if (cfg.contains("restate")) {
        for (const auto& [k, v] : cfg.at("restate").items()) {
            if (!v.is_array()) throw RenderError("restatements for '" + k + "' must be an array");
            for (const auto& s : v) t.restate_[k].push_back(s.get<std::string>());
        }
    }
    return t;
}

TemplateSet TemplateSet::load(const std::string& path) { return from_config(load_text_config(path)); }

const std::string& TemplateSet::text(const std::string& id) const {
    auto it = texts_.find(id);
    if (it == texts_.end()) throw RenderError("unknown template '" + id + "'");
    return it->second;
}

const std::vector<std::string>& TemplateSet::restatements(const std::string& id) const {
    static const std::vector<std::string> none;
    auto it = restate_.find(id);
    return it == restate_.end() ? none : it->second;
}

std::string TemplateSet::render(const std::string& id, const std::map<std::string, std::string>& args) const {
    try {
        return render_text(text(id), args);
    } catch (const RenderError& e) {
        throw RenderError("template '" + id + "': " + e.what());
    }
}

std::string render_text(const std::string& text, const std::map<std::string, std::string>& args) {
    std::string out;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if ((c == '{' || c == '}') && i + 1 < text.size() && text[i + 1] == c) {
            out += c;
            ++i;
        } else if (c == '{') {
            const auto close = text.find('}', i);
            if (close == std::string::npos) throw RenderError("unterminated placeholder");
            const auto name = text.substr(i + 1, close - i - 1);
            auto it = args.find(name);
            if (it == args.end()) throw RenderError("missing value for {" + name + "}");
            out += it->second;
            i = close;
        } else {
            out += c;
        }
    }
    return out;
}

} // namespace protoflow
