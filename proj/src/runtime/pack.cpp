#include "protoflow/runtime/pack.hpp"

#include <filesystem>

#include "protoflow/common/hash.hpp"
#include "protoflow/common/text_config.hpp"
#include "protoflow/dsl/parser.hpp"

namespace protoflow::runtime {

std::string Pack::interpreter() const { return protocol.meta("interpreter").value_or("generic"); }

std::shared_ptr<const Pack> make_pack(const std::string& name, const std::string& protocol_source,
                                      const std::string& templates_source, const std::string& tools_source,
                                      const GuardLookup& guards) {
    auto parsed = dsl::parse_protocol(protocol_source);
    if (!parsed.ok()) throw dsl::CompileError(std::move(parsed.diagnostics));
    const auto interpreter = parsed.graph->meta("interpreter").value_or("generic");
    std::set<std::string> known;
    if (guards) known = guards(interpreter);

    auto pack = std::make_shared<Pack>();
    pack->name = name;
    pack->protocol = dsl::compile(*parsed.graph, guards ? &known : nullptr);
    if (!templates_source.empty()) {
        try {
            pack->templates = TemplateSet::from_config(parse_text_config(templates_source));
        } catch (const ConfigError& e) {
            throw PackError(name + "/templates.toml: " + e.what());
        }
    }
    for (const auto& t : pack->protocol.templates()) {
        if (!pack->templates.contains(t.id)) pack->templates.set(t.id, t.text);
    }
    if (!tools_source.empty()) {
        try {
            pack->tools = convo::ToolSet::parse(tools_source);
        } catch (const convo::ToolsError& e) {
            throw PackError(name + "/tools.pft:" + e.what());
        }
    }
    for (const auto& [qid, _] : pack->tools.questions()) {
        if (!pack->templates.contains(qid)) throw PackError(name + ": question '" + qid + "' has no template");
    }
    pack->source = protocol_source;
    pack->hash = sha256_hex(dsl::normalized_source(*parsed.graph) + '\0' + templates_source + '\0' + tools_source);
    return pack;
}

std::shared_ptr<const Pack> load_pack(const std::string& dir, const GuardLookup& guards) {
    namespace fs = std::filesystem;
    const fs::path root(dir);
    if (!fs::exists(root / "protocol.pfp")) throw PackError("no protocol.pfp in '" + dir + "'");
    auto opt = [&](const char* file) {
        const auto p = root / file;
        return fs::exists(p) ? read_file(p.string()) : std::string();
    };
    auto name = fs::weakly_canonical(root).filename().string();
    auto pack = make_pack(name, read_file((root / "protocol.pfp").string()), opt("templates.toml"), opt("tools.pft"),
                          guards);
    std::const_pointer_cast<Pack>(pack)->dir = dir;
    return pack;
}

} // namespace protoflow::runtime
