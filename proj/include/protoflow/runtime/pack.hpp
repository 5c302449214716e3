#pragma once

#include <functional>
#include <memory>
#include <set>
#include <stdexcept>
#include <string>

#include "protoflow/common/templates.hpp"
#include "protoflow/convo/tools.hpp"
#include "protoflow/dsl/compiler.hpp"

namespace protoflow::runtime {

/// One study's behavior: protocol, message templates and tool declarations.
///
///   <dir>/protocol.pfp    protocol language source
///   <dir>/templates.toml  [templates] and [restate] tables (optional)
///   <dir>/tools.pft       tool declarations (optional)
///
/// Templates declared inside the protocol source are merged in; the
/// templates file wins on conflicts.
struct Pack {
    std::string name;  // directory name
    std::string dir;
    dsl::CompiledProtocol protocol;
    TemplateSet templates;
    convo::ToolSet tools;
    std::string source;  // protocol text as loaded
    /// sha256 over the normalized protocol and the raw templates and tools files.
    std::string hash;

    /// The `meta interpreter` value, "generic" when absent.
    std::string interpreter() const;
};

class PackError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Guard names come from the host bindings of the pack's interpreter; pass
/// nullptr to skip the unknown-guard check. Throws dsl::CompileError for
/// protocol errors and PackError for anything else.
using GuardLookup = std::function<std::set<std::string>(const std::string& interpreter)>;

std::shared_ptr<const Pack> load_pack(const std::string& dir, const GuardLookup& guards = nullptr);

/// Builds a pack from in-memory sources.
std::shared_ptr<const Pack> make_pack(const std::string& name, const std::string& protocol_source,
                                      const std::string& templates_source = "", const std::string& tools_source = "",
                                      const GuardLookup& guards = nullptr);

using PackResolver = std::function<std::shared_ptr<const Pack>(const std::string& name)>;

} // namespace protoflow::runtime
