#pragma once

// Minimal structural reader for the DOT subset the exporter emits; used as an
// independent oracle, so it shares no code with the exporter.

#include <map>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

namespace protoflow::testing {

struct DotEdge {
    std::string from, to, label;
    auto operator<=>(const DotEdge&) const = default;
};

struct DotGraph {
    bool is_digraph = false;
    std::map<std::string, std::string> nodes;  // name -> raw attribute text
    std::multiset<DotEdge> edges;
};

inline std::string dot_unquote(const std::string& s) {
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '\\' && i + 1 < s.size()) {
            ++i;
            out += s[i] == 'n' ? '\n' : s[i];
        } else {
            out += s[i];
        }
    }
    return out;
}

inline DotGraph read_dot(const std::string& text) {
    static const std::regex header(R"(^\s*digraph\s+"(?:[^"\\]|\\.)*"\s*\{\s*$)");
    static const std::regex edge(R"re(^\s*"((?:[^"\\]|\\.)*)"\s*->\s*"((?:[^"\\]|\\.)*)"\s*\[label="((?:[^"\\]|\\.)*)"\];\s*$)re");
    static const std::regex node(R"re(^\s*"((?:[^"\\]|\\.)*)"\s*(?:\[(.*)\])?;\s*$)re");
    DotGraph g;
    std::istringstream in(text);
    std::string line;
    std::smatch m;
    while (std::getline(in, line)) {
        if (std::regex_match(line, header)) {
            g.is_digraph = true;
        } else if (std::regex_match(line, m, edge)) {
            g.edges.insert({dot_unquote(m[1]), dot_unquote(m[2]), dot_unquote(m[3])});
        } else if (std::regex_match(line, m, node)) {
            g.nodes[dot_unquote(m[1])] = m[2];
        }
    }
    return g;
}

} // namespace protoflow::testing
