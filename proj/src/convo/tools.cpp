#include "protoflow/convo/tools.hpp"

#include <set>

#include "protoflow/common/hash.hpp"
#include "protoflow/dsl/lexer.hpp"

namespace protoflow::convo {

using dsl::Token;
using dsl::TokenKind;

std::optional<ParamType> parse_param_type(std::string_view s) {
    if (s == "text") return ParamType::text;
    if (s == "number") return ParamType::number;
    if (s == "instant") return ParamType::instant;
    if (s == "boolean") return ParamType::boolean;
    return std::nullopt;
}

std::string_view to_string(ParamType t) {
    switch (t) {
    case ParamType::text: return "text";
    case ParamType::number: return "number";
    case ParamType::instant: return "instant";
    case ParamType::boolean: return "boolean";
    }
    return "?";
}

const ToolParam* ToolFunction::param(std::string_view n) const {
    for (const auto& p : params) {
        if (p.name == n) return &p;
    }
    return nullptr;
}

namespace {

class ToolsParser {
public:
    explicit ToolsParser(std::vector<Token> toks) : toks_(std::move(toks)) {}

    ToolSet run() {
        ToolSet set;
        while (peek().kind != TokenKind::end_of_input) {
            const auto& t = peek();
            if (word("tool")) {
                set.add(tool());
            } else if (word("question")) {
                set.bind(question(set));
            } else {
                fail(t, "expected 'tool' or 'question', found '" + t.lexeme + "'");
            }
        }
        for (const auto& [id, q] : set.questions()) {
            for (const auto& name : q.tools) {
                if (!set.find(name)) fail(question_locs_.at(id), "question '" + id + "' binds unknown tool '" + name + "'");
            }
        }
        return set;
    }

private:
    const Token& peek() const { return toks_[pos_]; }
    const Token& next() { return toks_[pos_ < toks_.size() - 1 ? pos_++ : pos_]; }

    [[noreturn]] void fail(const Token& t, const std::string& msg) {
        throw ToolsError(t.location.line, t.location.column, msg);
    }

    bool word(std::string_view w) {
        if (peek().kind == TokenKind::identifier && peek().text == w) {
            ++pos_;
            return true;
        }
        return false;
    }

    const Token& expect(TokenKind k, const char* what) {
        if (peek().kind != k) fail(peek(), std::string("expected ") + what + ", found '" + peek().lexeme + "'");
        return next();
    }

    ToolFunction tool() {
        ToolFunction t;
        t.name = expect(TokenKind::identifier, "tool name").text;
        expect(TokenKind::lbrace, "'{'");
        std::vector<std::pair<std::string, Token>> rule_params;
        while (peek().kind != TokenKind::rbrace) {
            const auto& at = peek();
            if (word("param")) {
                ToolParam p;
                const auto& name = expect(TokenKind::identifier, "parameter name");
                p.name = name.text;
                if (t.param(p.name)) fail(name, "duplicate parameter '" + p.name + "' in tool '" + t.name + "'");
                expect(TokenKind::colon, "':'");
                const auto& type = expect(TokenKind::identifier, "parameter type");
                auto pt = parse_param_type(type.text);
                if (!pt) fail(type, "unknown parameter type '" + type.text + "'");
                p.type = *pt;
                if (word("optional")) p.optional = true;
                t.params.push_back(p);
            } else if (word("validator")) {
                t.validator = expect(TokenKind::identifier, "validator name").text;
            } else if (word("extract")) {
                ExtractRule r;
                const auto& param = expect(TokenKind::identifier, "parameter name");
                r.param = param.text;
                rule_params.emplace_back(r.param, param);
                const auto& kind = expect(TokenKind::identifier, "extraction kind");
                if (kind.text == "phrase") r.kind = ExtractRule::Kind::phrase;
                else if (kind.text == "number") r.kind = ExtractRule::Kind::number;
                else if (kind.text == "yesno") r.kind = ExtractRule::Kind::yesno;
                else if (kind.text == "text") r.kind = ExtractRule::Kind::text;
                else if (kind.text == "keyword") {
                    r.kind = ExtractRule::Kind::keyword;
                    r.keyword = expect(TokenKind::string, "keyword string").text;
                    expect(TokenKind::arrow, "'->'");
                    r.value = expect(TokenKind::string, "value string").text;
                } else {
                    fail(kind, "unknown extraction kind '" + kind.text + "'");
                }
                t.rules.push_back(std::move(r));
            } else {
                fail(at, "expected 'param', 'validator' or 'extract', found '" + at.lexeme + "'");
            }
            expect(TokenKind::semicolon, "';'");
        }
        expect(TokenKind::rbrace, "'}'");
        if (peek().kind == TokenKind::semicolon) next();
        for (const auto& [name, tok] : rule_params) {
            if (!t.param(name)) fail(tok, "extract rule for undeclared parameter '" + name + "'");
        }
        return t;
    }

    QuestionBinding question(const ToolSet& set) {
        QuestionBinding q;
        const auto& id = expect(TokenKind::identifier, "question template id");
        q.question_id = id.text;
        if (set.question(q.question_id)) fail(id, "question '" + q.question_id + "' bound twice");
        question_locs_.emplace(q.question_id, id);
        expect(TokenKind::arrow, "'->'");
        q.tools.push_back(expect(TokenKind::identifier, "tool name").text);
        while (peek().kind == TokenKind::comma) {
            next();
            q.tools.push_back(expect(TokenKind::identifier, "tool name").text);
        }
        expect(TokenKind::semicolon, "';'");
        return q;
    }

    std::vector<Token> toks_;
    std::size_t pos_ = 0;
    std::map<std::string, Token> question_locs_;
};

} // namespace

ToolSet ToolSet::parse(std::string_view source) {
    auto lexed = dsl::tokenize(source);
    if (!lexed.diagnostics.empty()) {
        const auto& d = lexed.diagnostics.front();
        throw ToolsError(d.location.line, d.location.column, d.message);
    }
    return ToolsParser(std::move(lexed.tokens)).run();
}

ToolSet ToolSet::load(const std::string& path) { return parse(read_file(path)); }

const ToolFunction* ToolSet::find(const std::string& name) const {
    auto it = tools_.find(name);
    return it == tools_.end() ? nullptr : &it->second;
}

const QuestionBinding* ToolSet::question(const std::string& id) const {
    auto it = questions_.find(id);
    return it == questions_.end() ? nullptr : &it->second;
}

void ToolSet::add(ToolFunction t) {
    if (tools_.count(t.name)) throw ToolsError(0, 0, "duplicate tool '" + t.name + "'");
    auto name = t.name;
    tools_.emplace(std::move(name), std::move(t));
}

void ToolSet::bind(QuestionBinding q) {
    auto id = q.question_id;
    questions_[id] = std::move(q);
}

nlohmann::json ToolSet::schema(const ToolFunction& t) {
    nlohmann::json props = nlohmann::json::object();
    auto required = nlohmann::json::array();
    for (const auto& p : t.params) {
        std::string type = p.type == ParamType::number ? "number" : p.type == ParamType::boolean ? "boolean" : "string";
        nlohmann::json prop{{"type", type}};
        if (p.type == ParamType::instant) prop["description"] = "time phrase as stated, e.g. 'this morning' or '7am'";
        props[p.name] = prop;
        if (!p.optional) required.push_back(p.name);
    }
    return {{"name", t.name},
            {"parameters", {{"type", "object"}, {"properties", props}, {"required", required}}}};
}

} // namespace protoflow::convo
