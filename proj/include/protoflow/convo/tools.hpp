#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace protoflow::convo {

enum class ParamType { text, number, instant, boolean };

std::optional<ParamType> parse_param_type(std::string_view s);
std::string_view to_string(ParamType t);

struct ToolParam {
    std::string name;
    ParamType type = ParamType::text;
    bool optional = false;
};

/// One scripted extraction rule for a parameter.
///   phrase              time-phrase lexicon (instant parameters)
///   number              first decimal number
///   yesno               yes/no words -> "true"/"false"
///   text                the whole trimmed answer
///   keyword "k" -> "v"  whole-word, case-insensitive match of k yields v
struct ExtractRule {
    enum class Kind { phrase, number, yesno, text, keyword };

    std::string param;
    Kind kind = Kind::text;
    std::string keyword;
    std::string value;
};

struct ToolFunction {
    std::string name;
    std::vector<ToolParam> params;  // names unique
    std::optional<std::string> validator;
    std::vector<ExtractRule> rules;  // tried in declaration order

    const ToolParam* param(std::string_view n) const;
};

/// Which tools judge the answers to a question template.
struct QuestionBinding {
    std::string question_id;
    std::vector<std::string> tools;
};

class ToolsError : public std::runtime_error {
public:
    ToolsError(int line, int column, const std::string& what)
        : std::runtime_error(std::to_string(line) + ":" + std::to_string(column) + ": " + what),
          line_(line), column_(column) {}
    int line() const { return line_; }
    int column() const { return column_; }

private:
    int line_, column_;
};

/// Tool declarations of a pack (tools.pft):
///
///   tool DidTakeMedication {
///       param when: instant;
///       param medication: text optional;
///       validator did_take_medication;
///       extract when phrase;
///       extract medication keyword "acebutolol" -> "Acebutolol";
///   }
///   question med_checkin -> DidTakeMedication;
class ToolSet {
public:
    /// Throws ToolsError with the offending location.
    static ToolSet parse(std::string_view source);
    static ToolSet load(const std::string& path);

    const ToolFunction* find(const std::string& name) const;
    const QuestionBinding* question(const std::string& question_id) const;
    const std::map<std::string, ToolFunction>& tools() const { return tools_; }
    const std::map<std::string, QuestionBinding>& questions() const { return questions_; }
    bool empty() const { return tools_.empty() && questions_.empty(); }

    void add(ToolFunction t);
    void bind(QuestionBinding q);

    /// JSON-schema-style description used by the HTTP backend.
    static nlohmann::json schema(const ToolFunction& t);

private:
    std::map<std::string, ToolFunction> tools_;
    std::map<std::string, QuestionBinding> questions_;
};

} // namespace protoflow::convo
