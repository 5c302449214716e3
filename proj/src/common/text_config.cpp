#include "protoflow/common/text_config.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

namespace protoflow {

namespace {

class Parser {
public:
    explicit Parser(std::string_view text) : text_(text) {}

    int line() const { return line_; }
    bool done() const { return pos_ >= text_.size(); }
    char peek() const { return pos_ < text_.size() ? text_[pos_] : '\0'; }

    void skip_ws() {
        while (pos_ < text_.size() && (text_[pos_] == ' ' || text_[pos_] == '\t' || text_[pos_] == '\r')) ++pos_;
    }

    // Also crosses newlines and comments; arrays may span lines.
    void skip_ws_nl() {
        while (pos_ < text_.size()) {
            const char c = text_[pos_];
            if (c == ' ' || c == '\t' || c == '\r') {
                ++pos_;
            } else if (c == '\n') {
                ++pos_;
                ++line_;
            } else if (c == '#') {
                while (pos_ < text_.size() && text_[pos_] != '\n') ++pos_;
            } else {
                break;
            }
        }
    }

    bool at_end_or_comment() {
        skip_ws();
        return pos_ >= text_.size() || text_[pos_] == '#' || text_[pos_] == '\n';
    }

    // Consumes the rest of the line, which must be blank or a comment.
    void end_line(const char* what) {
        if (!at_end_or_comment()) throw ConfigError(line_, std::string("trailing characters after ") + what);
        while (pos_ < text_.size() && text_[pos_] != '\n') ++pos_;
        if (pos_ < text_.size()) {
            ++pos_;
            ++line_;
        }
    }

    std::string key() {
        skip_ws();
        if (pos_ < text_.size() && text_[pos_] == '"') return quoted();
        const auto start = pos_;
        while (pos_ < text_.size()) {
            const char c = text_[pos_];
            if (std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.') {
                ++pos_;
            } else {
                break;
            }
        }
        if (start == pos_) throw ConfigError(line_, "expected key");
        return std::string(text_.substr(start, pos_ - start));
    }

    void expect(char c) {
        skip_ws();
        if (pos_ >= text_.size() || text_[pos_] != c) {
            throw ConfigError(line_, std::string("expected '") + c + "'");
        }
        ++pos_;
    }

    nlohmann::json value() {
        skip_ws();
        if (pos_ >= text_.size() || text_[pos_] == '\n' || text_[pos_] == '#') {
            throw ConfigError(line_, "missing value");
        }
        const char c = text_[pos_];
        if (c == '"') return quoted();
        if (c == '[') return array();
        if (text_.substr(pos_, 4) == "true") {
            pos_ += 4;
            return true;
        }
        if (text_.substr(pos_, 5) == "false") {
            pos_ += 5;
            return false;
        }
        return number();
    }

private:
    std::string quoted() {
        ++pos_;  // opening quote
        std::string out;
        while (pos_ < text_.size() && text_[pos_] != '"' && text_[pos_] != '\n') {
            char c = text_[pos_++];
            if (c == '\\') {
                if (pos_ >= text_.size()) break;
                const char e = text_[pos_++];
                switch (e) {
                case 'n': out += '\n'; break;
                case 't': out += '\t'; break;
                case '"': out += '"'; break;
                case '\\': out += '\\'; break;
                default: throw ConfigError(line_, std::string("unknown escape '\\") + e + "'");
                }
            } else {
                out += c;
            }
        }
        if (pos_ >= text_.size() || text_[pos_] == '\n') throw ConfigError(line_, "unterminated string");
        ++pos_;
        return out;
    }

    nlohmann::json array() {
        ++pos_;
        nlohmann::json out = nlohmann::json::array();
        skip_ws_nl();
        if (pos_ < text_.size() && text_[pos_] == ']') {
            ++pos_;
            return out;
        }
        while (true) {
            out.push_back(value());
            skip_ws_nl();
            if (pos_ < text_.size() && text_[pos_] == ',') {
                ++pos_;
                skip_ws_nl();
                if (pos_ < text_.size() && text_[pos_] == ']') {
                    ++pos_;
                    return out;
                }
                continue;
            }
            expect(']');
            return out;
        }
    }

    nlohmann::json number() {
        const auto start = pos_;
        if (pos_ < text_.size() && (text_[pos_] == '-' || text_[pos_] == '+')) ++pos_;
        bool is_float = false;
        while (pos_ < text_.size()) {
            const char c = text_[pos_];
            if (std::isdigit(static_cast<unsigned char>(c)) || c == '_') {
                ++pos_;
            } else if (c == '.' || c == 'e' || c == 'E') {
                is_float = true;
                ++pos_;
            } else {
                break;
            }
        }
        std::string digits;
        for (char c : text_.substr(start, pos_ - start)) {
            if (c != '_') digits += c;
        }
        if (digits.empty() || digits == "-" || digits == "+") throw ConfigError(line_, "expected value");
        try {
            if (is_float) return std::stod(digits);
            return std::stoll(digits);
        } catch (const std::exception&) {
            throw ConfigError(line_, "malformed number '" + digits + "'");
        }
    }

    std::string_view text_;
    int line_ = 1;
    std::size_t pos_ = 0;
};

nlohmann::json* table_for(nlohmann::json& root, const std::string& dotted, int line) {
    nlohmann::json* node = &root;
    std::stringstream ss(dotted);
    std::string part;
    while (std::getline(ss, part, '.')) {
        if (part.empty()) throw ConfigError(line, "empty table name component");
        auto& child = (*node)[part];
        if (child.is_null()) child = nlohmann::json::object();
        if (!child.is_object()) throw ConfigError(line, "'" + part + "' is not a table");
        node = &child;
    }
    return node;
}

} // namespace

nlohmann::json parse_text_config(std::string_view text) {
    nlohmann::json root = nlohmann::json::object();
    nlohmann::json* current = &root;
    Parser p(text);
    while (true) {
        p.skip_ws_nl();
        if (p.done()) break;
        const int line = p.line();
        if (p.peek() == '[') {
            p.expect('[');
            const auto name = p.key();
            p.expect(']');
            p.end_line("table header");
            current = table_for(root, name, line);
        } else {
            const auto key = p.key();
            p.expect('=');
            auto value = p.value();
            p.end_line("value");
            if (current->contains(key)) throw ConfigError(line, "duplicate key '" + key + "'");
            (*current)[key] = std::move(value);
        }
    }
    return root;
}

nlohmann::json load_text_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_text_config(ss.str());
}

} // namespace protoflow
