#include "protoflow/dsl/lexer.hpp"

#include <cctype>

namespace protoflow::dsl {

namespace {

bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }
bool digit(char c) { return std::isdigit(static_cast<unsigned char>(c)); }

class Lexer {
public:
    explicit Lexer(std::string_view src) : src_(src) {}

    LexResult run() {
        LexResult out;
        while (true) {
            skip_layout();
            if (pos_ >= src_.size()) {
                out.tokens.push_back(Token{TokenKind::end_of_input, "", "", here()});
                break;
            }
            Token t = next(out.diagnostics);
            if (t.kind != TokenKind::invalid) out.tokens.push_back(std::move(t));
        }
        return out;
    }

private:
    SourceLocation here() const { return SourceLocation{line_, col_}; }

    void advance() {
        if (src_[pos_] == '\n') {
            ++line_;
            col_ = 1;
        } else {
            ++col_;
        }
        ++pos_;
    }

    void skip_layout() {
        while (pos_ < src_.size()) {
            const char c = src_[pos_];
            if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
                advance();
            } else if (c == '#' || (c == '/' && pos_ + 1 < src_.size() && src_[pos_ + 1] == '/')) {
                while (pos_ < src_.size() && src_[pos_] != '\n') advance();
            } else {
                break;
            }
        }
    }

    Token next(std::vector<CompileDiagnostic>& diags) {
        const auto loc = here();
        const auto start = pos_;
        const char c = src_[pos_];
        auto simple = [&](TokenKind k) {
            advance();
            return Token{k, std::string(1, c), std::string(1, c), loc};
        };
        switch (c) {
        case '{': return simple(TokenKind::lbrace);
        case '}': return simple(TokenKind::rbrace);
        case ';': return simple(TokenKind::semicolon);
        case ',': return simple(TokenKind::comma);
        case ':': return simple(TokenKind::colon);
        default: break;
        }
        if (c == '-' && pos_ + 1 < src_.size() && src_[pos_ + 1] == '>') {
            advance();
            advance();
            return Token{TokenKind::arrow, "->", "->", loc};
        }
        if (c == '"') return string_token(loc, diags);
        if (ident_start(c)) {
            while (pos_ < src_.size() && ident_char(src_[pos_])) advance();
            auto word = std::string(src_.substr(start, pos_ - start));
            return Token{TokenKind::identifier, word, word, loc};
        }
        if (digit(c)) {
            while (pos_ < src_.size() && digit(src_[pos_])) advance();
            // HH:MM
            if (pos_ + 2 < src_.size() && src_[pos_] == ':' && digit(src_[pos_ + 1]) && digit(src_[pos_ + 2]) &&
                (pos_ + 3 >= src_.size() || !ident_char(src_[pos_ + 3]))) {
                advance();
                advance();
                advance();
                auto lex = std::string(src_.substr(start, pos_ - start));
                return Token{TokenKind::time, lex, lex, loc};
            }
            if (pos_ < src_.size() && ident_char(src_[pos_])) {
                while (pos_ < src_.size() && ident_char(src_[pos_])) advance();
                auto lex = std::string(src_.substr(start, pos_ - start));
                if (parse_duration(lex)) return Token{TokenKind::duration, lex, lex, loc};
                diags.push_back({Severity::error, loc, "malformed duration '" + lex + "' (expected <integer><s|m|h|d>)"});
                return Token{TokenKind::invalid, lex, lex, loc};
            }
            auto lex = std::string(src_.substr(start, pos_ - start));
            return Token{TokenKind::integer, lex, lex, loc};
        }
        advance();
        // Swallow the rest of a UTF-8 sequence so one bad character yields one diagnostic.
        while (pos_ < src_.size() && (static_cast<unsigned char>(src_[pos_]) & 0xC0) == 0x80) advance();
        auto lex = std::string(src_.substr(start, pos_ - start));
        diags.push_back({Severity::error, loc, "unexpected character '" + lex + "'"});
        return Token{TokenKind::invalid, lex, lex, loc};
    }

    Token string_token(SourceLocation loc, std::vector<CompileDiagnostic>& diags) {
        const auto start = pos_;
        advance();
        std::string value;
        while (pos_ < src_.size() && src_[pos_] != '"' && src_[pos_] != '\n') {
            if (src_[pos_] == '\\' && pos_ + 1 < src_.size()) {
                advance();
                const char e = src_[pos_];
                value += (e == 'n') ? '\n' : e;
                advance();
                continue;
            }
            value += src_[pos_];
            advance();
        }
        if (pos_ >= src_.size() || src_[pos_] != '"') {
            diags.push_back({Severity::error, loc, "unterminated string literal"});
            return Token{TokenKind::invalid, value, std::string(src_.substr(start, pos_ - start)), loc};
        }
        advance();
        return Token{TokenKind::string, value, std::string(src_.substr(start, pos_ - start)), loc};
    }

    std::string_view src_;
    std::size_t pos_ = 0;
    int line_ = 1;
    int col_ = 1;
};

} // namespace

LexResult tokenize(std::string_view source) { return Lexer(source).run(); }

std::string normalize(const std::vector<Token>& tokens) {
    std::string out;
    for (const auto& t : tokens) {
        if (t.kind == TokenKind::end_of_input) break;
        if (!out.empty()) out += ' ';
        out += t.lexeme;
    }
    return out;
}

} // namespace protoflow::dsl
