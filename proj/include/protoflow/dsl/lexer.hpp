#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "protoflow/dsl/graph.hpp"

namespace protoflow::dsl {

enum class TokenKind {
    identifier,
    string,
    duration,  // 11h
    time,      // 20:00
    integer,
    arrow,     // ->
    lbrace,
    rbrace,
    semicolon,
    comma,
    colon,
    end_of_input,
    invalid,
};

struct Token {
    TokenKind kind = TokenKind::invalid;
    std::string text;    // decoded value (string contents without quotes)
    std::string lexeme;  // exact source spelling
    SourceLocation location;
};

struct LexResult {
    std::vector<Token> tokens;  // always terminated by end_of_input
    std::vector<CompileDiagnostic> diagnostics;
};

/// Comments run from '#' or '//' to end of line.
LexResult tokenize(std::string_view source);

/// Lexemes joined by single spaces; comments and layout dropped.
std::string normalize(const std::vector<Token>& tokens);

} // namespace protoflow::dsl
