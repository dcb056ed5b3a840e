#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace memanno::lex {

enum class TokKind {
    Identifier,
    Number,
    String,
    CharLit,
    Punct,
    /// A whole preprocessor line (including continuations), one token.
    Directive,
};

struct Token {
    TokKind kind;
    std::string text;
    int line = 1;     // 1-based line of the first character
    std::size_t begin = 0; // byte offset into the source
    std::size_t end = 0;   // one past the last byte
};

/// Tokenizes C source. Comments are dropped; string/char literals survive as
/// single opaque tokens so identifier scans never look inside them.
std::vector<Token> tokenize(std::string_view source);

bool is_keyword(std::string_view ident);

/// Keywords that introduce a conditional or loop statement.
bool is_branch_keyword(std::string_view ident);

} // namespace memanno::lex
