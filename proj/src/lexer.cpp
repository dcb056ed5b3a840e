#include "memanno/lexer.hpp"

#include <array>
#include <cctype>
#include <unordered_set>

namespace memanno::lex {

namespace {

bool ident_start(char c) {
    return std::isalpha(static_cast<unsigned char>(c)) || c == '_';
}

bool ident_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

// Longest-match operator list; order within a length class is irrelevant.
constexpr std::array<std::string_view, 36> kOperators = {
    "<<=", ">>=", "...",
    "->", "++", "--", "<<", ">>", "<=", ">=", "==", "!=", "&&", "||",
    "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=",
    "+", "-", "*", "/", "%", "=", "<", ">", "!", "&", "|", "^", "~", "?",
};

} // namespace

bool is_keyword(std::string_view ident) {
    static const std::unordered_set<std::string_view> kw = {
        "auto", "break", "case", "char", "const", "continue", "default", "do",
        "double", "else", "enum", "extern", "float", "for", "goto", "if",
        "inline", "int", "long", "register", "restrict", "return", "short",
        "signed", "sizeof", "static", "struct", "switch", "typedef", "union",
        "unsigned", "void", "volatile", "while",
        "_Bool", "_Noreturn", "_Static_assert", "_Thread_local", "_Alignas",
        "_Alignof", "_Atomic", "_Generic",
    };
    return kw.count(ident) > 0;
}

bool is_branch_keyword(std::string_view ident) {
    return ident == "if" || ident == "else" || ident == "for" || ident == "while" ||
           ident == "do" || ident == "switch";
}

std::vector<Token> tokenize(std::string_view src) {
    std::vector<Token> tokens;
    size_t i = 0;
    int line = 1;
    bool at_line_start = true;

    auto advance_line = [&](char c) {
        if (c == '\n') {
            ++line;
            at_line_start = true;
        }
    };

    while (i < src.size()) {
        char c = src[i];

        if (c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\v' || c == '\f') {
            advance_line(c);
            ++i;
            continue;
        }

        // Comments.
        if (c == '/' && i + 1 < src.size() && src[i + 1] == '/') {
            while (i < src.size() && src[i] != '\n') ++i;
            continue;
        }
        if (c == '/' && i + 1 < src.size() && src[i + 1] == '*') {
            i += 2;
            while (i + 1 < src.size() && !(src[i] == '*' && src[i + 1] == '/')) {
                advance_line(src[i]);
                ++i;
            }
            i = (i + 1 < src.size()) ? i + 2 : src.size();
            continue;
        }

        // Preprocessor line: '#' first on its line, consume through continuations.
        if (c == '#' && at_line_start) {
            Token tok{TokKind::Directive, "", line, i, i};
            size_t start = i;
            while (i < src.size()) {
                if (src[i] == '\\' && i + 1 < src.size() && src[i + 1] == '\n') {
                    ++line;
                    i += 2;
                    continue;
                }
                if (src[i] == '\n') break;
                ++i;
            }
            tok.text = std::string(src.substr(start, i - start));
            tok.end = i;
            tokens.push_back(std::move(tok));
            continue;
        }
        at_line_start = false;

        if (ident_start(c)) {
            size_t start = i;
            while (i < src.size() && ident_char(src[i])) ++i;
            tokens.push_back({TokKind::Identifier, std::string(src.substr(start, i - start)),
                              line, start, i});
            continue;
        }

        if (std::isdigit(static_cast<unsigned char>(c)) ||
            (c == '.' && i + 1 < src.size() && std::isdigit(static_cast<unsigned char>(src[i + 1])))) {
            size_t start = i;
            while (i < src.size() &&
                   (ident_char(src[i]) || src[i] == '.' ||
                    ((src[i] == '+' || src[i] == '-') && i > start &&
                     (src[i - 1] == 'e' || src[i - 1] == 'E' || src[i - 1] == 'p' || src[i - 1] == 'P')))) {
                ++i;
            }
            tokens.push_back({TokKind::Number, std::string(src.substr(start, i - start)),
                              line, start, i});
            continue;
        }

        if (c == '"' || c == '\'') {
            char quote = c;
            size_t start = i;
            int start_line = line;
            ++i;
            while (i < src.size() && src[i] != quote) {
                if (src[i] == '\\' && i + 1 < src.size()) {
                    advance_line(src[i + 1]);
                    i += 2;
                    continue;
                }
                advance_line(src[i]);
                ++i;
            }
            if (i < src.size()) ++i; // closing quote
            tokens.push_back({quote == '"' ? TokKind::String : TokKind::CharLit,
                              std::string(src.substr(start, i - start)), start_line, start, i});
            continue;
        }

        // Operators and punctuation, longest match first.
        bool matched = false;
        for (std::string_view op : kOperators) {
            if (src.compare(i, op.size(), op) == 0) {
                tokens.push_back({TokKind::Punct, std::string(op), line, i, i + op.size()});
                i += op.size();
                matched = true;
                break;
            }
        }
        if (matched) continue;

        tokens.push_back({TokKind::Punct, std::string(1, c), line, i, i + 1});
        ++i;
    }
    return tokens;
}

} // namespace memanno::lex
