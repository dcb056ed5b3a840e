#include "memanno/ingest.hpp"

#include <algorithm>
#include <cstdint>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "memanno/errors.hpp"
#include "memanno/lexer.hpp"
#include "memanno/util.hpp"

namespace fs = std::filesystem;

namespace memanno {

using lex::TokKind;
using lex::Token;
using lex::is_keyword;
using lex::tokenize;

namespace {

// Compiler-extension words that must never be mistaken for a function name.
bool is_extension_keyword(std::string_view ident) {
    return ident == "__attribute__" || ident == "__asm__" || ident == "__asm" ||
           ident == "__declspec" || ident == "__extension__" || ident == "__restrict" ||
           ident == "__restrict__" || ident == "__typeof__" || ident == "_Pragma";
}

bool is_storage_keyword(std::string_view ident) {
    return ident == "static" || ident == "extern" || ident == "inline" ||
           ident == "register" || ident == "_Noreturn" || ident == "__inline" ||
           ident == "__inline__" || ident == "__forceinline";
}

/// Joins declaration tokens into readable type text: no space around parens
/// and brackets, pointer stars collapsed ("char * *" -> "char **").
std::string normalize_type_text(const std::vector<std::string_view>& parts) {
    std::string s;
    for (const auto& p : parts) {
        if (!s.empty()) s += ' ';
        s += p;
    }
    replace_all(s, " (", "(");
    replace_all(s, "( ", "(");
    replace_all(s, " )", ")");
    replace_all(s, " [", "[");
    replace_all(s, "[ ", "[");
    replace_all(s, " ]", "]");
    replace_all(s, " ,", ",");
    replace_all(s, "* *", "**");
    return s;
}

/// Parses one parameter's token slice into (name, type_text).
Param parse_param(const std::vector<Token>& toks, size_t first, size_t last) {
    Param out;
    if (first >= last) return out;

    size_t count = last - first;
    if (count == 1 && toks[first].text == "...") {
        out.type_text = "...";
        return out;
    }

    // Function-pointer parameters name the declarator inside `(*name)`.
    size_t name_idx = SIZE_MAX;
    for (size_t i = first; i + 2 < last; ++i) {
        if (toks[i].text != "(") continue;
        size_t j = i + 1;
        while (j < last && toks[j].text == "*") ++j;
        if (j > i + 1 && j + 1 < last && toks[j].kind == TokKind::Identifier &&
            !is_keyword(toks[j].text) && toks[j + 1].text == ")") {
            name_idx = j;
            break;
        }
    }

    if (name_idx == SIZE_MAX && count > 1) {
        for (size_t i = last; i-- > first;) {
            if (toks[i].kind == TokKind::Identifier && !is_keyword(toks[i].text) &&
                !is_extension_keyword(toks[i].text)) {
                name_idx = i;
                break;
            }
        }
    }

    std::vector<std::string_view> type_parts;
    for (size_t i = first; i < last; ++i) {
        if (i == name_idx) continue;
        type_parts.push_back(toks[i].text);
    }
    if (name_idx != SIZE_MAX) out.name = std::string(toks[name_idx].text);
    out.type_text = normalize_type_text(type_parts);
    return out;
}

/// Splits the token range between the parameter parens on top-level commas.
std::vector<Param> parse_params(const std::vector<Token>& toks, size_t open, size_t close) {
    std::vector<Param> params;
    if (open + 1 >= close) return params; // `()`
    if (close - open == 2 && toks[open + 1].text == "void") return params;

    int depth = 0;
    size_t start = open + 1;
    for (size_t i = open + 1; i <= close; ++i) {
        const auto& t = toks[i].text;
        if (t == "(" || t == "[") ++depth;
        else if (t == ")" || t == "]") --depth;
        if ((i == close && depth < 0) || (depth == 0 && t == ",")) {
            params.push_back(parse_param(toks, start, i));
            start = i + 1;
        }
    }
    return params;
}

struct FileParse {
    std::vector<FunctionRecord> functions;
    std::vector<std::string> diagnostics;
    std::set<std::string> typedef_aggregates;
};

/// Records typedef'd aggregate names out of an accumulated top-level
/// declaration. `{}` marks where a skipped struct/union body sat.
void harvest_typedef(const std::vector<Token>& pending, std::set<std::string>& out) {
    if (pending.empty() || pending.front().text != "typedef") return;
    bool aggregate = false;
    size_t marker = SIZE_MAX;
    for (size_t i = 0; i < pending.size(); ++i) {
        if (pending[i].text == "struct" || pending[i].text == "union") aggregate = true;
        if (pending[i].text == "{}") marker = i;
    }
    if (!aggregate) return;

    if (marker != SIZE_MAX) {
        for (size_t i = marker + 1; i < pending.size(); ++i) {
            if (pending[i].kind == TokKind::Identifier && !is_keyword(pending[i].text))
                out.insert(std::string(pending[i].text));
        }
    } else {
        // `typedef struct tag name;` — the final identifier is the new name.
        for (size_t i = pending.size(); i-- > 0;) {
            if (pending[i].kind == TokKind::Identifier && !is_keyword(pending[i].text)) {
                out.insert(std::string(pending[i].text));
                break;
            }
        }
    }
}

/// Walks the token stream of one file and collects function definitions.
FileParse parse_file_tokens(const std::string& text, const std::string& file) {
    FileParse out;
    std::vector<Token> toks = tokenize(text);

    std::vector<Token> pending;
    int transparent_depth = 0; // open `extern "C" {` braces
    size_t i = 0;
    size_t n = toks.size();

    auto skip_block = [&](size_t open_idx, size_t* close_idx) -> bool {
        int depth = 0;
        for (size_t j = open_idx; j < n; ++j) {
            if (toks[j].text == "{") ++depth;
            else if (toks[j].text == "}") {
                --depth;
                if (depth == 0) {
                    *close_idx = j;
                    return true;
                }
            }
        }
        return false;
    };

    while (i < n) {
        const Token& t = toks[i];

        if (t.kind == TokKind::Directive) {
            pending.clear();
            ++i;
            continue;
        }
        if (t.text == ";") {
            harvest_typedef(pending, out.typedef_aggregates);
            pending.clear();
            ++i;
            continue;
        }
        if (t.text == "}") {
            if (transparent_depth > 0) {
                --transparent_depth;
            } else {
                out.diagnostics.push_back(file + ": stray '}' at line " +
                                          std::to_string(t.line));
            }
            pending.clear();
            ++i;
            continue;
        }
        if (t.text != "{") {
            pending.push_back(t);
            ++i;
            continue;
        }

        // `extern "C" {` wraps declarations without nesting them.
        if (pending.size() == 2 && pending[0].text == "extern" &&
            pending[1].kind == TokKind::String) {
            ++transparent_depth;
            pending.clear();
            ++i;
            continue;
        }

        // Decide whether `pending {` is a function definition.
        bool has_assign = false;
        for (const auto& p : pending)
            if (p.text == "=") has_assign = true;

        size_t name_idx = SIZE_MAX;
        size_t open_paren = SIZE_MAX;
        size_t sig_end = pending.size();
        while (!has_assign && sig_end >= 3 && pending[sig_end - 1].text == ")") {
            size_t open = SIZE_MAX;
            int depth = 0;
            for (size_t j = sig_end; j-- > 0;) {
                if (pending[j].text == ")") ++depth;
                else if (pending[j].text == "(") {
                    --depth;
                    if (depth == 0) {
                        open = j;
                        break;
                    }
                }
            }
            if (open == SIZE_MAX || open == 0) break;
            const Token& cand = pending[open - 1];
            if (is_extension_keyword(cand.text)) {
                // Trailing `__attribute__((...))` and kin are not the
                // parameter list; peel them off and look again.
                sig_end = open - 1;
                continue;
            }
            if (cand.kind == TokKind::Identifier && !is_keyword(cand.text)) {
                name_idx = open - 1;
                open_paren = open;
            }
            break;
        }

        size_t close_idx = SIZE_MAX;
        if (!skip_block(i, &close_idx)) {
            out.diagnostics.push_back(file + ": unbalanced braces after line " +
                                      std::to_string(t.line) + "; later definitions skipped");
            return out;
        }

        if (name_idx != SIZE_MAX) {
            FunctionRecord rec;
            rec.name = std::string(pending[name_idx].text);
            rec.file = file;
            rec.start_line = pending.front().line;
            rec.end_line = toks[close_idx].line;
            rec.is_definition = true;
            rec.params = parse_params(pending, open_paren, sig_end - 1);

            std::vector<std::string_view> ret_parts;
            for (size_t j = 0; j < name_idx; ++j) {
                if (is_storage_keyword(pending[j].text)) continue;
                ret_parts.push_back(pending[j].text);
            }
            rec.return_type_text = normalize_type_text(ret_parts);

            size_t body_begin = pending.front().begin;
            size_t body_end = toks[close_idx].end;
            rec.body = text.substr(body_begin, body_end - body_begin);
            rec.id = rec.file + ":" + rec.name + ":" + std::to_string(rec.start_line);
            out.functions.push_back(std::move(rec));
        } else if (!pending.empty() && pending.front().text == "typedef") {
            // Keep accumulating so `typedef struct { ... } name;` still
            // reaches the `;` handler with a body marker in place.
            Token marker;
            marker.kind = TokKind::Punct;
            marker.text = "{}";
            marker.line = t.line;
            pending.push_back(marker);
            i = close_idx + 1;
            continue;
        }

        pending.clear();
        i = close_idx + 1;
    }

    return out;
}

FileParse parse_one(const fs::path& root, const FileEntry& entry) {
    auto text = try_read_file(root / fs::path(entry.path));
    if (!text) {
        FileParse out;
        out.diagnostics.push_back(entry.path + ": unreadable");
        return out;
    }
    return parse_file_tokens(*text, entry.path);
}

ExtractionResult merge_parses(std::vector<FileParse>& parses) {
    ExtractionResult result;
    for (auto& p : parses) {
        for (auto& f : p.functions) result.functions.push_back(std::move(f));
        for (auto& d : p.diagnostics) result.diagnostics.push_back(std::move(d));
        result.typedef_aggregates.insert(p.typedef_aggregates.begin(),
                                         p.typedef_aggregates.end());
    }
    return result;
}

} // namespace

FunctionIdParts parse_function_id(const std::string& id) {
    auto last = id.rfind(':');
    if (last == std::string::npos || last == 0) throw corpus_error("malformed function id: " + id);
    auto mid = id.rfind(':', last - 1);
    if (mid == std::string::npos) throw corpus_error("malformed function id: " + id);
    FunctionIdParts parts;
    parts.file = id.substr(0, mid);
    parts.name = id.substr(mid + 1, last - mid - 1);
    try {
        parts.start_line = std::stoi(id.substr(last + 1));
    } catch (const std::exception&) {
        throw corpus_error("malformed function id: " + id);
    }
    return parts;
}

FunctionStore::FunctionStore(std::vector<FunctionRecord> functions)
    : functions_(std::move(functions)) {
    for (size_t i = 0; i < functions_.size(); ++i) {
        by_id_[functions_[i].id] = i;
        by_name_[functions_[i].name].push_back(&functions_[i]);
    }
}

const FunctionRecord* FunctionStore::by_id(const std::string& id) const {
    auto it = by_id_.find(id);
    return it == by_id_.end() ? nullptr : &functions_[it->second];
}

const std::vector<const FunctionRecord*>& FunctionStore::by_name(const std::string& name) const {
    auto it = by_name_.find(name);
    return it == by_name_.end() ? empty_list_ : it->second;
}

CorpusIndex scan_codebase(const fs::path& root,
                          const std::vector<std::string>& include_globs,
                          const std::vector<std::string>& exclude_globs) {
    std::error_code ec;
    if (!fs::is_directory(root, ec)) {
        throw corpus_error("codebase root is not a directory: " + root.string());
    }

    CorpusIndex index;
    index.root = root;

    fs::recursive_directory_iterator it(root, fs::directory_options::skip_permission_denied, ec);
    if (ec) throw corpus_error("cannot open codebase root: " + root.string());

    for (fs::recursive_directory_iterator end; it != end; it.increment(ec)) {
        if (ec) throw corpus_error("error walking " + root.string() + ": " + ec.message());
        const fs::directory_entry& entry = *it;
        std::string base = entry.path().filename().string();
        if (entry.is_directory(ec)) {
            if (!base.empty() && base[0] == '.') it.disable_recursion_pending();
            continue;
        }
        if (!entry.is_regular_file(ec)) continue;

        std::string rel = entry.path().lexically_relative(root).generic_string();

        bool included = include_globs.empty();
        for (const auto& g : include_globs)
            if (glob_match(g, rel)) included = true;
        if (!included) continue;

        bool excluded = false;
        for (const auto& g : exclude_globs)
            if (glob_match(g, rel)) excluded = true;
        if (excluded) {
            index.skipped.push_back({rel, "excluded"});
            continue;
        }

        auto text = try_read_file(entry.path());
        if (!text) {
            index.skipped.push_back({rel, "unreadable"});
            continue;
        }
        if (text->find('\0') != std::string::npos) {
            index.skipped.push_back({rel, "binary"});
            continue;
        }

        FileEntry fe;
        fe.path = rel;
        fe.size = text->size();
        fe.content_hash = fnv1a64_hex(*text);
        index.files.push_back(std::move(fe));
    }

    std::sort(index.files.begin(), index.files.end(),
              [](const FileEntry& a, const FileEntry& b) { return a.path < b.path; });
    std::sort(index.skipped.begin(), index.skipped.end(),
              [](const SkippedFile& a, const SkippedFile& b) { return a.path < b.path; });
    return index;
}

ExtractionResult extract_functions_serial(const CorpusIndex& index) {
    std::vector<FileParse> parses(index.files.size());
    for (size_t i = 0; i < index.files.size(); ++i) {
        parses[i] = parse_one(index.root, index.files[i]);
    }
    return merge_parses(parses);
}

ExtractionResult extract_functions(const CorpusIndex& index) {
    std::vector<FileParse> parses(index.files.size());
    std::int64_t count = static_cast<std::int64_t>(index.files.size());
#pragma omp parallel for schedule(dynamic)
    for (std::int64_t i = 0; i < count; ++i) {
        parses[static_cast<size_t>(i)] = parse_one(index.root, index.files[static_cast<size_t>(i)]);
    }
    return merge_parses(parses);
}

ExtractionResult extract_functions_from_text(const std::string& text, const std::string& file) {
    FileParse parse = parse_file_tokens(text, file);
    std::vector<FileParse> parses;
    parses.push_back(std::move(parse));
    return merge_parses(parses);
}

CallGraph build_call_graph(const std::vector<FunctionRecord>& functions) {
    CallGraph graph;
    FunctionStore store(functions);
    for (const auto& f : functions) graph.nodes.insert(f.id);

    std::set<std::pair<std::string, std::string>> unresolved_seen;

    for (const auto& f : functions) {
        std::vector<Token> toks = tokenize(f.body);
        size_t body_start = 0;
        while (body_start < toks.size() && toks[body_start].text != "{") ++body_start;

        std::set<std::string> called;
        for (size_t i = body_start; i + 1 < toks.size(); ++i) {
            if (toks[i].kind != TokKind::Identifier) continue;
            if (is_keyword(toks[i].text) || is_extension_keyword(toks[i].text)) continue;
            if (toks[i + 1].text != "(") continue;
            called.insert(std::string(toks[i].text));
        }

        for (const auto& name : called) {
            const auto& candidates = store.by_name(name);
            if (candidates.empty()) {
                if (unresolved_seen.insert({f.id, name}).second) {
                    graph.unresolved_calls.push_back({f.id, name});
                }
                continue;
            }
            std::vector<const FunctionRecord*> same_file;
            for (const auto* c : candidates)
                if (c->file == f.file) same_file.push_back(c);
            const auto& targets = same_file.empty() ? candidates : same_file;
            for (const auto* c : targets) graph.edges.insert({f.id, c->id});
        }
    }

    std::sort(graph.unresolved_calls.begin(), graph.unresolved_calls.end());
    return graph;
}

std::vector<const FunctionRecord*> callees_of(const CallGraph& graph,
                                              const FunctionStore& store,
                                              const std::string& id,
                                              int depth) {
    if (graph.nodes.count(id) == 0) throw corpus_error("unknown function id: " + id);
    std::vector<const FunctionRecord*> result;
    if (depth <= 0) return result;

    std::set<std::string> visited{id};
    std::vector<std::string> frontier{id};
    for (int hop = 0; hop < depth && !frontier.empty(); ++hop) {
        std::vector<std::string> next;
        for (const auto& from : frontier) {
            auto lo = graph.edges.lower_bound({from, ""});
            for (auto it = lo; it != graph.edges.end() && it->first == from; ++it) {
                if (!visited.insert(it->second).second) continue;
                next.push_back(it->second);
                if (const FunctionRecord* rec = store.by_id(it->second)) {
                    result.push_back(rec);
                }
            }
        }
        frontier = std::move(next);
    }
    return result;
}

} // namespace memanno
