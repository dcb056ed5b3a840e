#include "memanno/leakcheck.hpp"

#include <algorithm>
#include <cstdint>
#include <exception>
#include <numeric>
#include <set>
#include <sstream>

#include "memanno/errors.hpp"
#include "memanno/lexer.hpp"
#include "memanno/util.hpp"

namespace memanno {

using lex::TokKind;
using lex::Token;

const char* to_string(LeakReason reason) {
    switch (reason) {
        case LeakReason::NeverFreed: return "NeverFreed";
        case LeakReason::MayNotBeFreed: return "MayNotBeFreed";
    }
    return "?";
}

BuiltinTable load_builtins(const std::string& path) {
    const std::string text = read_file(path);
    nlohmann::json doc = nlohmann::json::parse(text, nullptr, false);
    if (doc.is_discarded() || !doc.is_object())
        throw corpus_error("builtin table is not a JSON object: " + path);
    BuiltinTable table;
    if (doc.contains("allocators")) {
        if (!doc["allocators"].is_array())
            throw corpus_error("builtin allocators must be an array: " + path);
        for (const auto& item : doc["allocators"]) {
            if (!item.is_string())
                throw corpus_error("builtin allocator names must be strings: " + path);
            table.allocators.push_back(item.get<std::string>());
        }
    }
    if (doc.contains("free_functions")) {
        if (!doc["free_functions"].is_array())
            throw corpus_error("builtin free_functions must be an array: " + path);
        for (const auto& item : doc["free_functions"]) {
            if (!item.is_object() || !item.contains("name") || !item["name"].is_string())
                throw corpus_error("builtin free entries need a string name: " + path);
            BuiltinFree fn;
            fn.name = item["name"].get<std::string>();
            if (item.contains("param_index")) {
                if (!item["param_index"].is_number_integer() || item["param_index"].get<int>() < 1)
                    throw corpus_error("builtin free param_index must be a positive integer: " +
                                       path);
                fn.param_index = item["param_index"].get<int>();
            }
            table.free_functions.push_back(std::move(fn));
        }
    }
    return table;
}

namespace {

struct Lookup {
    std::set<std::string> allocators;                        // return-value allocators
    std::map<std::string, std::vector<int>> sink_positions;  // callee -> freeing arg positions
};

Lookup build_lookup(const AnnotationSet& annotations, const BuiltinTable& builtins) {
    Lookup lk;
    for (const std::string& name : builtins.allocators) lk.allocators.insert(name);
    for (const BuiltinFree& fn : builtins.free_functions)
        lk.sink_positions[fn.name].push_back(fn.param_index);
    for (const auto& [name, ann] : annotations.functions) {
        for (const AnnotationEntry& entry : ann.entries) {
            if (entry.kind == AnnKind::AllocSource && entry.is_return())
                lk.allocators.insert(name);
            if (entry.kind == AnnKind::FreeSink && entry.slot >= 1)
                lk.sink_positions[name].push_back(entry.slot);
        }
    }
    for (auto& [name, positions] : lk.sink_positions) {
        std::sort(positions.begin(), positions.end());
        positions.erase(std::unique(positions.begin(), positions.end()), positions.end());
    }
    return lk;
}

constexpr std::size_t npos = static_cast<std::size_t>(-1);

std::size_t match_paren(const std::vector<Token>& toks, std::size_t open) {
    int depth = 0;
    for (std::size_t i = open; i < toks.size(); ++i) {
        if (toks[i].kind != TokKind::Punct) continue;
        if (toks[i].text == "(") ++depth;
        if (toks[i].text == ")" && --depth == 0) return i;
    }
    return npos;
}

bool is_punct(const Token& tok, const char* text) {
    return tok.kind == TokKind::Punct && tok.text == text;
}

/// Branch regions (if/else/loop/switch bodies, braced or single-statement)
/// enclosing each token, as region-id lists in nesting order.
std::vector<std::vector<int>> branch_sets(const std::vector<Token>& toks) {
    struct Block {
        bool brace;
        bool branch;
    };
    std::vector<std::vector<int>> sets(toks.size());
    std::vector<Block> stack;
    std::vector<int> current;
    int next_id = 1;
    int paren_depth = 0;
    bool armed = false;          // a branch header just ended; next token is its body
    bool header_active = false;  // inside the header parens of if/for/while/switch

    auto open_region = [&](bool brace) {
        stack.push_back({brace, true});
        current.push_back(next_id++);
    };
    auto close_statement_regions = [&]() {
        while (!stack.empty() && !stack.back().brace) {
            current.pop_back();
            stack.pop_back();
        }
    };

    for (std::size_t i = 0; i < toks.size(); ++i) {
        const Token& tok = toks[i];
        bool brace_handled = false;

        if (armed) {
            armed = false;
            if (is_punct(tok, "{")) {
                open_region(true);
                brace_handled = true;
            } else if (!is_punct(tok, ";")) {
                open_region(false);
            }
        }

        sets[i] = current;

        if (tok.kind == TokKind::Punct) {
            if (tok.text == "(") {
                ++paren_depth;
            } else if (tok.text == ")") {
                if (paren_depth > 0) --paren_depth;
                if (header_active && paren_depth == 0) {
                    header_active = false;
                    armed = true;
                }
            } else if (tok.text == "{" && !brace_handled) {
                stack.push_back({true, false});
            } else if (tok.text == "}") {
                close_statement_regions();
                if (!stack.empty()) {
                    if (stack.back().branch) current.pop_back();
                    stack.pop_back();
                }
                close_statement_regions();  // a braced branch body ends its statement
            } else if (tok.text == ";" && paren_depth == 0) {
                close_statement_regions();
            }
        } else if (tok.kind == TokKind::Identifier && paren_depth == 0) {
            if (tok.text == "if" || tok.text == "for" || tok.text == "while" ||
                tok.text == "switch") {
                header_active = true;
            } else if (tok.text == "else") {
                if (i + 1 >= toks.size() || toks[i + 1].text != "if") armed = true;
            } else if (tok.text == "do") {
                armed = true;
            }
        }
    }
    return sets;
}

bool region_subset(const std::vector<int>& inner, const std::vector<int>& outer) {
    for (int id : inner)
        if (std::find(outer.begin(), outer.end(), id) == outer.end()) return false;
    return true;
}

/// Top-level argument token ranges between an open paren and its match.
std::vector<std::pair<std::size_t, std::size_t>> argument_ranges(const std::vector<Token>& toks,
                                                                 std::size_t open,
                                                                 std::size_t close) {
    std::vector<std::pair<std::size_t, std::size_t>> args;
    if (close <= open + 1) return args;
    int depth = 0;
    std::size_t begin = open + 1;
    for (std::size_t i = open + 1; i < close; ++i) {
        if (toks[i].kind != TokKind::Punct) continue;
        if (toks[i].text == "(" || toks[i].text == "[") ++depth;
        if (toks[i].text == ")" || toks[i].text == "]") --depth;
        if (toks[i].text == "," && depth == 0) {
            args.emplace_back(begin, i);
            begin = i + 1;
        }
    }
    args.emplace_back(begin, close);
    return args;
}

/// True when the argument is (modulo casts/parens) just the variable itself.
bool argument_is_variable(const std::vector<Token>& toks, std::size_t begin, std::size_t end,
                          const std::string& var) {
    std::string last_ident;
    for (std::size_t i = begin; i < end; ++i) {
        const Token& tok = toks[i];
        if (tok.kind == TokKind::Punct &&
            (tok.text == "." || tok.text == "->" || tok.text == "[")) return false;
        if (tok.kind == TokKind::Identifier && !lex::is_keyword(tok.text)) last_ident = tok.text;
    }
    return !last_ident.empty() && last_ident == var;
}

std::size_t statement_end(const std::vector<Token>& toks, std::size_t from) {
    int depth = 0;
    for (std::size_t i = from; i < toks.size(); ++i) {
        if (toks[i].kind != TokKind::Punct) continue;
        if (toks[i].text == "(") ++depth;
        if (toks[i].text == ")") --depth;
        if (toks[i].text == ";" && depth <= 0) return i;
    }
    return toks.size();
}

struct AllocSite {
    std::string var;
    std::string callee;
    int line = 0;
    std::size_t after = 0;  // first token index past the allocating statement
    std::vector<int> region;
};

std::vector<AllocSite> find_alloc_sites(const std::vector<Token>& toks,
                                        const std::vector<std::vector<int>>& sets,
                                        const Lookup& lk, int first_line) {
    std::vector<AllocSite> sites;
    for (std::size_t i = 0; i + 3 < toks.size(); ++i) {
        if (toks[i].kind != TokKind::Identifier || lex::is_keyword(toks[i].text)) continue;
        if (!is_punct(toks[i + 1], "=")) continue;
        std::size_t j = i + 2;
        if (is_punct(toks[j], "(")) {  // skip one cast group
            std::size_t close = match_paren(toks, j);
            if (close == npos || close + 2 >= toks.size()) continue;
            if (toks[close + 1].kind != TokKind::Identifier || !is_punct(toks[close + 2], "("))
                continue;
            j = close + 1;
        }
        if (j + 1 >= toks.size()) continue;
        if (toks[j].kind != TokKind::Identifier || !is_punct(toks[j + 1], "(")) continue;
        if (lk.allocators.count(toks[j].text) == 0) continue;
        const std::size_t call_close = match_paren(toks, j + 1);
        if (call_close == npos) continue;
        AllocSite site;
        site.var = toks[i].text;
        site.callee = toks[j].text;
        site.line = first_line + toks[i].line - 1;
        site.after = statement_end(toks, call_close) + 1;
        site.region = sets[i];
        sites.push_back(std::move(site));
    }
    return sites;
}

std::size_t lhs_start(const std::vector<Token>& toks, std::size_t assign) {
    std::size_t i = assign;
    while (i > 0) {
        const Token& tok = toks[i - 1];
        if (tok.kind == TokKind::Punct &&
            (tok.text == ";" || tok.text == "{" || tok.text == "}" || tok.text == "(" ||
             tok.text == ")" || tok.text == ","))
            break;
        --i;
    }
    return i;
}

}  // namespace

std::vector<LeakWarning> check_function(const FunctionRecord& function,
                                        const AnnotationSet& annotations,
                                        const BuiltinTable& builtins) {
    std::vector<LeakWarning> warnings;
    if (!function.is_definition || function.body.empty()) return warnings;
    const Lookup lk = build_lookup(annotations, builtins);
    const std::vector<Token> toks = lex::tokenize(function.body);
    const std::vector<std::vector<int>> sets = branch_sets(toks);

    for (const AllocSite& site : find_alloc_sites(toks, sets, lk, function.start_line)) {
        bool unconditional_free = false;
        bool conditional_free = false;
        bool escaped = false;
        for (std::size_t k = site.after; k < toks.size(); ++k) {
            const Token& tok = toks[k];
            if (tok.kind == TokKind::Identifier && tok.text == "return") {
                const std::size_t end = statement_end(toks, k);
                for (std::size_t m = k + 1; m < end; ++m)
                    if (toks[m].kind == TokKind::Identifier && toks[m].text == site.var)
                        escaped = true;
                k = end;
                continue;
            }
            if (tok.kind == TokKind::Identifier && !lex::is_keyword(tok.text) &&
                k + 1 < toks.size() && is_punct(toks[k + 1], "(")) {
                auto sink = lk.sink_positions.find(tok.text);
                if (sink != lk.sink_positions.end()) {
                    const std::size_t close = match_paren(toks, k + 1);
                    if (close != npos) {
                        const auto args = argument_ranges(toks, k + 1, close);
                        for (int pos : sink->second) {
                            if (pos < 1 || static_cast<std::size_t>(pos) > args.size()) continue;
                            const auto& [begin, end] = args[static_cast<std::size_t>(pos) - 1];
                            if (!argument_is_variable(toks, begin, end, site.var)) continue;
                            if (region_subset(sets[k], site.region))
                                unconditional_free = true;
                            else
                                conditional_free = true;
                        }
                    }
                }
                continue;
            }
            if (is_punct(tok, "=")) {
                bool lhs_indirect = false;
                for (std::size_t m = lhs_start(toks, k); m < k; ++m)
                    if (toks[m].kind == TokKind::Punct &&
                        (toks[m].text == "." || toks[m].text == "->" || toks[m].text == "["))
                        lhs_indirect = true;
                if (!lhs_indirect) continue;
                const std::size_t end = statement_end(toks, k);
                for (std::size_t m = k + 1; m < end; ++m)
                    if (toks[m].kind == TokKind::Identifier && toks[m].text == site.var)
                        escaped = true;
            }
        }
        if (unconditional_free || escaped) continue;
        LeakWarning warning;
        warning.function_id = function.id;
        warning.variable = site.var;
        warning.alloc_line = site.line;
        warning.alloc_callee = site.callee;
        warning.reason = conditional_free ? LeakReason::MayNotBeFreed : LeakReason::NeverFreed;
        warnings.push_back(std::move(warning));
    }
    std::sort(warnings.begin(), warnings.end(), [](const LeakWarning& a, const LeakWarning& b) {
        return std::tie(a.alloc_line, a.variable) < std::tie(b.alloc_line, b.variable);
    });
    return warnings;
}

namespace {

std::string annotations_identity(const AnnotationSet& annotations) {
    std::string label = annotations.metadata.generator.empty() ? "unannotated"
                                                               : annotations.metadata.generator;
    if (!annotations.metadata.model.empty()) label += "+" + annotations.metadata.model;
    return label + "#" + fnv1a64_hex(annotation_set_to_json(annotations).dump());
}

CheckReport assemble(const std::vector<const FunctionRecord*>& order,
                     std::vector<std::vector<LeakWarning>>&& results,
                     const AnnotationSet& annotations) {
    CheckReport report;
    report.annotations_id = annotations_identity(annotations);
    for (std::size_t i = 0; i < order.size(); ++i) {
        if (!results[i].empty())
            report.per_function[order[i]->id] = static_cast<int>(results[i].size());
        for (LeakWarning& warning : results[i]) report.warnings.push_back(std::move(warning));
    }
    return report;
}

std::vector<const FunctionRecord*> check_order(const std::vector<FunctionRecord>& functions) {
    std::vector<const FunctionRecord*> order;
    order.reserve(functions.size());
    for (const FunctionRecord& fn : functions) order.push_back(&fn);
    std::sort(order.begin(), order.end(), [](const FunctionRecord* a, const FunctionRecord* b) {
        return std::tie(a->file, a->start_line, a->name) <
               std::tie(b->file, b->start_line, b->name);
    });
    return order;
}

}  // namespace

CheckReport check_corpus(const std::vector<FunctionRecord>& functions,
                         const AnnotationSet& annotations, const BuiltinTable& builtins) {
    const auto order = check_order(functions);
    std::vector<std::vector<LeakWarning>> results(order.size());
    std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(order.size()); ++i) {
        try {
            results[static_cast<std::size_t>(i)] =
                check_function(*order[static_cast<std::size_t>(i)], annotations, builtins);
        } catch (...) {
#pragma omp critical(memanno_leakcheck_fatal)
            if (!failure) failure = std::current_exception();
        }
    }
    if (failure) std::rethrow_exception(failure);
    return assemble(order, std::move(results), annotations);
}

CheckReport check_corpus_serial(const std::vector<FunctionRecord>& functions,
                                const AnnotationSet& annotations, const BuiltinTable& builtins) {
    const auto order = check_order(functions);
    std::vector<std::vector<LeakWarning>> results(order.size());
    for (std::size_t i = 0; i < order.size(); ++i)
        results[i] = check_function(*order[i], annotations, builtins);
    return assemble(order, std::move(results), annotations);
}

std::string check_report_to_text(const CheckReport& report) {
    std::ostringstream out;
    out << "annotations " << report.annotations_id << "\n";
    out << "warnings " << report.warnings.size() << "\n";
    for (const LeakWarning& warning : report.warnings) {
        out << "  " << warning.function_id << " line " << warning.alloc_line << ": "
            << warning.variable << " = " << warning.alloc_callee << "(...) "
            << to_string(warning.reason) << "\n";
    }
    return out.str();
}

nlohmann::json check_report_to_json(const CheckReport& report) {
    nlohmann::json doc;
    doc["annotations"] = report.annotations_id;
    doc["total"] = report.warnings.size();
    nlohmann::json rows = nlohmann::json::array();
    for (const LeakWarning& warning : report.warnings) {
        nlohmann::json row;
        row["function_id"] = warning.function_id;
        row["variable"] = warning.variable;
        row["alloc_line"] = warning.alloc_line;
        row["alloc_callee"] = warning.alloc_callee;
        row["reason"] = to_string(warning.reason);
        rows.push_back(std::move(row));
    }
    doc["warnings"] = rows;
    nlohmann::json per = nlohmann::json::object();
    for (const auto& [id, count] : report.per_function) per[id] = count;
    doc["per_function"] = per;
    return doc;
}

}  // namespace memanno
