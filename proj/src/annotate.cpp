#include "memanno/annotate.hpp"

#include <algorithm>
#include <exception>
#include <set>

#include "memanno/errors.hpp"
#include "memanno/lexer.hpp"
#include "memanno/util.hpp"

namespace memanno {

using lex::TokKind;
using lex::Token;
using lex::is_keyword;
using lex::tokenize;

namespace {

/// Identifiers appearing as `return x;` or `return (x);` in the body.
std::set<std::string> returned_identifiers(const std::string& body) {
    std::set<std::string> out;
    auto toks = tokenize(body);
    for (size_t i = 0; i + 1 < toks.size(); ++i) {
        if (toks[i].text != "return") continue;
        if (toks[i + 1].kind == TokKind::Identifier && i + 2 < toks.size() &&
            toks[i + 2].text == ";") {
            out.insert(toks[i + 1].text);
        } else if (toks[i + 1].text == "(" && i + 4 < toks.size() &&
                   toks[i + 2].kind == TokKind::Identifier && toks[i + 3].text == ")" &&
                   toks[i + 4].text == ";") {
            out.insert(toks[i + 2].text);
        }
    }
    return out;
}

/// True when the body writes through the pointer parameter: `*name = ...`.
bool deref_assigned(const std::vector<Token>& toks, const std::string& name) {
    for (size_t i = 0; i + 2 < toks.size(); ++i) {
        if (toks[i].text == "*" && toks[i + 1].text == name && toks[i + 2].text == "=") {
            return true;
        }
    }
    return false;
}

int param_index_of(const FunctionRecord& function, const std::string& name) {
    for (size_t i = 0; i < function.params.size(); ++i) {
        if (function.params[i].name == name) return static_cast<int>(i) + 1;
    }
    return 0;
}

/// The aggregate name a pointer parameter passes by reference, if any:
/// `struct pool *` yields "pool", a typedef'd aggregate pointer yields the
/// typedef name. Non-pointer and non-aggregate parameters yield "".
std::string struct_pointer_name(const Param& param,
                                const std::set<std::string>& typedef_aggregates) {
    if (param.type_text.find('*') == std::string::npos) return "";
    auto toks = tokenize(param.type_text);
    for (size_t i = 0; i < toks.size(); ++i) {
        if ((toks[i].text == "struct" || toks[i].text == "union") && i + 1 < toks.size() &&
            toks[i + 1].kind == TokKind::Identifier) {
            return toks[i + 1].text;
        }
        if (toks[i].kind == TokKind::Identifier && typedef_aggregates.count(toks[i].text)) {
            return toks[i].text;
        }
    }
    return "";
}

const std::set<std::string>& unsigned_int_types() {
    static const std::set<std::string> types = {
        "size_t", "unsigned", "unsigned int", "unsigned long", "unsigned long long",
        "uint8_t", "uint16_t", "uint32_t", "uint64_t", "uintptr_t",
    };
    return types;
}

std::string strip_cv(const std::string& type_text) {
    auto toks = tokenize(type_text);
    std::vector<std::string> kept;
    for (const auto& t : toks) {
        if (t.text == "const" || t.text == "volatile") continue;
        kept.push_back(t.text);
    }
    return join(kept, " ");
}

void insert_annotation(AnnotationSet& set, FunctionAnnotation annotation) {
    if (annotation.entries.empty()) return;
    auto [it, inserted] = set.functions.emplace(annotation.name, annotation);
    if (!inserted && !(it->second == annotation)) {
        set.diagnostics.push_back("duplicate function name '" + annotation.name +
                                  "' (" + it->second.function_id + " kept, " +
                                  annotation.function_id + " dropped)");
    }
}

} // namespace

std::string to_string(AnnKind kind) {
    return kind == AnnKind::AllocSource ? "AllocSource" : "FreeSink";
}

std::string to_string(Provenance provenance) {
    switch (provenance) {
    case Provenance::LLM: return "LLM";
    case Provenance::LLMPostFiltered: return "LLMPostFiltered";
    case Provenance::NameHeuristic: return "NameHeuristic";
    case Provenance::Manual: return "Manual";
    }
    return "LLM";
}

void normalize_annotation(FunctionAnnotation& annotation) {
    std::sort(annotation.entries.begin(), annotation.entries.end());
    annotation.entries.erase(
        std::unique(annotation.entries.begin(), annotation.entries.end()),
        annotation.entries.end());
    for (const auto& entry : annotation.entries) {
        if (entry.slot < 0 || entry.slot > annotation.arity) {
            throw corpus_error("annotation for '" + annotation.name + "' names slot " +
                               std::to_string(entry.slot) + " beyond arity " +
                               std::to_string(annotation.arity));
        }
        if (entry.qualifier < 1) {
            throw corpus_error("annotation for '" + annotation.name +
                               "' has a non-positive qualifier");
        }
    }
    for (size_t i = 1; i < annotation.entries.size(); ++i) {
        if (annotation.entries[i].slot == annotation.entries[i - 1].slot) {
            throw corpus_error("annotation for '" + annotation.name +
                               "' carries two kinds on slot " +
                               std::to_string(annotation.entries[i].slot));
        }
    }
}

FunctionAnnotation map_findings_to_annotations(const FunctionRecord& function,
                                               const AllocationFindings& findings,
                                               const AnnotateOptions& options,
                                               std::vector<std::string>* diagnostics) {
    FunctionAnnotation annotation;
    annotation.function_id = function.id;
    annotation.name = function.name;
    annotation.arity = static_cast<int>(function.params.size());
    annotation.provenance = Provenance::LLM;

    auto returned = returned_identifiers(function.body);
    auto body_toks = tokenize(function.body);

    std::map<int, std::set<AnnKind>> kinds_per_slot;
    auto propose = [&](int slot, AnnKind kind, int qualifier) {
        kinds_per_slot[slot].insert(kind);
        AnnotationEntry entry{slot, kind, qualifier};
        if (std::find(annotation.entries.begin(), annotation.entries.end(), entry) ==
            annotation.entries.end()) {
            annotation.entries.push_back(entry);
        }
    };

    for (const auto& var : findings.allocated_variables) {
        if (returned.count(var)) {
            propose(0, AnnKind::AllocSource, options.alloc_qualifier);
        } else if (int idx = param_index_of(function, var); idx > 0) {
            if (deref_assigned(body_toks, var)) {
                propose(idx, AnnKind::AllocSource, options.alloc_qualifier);
            }
        }
        // Neither returned nor a parameter: an internal allocation that does
        // not escape through the signature; nothing to annotate.
    }

    for (const auto& var : findings.deallocated_variables) {
        if (int idx = param_index_of(function, var); idx > 0) {
            propose(idx, AnnKind::FreeSink, options.free_qualifier);
        }
    }

    for (const auto& [slot, kinds] : kinds_per_slot) {
        if (kinds.size() > 1) {
            std::erase_if(annotation.entries,
                          [slot = slot](const AnnotationEntry& e) { return e.slot == slot; });
            if (diagnostics) {
                diagnostics->push_back(function.name + ": model reported slot " +
                                       std::to_string(slot) +
                                       " as both allocating and freeing; both dropped");
            }
        }
    }

    normalize_annotation(annotation);
    return annotation;
}

FunctionAnnotation post_filter(const FunctionAnnotation& annotation,
                               const FunctionRecord& function,
                               const std::vector<const FunctionRecord*>& callees,
                               LlmClient& client,
                               const PromptTemplates& templates,
                               const std::set<std::string>& typedef_aggregates,
                               std::vector<std::string>* diagnostics) {
    bool has_return_alloc =
        std::any_of(annotation.entries.begin(), annotation.entries.end(),
                    [](const AnnotationEntry& e) {
                        return e.is_return() && e.kind == AnnKind::AllocSource;
                    });

    std::vector<std::pair<std::string, std::string>> struct_params; // (structure, variable)
    for (const auto& param : function.params) {
        std::string structure = struct_pointer_name(param, typedef_aggregates);
        if (!structure.empty() && !param.name.empty()) {
            struct_params.emplace_back(structure, param.name);
        }
    }

    if (!has_return_alloc || struct_params.empty()) {
        return annotation; // guard not triggered: identity
    }

    FunctionAnnotation filtered = annotation;
    filtered.provenance = Provenance::LLMPostFiltered;

    for (const auto& [structure, variable] : struct_params) {
        auto prompt = render_postfilter_prompt(templates, function, callees, structure, variable);
        RawCompletion raw;
        try {
            raw = client.complete(prompt);
        } catch (const Error& e) {
            if (diagnostics) {
                diagnostics->push_back(function.name +
                                       ": post-filter query failed, annotation kept (" +
                                       e.what() + ")");
            }
            return annotation;
        }
        auto verdict = parse_postfilter_response(raw);
        if (verdict.points_into_argument == Verdict::Yes) {
            std::erase_if(filtered.entries, [](const AnnotationEntry& e) {
                return e.is_return() && e.kind == AnnKind::AllocSource;
            });
            break;
        }
    }
    return filtered;
}

bool codeql_name_heuristic(const FunctionRecord& function) {
    if (!contains_ci(function.name, "alloc")) return false;
    if (function.return_type_text.find('*') == std::string::npos) return false;
    if (function.params.size() != 1) return false;
    return unsigned_int_types().count(strip_cv(function.params[0].type_text)) > 0;
}

AnnotationSet annotate_corpus(const std::vector<FunctionRecord>& functions,
                              const CallGraph& graph,
                              LlmClient& client,
                              const PromptTemplates& templates,
                              const AnnotateOptions& options) {
    AnnotationSet set;
    set.metadata.generator = options.post_filter ? "llm+postfilter" : "llm";
    set.metadata.model = client.config().model_name;
    set.metadata.timestamp = options.timestamp;

    FunctionStore store(functions);
    const auto& ordered = store.all();
    std::int64_t count = static_cast<std::int64_t>(ordered.size());

    std::vector<FunctionAnnotation> results(ordered.size());
    std::vector<std::vector<std::string>> notes(ordered.size());
    std::exception_ptr fatal;

#pragma omp parallel for schedule(dynamic)
    for (std::int64_t i = 0; i < count; ++i) {
        bool skip = false;
#pragma omp critical(memanno_annotate_fatal)
        skip = (fatal != nullptr);
        if (skip) continue;

        const FunctionRecord& function = ordered[static_cast<size_t>(i)];
        auto& diags = notes[static_cast<size_t>(i)];
        try {
            auto callees = callees_of(graph, store, function.id, options.context_depth);
            auto prompt = render_initial_prompt(templates, function, callees);
            RawCompletion raw = client.complete(prompt);

            AllocationFindings findings;
            try {
                findings = parse_allocation_response(raw);
            } catch (const Error& e) {
                diags.push_back(function.name + ": completion unusable, skipped (" +
                                e.what() + ")");
                continue;
            }

            auto annotation = map_findings_to_annotations(function, findings, options, &diags);
            if (options.post_filter && !annotation.entries.empty()) {
                annotation = post_filter(annotation, function, callees, client, templates,
                                         options.typedef_aggregates, &diags);
            }
            results[static_cast<size_t>(i)] = std::move(annotation);
        } catch (...) {
#pragma omp critical(memanno_annotate_fatal)
            if (fatal == nullptr) fatal = std::current_exception();
        }
    }

    if (fatal) std::rethrow_exception(fatal);

    for (size_t i = 0; i < results.size(); ++i) {
        for (auto& d : notes[i]) set.diagnostics.push_back(std::move(d));
        insert_annotation(set, std::move(results[i]));
    }
    return set;
}

AnnotationSet annotate_with_heuristic(const std::vector<FunctionRecord>& functions,
                                      const AnnotateOptions& options) {
    AnnotationSet set;
    set.metadata.generator = "name-heuristic";
    set.metadata.timestamp = options.timestamp;

    for (const auto& function : functions) {
        if (!codeql_name_heuristic(function)) continue;
        FunctionAnnotation annotation;
        annotation.function_id = function.id;
        annotation.name = function.name;
        annotation.arity = static_cast<int>(function.params.size());
        annotation.provenance = Provenance::NameHeuristic;
        annotation.entries.push_back({0, AnnKind::AllocSource, options.alloc_qualifier});
        insert_annotation(set, std::move(annotation));
    }
    return set;
}

namespace {

std::string slot_to_string(int slot) {
    if (slot == 0) return "Return";
    return "Param(" + std::to_string(slot) + ")";
}

int slot_from_string(const std::string& text) {
    if (text == "Return") return 0;
    if (text.rfind("Param(", 0) == 0 && text.back() == ')') {
        try {
            int idx = std::stoi(text.substr(6, text.size() - 7));
            if (idx >= 1) return idx;
        } catch (const std::exception&) {
        }
    }
    throw corpus_error("unknown annotation slot: " + text);
}

AnnKind kind_from_string(const std::string& text) {
    if (text == "AllocSource") return AnnKind::AllocSource;
    if (text == "FreeSink") return AnnKind::FreeSink;
    throw corpus_error("unknown annotation kind: " + text);
}

Provenance provenance_from_string(const std::string& text) {
    if (text == "LLM") return Provenance::LLM;
    if (text == "LLMPostFiltered") return Provenance::LLMPostFiltered;
    if (text == "NameHeuristic") return Provenance::NameHeuristic;
    if (text == "Manual") return Provenance::Manual;
    throw corpus_error("unknown provenance: " + text);
}

} // namespace

nlohmann::json annotation_set_to_json(const AnnotationSet& set) {
    nlohmann::json functions = nlohmann::json::object();
    for (const auto& [name, annotation] : set.functions) {
        nlohmann::json entries = nlohmann::json::array();
        for (const auto& entry : annotation.entries) {
            entries.push_back({
                {"slot", slot_to_string(entry.slot)},
                {"kind", to_string(entry.kind)},
                {"qualifier", entry.qualifier},
            });
        }
        functions[name] = {
            {"function_id", annotation.function_id},
            {"arity", annotation.arity},
            {"entries", std::move(entries)},
            {"provenance", to_string(annotation.provenance)},
        };
    }
    return nlohmann::json{
        {"metadata",
         {{"generator", set.metadata.generator},
          {"model", set.metadata.model},
          {"timestamp", set.metadata.timestamp}}},
        {"functions", std::move(functions)},
    };
}

AnnotationSet annotation_set_from_json(const nlohmann::json& doc) {
    if (!doc.is_object() || !doc.contains("functions") || !doc["functions"].is_object()) {
        throw corpus_error("annotation document must contain a \"functions\" object");
    }

    AnnotationSet set;
    if (doc.contains("metadata") && doc["metadata"].is_object()) {
        const auto& meta = doc["metadata"];
        set.metadata.generator = meta.value("generator", "");
        set.metadata.model = meta.value("model", "");
        set.metadata.timestamp = meta.value("timestamp", "");
    }

    for (const auto& [name, body] : doc["functions"].items()) {
        if (!body.is_object()) {
            throw corpus_error("annotation for '" + name + "' must be an object");
        }
        FunctionAnnotation annotation;
        annotation.name = name;
        annotation.function_id = body.value("function_id", "");
        annotation.provenance = provenance_from_string(body.value("provenance", "Manual"));

        if (!body.contains("arity") || !body["arity"].is_number_integer() ||
            body["arity"].get<int>() < 0) {
            throw corpus_error("annotation for '" + name + "' needs a non-negative arity");
        }
        annotation.arity = body["arity"].get<int>();

        if (!body.contains("entries") || !body["entries"].is_array()) {
            throw corpus_error("annotation for '" + name + "' needs an entries array");
        }
        for (const auto& item : body["entries"]) {
            if (!item.is_object() || !item.contains("slot") || !item.contains("kind")) {
                throw corpus_error("annotation entry for '" + name +
                                   "' needs slot and kind fields");
            }
            AnnotationEntry entry;
            entry.slot = slot_from_string(item["slot"].get<std::string>());
            entry.kind = kind_from_string(item["kind"].get<std::string>());
            entry.qualifier = item.value("qualifier",
                                         entry.kind == AnnKind::AllocSource ? 1 : 3);
            annotation.entries.push_back(entry);
        }
        normalize_annotation(annotation);
        if (annotation.entries.empty()) continue; // unannotated = absent
        set.functions.emplace(name, std::move(annotation));
    }
    return set;
}

void save_annotation_set(const AnnotationSet& set, const std::filesystem::path& path) {
    write_file_atomic(path, annotation_set_to_json(set).dump(2) + "\n");
}

AnnotationSet load_annotation_set(const std::filesystem::path& path) {
    auto doc = nlohmann::json::parse(read_file(path), nullptr, false);
    if (doc.is_discarded()) {
        throw corpus_error("annotation file is not valid JSON: " + path.string());
    }
    return annotation_set_from_json(doc);
}

} // namespace memanno
