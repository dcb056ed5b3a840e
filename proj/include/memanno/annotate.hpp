#pragma once

#include <compare>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "memanno/ingest.hpp"
#include "memanno/llm.hpp"
#include "memanno/prompts.hpp"

namespace memanno {

enum class AnnKind { AllocSource, FreeSink };

std::string to_string(AnnKind kind);

/// One positional annotation: slot 0 is the return value, slots 1..arity are
/// parameters. The qualifier is the trailing integer in `AllocSource::1` /
/// `FreeSink::3`.
struct AnnotationEntry {
    int slot = 0;
    AnnKind kind = AnnKind::AllocSource;
    int qualifier = 1;

    bool is_return() const { return slot == 0; }
    auto operator<=>(const AnnotationEntry&) const = default;
};

enum class Provenance { LLM, LLMPostFiltered, NameHeuristic, Manual };

std::string to_string(Provenance provenance);

struct FunctionAnnotation {
    std::string function_id;
    std::string name;
    int arity = 0;
    std::vector<AnnotationEntry> entries; // sorted; one kind per slot
    Provenance provenance = Provenance::LLM;

    bool operator==(const FunctionAnnotation&) const = default;
};

/// Sorts entries and enforces the slot rules: indices within 0..arity and
/// never two kinds on one slot. Throws a corpus error on violation.
void normalize_annotation(FunctionAnnotation& annotation);

struct SetMetadata {
    std::string generator; // "llm", "llm+postfilter", "name-heuristic", "manual"
    std::string model;
    std::string timestamp; // empty unless explicitly stamped, for reproducible output

    bool operator==(const SetMetadata&) const = default;
};

struct AnnotationSet {
    SetMetadata metadata;
    std::map<std::string, FunctionAnnotation> functions; // keyed by function name
    /// Per-function notes from generation (parse failures, conflicts).
    /// Not serialized.
    std::vector<std::string> diagnostics;
};

struct AnnotateOptions {
    int context_depth = 1;
    bool post_filter = false;
    int alloc_qualifier = 1;
    int free_qualifier = 3;
    std::string timestamp;
    std::set<std::string> typedef_aggregates;
};

/// Places parsed findings onto slots: an allocated variable that the body
/// returns goes to the return slot; an allocated parameter written through
/// (`*p = ...`) or a deallocated parameter goes to that parameter's slot.
/// Variables matching neither pattern are internal and produce nothing.
FunctionAnnotation map_findings_to_annotations(const FunctionRecord& function,
                                               const AllocationFindings& findings,
                                               const AnnotateOptions& options,
                                               std::vector<std::string>* diagnostics = nullptr);

/// Follow-up validation pass for functions marked as allocating through
/// their return value: asks the model whether the returned pointer merely
/// aliases into a structure argument, and removes the return-slot
/// AllocSource when the answer is yes. Never adds entries, never touches
/// FreeSink entries.
FunctionAnnotation post_filter(const FunctionAnnotation& annotation,
                               const FunctionRecord& function,
                               const std::vector<const FunctionRecord*>& callees,
                               LlmClient& client,
                               const PromptTemplates& templates,
                               const std::set<std::string>& typedef_aggregates,
                               std::vector<std::string>* diagnostics = nullptr);

/// Signature-only allocator test: "alloc" in the name, pointer return type,
/// and exactly one unsigned-integer parameter.
bool codeql_name_heuristic(const FunctionRecord& function);

/// Full generation pass over a corpus: render, complete, parse, map, and
/// optionally post-filter each function. Functions whose completion cannot
/// be parsed are skipped with a diagnostic; backend configuration failures
/// propagate.
AnnotationSet annotate_corpus(const std::vector<FunctionRecord>& functions,
                              const CallGraph& graph,
                              LlmClient& client,
                              const PromptTemplates& templates,
                              const AnnotateOptions& options);

/// Annotation set produced by the name heuristic alone (no model calls).
AnnotationSet annotate_with_heuristic(const std::vector<FunctionRecord>& functions,
                                      const AnnotateOptions& options);

nlohmann::json annotation_set_to_json(const AnnotationSet& set);
AnnotationSet annotation_set_from_json(const nlohmann::json& doc);
void save_annotation_set(const AnnotationSet& set, const std::filesystem::path& path);
AnnotationSet load_annotation_set(const std::filesystem::path& path);

} // namespace memanno
