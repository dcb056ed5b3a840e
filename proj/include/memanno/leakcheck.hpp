#pragma once

#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "memanno/annotate.hpp"
#include "memanno/ingest.hpp"

namespace memanno {

enum class LeakReason { NeverFreed, MayNotBeFreed };
const char* to_string(LeakReason reason);

struct LeakWarning {
    std::string function_id;
    std::string variable;
    int alloc_line = 0;        // absolute line of the allocation in its file
    std::string alloc_callee;
    LeakReason reason = LeakReason::NeverFreed;
    bool operator==(const LeakWarning&) const = default;
};

struct BuiltinFree {
    std::string name;
    int param_index = 1;  // 1-based argument position that gets freed
};

/// Allocator/free knowledge the checker has without any annotations.
struct BuiltinTable {
    std::vector<std::string> allocators;
    std::vector<BuiltinFree> free_functions;
};

/// Load a builtin table from JSON: {"allocators": [...], "free_functions":
/// [{"name": ..., "param_index": ...}]}.
BuiltinTable load_builtins(const std::string& path);

struct CheckReport {
    std::vector<LeakWarning> warnings;        // ordered (file, line, variable)
    std::map<std::string, int> per_function;  // function_id -> warning count (nonzero only)
    std::string annotations_id;               // generator/model plus content hash
};

/// Intraprocedural textual leak check of one function body. For every
/// statement `v = callee(...)` whose callee is a builtin allocator or carries
/// a Return-slot AllocSource annotation, the remainder of the body is scanned
/// for suppression events on `v`: a call passing it in a freeing position
/// (builtin free or FreeSink-annotated), a return statement mentioning it, or
/// an assignment into a field/array slot. An unconditional free clears the
/// site; an escape clears it; a free only inside branches the allocation is
/// not part of downgrades it to MayNotBeFreed; otherwise it is NeverFreed.
std::vector<LeakWarning> check_function(const FunctionRecord& function,
                                        const AnnotationSet& annotations,
                                        const BuiltinTable& builtins);

/// Check every function and assemble a deterministic report; parallel across
/// functions with a serial reference twin.
CheckReport check_corpus(const std::vector<FunctionRecord>& functions,
                         const AnnotationSet& annotations, const BuiltinTable& builtins);
CheckReport check_corpus_serial(const std::vector<FunctionRecord>& functions,
                                const AnnotationSet& annotations, const BuiltinTable& builtins);

std::string check_report_to_text(const CheckReport& report);
nlohmann::json check_report_to_json(const CheckReport& report);

}  // namespace memanno
