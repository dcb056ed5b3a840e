#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace memanno {

struct FileEntry {
    std::string path; // relative to the corpus root, '/'-separated
    std::uintmax_t size = 0;
    std::string content_hash; // fnv1a64 hex of the file bytes
};

struct SkippedFile {
    std::string path;
    std::string reason;
};

struct CorpusIndex {
    std::filesystem::path root;
    std::vector<FileEntry> files;   // sorted by path
    std::vector<SkippedFile> skipped;
};

struct Param {
    std::string name;
    std::string type_text;

    bool operator==(const Param&) const = default;
};

struct FunctionRecord {
    std::string id;   // "<path>:<name>:<start_line>"
    std::string name;
    std::vector<Param> params;
    std::string return_type_text;
    std::string body; // full definition text, signature through closing brace
    std::string file; // relative path
    int start_line = 0;
    int end_line = 0;
    bool is_definition = true;

    bool operator==(const FunctionRecord&) const = default;
};

/// Splits a function id back into its (file, name, start_line) parts.
/// Parses from the right so paths containing ':' survive.
struct FunctionIdParts {
    std::string file;
    std::string name;
    int start_line = 0;
};
FunctionIdParts parse_function_id(const std::string& id);

struct ExtractionResult {
    std::vector<FunctionRecord> functions; // sorted by (file, start_line)
    std::vector<std::string> diagnostics;  // one entry per problem file
    /// Aggregate (struct/union/enum) type names seen in top-level typedefs,
    /// used by the post-filter's struct-parameter detection.
    std::set<std::string> typedef_aggregates;
};

struct CallGraph {
    std::set<std::string> nodes;
    std::set<std::pair<std::string, std::string>> edges; // (caller id, callee id)
    std::vector<std::pair<std::string, std::string>> unresolved_calls; // (caller id, callee name)
};

/// Indexes extracted records by id and by name for graph and pipeline lookups.
class FunctionStore {
public:
    FunctionStore() = default;
    explicit FunctionStore(std::vector<FunctionRecord> functions);

    const std::vector<FunctionRecord>& all() const { return functions_; }
    const FunctionRecord* by_id(const std::string& id) const;
    const std::vector<const FunctionRecord*>& by_name(const std::string& name) const;
    bool empty() const { return functions_.empty(); }
    std::size_t size() const { return functions_.size(); }

private:
    std::vector<FunctionRecord> functions_;
    std::map<std::string, std::size_t> by_id_;
    std::map<std::string, std::vector<const FunctionRecord*>> by_name_;
    std::vector<const FunctionRecord*> empty_list_;
};

CorpusIndex scan_codebase(const std::filesystem::path& root,
                          const std::vector<std::string>& include_globs,
                          const std::vector<std::string>& exclude_globs);

/// Extracts every function definition from the indexed files. The OpenMP
/// build parses files concurrently; results are merged in index order so the
/// output is identical to the serial reference.
ExtractionResult extract_functions(const CorpusIndex& index);

/// Serial reference implementation; kept alongside the parallel kernel so
/// tests and the benchmark can compare them.
ExtractionResult extract_functions_serial(const CorpusIndex& index);

/// Extraction over in-memory text, used for single-file parsing and reparse
/// checks. `file` seeds the record ids.
ExtractionResult extract_functions_from_text(const std::string& text, const std::string& file);

CallGraph build_call_graph(const std::vector<FunctionRecord>& functions);

/// Breadth-first callees up to `depth` hops, deduplicated, root excluded.
std::vector<const FunctionRecord*> callees_of(const CallGraph& graph,
                                              const FunctionStore& store,
                                              const std::string& id,
                                              int depth);

} // namespace memanno
