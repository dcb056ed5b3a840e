#pragma once

#include <map>
#include <string>

#include "memanno/annotate.hpp"

namespace memanno {

/// Functions that carry a Return-slot AllocSource entry, plus how many
/// entries the return-value filter discarded.
struct CodeQLModelTable {
    std::vector<std::string> names;  // sorted function names, one row each
    int dropped = 0;                 // entries removed by the filter
};

/// Serialize to the Cooddy annotation dialect: `"name(name)"` keys mapping to
/// a positional array (element 0 = return value, 1..arity = parameters) of
/// `<Kind>::<qualifier>` strings. Sorted keys, 2-space indent, trailing
/// newline; functions with no entries are omitted. Every emitted name must
/// appear in `arities` with an arity that covers its entries.
std::string emit_cooddy(const AnnotationSet& set, const std::map<std::string, int>& arities);

/// Same, taking each function's arity from the annotation set itself.
std::string emit_cooddy(const AnnotationSet& set);

/// Inverse of emit_cooddy for the positional payload: function names,
/// arities, and entries are reconstructed; ids and metadata are not stored
/// in the dialect and come back empty (provenance defaults to Manual).
AnnotationSet parse_cooddy(const std::string& text);

/// Apply the return-value filter: keep one row per function that has a
/// Return-slot AllocSource entry, count everything else as dropped.
CodeQLModelTable build_codeql_table(const AnnotationSet& set);

/// Render the filtered table as a tab-separated model document with a
/// header describing the target extension point and the dropped count.
std::string emit_codeql_models(const AnnotationSet& set);

}  // namespace memanno
