#include "memanno/emit.hpp"

#include <sstream>

#include "json.hpp"
#include "memanno/errors.hpp"
#include "memanno/util.hpp"

namespace memanno {

using nlohmann::json;

std::string emit_cooddy(const AnnotationSet& set, const std::map<std::string, int>& arities) {
    std::vector<std::string> missing;
    std::vector<std::string> out_of_range;
    json doc = json::object();
    for (const auto& [name, ann] : set.functions) {
        if (ann.entries.empty()) continue;
        auto it = arities.find(name);
        if (it == arities.end()) {
            missing.push_back(name);
            continue;
        }
        const int arity = it->second;
        json slots = json::array();
        for (int i = 0; i <= arity; ++i) slots.push_back(json::array());
        bool fits = true;
        for (const AnnotationEntry& entry : ann.entries) {
            if (entry.slot > arity) {
                fits = false;
                break;
            }
            std::ostringstream text;
            text << to_string(entry.kind) << "::" << entry.qualifier;
            slots[static_cast<std::size_t>(entry.slot)].push_back(text.str());
        }
        if (!fits) {
            out_of_range.push_back(name);
            continue;
        }
        doc[name + "(" + name + ")"] = std::move(slots);
    }
    if (!missing.empty())
        throw corpus_error("unknown arity for annotated function(s): " + join(missing, ", "));
    if (!out_of_range.empty())
        throw corpus_error("annotation slot exceeds declared arity for: " + join(out_of_range, ", "));
    return doc.dump(2) + "\n";
}

std::string emit_cooddy(const AnnotationSet& set) {
    std::map<std::string, int> arities;
    for (const auto& [name, ann] : set.functions) arities[name] = ann.arity;
    return emit_cooddy(set, arities);
}

namespace {

AnnotationEntry parse_cooddy_entry(const std::string& text, int slot, const std::string& key) {
    const auto sep = text.find("::");
    if (sep == std::string::npos || sep == 0)
        throw corpus_error("malformed annotation string '" + text + "' under " + key);
    const std::string kind_text = text.substr(0, sep);
    AnnKind kind;
    if (kind_text == "AllocSource")
        kind = AnnKind::AllocSource;
    else if (kind_text == "FreeSink")
        kind = AnnKind::FreeSink;
    else
        throw corpus_error("unknown annotation kind '" + kind_text + "' under " + key);
    const std::string qual_text = text.substr(sep + 2);
    int qualifier = 0;
    try {
        std::size_t used = 0;
        qualifier = std::stoi(qual_text, &used);
        if (used != qual_text.size()) qualifier = 0;
    } catch (const std::exception&) {
        qualifier = 0;
    }
    if (qualifier < 1)
        throw corpus_error("invalid annotation qualifier '" + qual_text + "' under " + key);
    return AnnotationEntry{slot, kind, qualifier};
}

}  // namespace

AnnotationSet parse_cooddy(const std::string& text) {
    json doc = json::parse(text, nullptr, false);
    if (doc.is_discarded() || !doc.is_object())
        throw corpus_error("invalid Cooddy annotation JSON");
    AnnotationSet set;
    for (const auto& [key, value] : doc.items()) {
        const auto open = key.find('(');
        if (open == std::string::npos || key != key.substr(0, open) + "(" + key.substr(0, open) + ")")
            throw corpus_error("malformed Cooddy key: " + key);
        const std::string name = key.substr(0, open);
        if (!value.is_array() || value.empty())
            throw corpus_error("malformed positional array under " + key);
        FunctionAnnotation ann;
        ann.name = name;
        ann.arity = static_cast<int>(value.size()) - 1;
        ann.provenance = Provenance::Manual;
        for (std::size_t slot = 0; slot < value.size(); ++slot) {
            const json& cell = value[slot];
            if (!cell.is_array())
                throw corpus_error("malformed positional array under " + key);
            for (const json& item : cell) {
                if (!item.is_string())
                    throw corpus_error("malformed annotation string under " + key);
                ann.entries.push_back(
                    parse_cooddy_entry(item.get<std::string>(), static_cast<int>(slot), key));
            }
        }
        normalize_annotation(ann);
        if (!ann.entries.empty()) set.functions.emplace(name, std::move(ann));
    }
    return set;
}

CodeQLModelTable build_codeql_table(const AnnotationSet& set) {
    CodeQLModelTable table;
    for (const auto& [name, ann] : set.functions) {
        bool has_return_alloc = false;
        for (const AnnotationEntry& entry : ann.entries) {
            if (entry.is_return() && entry.kind == AnnKind::AllocSource)
                has_return_alloc = true;
            else
                ++table.dropped;
        }
        if (has_return_alloc) table.names.push_back(name);
    }
    return table;
}

std::string emit_codeql_models(const AnnotationSet& set) {
    const CodeQLModelTable table = build_codeql_table(set);
    std::ostringstream out;
    out << "# C/C++ memory model rows for the CodeQL model extension point\n";
    out << "# (cpp/ql/lib/ext): one allocation model per function.\n";
    out << "# columns: name\tposition\tkind\n";
    out << "# entries without a return-value allocation dropped: " << table.dropped << "\n";
    for (const std::string& name : table.names)
        out << name << "\tReturnValue\tallocation\n";
    return out.str();
}

}  // namespace memanno
