#include "memanno/evaluate.hpp"

#include <algorithm>
#include <iomanip>
#include <set>
#include <sstream>

#include "memanno/errors.hpp"

namespace memanno {

using nlohmann::json;

const char* to_string(MatchVerdict verdict) {
    switch (verdict) {
        case MatchVerdict::TP: return "TP";
        case MatchVerdict::FP: return "FP";
        case MatchVerdict::FN: return "FN";
    }
    return "?";
}

namespace {

struct Profile {
    bool alloc = false;
    bool dealloc = false;
    bool operator==(const Profile&) const = default;
};

Profile profile_of(const FunctionAnnotation& ann) {
    Profile p;
    for (const AnnotationEntry& entry : ann.entries) {
        if (entry.kind == AnnKind::AllocSource) p.alloc = true;
        if (entry.kind == AnnKind::FreeSink) p.dealloc = true;
    }
    return p;
}

std::set<std::pair<int, AnnKind>> slot_set_of(const FunctionAnnotation& ann) {
    std::set<std::pair<int, AnnKind>> slots;
    for (const AnnotationEntry& entry : ann.entries) slots.emplace(entry.slot, entry.kind);
    return slots;
}

const FunctionAnnotation* annotated(const AnnotationSet& set, const std::string& name) {
    auto it = set.functions.find(name);
    if (it == set.functions.end() || it->second.entries.empty()) return nullptr;
    return &it->second;
}

}  // namespace

EvaluationReport score(const AnnotationSet& predicted, const AnnotationSet& ground_truth,
                       const ScoreOptions& options) {
    std::set<std::string> names;
    for (const auto& [name, ann] : predicted.functions)
        if (!ann.entries.empty()) names.insert(name);
    for (const auto& [name, ann] : ground_truth.functions)
        if (!ann.entries.empty()) names.insert(name);

    EvaluationReport report;
    for (const std::string& name : names) {
        const FunctionAnnotation* pred = annotated(predicted, name);
        const FunctionAnnotation* truth = annotated(ground_truth, name);
        MatchVerdict verdict;
        if (pred && truth) {
            const bool match = options.strict_slots ? slot_set_of(*pred) == slot_set_of(*truth)
                                                    : profile_of(*pred) == profile_of(*truth);
            verdict = match ? MatchVerdict::TP : MatchVerdict::FP;
        } else if (pred) {
            verdict = MatchVerdict::FP;
        } else {
            verdict = MatchVerdict::FN;
        }
        report.per_function.emplace(name, verdict);
        switch (verdict) {
            case MatchVerdict::TP: ++report.tp; break;
            case MatchVerdict::FP: ++report.fp; break;
            case MatchVerdict::FN: ++report.fn; break;
        }
    }
    report.total_annotated = report.tp + report.fp;
    if (report.tp + report.fp > 0)
        report.precision = static_cast<double>(report.tp) / (report.tp + report.fp);
    if (report.tp + report.fn > 0)
        report.recall = static_cast<double>(report.tp) / (report.tp + report.fn);
    return report;
}

IntersectionReport intersect(const AnnotationSet& a, const AnnotationSet& b) {
    IntersectionReport report;
    for (const auto& [name, ann] : a.functions)
        if (!ann.entries.empty()) report.members_a.push_back(name);
    for (const auto& [name, ann] : b.functions)
        if (!ann.entries.empty()) report.members_b.push_back(name);
    std::set_intersection(report.members_a.begin(), report.members_a.end(),
                          report.members_b.begin(), report.members_b.end(),
                          std::back_inserter(report.common));
    return report;
}

AnnotationSet load_ground_truth(const std::string& path) {
    AnnotationSet set = load_annotation_set(path);
    for (auto& [name, ann] : set.functions) {
        ann.provenance = Provenance::Manual;
        const Profile p = profile_of(ann);
        if (p.alloc && p.dealloc)
            throw corpus_error("ground truth tags " + name + " as both allocating and freeing");
    }
    set.metadata.generator = "ground-truth";
    return set;
}

namespace {

std::string metric_text(const std::optional<double>& value) {
    if (!value) return "undefined";
    std::ostringstream out;
    out << std::fixed << std::setprecision(3) << *value;
    return out.str();
}

}  // namespace

std::string report_to_text(const EvaluationReport& report) {
    std::ostringstream out;
    out << "tp " << report.tp << "\n"
        << "fp " << report.fp << "\n"
        << "fn " << report.fn << "\n"
        << "total_annotated " << report.total_annotated << "\n"
        << "precision " << metric_text(report.precision) << "\n"
        << "recall " << metric_text(report.recall) << "\n";
    if (!report.per_function.empty()) {
        out << "\nper function:\n";
        for (const auto& [name, verdict] : report.per_function)
            out << "  " << name << " " << to_string(verdict) << "\n";
    }
    return out.str();
}

json report_to_json(const EvaluationReport& report) {
    json doc;
    doc["tp"] = report.tp;
    doc["fp"] = report.fp;
    doc["fn"] = report.fn;
    doc["total_annotated"] = report.total_annotated;
    doc["precision"] = report.precision ? json(*report.precision) : json(nullptr);
    doc["recall"] = report.recall ? json(*report.recall) : json(nullptr);
    json per = json::object();
    for (const auto& [name, verdict] : report.per_function) per[name] = to_string(verdict);
    doc["per_function"] = per;
    return doc;
}

std::string intersection_to_text(const IntersectionReport& report) {
    std::ostringstream out;
    out << "|A| " << report.members_a.size() << "\n"
        << "|B| " << report.members_b.size() << "\n"
        << "|A and B| " << report.common.size() << "\n";
    if (!report.common.empty()) {
        out << "common:\n";
        for (const std::string& name : report.common) out << "  " << name << "\n";
    }
    return out.str();
}

json intersection_to_json(const IntersectionReport& report) {
    json doc;
    doc["size_a"] = report.members_a.size();
    doc["size_b"] = report.members_b.size();
    doc["size_common"] = report.common.size();
    doc["members_a"] = report.members_a;
    doc["members_b"] = report.members_b;
    doc["common"] = report.common;
    return doc;
}

}  // namespace memanno
