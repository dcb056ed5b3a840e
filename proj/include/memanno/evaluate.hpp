#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "memanno/annotate.hpp"

namespace memanno {

enum class MatchVerdict { TP, FP, FN };
const char* to_string(MatchVerdict verdict);

struct EvaluationReport {
    int tp = 0;
    int fp = 0;
    int fn = 0;
    int total_annotated = 0;              // always tp + fp
    std::optional<double> precision;      // empty when tp + fp == 0
    std::optional<double> recall;         // empty when tp + fn == 0
    std::map<std::string, MatchVerdict> per_function;
};

struct IntersectionReport {
    std::vector<std::string> members_a;   // sorted annotated names of each set
    std::vector<std::string> members_b;
    std::vector<std::string> common;      // sorted intersection by name
};

struct ScoreOptions {
    bool strict_slots = false;  // compare (slot, kind) sets instead of kind profiles
};

/// Score predictions against ground truth, function by function. A predicted
/// function whose label profile matches ground truth is a TP; one with a
/// differing profile or no ground-truth label is an FP; a ground-truth label
/// with no prediction is an FN.
EvaluationReport score(const AnnotationSet& predicted, const AnnotationSet& ground_truth,
                       const ScoreOptions& options = {});

/// Name-level set intersection of two annotation sets (kind-insensitive).
IntersectionReport intersect(const AnnotationSet& a, const AnnotationSet& b);

/// Load a hand-labeled annotation file: provenance is forced to Manual and a
/// function tagged both allocating and freeing is rejected by name.
AnnotationSet load_ground_truth(const std::string& path);

std::string report_to_text(const EvaluationReport& report);
nlohmann::json report_to_json(const EvaluationReport& report);
std::string intersection_to_text(const IntersectionReport& report);
nlohmann::json intersection_to_json(const IntersectionReport& report);

}  // namespace memanno
