#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "memanno/annotate.hpp"
#include "memanno/errors.hpp"
#include "memanno/evaluate.hpp"
#include "temp_tree.hpp"

using namespace memanno;

namespace {

FunctionAnnotation make_ann(std::string name, int arity, std::vector<AnnotationEntry> entries) {
    FunctionAnnotation ann;
    ann.function_id = "src.c:" + name + ":1";
    ann.name = std::move(name);
    ann.arity = arity;
    ann.entries = std::move(entries);
    ann.provenance = Provenance::Manual;
    normalize_annotation(ann);
    return ann;
}

AnnotationSet make_set(std::vector<FunctionAnnotation> anns) {
    AnnotationSet set;
    for (auto& ann : anns) {
        std::string name = ann.name;
        set.functions.emplace(std::move(name), std::move(ann));
    }
    return set;
}

AnnotationSet alloc_set(const std::string& prefix, int count) {
    AnnotationSet set;
    for (int i = 0; i < count; ++i) {
        std::ostringstream name;
        name << prefix << "_" << i;
        set.functions.emplace(name.str(), make_ann(name.str(), 1, {{0, AnnKind::AllocSource, 1}}));
    }
    return set;
}

}  // namespace

TEST_SUITE("evaluate") {

TEST_CASE("published benchmark rows reproduce the printed metrics") {
    struct Row {
        const char* label;
        int tp, fp, fn;
        double precision, recall;
        int total;
    };
    const std::vector<Row> rows = {
        {"deepseek base", 31, 23, 17, 0.574, 0.646, 54},
        {"deepseek pf", 30, 12, 18, 0.714, 0.625, 42},
        {"deepseek ce", 29, 23, 18, 0.558, 0.617, 52},
        {"deepseek ce+pf", 28, 13, 19, 0.683, 0.596, 41},
        {"codestral base", 28, 12, 20, 0.700, 0.583, 40},
        {"codestral pf", 28, 2, 20, 0.933, 0.583, 30},  // total pinned to tp + fp
        {"codestral ce", 23, 14, 24, 0.622, 0.489, 37},
        {"codestral ce+pf", 22, 6, 25, 0.786, 0.468, 28},
        {"qwen base", 31, 12, 16, 0.721, 0.660, 43},
        {"qwen pf", 29, 3, 18, 0.906, 0.617, 32},
        {"qwen ce", 28, 10, 20, 0.737, 0.583, 38},
        {"qwen ce+pf", 27, 2, 21, 0.931, 0.562, 29},
    };
    for (const Row& row : rows) {
        CAPTURE(row.label);
        AnnotationSet truth = alloc_set("hit", row.tp);
        for (const auto& [name, ann] : alloc_set("miss", row.fn).functions)
            truth.functions.emplace(name, ann);
        AnnotationSet pred = alloc_set("hit", row.tp);
        for (const auto& [name, ann] : alloc_set("extra", row.fp).functions)
            pred.functions.emplace(name, ann);

        EvaluationReport report = score(pred, truth);
        CHECK(report.tp == row.tp);
        CHECK(report.fp == row.fp);
        CHECK(report.fn == row.fn);
        CHECK(report.total_annotated == row.total);
        REQUIRE(report.precision.has_value());
        REQUIRE(report.recall.has_value());
        CHECK(std::abs(*report.precision - row.precision) <= 0.001);
        CHECK(std::abs(*report.recall - row.recall) <= 0.001);
    }
}

TEST_CASE("identical prediction and truth score perfectly") {
    auto set = make_set({
        make_ann("mk", 1, {{0, AnnKind::AllocSource, 1}}),
        make_ann("fr", 2, {{1, AnnKind::FreeSink, 3}}),
    });
    EvaluationReport report = score(set, set);
    CHECK(report.tp == 2);
    CHECK(report.fp == 0);
    CHECK(report.fn == 0);
    CHECK(report.total_annotated == 2);
    REQUIRE(report.precision.has_value());
    REQUIRE(report.recall.has_value());
    CHECK(*report.precision == 1.0);
    CHECK(*report.recall == 1.0);
    CHECK(report.per_function.at("mk") == MatchVerdict::TP);
    CHECK(report.per_function.at("fr") == MatchVerdict::TP);
}

TEST_CASE("kind profiles decide matches by default") {
    auto truth = make_set({
        make_ann("grab", 2, {{0, AnnKind::AllocSource, 1}, {1, AnnKind::FreeSink, 3}}),
        make_ann("take", 1, {{0, AnnKind::AllocSource, 1}}),
    });
    auto pred = make_set({
        make_ann("grab", 2, {{0, AnnKind::AllocSource, 1}}),   // half the profile
        make_ann("take", 1, {{1, AnnKind::AllocSource, 1}}),   // same profile, other slot
    });
    EvaluationReport report = score(pred, truth);
    CHECK(report.per_function.at("grab") == MatchVerdict::FP);
    CHECK(report.per_function.at("take") == MatchVerdict::TP);

    EvaluationReport strict = score(pred, truth, {.strict_slots = true});
    CHECK(strict.per_function.at("take") == MatchVerdict::FP);
}

TEST_CASE("strict slot matching still ignores qualifiers") {
    auto truth = make_set({make_ann("mk", 1, {{0, AnnKind::AllocSource, 5}})});
    auto pred = make_set({make_ann("mk", 1, {{0, AnnKind::AllocSource, 1}})});
    EvaluationReport strict = score(pred, truth, {.strict_slots = true});
    CHECK(strict.per_function.at("mk") == MatchVerdict::TP);
}

TEST_CASE("unmatched names become FP or FN and empty inputs stay undefined") {
    auto truth = make_set({make_ann("only_truth", 1, {{0, AnnKind::AllocSource, 1}})});
    auto pred = make_set({make_ann("only_pred", 1, {{0, AnnKind::AllocSource, 1}})});
    EvaluationReport report = score(pred, truth);
    CHECK(report.per_function.at("only_pred") == MatchVerdict::FP);
    CHECK(report.per_function.at("only_truth") == MatchVerdict::FN);
    CHECK(report.tp == 0);
    REQUIRE(report.precision.has_value());
    CHECK(*report.precision == 0.0);
    REQUIRE(report.recall.has_value());
    CHECK(*report.recall == 0.0);
    EvaluationReport empty = score(AnnotationSet{}, AnnotationSet{});
    CHECK(empty.tp == 0);
    CHECK(empty.fp == 0);
    CHECK(empty.fn == 0);
    CHECK_FALSE(empty.precision.has_value());
    CHECK_FALSE(empty.recall.has_value());
}

TEST_CASE("swapping roles swaps the error kinds") {
    auto truth = alloc_set("t", 3);
    AnnotationSet pred = alloc_set("t", 1);
    for (const auto& [name, ann] : alloc_set("p", 5).functions) pred.functions.emplace(name, ann);

    EvaluationReport forward = score(pred, truth);
    CHECK(forward.tp == 1);
    CHECK(forward.fp == 5);
    CHECK(forward.fn == 2);

    EvaluationReport reverse = score(truth, pred);
    CHECK(reverse.tp == 1);
    CHECK(reverse.fp == 2);
    CHECK(reverse.fn == 5);
}

TEST_CASE("tp plus fn stays within the ground truth size") {
    auto truth = make_set({
        make_ann("f", 1, {{0, AnnKind::AllocSource, 1}}),
        make_ann("g", 1, {{0, AnnKind::AllocSource, 1}}),
    });
    auto mislabeled = make_set({
        make_ann("f", 1, {{0, AnnKind::AllocSource, 1}}),
        make_ann("g", 1, {{1, AnnKind::FreeSink, 3}}),  // wrong label, not a miss
    });
    EvaluationReport report = score(mislabeled, truth);
    CHECK(report.tp == 1);
    CHECK(report.fp == 1);
    CHECK(report.fn == 0);
    CHECK(report.tp + report.fn < 2);

    auto partial = make_set({make_ann("f", 1, {{0, AnnKind::AllocSource, 1}})});
    EvaluationReport clean = score(partial, truth);
    CHECK(clean.tp + clean.fn == 2);
}

TEST_CASE("intersection is by name and deterministic") {
    auto a = make_set({
        make_ann("f", 1, {{0, AnnKind::AllocSource, 1}}),
        make_ann("g", 1, {{0, AnnKind::AllocSource, 1}}),
    });
    auto b = make_set({
        make_ann("g", 1, {{1, AnnKind::FreeSink, 3}}),  // kind differs, still a member
        make_ann("h", 1, {{0, AnnKind::AllocSource, 1}}),
    });
    IntersectionReport report = intersect(a, b);
    CHECK(report.members_a == std::vector<std::string>{"f", "g"});
    CHECK(report.members_b == std::vector<std::string>{"g", "h"});
    CHECK(report.common == std::vector<std::string>{"g"});

    IntersectionReport self = intersect(a, a);
    CHECK(self.common == self.members_a);

    IntersectionReport none = intersect(a, AnnotationSet{});
    CHECK(none.common.empty());
    CHECK(none.members_b.empty());

    nlohmann::json doc = intersection_to_json(report);
    CHECK(doc["size_a"] == 2);
    CHECK(doc["size_b"] == 2);
    CHECK(doc["size_common"] == 1);
    CHECK(intersection_to_text(report).find("|A and B| 1") != std::string::npos);
}

TEST_CASE("ground truth loads with forced provenance and validation") {
    testutil::TempTree tree;
    const std::string good = tree.add("truth.json", R"json({
      "metadata": {"generator": "llm", "model": "x", "timestamp": "y"},
      "functions": {
        "mk": {"arity": 1, "entries": [{"slot": "Return", "kind": "AllocSource"}],
               "provenance": "LLM"},
        "fr": {"arity": 1, "entries": [{"slot": "Param(1)", "kind": "FreeSink"}]}
      }
    })json");
    AnnotationSet truth = load_ground_truth(good);
    CHECK(truth.functions.size() == 2);
    CHECK(truth.functions.at("mk").provenance == Provenance::Manual);
    CHECK(truth.functions.at("fr").provenance == Provenance::Manual);
    CHECK(truth.metadata.generator == "ground-truth");

    const std::string both = tree.add("both.json", R"json({
      "functions": {
        "bad_fn": {"arity": 1, "entries": [
          {"slot": "Return", "kind": "AllocSource"},
          {"slot": "Param(1)", "kind": "FreeSink"}]}
      }
    })json");
    try {
        load_ground_truth(both);
        FAIL("expected an error");
    } catch (const Error& err) {
        CHECK(err.kind() == ErrorKind::Corpus);
        CHECK(std::string(err.what()).find("bad_fn") != std::string::npos);
    }

    const std::string empty = tree.add("empty.json", R"json({"functions": {}})json");
    CHECK(load_ground_truth(empty).functions.empty());

    CHECK_THROWS_AS(load_ground_truth((tree.root / "missing.json").string()), Error);
    const std::string garbled = tree.add("garbled.json", "{nope");
    CHECK_THROWS_AS(load_ground_truth(garbled), Error);
}

TEST_CASE("reports render as text and json") {
    auto truth = make_set({make_ann("mk", 1, {{0, AnnKind::AllocSource, 1}})});
    auto pred = make_set({
        make_ann("mk", 1, {{0, AnnKind::AllocSource, 1}}),
        make_ann("junk", 1, {{0, AnnKind::AllocSource, 1}}),
    });
    EvaluationReport report = score(pred, truth);
    const std::string text = report_to_text(report);
    CHECK(text.find("tp 1") != std::string::npos);
    CHECK(text.find("fp 1") != std::string::npos);
    CHECK(text.find("precision 0.500") != std::string::npos);
    CHECK(text.find("recall 1.000") != std::string::npos);
    CHECK(text.find("junk FP") != std::string::npos);

    nlohmann::json doc = report_to_json(report);
    CHECK(doc["tp"] == 1);
    CHECK(doc["total_annotated"] == 2);
    CHECK(doc["per_function"]["mk"] == "TP");

    EvaluationReport empty = score(AnnotationSet{}, AnnotationSet{});
    CHECK(report_to_text(empty).find("precision undefined") != std::string::npos);
    CHECK(report_to_json(empty)["precision"].is_null());
}

}  // TEST_SUITE
