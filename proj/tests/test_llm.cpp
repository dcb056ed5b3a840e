#include <doctest.h>

#include <atomic>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "memanno/errors.hpp"
#include "memanno/llm.hpp"
#include "memanno/util.hpp"
#include "temp_tree.hpp"

using namespace memanno;

namespace {

PromptText prompt_of(const std::string& text, PromptKind kind = PromptKind::Initial,
                     const std::string& function_id = "x.c:f:1") {
    PromptText p;
    p.text = text;
    p.kind = kind;
    p.function_id = function_id;
    return p;
}

RawCompletion completion_of(const std::string& text) {
    RawCompletion raw;
    raw.text = text;
    raw.backend_id = "test";
    return raw;
}

} // namespace

TEST_SUITE("llm") {

TEST_CASE("allocation parse reads the plain schema") {
    auto findings = parse_allocation_response(
        completion_of(R"({"allocated_variables":["p"],"deallocated_variables":[]})"));
    CHECK(findings.allocated_variables == std::vector<std::string>{"p"});
    CHECK(findings.deallocated_variables.empty());
}

TEST_CASE("allocation parse digs the answer out of prose and fences") {
    std::string text =
        "The function allocates memory for `chk` via solv_calloc and returns it.\n"
        "No memory is deallocated here.\n"
        "\n"
        "```json\n"
        "{\n"
        "  \"allocated_variables\": [\"chk\"],\n"
        "  \"deallocated_variables\": []\n"
        "}\n"
        "```\n";
    auto findings = parse_allocation_response(completion_of(text));
    CHECK(findings.allocated_variables == std::vector<std::string>{"chk"});
    CHECK(findings.deallocated_variables.empty());
}

TEST_CASE("allocation parse takes the last JSON object") {
    std::string text =
        "Thinking: maybe {\"allocated_variables\": [\"wrong\"]} but actually...\n"
        "{\"allocated_variables\": [\"right\"], \"deallocated_variables\": [\"q\"]}";
    auto findings = parse_allocation_response(completion_of(text));
    CHECK(findings.allocated_variables == std::vector<std::string>{"right"});
    CHECK(findings.deallocated_variables == std::vector<std::string>{"q"});

    // Trailing brace noise after the answer does not hide it.
    std::string noisy =
        "{\"allocated_variables\": [\"p\"]}\n"
        "Echoing the snippet: int f(void) {}\n";
    auto recovered = parse_allocation_response(completion_of(noisy));
    CHECK(recovered.allocated_variables == std::vector<std::string>{"p"});
}

TEST_CASE("allocation parse errors on text without JSON") {
    CHECK_THROWS_AS(parse_allocation_response(completion_of("not json at all")), Error);
    try {
        parse_allocation_response(completion_of("not json at all"));
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Backend);
        CHECK(std::string(e.what()).find("not json at all") != std::string::npos);
    }
}

TEST_CASE("allocation parse sanitizes and deduplicates names") {
    auto findings = parse_allocation_response(completion_of(
        R"({"allocated_variables": ["*ptr", " p ", "&q", "p", "", 7],
            "deallocated_variables": ["`buf`"]})"));
    CHECK(findings.allocated_variables == std::vector<std::string>{"ptr", "p", "q"});
    CHECK(findings.deallocated_variables == std::vector<std::string>{"buf"});
}

TEST_CASE("allocation parse treats missing fields as empty") {
    auto findings = parse_allocation_response(completion_of(R"({"allocated_variables":["a"]})"));
    CHECK(findings.allocated_variables == std::vector<std::string>{"a"});
    CHECK(findings.deallocated_variables.empty());
}

TEST_CASE("postfilter verdict extraction") {
    auto yes = parse_postfilter_response(completion_of(R"({"answer": true})"));
    CHECK(yes.points_into_argument == Verdict::Yes);

    auto no = parse_postfilter_response(
        completion_of(R"({"answer": "No, it allocates fresh memory"})"));
    CHECK(no.points_into_argument == Verdict::No);

    auto none = parse_postfilter_response(completion_of(R"({"detail": 42})"));
    CHECK(none.points_into_argument == Verdict::Unparseable);

    auto garbage = parse_postfilter_response(completion_of("garbage"));
    CHECK(garbage.points_into_argument == Verdict::Unparseable);
    CHECK(garbage.raw.text == "garbage");

    auto nested = parse_postfilter_response(
        completion_of(R"({"analysis": {"conclusion": "YES - it aliases the argument"}})"));
    CHECK(nested.points_into_argument == Verdict::Yes);

    auto first_wins = parse_postfilter_response(
        completion_of(R"({"first": "no", "second": true})"));
    CHECK(first_wins.points_into_argument == Verdict::No);

    // "not" is not "no": the leading-word rule requires the whole word.
    auto not_really = parse_postfilter_response(completion_of(R"({"answer": "not really"})"));
    CHECK(not_really.points_into_argument == Verdict::Unparseable);

    auto punctuated = parse_postfilter_response(completion_of(R"({"verdict": "Yes."})"));
    CHECK(punctuated.points_into_argument == Verdict::Yes);
}

TEST_CASE("mock backend serves fixtures by name hash and default") {
    nlohmann::json fixtures{
        {"initial", {{"make_buffer", "initial text for make_buffer"}}},
        {"postfilter", {{"make_buffer", "postfilter text for make_buffer"}}},
        {"by_hash", nlohmann::json::object()},
        {"default", "fallback text"},
    };
    std::string hashed_prompt = "prompt keyed by hash";
    fixtures["by_hash"][fnv1a64_hex(hashed_prompt)] = "hash-routed text";

    MockBackend mock(fixtures);
    GenerationConfig config;

    CHECK(mock.complete(prompt_of("anything", PromptKind::Initial, "a.c:make_buffer:10"),
                        config) == "initial text for make_buffer");
    CHECK(mock.complete(prompt_of("anything", PromptKind::PostFilter, "a.c:make_buffer:10"),
                        config) == "postfilter text for make_buffer");
    CHECK(mock.complete(prompt_of(hashed_prompt, PromptKind::Initial, "a.c:other:1"), config) ==
          "hash-routed text");
    CHECK(mock.complete(prompt_of("anything", PromptKind::Initial, "a.c:unknown:1"), config) ==
          "fallback text");
    CHECK(mock.calls() == 4);
}

TEST_CASE("mock backend without fixtures answers an empty finding") {
    MockBackend mock;
    GenerationConfig config;
    auto text = mock.complete(prompt_of("p", PromptKind::Initial), config);
    auto findings = parse_allocation_response(completion_of(text));
    CHECK(findings.allocated_variables.empty());
    CHECK(findings.deallocated_variables.empty());

    auto pf = mock.complete(prompt_of("p", PromptKind::PostFilter), config);
    CHECK(parse_postfilter_response(completion_of(pf)).points_into_argument == Verdict::No);
}

TEST_CASE("completions are cached on disk and replayed") {
    testutil::TempTree tree;
    CompletionCache cache(tree.root / "cache");
    MockBackend mock(nlohmann::json{{"default", "cached answer"}});
    GenerationConfig config;
    LlmClient client(mock, config, &cache);

    auto prompt = prompt_of("the prompt");
    auto first = client.complete(prompt);
    CHECK(first.text == "cached answer");
    CHECK_FALSE(first.cached);

    auto second = client.complete(prompt);
    CHECK(second.text == "cached answer");
    CHECK(second.cached);
    CHECK(mock.calls() == 1);
    CHECK(client.backend_calls() == 1);
    CHECK(client.cache_hits() == 1);

    // Layout: <dir>/<first two hex digits>/<16 hex digits>.json
    auto path = cache.path_for(prompt_cache_key(prompt, config));
    REQUIRE(std::filesystem::exists(path));
    CHECK(path.parent_path().filename().string() ==
          path.stem().string().substr(0, 2));
    auto entry = nlohmann::json::parse(read_file(path));
    CHECK(entry["text"] == "cached answer");
    CHECK(entry["model"] == config.model_name);
    CHECK(entry["prompt_hash"].is_string());
    CHECK(entry["timestamp"].is_string());
}

TEST_CASE("cache corruption is bypassed with a warning") {
    testutil::TempTree tree;
    CompletionCache cache(tree.root / "cache");
    MockBackend mock(nlohmann::json{{"default", "fresh answer"}});
    GenerationConfig config;
    LlmClient client(mock, config, &cache);

    auto prompt = prompt_of("the prompt");
    client.complete(prompt);
    auto path = cache.path_for(prompt_cache_key(prompt, config));
    write_file_atomic(path, "garbage, not json");

    auto replay = client.complete(prompt);
    CHECK_FALSE(replay.cached);
    CHECK(replay.text == "fresh answer");
    CHECK(mock.calls() == 2);
    auto warnings = cache.take_warnings();
    REQUIRE(warnings.size() == 1);
    CHECK(warnings[0].find("bypass") != std::string::npos);
    CHECK(cache.take_warnings().empty());
}

TEST_CASE("cache does not change the text a backend produces") {
    testutil::TempTree tree;
    MockBackend mock(nlohmann::json{{"default", "same either way"}});
    GenerationConfig config;

    CompletionCache cache(tree.root / "cache");
    LlmClient cached_client(mock, config, &cache);
    LlmClient plain_client(mock, config, nullptr);

    auto prompt = prompt_of("transparency");
    auto with_cache = cached_client.complete(prompt);
    auto warm = cached_client.complete(prompt);
    auto without = plain_client.complete(prompt);
    CHECK(with_cache.text == without.text);
    CHECK(warm.text == without.text);
}

TEST_CASE("cache keys separate kind model temperature and text") {
    GenerationConfig base;
    base.model_name = "m1";
    base.temperature = 0.0;

    auto key = prompt_cache_key(prompt_of("text A"), base);

    CHECK(prompt_cache_key(prompt_of("text B"), base) != key);
    CHECK(prompt_cache_key(prompt_of("text A", PromptKind::PostFilter), base) != key);

    GenerationConfig other_model = base;
    other_model.model_name = "m2";
    CHECK(prompt_cache_key(prompt_of("text A"), other_model) != key);

    GenerationConfig warm = base;
    warm.temperature = 0.7;
    CHECK(prompt_cache_key(prompt_of("text A"), warm) != key);

    CHECK(prompt_cache_key(prompt_of("text A"), base) == key);
}

TEST_CASE("in flight completions stay within the configured bound") {
    struct GaugeBackend : Backend {
        std::atomic<int> active{0};
        std::atomic<int> high_water{0};
        std::string id() const override { return "gauge"; }
        std::string complete(const PromptText&, const GenerationConfig&) override {
            int now = ++active;
            int seen = high_water.load();
            while (now > seen && !high_water.compare_exchange_weak(seen, now)) {
            }
            std::this_thread::sleep_for(std::chrono::milliseconds(5));
            --active;
            return R"({"allocated_variables": [], "deallocated_variables": []})";
        }
    };

    GaugeBackend gauge;
    GenerationConfig config;
    config.max_in_flight = 2;
    LlmClient client(gauge, config, nullptr);

    std::vector<std::thread> workers;
    for (int i = 0; i < 8; ++i) {
        workers.emplace_back([&client, i] {
            client.complete(prompt_of("prompt " + std::to_string(i)));
        });
    }
    for (auto& w : workers) w.join();

    CHECK(client.backend_calls() == 8);
    CHECK(gauge.high_water.load() <= 2);
}

TEST_CASE("http backend speaks chat completions with bearer auth") {
    std::string seen_auth;
    std::string seen_prompt;
    std::string seen_model;
    httplib::Server server;
    server.Post("/v1/chat/completions",
                [&](const httplib::Request& req, httplib::Response& res) {
                    seen_auth = req.get_header_value("Authorization");
                    auto body = nlohmann::json::parse(req.body);
                    seen_prompt = body["messages"][0]["content"].get<std::string>();
                    seen_model = body["model"].get<std::string>();
                    nlohmann::json reply{{"choices",
                                          {{{"message",
                                             {{"role", "assistant"},
                                              {"content", "{\"allocated_variables\": [\"p\"], "
                                                          "\"deallocated_variables\": []}"}}}}}}};
                    res.set_content(reply.dump(), "application/json");
                });
    int port = server.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    std::thread listener([&server] { server.listen_after_bind(); });
    server.wait_until_ready();

    setenv("MEMANNO_TEST_TOKEN", "test-token-123", 1);
    GenerationConfig config;
    config.model_name = "test-model";
    config.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions";
    config.api_key_env = "MEMANNO_TEST_TOKEN";
    config.timeout_seconds = 5;

    HttpBackend backend;
    auto text = backend.complete(prompt_of("what allocates?"), config);
    server.stop();
    listener.join();

    CHECK(seen_auth == "Bearer test-token-123");
    CHECK(seen_prompt == "what allocates?");
    CHECK(seen_model == "test-model");
    auto findings = parse_allocation_response(completion_of(text));
    CHECK(findings.allocated_variables == std::vector<std::string>{"p"});
}

TEST_CASE("http backend fails after bounded retries on an unreachable endpoint") {
    GenerationConfig config;
    config.endpoint = "http://127.0.0.1:1/v1/chat/completions";
    config.max_retries = 2;
    config.timeout_seconds = 1;

    HttpBackend backend;
    try {
        backend.complete(prompt_of("anyone there?"), config);
        FAIL("expected a backend error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Backend);
        CHECK(std::string(e.what()).find("2 attempts") != std::string::npos);
    }
}

TEST_CASE("http backend does not retry a definitive rejection") {
    std::atomic<int> hits{0};
    httplib::Server server;
    server.Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
        ++hits;
        res.status = 401;
        res.set_content("{\"error\": \"bad token\"}", "application/json");
    });
    int port = server.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    std::thread listener([&server] { server.listen_after_bind(); });
    server.wait_until_ready();

    GenerationConfig config;
    config.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions";
    config.max_retries = 3;
    config.timeout_seconds = 5;

    HttpBackend backend;
    CHECK_THROWS_AS(backend.complete(prompt_of("hi"), config), Error);
    server.stop();
    listener.join();
    CHECK(hits.load() == 1);
}

TEST_CASE("http backend requires the named token variable to be set") {
    unsetenv("MEMANNO_UNSET_TOKEN");
    GenerationConfig config;
    config.endpoint = "http://127.0.0.1:1/v1/chat/completions";
    config.api_key_env = "MEMANNO_UNSET_TOKEN";

    HttpBackend backend;
    try {
        backend.complete(prompt_of("hi"), config);
        FAIL("expected a backend error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Backend);
        CHECK(std::string(e.what()).find("MEMANNO_UNSET_TOKEN") != std::string::npos);
    }
}

} // TEST_SUITE
