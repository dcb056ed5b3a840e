#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <vector>

#include <json.hpp>

#include "memanno/prompts.hpp"

namespace memanno {

struct GenerationConfig {
    std::string model_name = "mock";
    double temperature = 0.0;
    int max_output_tokens = 1024;
    std::string endpoint;    // remote backend only
    std::string api_key_env; // NAME of the env var holding the bearer token
    int max_retries = 3;
    int timeout_seconds = 60;
    int max_in_flight = 4;   // bound on concurrent backend calls
};

struct RawCompletion {
    std::string text; // as returned, unmodified
    std::string backend_id;
    bool cached = false;
};

struct AllocationFindings {
    std::vector<std::string> allocated_variables;
    std::vector<std::string> deallocated_variables;
};

enum class Verdict { Yes, No, Unparseable };

struct PostFilterVerdict {
    Verdict points_into_argument = Verdict::Unparseable;
    RawCompletion raw;
};

class Backend {
public:
    virtual ~Backend() = default;
    virtual std::string id() const = 0;
    virtual std::string complete(const PromptText& prompt, const GenerationConfig& config) = 0;
};

/// Deterministic fixture-driven backend. Fixture document shape:
///   {
///     "initial":    { "<function name>": "<completion text>", ... },
///     "postfilter": { "<function name>": "<completion text>", ... },
///     "by_hash":    { "<16-hex of prompt text>": "<completion text>", ... },
///     "default":    "<completion text>"
///   }
/// Lookup order: by_hash, then per-kind by function name, then "default",
/// then a canned empty answer.
class MockBackend : public Backend {
public:
    MockBackend();
    explicit MockBackend(nlohmann::json fixtures);
    explicit MockBackend(const std::filesystem::path& fixture_file);

    std::string id() const override { return "mock"; }
    std::string complete(const PromptText& prompt, const GenerationConfig& config) override;
    std::size_t calls() const { return calls_.load(); }

private:
    nlohmann::json fixtures_;
    std::atomic<std::size_t> calls_{0};
};

/// Remote chat-completions backend over HTTP(S) with bearer-token auth.
/// The token is read from the environment variable named by
/// GenerationConfig::api_key_env; it is never accepted via flag or file.
class HttpBackend : public Backend {
public:
    std::string id() const override { return "http"; }
    std::string complete(const PromptText& prompt, const GenerationConfig& config) override;
};

/// On-disk completion cache: `<dir>/<hh>/<16-hex>.json` where `hh` is the
/// first two hex digits of the key. A default-constructed cache is disabled.
class CompletionCache {
public:
    CompletionCache() = default;
    explicit CompletionCache(std::filesystem::path dir);

    bool enabled() const { return enabled_; }
    std::optional<std::string> lookup(std::uint64_t key);
    void store(std::uint64_t key, const std::string& model, const std::string& text);

    /// Corruption notices collected during lookups; cleared on return.
    std::vector<std::string> take_warnings();

    std::filesystem::path path_for(std::uint64_t key) const;

private:
    bool enabled_ = false;
    std::filesystem::path dir_;
    std::mutex mu_;
    std::vector<std::string> warnings_;
};

std::uint64_t prompt_cache_key(const PromptText& prompt, const GenerationConfig& config);

/// Backend + cache + config bundle; the one entry point the pipeline uses.
class LlmClient {
public:
    LlmClient(Backend& backend, GenerationConfig config, CompletionCache* cache = nullptr);

    RawCompletion complete(const PromptText& prompt);

    std::size_t backend_calls() const { return backend_calls_.load(); }
    std::size_t cache_hits() const { return cache_hits_.load(); }
    const GenerationConfig& config() const { return config_; }
    CompletionCache* cache() const { return cache_; }

private:
    Backend& backend_;
    GenerationConfig config_;
    CompletionCache* cache_;
    std::counting_semaphore<> in_flight_;
    std::atomic<std::size_t> backend_calls_{0};
    std::atomic<std::size_t> cache_hits_{0};
};

/// Every balanced `{...}` region of `text` that parses as a JSON object,
/// in order of appearance (nested objects are not reported separately).
std::vector<std::string> extract_json_objects(std::string_view text);

/// Reads the model's allocation answer. Missing fields mean empty lists;
/// no JSON object at all is an error carrying a snippet of the raw text.
AllocationFindings parse_allocation_response(const RawCompletion& raw);

/// Reads the model's yes/no answer from the last JSON object: first boolean
/// value, or first string whose leading word is yes/no/true/false, in
/// document order. Anything else is Unparseable.
PostFilterVerdict parse_postfilter_response(const RawCompletion& raw);

} // namespace memanno
