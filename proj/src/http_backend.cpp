#include <chrono>
#include <cstdlib>
#include <memory>
#include <thread>

#if defined(MEMANNO_HAVE_OPENSSL) && !defined(CPPHTTPLIB_OPENSSL_SUPPORT)
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include <httplib.h>

#include "memanno/errors.hpp"
#include "memanno/llm.hpp"

namespace memanno {

namespace {

struct ParsedUrl {
    std::string base; // scheme://host[:port]
    std::string path; // leading slash
    bool https = false;
};

ParsedUrl parse_url(const std::string& url) {
    ParsedUrl out;
    std::string rest;
    if (url.rfind("https://", 0) == 0) {
        out.https = true;
        rest = url.substr(8);
    } else if (url.rfind("http://", 0) == 0) {
        rest = url.substr(7);
    } else {
        throw backend_error("endpoint must be an http(s) URL: " + url);
    }
    auto slash = rest.find('/');
    std::string host = (slash == std::string::npos) ? rest : rest.substr(0, slash);
    if (host.empty()) throw backend_error("endpoint has no host: " + url);
    out.base = (out.https ? "https://" : "http://") + host;
    out.path = (slash == std::string::npos) ? "/" : rest.substr(slash);
    return out;
}

std::string extract_message_text(const std::string& body) {
    auto parsed = nlohmann::json::parse(body, nullptr, false);
    if (!parsed.is_discarded() && parsed.contains("choices") && parsed["choices"].is_array() &&
        !parsed["choices"].empty()) {
        const auto& choice = parsed["choices"][0];
        if (choice.contains("message") && choice["message"].contains("content") &&
            choice["message"]["content"].is_string()) {
            return choice["message"]["content"].get<std::string>();
        }
        if (choice.contains("text") && choice["text"].is_string()) {
            return choice["text"].get<std::string>();
        }
    }
    throw backend_error("completion response has no message text: " +
                        body.substr(0, std::min<size_t>(body.size(), 160)));
}

} // namespace

std::string HttpBackend::complete(const PromptText& prompt, const GenerationConfig& config) {
    if (config.endpoint.empty()) {
        throw backend_error("remote backend requires an endpoint URL");
    }
    ParsedUrl url = parse_url(config.endpoint);
#ifndef MEMANNO_HAVE_OPENSSL
    if (url.https) {
        throw backend_error("built without TLS support; use an http:// endpoint");
    }
#endif

    httplib::Headers headers;
    if (!config.api_key_env.empty()) {
        const char* token = std::getenv(config.api_key_env.c_str());
        if (token == nullptr || *token == '\0') {
            throw backend_error("environment variable " + config.api_key_env +
                                " is not set (it must hold the API token)");
        }
        headers.emplace("Authorization", std::string("Bearer ") + token);
    }

    nlohmann::json body{
        {"model", config.model_name},
        {"messages", nlohmann::json::array({nlohmann::json{{"role", "user"},
                                                           {"content", prompt.text}}})},
        {"temperature", config.temperature},
        {"max_tokens", config.max_output_tokens},
    };
    std::string payload = body.dump();

    int attempts = std::max(1, config.max_retries);
    std::string last_failure = "no attempt made";
    for (int attempt = 1; attempt <= attempts; ++attempt) {
        httplib::Client client(url.base);
        client.set_connection_timeout(config.timeout_seconds, 0);
        client.set_read_timeout(config.timeout_seconds, 0);
        client.set_write_timeout(config.timeout_seconds, 0);

        auto result = client.Post(url.path, headers, payload, "application/json");
        if (result && result->status >= 200 && result->status < 300) {
            return extract_message_text(result->body);
        }
        if (result && result->status >= 400 && result->status < 500 && result->status != 429) {
            // Client-side mistake (bad token, bad model name): retrying cannot help.
            throw backend_error("completion request rejected with HTTP " +
                                std::to_string(result->status));
        }
        if (result) {
            last_failure = "HTTP " + std::to_string(result->status);
        } else {
            last_failure = "transport error: " + httplib::to_string(result.error());
        }
        if (attempt < attempts) {
            std::this_thread::sleep_for(std::chrono::milliseconds(100 * attempt));
        }
    }
    throw backend_error("completion request failed after " + std::to_string(attempts) +
                        " attempts (" + last_failure + "): " + config.endpoint);
}

} // namespace memanno
