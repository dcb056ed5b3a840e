#include "memanno/llm.hpp"

#include <algorithm>
#include <cctype>
#include <iomanip>
#include <sstream>
#include <utility>

#include "memanno/errors.hpp"
#include "memanno/ingest.hpp"
#include "memanno/util.hpp"

namespace memanno {

namespace {

std::string snippet(std::string_view text, size_t limit = 160) {
    std::string out(text.substr(0, limit));
    if (text.size() > limit) out += "...";
    std::replace(out.begin(), out.end(), '\n', ' ');
    return out;
}

std::string kind_tag(PromptKind kind) {
    return kind == PromptKind::Initial ? "initial" : "postfilter";
}

/// Identifier-ish cleanup for variable names out of model output.
std::string sanitize_name(std::string_view raw) {
    std::string out;
    for (char c : raw) {
        if (c == '*' || c == '&' || c == '`' || c == '"' || c == '\'') continue;
        if (std::isspace(static_cast<unsigned char>(c))) continue;
        out += c;
    }
    return out;
}

void read_name_list(const nlohmann::json& obj, const char* field, std::vector<std::string>& out) {
    if (!obj.contains(field) || !obj[field].is_array()) return;
    for (const auto& item : obj[field]) {
        if (!item.is_string()) continue;
        std::string name = sanitize_name(item.get<std::string>());
        if (name.empty()) continue;
        if (std::find(out.begin(), out.end(), name) == out.end()) out.push_back(name);
    }
}

std::optional<bool> find_bool_answer(const nlohmann::ordered_json& node) {
    if (node.is_boolean()) return node.get<bool>();
    if (node.is_string()) {
        const std::string& s = node.get_ref<const std::string&>();
        std::string word;
        for (char c : s) {
            if (std::isalpha(static_cast<unsigned char>(c))) {
                word += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
            } else if (!word.empty()) {
                break;
            }
        }
        if (word == "yes" || word == "true") return true;
        if (word == "no" || word == "false") return false;
        return std::nullopt;
    }
    if (node.is_object() || node.is_array()) {
        for (const auto& child : node) {
            if (auto found = find_bool_answer(child)) return found;
        }
    }
    return std::nullopt;
}

} // namespace

std::vector<std::string> extract_json_objects(std::string_view text) {
    std::vector<std::string> objects;
    size_t i = 0;
    while (i < text.size()) {
        if (text[i] != '{') {
            ++i;
            continue;
        }
        int depth = 0;
        bool in_string = false;
        bool matched = false;
        size_t j = i;
        for (; j < text.size(); ++j) {
            char c = text[j];
            if (in_string) {
                if (c == '\\') {
                    ++j;
                } else if (c == '"') {
                    in_string = false;
                }
                continue;
            }
            if (c == '"') {
                in_string = true;
            } else if (c == '{') {
                ++depth;
            } else if (c == '}') {
                --depth;
                if (depth == 0) {
                    matched = true;
                    break;
                }
            }
        }
        if (!matched) {
            ++i;
            continue;
        }
        std::string candidate(text.substr(i, j - i + 1));
        auto parsed = nlohmann::json::parse(candidate, nullptr, false);
        if (!parsed.is_discarded() && parsed.is_object()) {
            objects.push_back(std::move(candidate));
            i = j + 1;
        } else {
            ++i;
        }
    }
    return objects;
}

AllocationFindings parse_allocation_response(const RawCompletion& raw) {
    auto objects = extract_json_objects(raw.text);
    if (objects.empty()) {
        throw backend_error("completion contains no JSON object: \"" + snippet(raw.text) + "\"");
    }

    // Final-answer rule: the last object wins. When trailing brace noise
    // (an echoed code block, an empty `{}`) follows the answer, fall back to
    // the last object that actually carries an answer field.
    const std::string* chosen = &objects.back();
    for (auto it = objects.rbegin(); it != objects.rend(); ++it) {
        auto parsed = nlohmann::json::parse(*it);
        if (parsed.contains("allocated_variables") || parsed.contains("deallocated_variables")) {
            chosen = &*it;
            break;
        }
    }

    auto obj = nlohmann::json::parse(*chosen);
    AllocationFindings findings;
    read_name_list(obj, "allocated_variables", findings.allocated_variables);
    read_name_list(obj, "deallocated_variables", findings.deallocated_variables);
    return findings;
}

PostFilterVerdict parse_postfilter_response(const RawCompletion& raw) {
    PostFilterVerdict verdict;
    verdict.raw = raw;

    auto objects = extract_json_objects(raw.text);
    if (objects.empty()) return verdict;

    auto obj = nlohmann::ordered_json::parse(objects.back(), nullptr, false);
    if (obj.is_discarded()) return verdict;

    if (auto answer = find_bool_answer(obj)) {
        verdict.points_into_argument = *answer ? Verdict::Yes : Verdict::No;
    }
    return verdict;
}

MockBackend::MockBackend() : fixtures_(nlohmann::json::object()) {}

MockBackend::MockBackend(nlohmann::json fixtures) : fixtures_(std::move(fixtures)) {
    if (!fixtures_.is_object()) throw corpus_error("mock fixture document must be a JSON object");
}

MockBackend::MockBackend(const std::filesystem::path& fixture_file)
    : MockBackend(nlohmann::json::parse(read_file(fixture_file), nullptr, false)) {
    if (fixtures_.is_discarded()) {
        throw corpus_error("mock fixture file is not valid JSON: " + fixture_file.string());
    }
}

std::string MockBackend::complete(const PromptText& prompt, const GenerationConfig&) {
    calls_.fetch_add(1);

    std::string text_hash = fnv1a64_hex(prompt.text);
    if (fixtures_.contains("by_hash") && fixtures_["by_hash"].contains(text_hash)) {
        return fixtures_["by_hash"][text_hash].get<std::string>();
    }

    if (!prompt.function_id.empty()) {
        std::string tag = kind_tag(prompt.kind);
        std::string name;
        try {
            name = parse_function_id(prompt.function_id).name;
        } catch (const Error&) {
            name.clear();
        }
        if (!name.empty() && fixtures_.contains(tag) && fixtures_[tag].contains(name)) {
            return fixtures_[tag][name].get<std::string>();
        }
    }

    if (fixtures_.contains("default")) return fixtures_["default"].get<std::string>();

    return prompt.kind == PromptKind::Initial
               ? R"({"allocated_variables": [], "deallocated_variables": []})"
               : R"({"answer": "No"})";
}

CompletionCache::CompletionCache(std::filesystem::path dir)
    : enabled_(true), dir_(std::move(dir)) {}

std::filesystem::path CompletionCache::path_for(std::uint64_t key) const {
    std::ostringstream hex;
    hex << std::hex << std::setw(16) << std::setfill('0') << key;
    std::string name = hex.str();
    return dir_ / name.substr(0, 2) / (name + ".json");
}

std::optional<std::string> CompletionCache::lookup(std::uint64_t key) {
    if (!enabled_) return std::nullopt;
    auto path = path_for(key);
    auto content = try_read_file(path);
    if (!content) return std::nullopt;

    auto entry = nlohmann::json::parse(*content, nullptr, false);
    if (entry.is_discarded() || !entry.is_object() || !entry.contains("text") ||
        !entry["text"].is_string()) {
        std::lock_guard lock(mu_);
        warnings_.push_back("cache entry unreadable, bypassing: " + path.string());
        return std::nullopt;
    }
    return entry["text"].get<std::string>();
}

void CompletionCache::store(std::uint64_t key, const std::string& model, const std::string& text) {
    if (!enabled_) return;
    auto path = path_for(key);
    std::filesystem::create_directories(path.parent_path());

    std::ostringstream hex;
    hex << std::hex << std::setw(16) << std::setfill('0') << key;

    nlohmann::json entry{
        {"prompt_hash", hex.str()},
        {"model", model},
        {"text", text},
        {"timestamp", iso_utc_now()},
    };
    write_file_atomic(path, entry.dump(2) + "\n");
}

std::vector<std::string> CompletionCache::take_warnings() {
    std::lock_guard lock(mu_);
    return std::exchange(warnings_, {});
}

std::uint64_t prompt_cache_key(const PromptText& prompt, const GenerationConfig& config) {
    std::ostringstream key;
    key << kind_tag(prompt.kind) << '\n'
        << config.model_name << '\n'
        << config.temperature << '\n'
        << prompt.text;
    return fnv1a64(key.str());
}

LlmClient::LlmClient(Backend& backend, GenerationConfig config, CompletionCache* cache)
    : backend_(backend),
      config_(std::move(config)),
      cache_(cache),
      in_flight_(std::max(1, config_.max_in_flight)) {}

RawCompletion LlmClient::complete(const PromptText& prompt) {
    const std::uint64_t key = prompt_cache_key(prompt, config_);

    if (cache_ && cache_->enabled()) {
        if (auto hit = cache_->lookup(key)) {
            cache_hits_.fetch_add(1);
            return {std::move(*hit), backend_.id(), true};
        }
    }

    in_flight_.acquire();
    std::string text;
    try {
        text = backend_.complete(prompt, config_);
    } catch (...) {
        in_flight_.release();
        throw;
    }
    in_flight_.release();
    backend_calls_.fetch_add(1);

    if (cache_ && cache_->enabled()) {
        cache_->store(key, config_.model_name, text);
    }
    return {std::move(text), backend_.id(), false};
}

} // namespace memanno
