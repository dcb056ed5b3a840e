#include "memanno/util.hpp"

#include "memanno/errors.hpp"

#include <algorithm>
#include <cctype>
#include <ctime>
#include <fstream>
#include <random>
#include <sstream>

namespace memanno {

std::uint64_t fnv1a64(std::string_view data) {
    std::uint64_t hash = 1469598103934665603ull;
    for (unsigned char c : data) {
        hash ^= c;
        hash *= 1099511628211ull;
    }
    return hash;
}

std::string fnv1a64_hex(std::string_view data) {
    static const char* digits = "0123456789abcdef";
    std::uint64_t h = fnv1a64(data);
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<size_t>(i)] = digits[h & 0xf];
        h >>= 4;
    }
    return out;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw corpus_error("cannot read file: " + path.string());
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    if (in.bad()) {
        throw corpus_error("read failed: " + path.string());
    }
    return buf.str();
}

std::optional<std::string> try_read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        return std::nullopt;
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    if (in.bad()) {
        return std::nullopt;
    }
    return buf.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
    namespace fs = std::filesystem;
    fs::path dir = path.parent_path();
    if (!dir.empty()) {
        std::error_code ec;
        fs::create_directories(dir, ec);
    }
    static thread_local std::mt19937_64 rng(std::random_device{}());
    std::ostringstream tmp_name;
    tmp_name << "." << path.filename().string() << ".tmp." << std::hex << rng();
    fs::path tmp = (dir.empty() ? fs::path(".") : dir) / tmp_name.str();
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw usage_error("cannot write file: " + path.string());
        }
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) {
            std::error_code ec;
            fs::remove(tmp, ec);
            throw usage_error("write failed: " + path.string());
        }
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw usage_error("cannot replace file: " + path.string());
    }
}

namespace {

bool glob_match_impl(std::string_view pattern, std::string_view text) {
    size_t p = 0, t = 0;
    size_t star_p = std::string_view::npos, star_t = 0;
    while (t < text.size()) {
        if (p < pattern.size() && (pattern[p] == text[t] || pattern[p] == '?')) {
            ++p;
            ++t;
        } else if (p < pattern.size() && pattern[p] == '[') {
            size_t close = pattern.find(']', p + 2);
            if (close == std::string_view::npos) {
                // Unterminated class, treat '[' literally.
                if (pattern[p] != text[t]) {
                    if (star_p == std::string_view::npos) return false;
                    p = star_p + 1;
                    t = ++star_t;
                    continue;
                }
                ++p;
                ++t;
                continue;
            }
            std::string_view cls = pattern.substr(p + 1, close - p - 1);
            bool negate = !cls.empty() && (cls[0] == '!' || cls[0] == '^');
            if (negate) cls.remove_prefix(1);
            bool matched = false;
            for (size_t i = 0; i < cls.size(); ++i) {
                if (i + 2 < cls.size() && cls[i + 1] == '-') {
                    if (text[t] >= cls[i] && text[t] <= cls[i + 2]) matched = true;
                    i += 2;
                } else if (cls[i] == text[t]) {
                    matched = true;
                }
            }
            if (matched != negate) {
                p = close + 1;
                ++t;
            } else if (star_p != std::string_view::npos) {
                p = star_p + 1;
                t = ++star_t;
            } else {
                return false;
            }
        } else if (p < pattern.size() && pattern[p] == '*') {
            star_p = p++;
            star_t = t;
        } else if (star_p != std::string_view::npos) {
            p = star_p + 1;
            t = ++star_t;
        } else {
            return false;
        }
    }
    while (p < pattern.size() && pattern[p] == '*') ++p;
    return p == pattern.size();
}

} // namespace

bool glob_match(std::string_view pattern, std::string_view path) {
    if (pattern.find('/') == std::string_view::npos) {
        size_t slash = path.rfind('/');
        std::string_view base = (slash == std::string_view::npos) ? path : path.substr(slash + 1);
        return glob_match_impl(pattern, base);
    }
    return glob_match_impl(pattern, path);
}

std::string iso_utc_now() {
    std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void replace_all(std::string& s, std::string_view from, std::string_view to) {
    if (from.empty()) return;
    size_t pos = 0;
    while ((pos = s.find(from, pos)) != std::string::npos) {
        s.replace(pos, from.size(), to);
        pos += to.size();
    }
}

std::string to_lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

bool contains_ci(std::string_view haystack, std::string_view needle) {
    return to_lower(haystack).find(to_lower(needle)) != std::string::npos;
}

std::string trim(std::string_view s) {
    size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    size_t start = 0;
    for (size_t i = 0; i <= s.size(); ++i) {
        if (i == s.size() || s[i] == sep) {
            out.emplace_back(s.substr(start, i - start));
            start = i + 1;
        }
    }
    return out;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
    std::string out;
    for (size_t i = 0; i < parts.size(); ++i) {
        if (i) out.append(sep);
        out.append(parts[i]);
    }
    return out;
}

} // namespace memanno
