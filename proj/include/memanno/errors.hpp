#pragma once

#include <stdexcept>
#include <string>

namespace memanno {

/// Error categories map 1:1 onto CLI exit codes (usage=1, corpus=2, backend=3).
enum class ErrorKind {
    Usage,
    Corpus,
    Backend,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const { return kind_; }

    int exit_code() const {
        switch (kind_) {
        case ErrorKind::Usage: return 1;
        case ErrorKind::Corpus: return 2;
        case ErrorKind::Backend: return 3;
        }
        return 1;
    }

private:
    ErrorKind kind_;
};

inline Error usage_error(const std::string& message) { return Error(ErrorKind::Usage, message); }
inline Error corpus_error(const std::string& message) { return Error(ErrorKind::Corpus, message); }
inline Error backend_error(const std::string& message) { return Error(ErrorKind::Backend, message); }

} // namespace memanno
