#pragma once

#include <stdexcept>
#include <string>

namespace wordbench {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid argument passed by the caller (maps to a usage error in the CLI).
class ArgumentError : public Error {
public:
    using Error::Error;
};

/// Missing or unreadable configuration input such as a stop-word list.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Malformed text input; carries the 1-based line number when known.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line = 0)
        : Error(line ? what + " (line " + std::to_string(line) + ")" : what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Malformed binary input: bad magic, bad version, truncation.
class FormatError : public Error {
public:
    using Error::Error;
};

/// Well-formed input whose content cannot be processed (empty corpus, log of 0, ...).
class DataError : public Error {
public:
    using Error::Error;
};

} // namespace wordbench
