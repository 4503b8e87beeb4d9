#pragma once

#include <stdexcept>
#include <string>

namespace fairsynth {

// Invalid schema, roles, config documents, or argument domains.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed data at rest: CSV rows, SCM files, response payloads.
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Remote backend failures that survived the retry budget.
class BackendError : public std::runtime_error {
public:
    explicit BackendError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace fairsynth
