#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ragloop {

// Base for everything thrown by this library. Callers that want a single
// catch site can catch this; callers that care distinguish the subtypes.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid configuration value. `field` names the offending knob.
class ConfigError : public Error {
public:
    ConfigError(std::string field, const std::string& msg)
        : Error(field + ": " + msg), field_(std::move(field)) {}
    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

// Filesystem level failure (missing file, short read, bad magic...).
class IoError : public Error {
public:
    using Error::Error;
};

// A JSONL line that does not match the expected record schema.
// line_no is 1-based.
class SchemaError : public Error {
public:
    SchemaError(std::size_t line_no, const std::string& msg)
        : Error("line " + std::to_string(line_no) + ": " + msg), line_no_(line_no) {}
    std::size_t line_no() const noexcept { return line_no_; }

private:
    std::size_t line_no_;
};

// Query issued against an index that was never built or loaded.
class IndexNotBuilt : public Error {
public:
    IndexNotBuilt() : Error("index not built") {}
};

// recall_at asked to score against an empty gold set.
class EmptyGoldSet : public Error {
public:
    EmptyGoldSet() : Error("gold set is empty") {}
};

// Squeeze invoked with no queries at all.
class EmptyInput : public Error {
public:
    explicit EmptyInput(const std::string& msg = "empty input") : Error(msg) {}
};

// Squeezer returned only whitespace.
class SummaryEmpty : public Error {
public:
    SummaryEmpty() : Error("squeezer returned an empty summary") {}
};

// Could not reach the backend at all (connect/read failure, no HTTP status).
class TransportError : public Error {
public:
    using Error::Error;
};

// Backend answered, but with a failure status or an unusable body.
// status is the HTTP status code, or 0 when there is none (e.g. a scripted
// backend running out of entries).
class ProviderError : public Error {
public:
    ProviderError(int status, std::string body)
        : Error(status > 0 ? "provider error " + std::to_string(status) + ": " + body
                           : "provider error: " + body),
          status_(status),
          body_(std::move(body)) {}
    int status() const noexcept { return status_; }
    const std::string& body() const noexcept { return body_; }

private:
    int status_ = 0;
    std::string body_;
};

// Hard cap on backend calls was hit.
class BudgetExceeded : public Error {
public:
    explicit BudgetExceeded(const std::string& msg = "call budget exceeded") : Error(msg) {}
};

// One query of a fan-out bundle failed; query_index says which.
class BundleRetrievalError : public Error {
public:
    BundleRetrievalError(std::size_t query_index, const std::string& msg)
        : Error("query " + std::to_string(query_index) + ": " + msg),
          query_index_(query_index) {}
    std::size_t query_index() const noexcept { return query_index_; }

private:
    std::size_t query_index_;
};

}  // namespace ragloop
