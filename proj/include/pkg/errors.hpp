#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace pkg {

// Root of every error thrown by this library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class MissingFile : public Error {
public:
    explicit MissingFile(const std::string& path)
        : Error("missing file: " + path), path_(path) {}
    const std::string& path() const { return path_; }

private:
    std::string path_;
};

class IoFailure : public Error {
public:
    using Error::Error;
};

namespace corpus {

class SchemaViolation : public Error {
public:
    SchemaViolation(std::size_t line, std::string field, const std::string& detail)
        : Error("schema violation at line " + std::to_string(line) + ", field \"" + field +
                "\": " + detail),
          line_(line),
          field_(std::move(field)) {}
    std::size_t line() const { return line_; }
    const std::string& field() const { return field_; }

private:
    std::size_t line_;
    std::string field_;
};

class MissingBackground : public Error {
public:
    explicit MissingBackground(const std::string& record_id)
        : Error("record " + record_id + " has neither gold_background nor gold_table"),
          record_id_(record_id) {}
    const std::string& record_id() const { return record_id_; }

private:
    std::string record_id_;
};

} // namespace corpus

namespace templates {

class UnsupportedTask : public Error {
public:
    using Error::Error;
};

class EmptyField : public Error {
public:
    using Error::Error;
};

class EmptyQuestion : public Error {
public:
    using Error::Error;
};

class TooManyOptions : public Error {
public:
    using Error::Error;
};

class UnfilledPlaceholder : public Error {
public:
    using Error::Error;
};

} // namespace templates

namespace retrieval {

class DuplicateDocId : public Error {
public:
    explicit DuplicateDocId(const std::string& doc_id)
        : Error("duplicate doc_id: " + doc_id), doc_id_(doc_id) {}
    const std::string& doc_id() const { return doc_id_; }

private:
    std::string doc_id_;
};

class UnknownDoc : public Error {
public:
    explicit UnknownDoc(const std::string& doc_id)
        : Error("doc_id not in index: " + doc_id), doc_id_(doc_id) {}
    const std::string& doc_id() const { return doc_id_; }

private:
    std::string doc_id_;
};

class IndexIoError : public Error {
public:
    using Error::Error;
};

} // namespace retrieval

namespace backend {

enum class FailureKind { Timeout, RateLimited, MalformedResponse, TransportFailure };

inline const char* to_string(FailureKind k) {
    switch (k) {
    case FailureKind::Timeout: return "Timeout";
    case FailureKind::RateLimited: return "RateLimited";
    case FailureKind::MalformedResponse: return "MalformedResponse";
    case FailureKind::TransportFailure: return "TransportFailure";
    }
    return "?";
}

// Every backend failure carries how many attempts were made before giving up.
class BackendError : public Error {
public:
    BackendError(FailureKind kind, int attempts, const std::string& detail)
        : Error(std::string(to_string(kind)) + " after " + std::to_string(attempts) +
                " attempt(s): " + detail),
          kind_(kind),
          attempts_(attempts) {}
    FailureKind kind() const { return kind_; }
    int attempts() const { return attempts_; }

private:
    FailureKind kind_;
    int attempts_;
};

} // namespace backend

namespace guide {

class EmptyGeneration : public Error {
public:
    using Error::Error;
};

} // namespace guide

namespace fusion {

class DimensionMismatch : public Error {
public:
    using Error::Error;
};

class NonFiniteInput : public Error {
public:
    using Error::Error;
};

class NonFiniteValue : public Error {
public:
    using Error::Error;
};

class ShapeMismatch : public Error {
public:
    using Error::Error;
};

} // namespace fusion

namespace eval {

class ScoringError : public Error {
public:
    using Error::Error;
};

class UnknownRecordId : public ScoringError {
public:
    explicit UnknownRecordId(const std::string& id)
        : ScoringError("prediction references unknown record id: " + id) {}
};

class DuplicatePrediction : public ScoringError {
public:
    explicit DuplicatePrediction(const std::string& id)
        : ScoringError("duplicate prediction for record id: " + id) {}
};

class MissingPrediction : public ScoringError {
public:
    explicit MissingPrediction(const std::string& id)
        : ScoringError("no prediction for record id: " + id) {}
};

class EmptySplit : public ScoringError {
public:
    EmptySplit() : ScoringError("cannot score an empty split") {}
};

class MissingCategoryTag : public ScoringError {
public:
    MissingCategoryTag(const std::string& record_id, const std::string& tag)
        : ScoringError("record " + record_id + " lacks category tag \"" + tag + "\"") {}
};

} // namespace eval

namespace cli {

class ConfigError : public Error {
public:
    using Error::Error;
};

} // namespace cli

} // namespace pkg
