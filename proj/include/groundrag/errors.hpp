#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace groundrag {

enum class ErrorKind {
    io,
    usage,
    empty_document,
    consistency,
    config,
    zero_vector,
    build_failed,
    dimension,
    corrupt_index,
    empty_query,
    retrieval_failed,
    template_error,
    timeout,
    backend,
    stream_aborted,
    storage,
    not_found,
    validation,
    empty_evaluation,
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
    Error(ErrorKind kind, const std::string& message);

    ErrorKind kind() const noexcept { return kind_; }

 private:
    ErrorKind kind_;
};

class CorruptIndexError : public Error {
 public:
    CorruptIndexError(std::uint64_t offset, const std::string& reason);

    std::uint64_t offset() const noexcept { return offset_; }
    const std::string& reason() const noexcept { return reason_; }

 private:
    std::uint64_t offset_;
    std::string reason_;
};

class BuildFailedError : public Error {
 public:
    BuildFailedError(std::size_t embedded_before_failure, const std::string& cause);

    // Number of chunks successfully embedded before the provider gave up.
    std::size_t progress() const noexcept { return progress_; }

 private:
    std::size_t progress_;
};

class BackendError : public Error {
 public:
    BackendError(int status, std::string body_excerpt);

    int status() const noexcept { return status_; }
    const std::string& body_excerpt() const noexcept { return body_excerpt_; }

 private:
    int status_;
    std::string body_excerpt_;
};

class StreamAbortedError : public Error {
 public:
    StreamAbortedError(std::string partial_text, bool cancelled_by_caller, const std::string& why);

    const std::string& partial_text() const noexcept { return partial_text_; }
    bool cancelled_by_caller() const noexcept { return cancelled_by_caller_; }

 private:
    std::string partial_text_;
    bool cancelled_by_caller_;
};

class TimeoutError : public Error {
 public:
    TimeoutError(int attempts, std::string partial_text);

    int attempts() const noexcept { return attempts_; }
    const std::string& partial_text() const noexcept { return partial_text_; }

 private:
    int attempts_;
    std::string partial_text_;
};

}  // namespace groundrag
