#include "groundrag/errors.hpp"

namespace groundrag {

std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::io: return "IoError";
        case ErrorKind::usage: return "UsageError";
        case ErrorKind::empty_document: return "EmptyDocument";
        case ErrorKind::consistency: return "ConsistencyError";
        case ErrorKind::config: return "ConfigError";
        case ErrorKind::zero_vector: return "ZeroVector";
        case ErrorKind::build_failed: return "BuildFailed";
        case ErrorKind::dimension: return "DimensionError";
        case ErrorKind::corrupt_index: return "CorruptIndex";
        case ErrorKind::empty_query: return "EmptyQuery";
        case ErrorKind::retrieval_failed: return "RetrievalFailed";
        case ErrorKind::template_error: return "TemplateError";
        case ErrorKind::timeout: return "Timeout";
        case ErrorKind::backend: return "BackendError";
        case ErrorKind::stream_aborted: return "StreamAborted";
        case ErrorKind::storage: return "StorageError";
        case ErrorKind::not_found: return "NotFound";
        case ErrorKind::validation: return "ValidationError";
        case ErrorKind::empty_evaluation: return "EmptyEvaluation";
    }
    return "Error";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(message), kind_(kind) {}

CorruptIndexError::CorruptIndexError(std::uint64_t offset, const std::string& reason)
    : Error(ErrorKind::corrupt_index, reason + " (at byte offset " + std::to_string(offset) + ")"),
      offset_(offset),
      reason_(reason) {}

BuildFailedError::BuildFailedError(std::size_t embedded_before_failure, const std::string& cause)
    : Error(ErrorKind::build_failed, "index build failed after " +
                                         std::to_string(embedded_before_failure) +
                                         " embedded chunks: " + cause),
      progress_(embedded_before_failure) {}

BackendError::BackendError(int status, std::string body_excerpt)
    : Error(ErrorKind::backend,
            "backend returned status " + std::to_string(status) +
                (body_excerpt.empty() ? std::string{} : ": " + body_excerpt)),
      status_(status),
      body_excerpt_(std::move(body_excerpt)) {}

StreamAbortedError::StreamAbortedError(std::string partial_text, bool cancelled_by_caller,
                                       const std::string& why)
    : Error(ErrorKind::stream_aborted, "stream aborted: " + why),
      partial_text_(std::move(partial_text)),
      cancelled_by_caller_(cancelled_by_caller) {}

TimeoutError::TimeoutError(int attempts, std::string partial_text)
    : Error(ErrorKind::timeout,
            "backend timed out after " + std::to_string(attempts) + " attempt(s)"),
      attempts_(attempts),
      partial_text_(std::move(partial_text)) {}

}  // namespace groundrag
