#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace groundrag::ingest {

enum class Language { fi, sv, en, unknown };

std::string_view to_string(Language lang);
// Unrecognised tags map to Language::unknown.
Language parse_language(std::string_view tag);

struct SourceDocument {
    std::string doc_id;
    std::string title;
    Language language = Language::unknown;
    std::string text;
    std::string source_path;
    std::string ingested_at;
    // Invalid UTF-8 sequences replaced with U+FFFD during extraction.
    std::size_t replaced_sequences = 0;
};

// Offsets are in Unicode code points into SourceDocument::text.
struct Span {
    std::size_t start = 0;
    std::size_t end = 0;

    bool operator==(const Span&) const = default;
};

struct Chunk {
    std::string chunk_id;
    std::string doc_id;
    std::size_t ordinal = 0;
    std::string text;
    Span span;
    std::map<std::string, std::string> metadata;

    bool operator==(const Chunk&) const = default;
};

enum class BoundaryMode { hard, sentence };

std::string_view to_string(BoundaryMode mode);
BoundaryMode parse_boundary_mode(std::string_view name);

struct ChunkingConfig {
    std::size_t max_chars = 1000;
    std::size_t overlap_chars = 200;
    BoundaryMode boundary_mode = BoundaryMode::hard;

    // Throws Error(config) unless max_chars > 0 and overlap_chars < max_chars.
    void validate() const;
};

enum class SourceFormat { txt, md };

// CRLF and lone CR become LF; runs of more than two blank lines collapse to two.
std::string normalize_text(std::string_view text);

// First 12 hex chars of SHA-256(bytes), '-', then the sanitized filename stem.
std::string make_doc_id(std::string_view file_bytes, const std::filesystem::path& path);

// Builds a document from raw bytes already read from `path`.
SourceDocument document_from_bytes(std::string_view bytes, const std::filesystem::path& path,
                                   SourceFormat format);

SourceDocument extract_text(const std::filesystem::path& path, SourceFormat format);

// Pluggable extractor for formats without a built-in reader (PDF, scans).
// The command receives the file path as its final argument and must write
// UTF-8 text to stdout. The doc_id still hashes the original file bytes.
SourceDocument extract_with_command(const std::string& command,
                                    const std::filesystem::path& path);

std::vector<Chunk> chunk_document(const SourceDocument& doc, const ChunkingConfig& cfg);

Chunk tag_metadata(Chunk chunk, const SourceDocument& doc);

struct CorpusEntry {
    std::filesystem::path path;
    std::optional<std::string> title;
    std::optional<Language> language;
};

// `root` is either a directory (all *.txt and *.md files, sorted, non-recursive)
// or a JSON manifest: [{"path": ..., "title"?: ..., "language"?: ...}].
// Manifest paths are resolved relative to the manifest's directory.
std::vector<CorpusEntry> list_corpus(const std::filesystem::path& root);

struct CorpusOptions {
    // Used for entries whose extension is neither .txt nor .md.
    std::optional<std::string> extractor_command;
};

// Extracts every corpus entry. Duplicate doc_ids are rejected.
std::vector<SourceDocument> load_corpus(const std::filesystem::path& root,
                                        const CorpusOptions& options = {});

// Chunks and tags every document in order.
std::vector<Chunk> chunk_corpus(const std::vector<SourceDocument>& docs,
                                const ChunkingConfig& cfg);

}  // namespace groundrag::ingest
