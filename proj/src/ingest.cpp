#include "groundrag/ingest.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>
#include <sys/wait.h>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "groundrag/errors.hpp"
#include "groundrag/timeutil.hpp"
#include "groundrag/utf8.hpp"

namespace groundrag::ingest {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string_view to_string(Language lang) {
    switch (lang) {
        case Language::fi: return "fi";
        case Language::sv: return "sv";
        case Language::en: return "en";
        case Language::unknown: return "unknown";
    }
    return "unknown";
}

Language parse_language(std::string_view tag) {
    if (tag == "fi") return Language::fi;
    if (tag == "sv") return Language::sv;
    if (tag == "en") return Language::en;
    return Language::unknown;
}

std::string_view to_string(BoundaryMode mode) {
    return mode == BoundaryMode::hard ? "hard" : "sentence";
}

BoundaryMode parse_boundary_mode(std::string_view name) {
    if (name == "hard") return BoundaryMode::hard;
    if (name == "sentence") return BoundaryMode::sentence;
    throw Error(ErrorKind::config, "unknown boundary mode '" + std::string(name) + "'");
}

void ChunkingConfig::validate() const {
    if (max_chars == 0) throw Error(ErrorKind::config, "max_chars must be positive");
    if (overlap_chars >= max_chars) {
        throw Error(ErrorKind::config, "overlap_chars (" + std::to_string(overlap_chars) +
                                           ") must be smaller than max_chars (" +
                                           std::to_string(max_chars) + ")");
    }
}

namespace {

bool is_blank_line(std::string_view line) {
    return std::all_of(line.begin(), line.end(),
                       [](char c) { return c == ' ' || c == '\t' || c == '\f' || c == '\v'; });
}

std::string sha256_hex(std::string_view bytes) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1) {
        throw Error(ErrorKind::io, "SHA-256 digest failed");
    }
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(kHex[digest[i] >> 4]);
        out.push_back(kHex[digest[i] & 0xF]);
    }
    return out;
}

std::string sanitize_stem(const fs::path& path) {
    const std::string stem = path.stem().string();
    std::string out;
    for (unsigned char c : stem) {
        if (std::isalnum(c) || c == '-' || c == '_') {
            out.push_back(static_cast<char>(std::tolower(c)));
        } else if (out.empty() || out.back() != '_') {
            out.push_back('_');
        }
    }
    while (!out.empty() && out.back() == '_') out.pop_back();
    return out.empty() ? "doc" : out;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::io, "cannot open '" + path.string() + "'");
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw Error(ErrorKind::io, "failed reading '" + path.string() + "'");
    return bytes;
}

std::string markdown_title(std::string_view text) {
    std::size_t pos = 0;
    while (pos < text.size()) {
        const std::size_t nl = text.find('\n', pos);
        const std::string_view line =
            text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        if (line.starts_with("# ")) {
            std::string_view title = line.substr(2);
            while (!title.empty() && (title.back() == ' ' || title.back() == '#')) {
                title.remove_suffix(1);
            }
            if (!title.empty()) return std::string(title);
        }
        if (nl == std::string_view::npos) break;
        pos = nl + 1;
    }
    return {};
}

bool is_sentence_end(char32_t c) {
    return c == U'.' || c == U'!' || c == U'?' || c == U'…';
}

bool is_upper(char32_t c) { return utf8::to_lower(c) != c; }

// Largest end position in [min_end, max_end] that falls right after
// sentence-ending punctuation followed by whitespace or an uppercase letter.
std::optional<std::size_t> sentence_end_before(const std::u32string& text, std::size_t min_end,
                                               std::size_t max_end) {
    for (std::size_t end = max_end; end >= min_end && end >= 1; --end) {
        if (end >= text.size()) continue;
        if (is_sentence_end(text[end - 1]) && (utf8::is_space(text[end]) || is_upper(text[end]))) {
            return end;
        }
    }
    return std::nullopt;
}

std::string shell_quote(const std::string& s) {
    std::string out = "'";
    for (char c : s) {
        if (c == '\'') {
            out += "'\\''";
        } else {
            out.push_back(c);
        }
    }
    out.push_back('\'');
    return out;
}

SourceFormat format_for(const fs::path& path) {
    return path.extension() == ".md" ? SourceFormat::md : SourceFormat::txt;
}

bool has_builtin_reader(const fs::path& path) {
    const auto ext = path.extension();
    return ext == ".txt" || ext == ".md";
}

}  // namespace

std::string normalize_text(std::string_view text) {
    std::string unified;
    unified.reserve(text.size());
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (text[i] == '\r') {
            unified.push_back('\n');
            if (i + 1 < text.size() && text[i + 1] == '\n') ++i;
        } else {
            unified.push_back(text[i]);
        }
    }

    std::string out;
    out.reserve(unified.size());
    std::size_t blank_run = 0;
    std::size_t pos = 0;
    while (true) {
        const std::size_t nl = unified.find('\n', pos);
        const bool last = nl == std::string::npos;
        const std::string_view line =
            std::string_view(unified).substr(pos, last ? std::string::npos : nl - pos);
        if (is_blank_line(line)) {
            ++blank_run;
        } else {
            blank_run = 0;
        }
        // The unterminated tail is not a line of its own when empty.
        const bool keep = blank_run <= 2 || (last && line.empty());
        if (keep) {
            out.append(line);
            if (!last) out.push_back('\n');
        }
        if (last) break;
        pos = nl + 1;
    }
    return out;
}

std::string make_doc_id(std::string_view file_bytes, const fs::path& path) {
    return sha256_hex(file_bytes).substr(0, 12) + "-" + sanitize_stem(path);
}

SourceDocument document_from_bytes(std::string_view bytes, const fs::path& path,
                                   SourceFormat format) {
    SourceDocument doc;
    std::size_t replaced = 0;
    const std::u32string decoded = utf8::decode(bytes, &replaced);
    const bool has_content =
        std::any_of(decoded.begin(), decoded.end(), [](char32_t c) { return !utf8::is_space(c); });
    if (!has_content) throw Error(ErrorKind::empty_document, "'" + path.string() + "' has no text");
    doc.text = normalize_text(utf8::encode(decoded));
    doc.replaced_sequences = replaced;
    doc.doc_id = make_doc_id(bytes, path);
    doc.source_path = path.string();
    if (format == SourceFormat::md) doc.title = markdown_title(doc.text);
    if (doc.title.empty()) doc.title = path.stem().string();
    doc.ingested_at = now_utc();
    return doc;
}

SourceDocument extract_text(const fs::path& path, SourceFormat format) {
    return document_from_bytes(read_file(path), path, format);
}

SourceDocument extract_with_command(const std::string& command, const fs::path& path) {
    const std::string raw = read_file(path);
    const std::string cmd = command + " " + shell_quote(path.string());
    FILE* pipe = ::popen(cmd.c_str(), "r");
    if (!pipe) throw Error(ErrorKind::io, "cannot start extractor '" + command + "'");
    std::string text;
    std::array<char, 4096> buf{};
    std::size_t n = 0;
    while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) text.append(buf.data(), n);
    const int status = ::pclose(pipe);
    if (status == -1 || !WIFEXITED(status) || WEXITSTATUS(status) != 0) {
        throw Error(ErrorKind::io, "extractor '" + command + "' failed on '" + path.string() + "'");
    }
    SourceDocument doc = document_from_bytes(text, path, SourceFormat::txt);
    doc.doc_id = make_doc_id(raw, path);
    return doc;
}

std::vector<Chunk> chunk_document(const SourceDocument& doc, const ChunkingConfig& cfg) {
    cfg.validate();
    const std::u32string text = utf8::decode(doc.text);
    const std::size_t len = text.size();
    std::vector<Chunk> chunks;
    std::size_t start = 0;
    while (start < len) {
        std::size_t end = std::min(len, start + cfg.max_chars);
        if (end < len && cfg.boundary_mode == BoundaryMode::sentence) {
            if (auto b = sentence_end_before(text, start + cfg.overlap_chars + 1, end)) end = *b;
        }
        Chunk chunk;
        chunk.doc_id = doc.doc_id;
        chunk.ordinal = chunks.size();
        chunk.chunk_id = doc.doc_id + "#" + std::to_string(chunk.ordinal);
        chunk.span = {start, end};
        chunk.text = utf8::encode(std::u32string_view(text).substr(start, end - start));
        chunks.push_back(std::move(chunk));
        if (end == len) break;
        start = end - cfg.overlap_chars;
    }
    return chunks;
}

Chunk tag_metadata(Chunk chunk, const SourceDocument& doc) {
    if (chunk.doc_id != doc.doc_id) {
        throw Error(ErrorKind::consistency, "chunk '" + chunk.chunk_id +
                                                "' does not belong to document '" + doc.doc_id +
                                                "'");
    }
    chunk.metadata["title"] = doc.title;
    chunk.metadata["source_path"] = doc.source_path;
    chunk.metadata["language"] = std::string(to_string(doc.language));
    return chunk;
}

std::vector<CorpusEntry> list_corpus(const fs::path& root) {
    std::error_code ec;
    if (fs::is_directory(root, ec)) {
        std::vector<CorpusEntry> entries;
        for (const auto& item : fs::directory_iterator(root)) {
            if (item.is_regular_file() && has_builtin_reader(item.path())) {
                entries.push_back({item.path(), std::nullopt, std::nullopt});
            }
        }
        std::sort(entries.begin(), entries.end(),
                  [](const auto& a, const auto& b) { return a.path < b.path; });
        return entries;
    }

    json manifest;
    try {
        manifest = json::parse(read_file(root));
    } catch (const json::exception& e) {
        throw Error(ErrorKind::validation, "manifest '" + root.string() + "': " + e.what());
    }
    if (!manifest.is_array()) {
        throw Error(ErrorKind::validation, "manifest '" + root.string() + "' must be a JSON array");
    }
    std::vector<CorpusEntry> entries;
    const fs::path base = root.parent_path();
    for (const auto& item : manifest) {
        if (!item.is_object() || !item.contains("path") || !item["path"].is_string()) {
            throw Error(ErrorKind::validation, "manifest entry without a string 'path'");
        }
        CorpusEntry entry;
        const fs::path p = item["path"].get<std::string>();
        entry.path = p.is_absolute() ? p : base / p;
        if (item.contains("title")) entry.title = item["title"].get<std::string>();
        if (item.contains("language")) {
            entry.language = parse_language(item["language"].get<std::string>());
        }
        entries.push_back(std::move(entry));
    }
    return entries;
}

std::vector<SourceDocument> load_corpus(const fs::path& root, const CorpusOptions& options) {
    std::vector<SourceDocument> docs;
    std::set<std::string> seen;
    for (const auto& entry : list_corpus(root)) {
        SourceDocument doc;
        if (has_builtin_reader(entry.path)) {
            doc = extract_text(entry.path, format_for(entry.path));
        } else if (options.extractor_command) {
            doc = extract_with_command(*options.extractor_command, entry.path);
        } else {
            throw Error(ErrorKind::validation, "no extractor configured for '" +
                                                   entry.path.string() + "'");
        }
        if (entry.title) doc.title = *entry.title;
        if (entry.language) doc.language = *entry.language;
        if (!seen.insert(doc.doc_id).second) {
            throw Error(ErrorKind::consistency, "duplicate document id '" + doc.doc_id + "'");
        }
        docs.push_back(std::move(doc));
    }
    return docs;
}

std::vector<Chunk> chunk_corpus(const std::vector<SourceDocument>& docs,
                                const ChunkingConfig& cfg) {
    std::vector<Chunk> all;
    for (const auto& doc : docs) {
        for (auto& chunk : chunk_document(doc, cfg)) all.push_back(tag_metadata(std::move(chunk), doc));
    }
    return all;
}

}  // namespace groundrag::ingest
