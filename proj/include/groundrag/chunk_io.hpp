#pragma once

#include <filesystem>
#include <iosfwd>
#include <vector>

#include <nlohmann/json.hpp>

#include "groundrag/ingest.hpp"

namespace groundrag::ingest {

// {"chunk_id", "doc_id", "ordinal", "text", "span": [start, end], "metadata": {...}}
nlohmann::json chunk_to_json(const Chunk& chunk);
Chunk chunk_from_json(const nlohmann::json& j);

void write_chunks_jsonl(std::ostream& out, const std::vector<Chunk>& chunks);
// Writes a sibling temporary file then renames it over `path`.
void save_chunks_jsonl(const std::filesystem::path& path, const std::vector<Chunk>& chunks);

// Rejects malformed lines and duplicate chunk ids with Error(validation)
// naming the 1-based line number. Blank lines are ignored.
std::vector<Chunk> read_chunks_jsonl(std::istream& in);
std::vector<Chunk> load_chunks_jsonl(const std::filesystem::path& path);

}  // namespace groundrag::ingest
