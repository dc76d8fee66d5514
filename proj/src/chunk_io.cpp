#include "groundrag/chunk_io.hpp"

#include <fstream>
#include <set>
#include <string>

#include "groundrag/errors.hpp"

namespace groundrag::ingest {

using json = nlohmann::json;

json chunk_to_json(const Chunk& chunk) {
    return json{{"chunk_id", chunk.chunk_id},
                {"doc_id", chunk.doc_id},
                {"ordinal", chunk.ordinal},
                {"text", chunk.text},
                {"span", json::array({chunk.span.start, chunk.span.end})},
                {"metadata", chunk.metadata}};
}

Chunk chunk_from_json(const json& j) {
    Chunk c;
    c.chunk_id = j.at("chunk_id").get<std::string>();
    c.doc_id = j.at("doc_id").get<std::string>();
    c.ordinal = j.at("ordinal").get<std::size_t>();
    c.text = j.at("text").get<std::string>();
    const auto& span = j.at("span");
    if (!span.is_array() || span.size() != 2) throw Error(ErrorKind::validation, "span must be [start, end]");
    c.span = {span[0].get<std::size_t>(), span[1].get<std::size_t>()};
    if (c.span.start >= c.span.end) throw Error(ErrorKind::validation, "empty span");
    if (c.text.empty()) throw Error(ErrorKind::validation, "empty chunk text");
    if (j.contains("metadata")) c.metadata = j["metadata"].get<std::map<std::string, std::string>>();
    return c;
}

void write_chunks_jsonl(std::ostream& out, const std::vector<Chunk>& chunks) {
    for (const auto& c : chunks) out << chunk_to_json(c).dump() << '\n';
}

void save_chunks_jsonl(const std::filesystem::path& path, const std::vector<Chunk>& chunks) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorKind::io, "cannot write '" + tmp.string() + "'");
        write_chunks_jsonl(out, chunks);
        out.flush();
        if (!out) throw Error(ErrorKind::io, "failed writing '" + tmp.string() + "'");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw Error(ErrorKind::io, "cannot replace '" + path.string() + "': " + ec.message());
}

std::vector<Chunk> read_chunks_jsonl(std::istream& in) {
    std::vector<Chunk> chunks;
    std::set<std::string> ids;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            Chunk c = chunk_from_json(json::parse(line));
            if (!ids.insert(c.chunk_id).second) {
                throw Error(ErrorKind::validation, "duplicate chunk id '" + c.chunk_id + "'");
            }
            chunks.push_back(std::move(c));
        } catch (const json::exception& e) {
            throw Error(ErrorKind::validation, "chunks line " + std::to_string(line_no) + ": " + e.what());
        } catch (const Error& e) {
            throw Error(ErrorKind::validation, "chunks line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return chunks;
}

std::vector<Chunk> load_chunks_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::io, "cannot open '" + path.string() + "'");
    return read_chunks_jsonl(in);
}

}  // namespace groundrag::ingest
