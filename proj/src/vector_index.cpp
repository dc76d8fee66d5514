#include "groundrag/vector_index.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "groundrag/errors.hpp"

namespace groundrag::index {

static_assert(std::endian::native == std::endian::little, "index codec assumes a little-endian host");
static_assert(sizeof(float) == 4);

namespace {

constexpr std::string_view kMagic = "ARGX";

bool hit_before(const SearchHit& a, const SearchHit& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.chunk_id < b.chunk_id;
}

template <typename T>
void put(std::string& out, T value) {
    char buf[sizeof(T)];
    std::memcpy(buf, &value, sizeof(T));
    out.append(buf, sizeof(T));
}

class Reader {
 public:
    explicit Reader(std::string_view bytes) : bytes_(bytes) {}

    template <typename T>
    T get(const char* what) {
        require(sizeof(T), what);
        T value;
        std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return value;
    }

    std::string_view take(std::size_t n, const char* what) {
        require(n, what);
        auto s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    std::size_t pos() const { return pos_; }
    std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
    void require(std::size_t n, const char* what) {
        if (remaining() < n) {
            throw CorruptIndexError(pos_, std::string("truncated while reading ") + what);
        }
    }

    std::string_view bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

double dot(std::span<const float> a, std::span<const float> b) {
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sum += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    }
    return sum;
}

VectorIndex::VectorIndex(std::size_t dim, std::string provider_id, std::vector<IndexEntry> entries,
                         TimePoint built_at)
    : dim_(dim), provider_id_(std::move(provider_id)), entries_(std::move(entries)), built_at_(built_at) {
    if (dim_ == 0) throw Error(ErrorKind::validation, "index dimension must be positive");
    std::sort(entries_.begin(), entries_.end(),
              [](const IndexEntry& a, const IndexEntry& b) { return a.chunk_id < b.chunk_id; });
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        const auto& e = entries_[i];
        if (i > 0 && entries_[i - 1].chunk_id == e.chunk_id) {
            throw Error(ErrorKind::validation, "duplicate chunk id '" + e.chunk_id + "' in index");
        }
        if (e.vector.size() != dim_) {
            throw Error(ErrorKind::validation, "entry '" + e.chunk_id + "' has dimension " +
                                                   std::to_string(e.vector.size()) + ", expected " +
                                                   std::to_string(dim_));
        }
        const double norm = l2_norm(e.vector);
        if (!(std::abs(norm - 1.0) <= kNormTolerance)) {
            throw Error(ErrorKind::validation, "entry '" + e.chunk_id + "' is not unit norm");
        }
    }
}

bool VectorIndex::contains(std::string_view chunk_id) const {
    auto it = std::lower_bound(entries_.begin(), entries_.end(), chunk_id,
                               [](const IndexEntry& e, std::string_view id) { return e.chunk_id < id; });
    return it != entries_.end() && it->chunk_id == chunk_id;
}

std::vector<SearchHit> VectorIndex::search(std::span<const float> query, std::size_t k,
                                           double threshold) const {
    if (k == 0) throw Error(ErrorKind::validation, "k must be at least 1");
    if (entries_.empty()) return {};
    if (query.size() != dim_) {
        throw Error(ErrorKind::dimension, "query dimension " + std::to_string(query.size()) +
                                              " does not match index dimension " + std::to_string(dim_));
    }
    std::vector<SearchHit> candidates;
    candidates.reserve(entries_.size());
    for (const auto& e : entries_) {
        const double score = dot(query, e.vector);
        if (score >= threshold) candidates.push_back({e.chunk_id, score});
    }
    const std::size_t take = std::min(k, candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(take),
                      candidates.end(), hit_before);
    candidates.resize(take);
    return candidates;
}

VectorIndex build_index(std::span<const ingest::Chunk> chunks, EmbeddingProvider& provider,
                        std::size_t batch_size, int retries, BuildReport* report) {
    if (chunks.empty()) throw Error(ErrorKind::validation, "cannot build an index from zero chunks");
    if (batch_size == 0) throw Error(ErrorKind::validation, "batch_size must be at least 1");

    BuildReport local;
    std::vector<IndexEntry> entries;
    entries.reserve(chunks.size());
    std::size_t dim = 0;

    for (std::size_t begin = 0; begin < chunks.size(); begin += batch_size) {
        const std::size_t end = std::min(chunks.size(), begin + batch_size);
        std::vector<std::string> texts;
        for (std::size_t i = begin; i < end; ++i) texts.push_back(chunks[i].text);

        std::vector<EmbeddingVector> vectors;
        for (int attempt = 0;; ++attempt) {
            try {
                vectors = provider.embed_batch(texts);
                if (vectors.size() != texts.size()) {
                    throw Error(ErrorKind::backend, "provider returned " + std::to_string(vectors.size()) +
                                                        " vectors for " + std::to_string(texts.size()) +
                                                        " texts");
                }
                break;
            } catch (const std::exception& e) {
                if (attempt >= retries) throw BuildFailedError(local.embedded, e.what());
            }
        }

        for (std::size_t i = 0; i < vectors.size(); ++i) {
            const auto& chunk = chunks[begin + i];
            if (dim == 0) dim = vectors[i].dim();
            if (vectors[i].dim() != dim) {
                throw Error(ErrorKind::dimension, "provider returned dimension " +
                                                      std::to_string(vectors[i].dim()) + " for '" +
                                                      chunk.chunk_id + "', expected " + std::to_string(dim));
            }
            try {
                entries.push_back({chunk.chunk_id, normalize(vectors[i].values).values});
                ++local.embedded;
            } catch (const Error& e) {
                if (e.kind() != ErrorKind::zero_vector) throw;
                local.dropped_zero_vectors.push_back(chunk.chunk_id);
            }
        }
    }
    if (dim == 0) dim = provider.dim();
    if (report) *report = std::move(local);
    return VectorIndex(dim, provider.provider_id(), std::move(entries));
}

std::string encode_index(const VectorIndex& index) {
    const auto& pid = index.provider_id();
    if (pid.size() > 0xFFFF) throw Error(ErrorKind::validation, "provider_id too long");
    std::string out;
    out.reserve(24 + pid.size() + index.size() * (16 + index.dim() * 4));
    out.append(kMagic);
    put<std::uint32_t>(out, kIndexFormatVersion);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(index.dim()));
    put<std::uint64_t>(out, index.size());
    put<std::uint16_t>(out, static_cast<std::uint16_t>(pid.size()));
    out.append(pid);
    for (const auto& e : index.entries()) {
        if (e.chunk_id.size() > 0xFFFF) throw Error(ErrorKind::validation, "chunk_id too long");
        put<std::uint16_t>(out, static_cast<std::uint16_t>(e.chunk_id.size()));
        out.append(e.chunk_id);
        for (float x : e.vector) put<float>(out, x);
    }
    return out;
}

VectorIndex decode_index(std::string_view bytes, TimePoint built_at) {
    Reader r(bytes);
    if (r.take(kMagic.size(), "magic") != kMagic) throw CorruptIndexError(0, "bad magic");
    const std::size_t version_at = r.pos();
    const auto version = r.get<std::uint32_t>("version");
    if (version > kIndexFormatVersion) throw CorruptIndexError(version_at, "unsupported version");
    if (version == 0) throw CorruptIndexError(version_at, "invalid version 0");
    const std::size_t dim_at = r.pos();
    const auto dim = r.get<std::uint32_t>("dim");
    if (dim == 0) throw CorruptIndexError(dim_at, "dimension is zero");
    const std::size_t count_at = r.pos();
    const auto count = r.get<std::uint64_t>("entry count");
    // Each entry needs at least a length prefix plus its vector.
    if (count > r.remaining() / (2 + 4ull * dim)) {
        throw CorruptIndexError(count_at, "entry count exceeds file size");
    }
    const auto pid_len = r.get<std::uint16_t>("provider_id length");
    std::string provider_id(r.take(pid_len, "provider_id"));

    std::vector<IndexEntry> entries;
    entries.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        const std::size_t entry_at = r.pos();
        const auto id_len = r.get<std::uint16_t>("chunk_id length");
        IndexEntry e;
        e.chunk_id = std::string(r.take(id_len, "chunk_id"));
        e.vector.resize(dim);
        for (std::uint32_t d = 0; d < dim; ++d) e.vector[d] = r.get<float>("vector");
        const double norm = l2_norm(e.vector);
        if (!(std::abs(norm - 1.0) <= kNormTolerance)) {
            throw CorruptIndexError(entry_at, "vector for '" + e.chunk_id + "' is not unit norm");
        }
        if (!entries.empty() && !(entries.back().chunk_id < e.chunk_id)) {
            throw CorruptIndexError(entry_at, "entries not strictly sorted by chunk_id");
        }
        entries.push_back(std::move(e));
    }
    if (r.remaining() != 0) throw CorruptIndexError(r.pos(), "trailing bytes after last entry");
    return VectorIndex(dim, std::move(provider_id), std::move(entries), built_at);
}

void save_index(const VectorIndex& index, const std::filesystem::path& path) {
    const std::string bytes = encode_index(index);
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorKind::io, "cannot write '" + tmp.string() + "'");
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        out.flush();
        if (!out) throw Error(ErrorKind::io, "failed writing '" + tmp.string() + "'");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw Error(ErrorKind::io, "cannot move index into place: " + ec.message());
}

VectorIndex load_index(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::io, "cannot open index '" + path.string() + "'");
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    TimePoint built_at = Clock::now();
    std::error_code ec;
    const auto mtime = std::filesystem::last_write_time(path, ec);
    if (!ec) {
        built_at = std::chrono::time_point_cast<Clock::duration>(std::chrono::file_clock::to_sys(mtime));
    }
    return decode_index(bytes, built_at);
}

}  // namespace groundrag::index
