#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "clipit/errors.hpp"
#include "clipit/matrix.hpp"

namespace clipit {

inline std::string ascii_lower(std::string s) {
    for (char& c : s)
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    return s;
}

// ---------------------------------------------------------------------------
// EmbeddingStore: N x d row vectors, optional labels and string ids.
// On disk the values are 32-bit floats ("CIPE" format below); in memory they
// are widened to 64-bit, so a load/save cycle reproduces the file exactly.
// ---------------------------------------------------------------------------

struct EmbeddingStore {
    Matrix data;                       // N x d
    std::vector<std::uint32_t> labels; // empty when absent
    std::vector<std::string> ids;      // empty when absent

    std::size_t count() const { return data.rows(); }
    std::size_t dim() const { return data.cols(); }
    bool has_labels() const { return !labels.empty(); }
    bool has_ids() const { return !ids.empty(); }

    std::span<const double> row(std::size_t i) const {
        return {data.data() + i * dim(), dim()};
    }

    void validate() const {
        if (count() < 1 || dim() < 1)
            throw ConfigInvalidError("embedding store: empty store");
        if (!data.all_finite())
            throw NonFiniteInputError("embedding store: non-finite entry");
        if (has_labels() && labels.size() != count())
            throw LabelLengthMismatchError("embedding store: label count differs from row count");
        if (has_ids()) {
            if (ids.size() != count())
                throw LabelLengthMismatchError("embedding store: id count differs from row count");
            std::unordered_set<std::string> seen;
            for (const auto& id : ids)
                if (!seen.insert(id).second)
                    throw DuplicateIdError("embedding store: duplicate id '" + id + "'");
        }
    }

    // Rows [begin, end) as a new store; labels/ids sliced along.
    EmbeddingStore slice(std::size_t begin, std::size_t end) const {
        EmbeddingStore out;
        out.data = Matrix(end - begin, dim());
        for (std::size_t i = begin; i < end; ++i)
            for (std::size_t j = 0; j < dim(); ++j) out.data(i - begin, j) = data(i, j);
        if (has_labels())
            out.labels.assign(labels.begin() + static_cast<std::ptrdiff_t>(begin),
                              labels.begin() + static_cast<std::ptrdiff_t>(end));
        if (has_ids())
            out.ids.assign(ids.begin() + static_cast<std::ptrdiff_t>(begin),
                           ids.begin() + static_cast<std::ptrdiff_t>(end));
        return out;
    }
};

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f32(std::string& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

inline void put_f64(std::string& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_u64(out, bits);
}

class ByteReader {
public:
    ByteReader(const std::string& buf, const std::string& what)
        : buf_(buf), what_(what) {}

    std::uint8_t u8() { return static_cast<std::uint8_t>(take(1)[0]); }

    std::uint32_t u32() {
        const char* p = take(4);
        std::uint32_t v = 0;
        for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<std::uint8_t>(p[i]);
        return v;
    }

    std::uint64_t u64() {
        const char* p = take(8);
        std::uint64_t v = 0;
        for (int i = 7; i >= 0; --i) v = (v << 8) | static_cast<std::uint8_t>(p[i]);
        return v;
    }

    float f32() {
        const std::uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }

    double f64() {
        const std::uint64_t bits = u64();
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }

    std::string bytes(std::size_t n) { return std::string(take(n), n); }

    bool exhausted() const { return pos_ == buf_.size(); }

private:
    const char* take(std::size_t n) {
        if (pos_ + n > buf_.size())
            throw TruncatedFileError(what_ + ": unexpected end of file");
        const char* p = buf_.data() + pos_;
        pos_ += n;
        return p;
    }

    const std::string& buf_;
    std::string what_;
    std::size_t pos_ = 0;
};

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return buf;
}

inline void write_file(const std::string& path, const std::string& buf) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError("write failed for '" + path + "'");
}

}  // namespace detail

// "CIPE" embedding file, version 1:
//   magic "CIPE" | version u32 | N u64 | d u32 | flags u8
//   (bit0 = labels, bit1 = ids) | N*d float32 row-major | N u32 labels |
//   length-prefixed (u32) UTF-8 ids. All integers little-endian.
inline void save_embeddings(const EmbeddingStore& store, const std::string& path) {
    store.validate();
    std::string buf;
    buf.reserve(17 + store.count() * store.dim() * 4);
    buf += "CIPE";
    detail::put_u32(buf, 1);
    detail::put_u64(buf, store.count());
    detail::put_u32(buf, static_cast<std::uint32_t>(store.dim()));
    std::uint8_t flags = 0;
    if (store.has_labels()) flags |= 1;
    if (store.has_ids()) flags |= 2;
    buf.push_back(static_cast<char>(flags));
    for (std::size_t i = 0; i < store.data.size(); ++i)
        detail::put_f32(buf, static_cast<float>(store.data[i]));
    if (store.has_labels())
        for (std::uint32_t y : store.labels) detail::put_u32(buf, y);
    if (store.has_ids())
        for (const auto& id : store.ids) {
            detail::put_u32(buf, static_cast<std::uint32_t>(id.size()));
            buf += id;
        }
    detail::write_file(path, buf);
}

inline EmbeddingStore load_embeddings(const std::string& path) {
    const std::string buf = detail::read_file(path);
    detail::ByteReader r(buf, path);
    if (r.bytes(4) != "CIPE") throw BadMagicError(path + ": not a CIPE embedding file");
    const std::uint32_t version = r.u32();
    if (version != 1)
        throw UnsupportedVersionError(path + ": version " + std::to_string(version));
    const std::uint64_t n = r.u64();
    const std::uint32_t d = r.u32();
    const std::uint8_t flags = r.u8();
    if (n < 1 || d < 1) throw TruncatedFileError(path + ": empty store");
    EmbeddingStore store;
    store.data = Matrix(static_cast<std::size_t>(n), d);
    for (std::size_t i = 0; i < store.data.size(); ++i)
        store.data[i] = static_cast<double>(r.f32());
    if (flags & 1) {
        store.labels.resize(static_cast<std::size_t>(n));
        for (auto& y : store.labels) y = r.u32();
    }
    if (flags & 2) {
        store.ids.resize(static_cast<std::size_t>(n));
        for (auto& id : store.ids) id = r.bytes(r.u32());
    }
    if (!r.exhausted()) throw IoError(path + ": trailing bytes after payload");
    store.validate();
    return store;
}

// ---------------------------------------------------------------------------
// TextCorpus: JSONL records {id, text, tags}.
// ---------------------------------------------------------------------------

struct TextRecord {
    std::string id;
    std::string text;
    std::vector<std::string> tags;  // lowercased on load
};

struct TextCorpus {
    std::vector<TextRecord> records;

    std::size_t size() const { return records.size(); }

    const TextRecord& by_id(const std::string& id) const {
        for (const auto& rec : records)
            if (rec.id == id) return rec;
        throw DuplicateIdError("corpus: unknown id '" + id + "'");
    }

    std::unordered_map<std::string, std::size_t> id_index() const {
        std::unordered_map<std::string, std::size_t> idx;
        for (std::size_t i = 0; i < records.size(); ++i) idx.emplace(records[i].id, i);
        return idx;
    }
};

inline std::string trim_copy(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline TextCorpus load_corpus(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "'");
    TextCorpus corpus;
    std::unordered_set<std::string> seen;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim_copy(line).empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object() || !j.contains("id") || !j.contains("text") ||
            !j["id"].is_string() || !j["text"].is_string())
            throw MalformedLineError(path + ": line " + std::to_string(lineno));
        TextRecord rec;
        rec.id = j["id"].get<std::string>();
        rec.text = j["text"].get<std::string>();
        if (trim_copy(rec.text).empty())
            throw EmptyTextError(path + ": line " + std::to_string(lineno) + ": empty text");
        if (j.contains("tags")) {
            if (!j["tags"].is_array())
                throw MalformedLineError(path + ": line " + std::to_string(lineno));
            for (const auto& t : j["tags"]) {
                if (!t.is_string())
                    throw MalformedLineError(path + ": line " + std::to_string(lineno));
                rec.tags.push_back(ascii_lower(t.get<std::string>()));
            }
        }
        if (!seen.insert(rec.id).second)
            throw DuplicateIdError(path + ": duplicate id '" + rec.id + "'");
        corpus.records.push_back(std::move(rec));
    }
    return corpus;
}

inline void save_corpus(const TextCorpus& corpus, const std::string& path) {
    std::string buf;
    for (const auto& rec : corpus.records) {
        nlohmann::json j;
        j["id"] = rec.id;
        j["text"] = rec.text;
        j["tags"] = rec.tags;
        buf += j.dump();
        buf += '\n';
    }
    detail::write_file(path, buf);
}

// Keeps records where any keyword appears case-insensitively in the tags or
// the body text; order preserved, repeated application is a no-op.
inline TextCorpus filter_corpus(const TextCorpus& corpus,
                                const std::vector<std::string>& keywords) {
    if (keywords.empty())
        throw ConfigInvalidError("filter_corpus: keyword list is empty");
    std::vector<std::string> lowered;
    lowered.reserve(keywords.size());
    for (const auto& k : keywords) lowered.push_back(ascii_lower(k));
    TextCorpus out;
    for (const auto& rec : corpus.records) {
        const std::string text = ascii_lower(rec.text);
        bool hit = false;
        for (const auto& k : lowered) {
            if (text.find(k) != std::string::npos) { hit = true; break; }
            for (const auto& tag : rec.tags)
                if (tag.find(k) != std::string::npos) { hit = true; break; }
            if (hit) break;
        }
        if (hit) out.records.push_back(rec);
    }
    if (out.records.empty())
        throw EmptyFilterResultError("filter_corpus: no record matches the keywords");
    return out;
}

// ---------------------------------------------------------------------------
// PseudoPairedDataset: one matched report per image.
// ---------------------------------------------------------------------------

struct PairRecord {
    std::size_t image_index = 0;
    std::string text_id;
    std::uint32_t label = 0;
    double similarity = 0.0;
};

struct PseudoPairedDataset {
    std::vector<PairRecord> records;

    std::size_t size() const { return records.size(); }

    // Exactly one record per image index 0..N-1, in index order.
    void validate() const {
        for (std::size_t i = 0; i < records.size(); ++i)
            if (records[i].image_index != i)
                throw InstanceMismatchError("pairing: record " + std::to_string(i) +
                                            " has image_index " +
                                            std::to_string(records[i].image_index));
    }
};

inline void save_pairs(const PseudoPairedDataset& pairs, const std::string& path) {
    std::string buf;
    for (const auto& rec : pairs.records) {
        nlohmann::json j;
        j["image_index"] = rec.image_index;
        j["text_id"] = rec.text_id;
        j["label"] = rec.label;
        j["similarity"] = rec.similarity;
        buf += j.dump();
        buf += '\n';
    }
    detail::write_file(path, buf);
}

inline PseudoPairedDataset load_pairs(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "'");
    PseudoPairedDataset pairs;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim_copy(line).empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object() || !j.contains("image_index") ||
            !j.contains("text_id") || !j.contains("label") || !j.contains("similarity"))
            throw MalformedLineError(path + ": line " + std::to_string(lineno));
        PairRecord rec;
        rec.image_index = j["image_index"].get<std::size_t>();
        rec.text_id = j["text_id"].get<std::string>();
        rec.label = j["label"].get<std::uint32_t>();
        rec.similarity = j["similarity"].get<double>();
        pairs.records.push_back(std::move(rec));
    }
    pairs.validate();
    return pairs;
}

}  // namespace clipit
