#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "t2sg/errors.hpp"
#include "t2sg/model.hpp"

namespace t2sg {

inline constexpr char kStoreMagic[8] = {'T', '2', 'S', 'G', 'E', 'M', 'B', '1'};
inline constexpr uint32_t kStoreVersion = 1;

// Persisted map scene-id -> embedding, written once and scanned at query
// time. Vectors are stored as 32-bit floats; in-memory records mirror the
// file exactly so write -> read round trips bitwise.
struct EmbeddingStore {
    uint32_t dim = 0;
    std::string fixed_counterpart_id;  // the text-graph every scene was paired with
    std::vector<std::pair<std::string, std::vector<float>>> records;

    bool contains(const std::string& id) const { return index_.count(id) != 0; }

    const std::vector<float>& at(const std::string& id) const {
        auto it = index_.find(id);
        if (it == index_.end()) throw UnknownSceneId("scene id not in store: " + id);
        return records[it->second].second;
    }

    void add(const std::string& id, std::vector<float> vec) {
        if (id.size() > 0xffff) throw InvalidArgument("scene id longer than 65535 bytes");
        if (vec.size() != dim) throw DimensionMismatch("embedding width does not match store dim");
        if (!index_.emplace(id, records.size()).second) {
            throw DuplicateSceneId("scene id already in store: " + id);
        }
        records.emplace_back(id, std::move(vec));
    }

    void rebuild_index() {
        index_.clear();
        for (size_t i = 0; i < records.size(); ++i) {
            if (!index_.emplace(records[i].first, i).second) {
                throw DuplicateSceneId("scene id already in store: " + records[i].first);
            }
        }
    }

    // Exact size of the serialized file:
    //   magic(8) + version(4) + dim(4) + count(8)
    // + (2 + |fixed id|) + sum over records of (2 + |id| + dim * 4).
    size_t file_size_bytes() const {
        size_t n = 8 + 4 + 4 + 8 + 2 + fixed_counterpart_id.size();
        for (const auto& [id, vec] : records) n += 2 + id.size() + size_t(dim) * 4;
        return n;
    }

private:
    std::unordered_map<std::string, size_t> index_;
};

namespace detail {

inline void write_u16le(std::ostream& out, uint16_t x) {
    unsigned char b[2] = {static_cast<unsigned char>(x), static_cast<unsigned char>(x >> 8)};
    write_bytes(out, b, 2);
}

inline uint16_t read_u16le(std::istream& in) {
    unsigned char b[2];
    if (!read_bytes(in, b, 2)) throw MalformedStore("unexpected end of store file");
    return uint16_t(b[0] | (b[1] << 8));
}

inline void write_store_string(std::ostream& out, const std::string& s) {
    write_u16le(out, uint16_t(s.size()));
    write_bytes(out, s.data(), s.size());
}

inline std::string read_store_string(std::istream& in) {
    const uint16_t len = read_u16le(in);
    std::string s(len, '\0');
    if (len && !read_bytes(in, s.data(), len)) throw MalformedStore("unexpected end of store file");
    return s;
}

}  // namespace detail

inline void save_store(const EmbeddingStore& store, std::ostream& out) {
    detail::write_bytes(out, kStoreMagic, 8);
    detail::write_u32le(out, kStoreVersion);
    detail::write_u32le(out, store.dim);
    detail::write_u64le(out, store.records.size());
    detail::write_store_string(out, store.fixed_counterpart_id);
    for (const auto& [id, vec] : store.records) {
        detail::write_store_string(out, id);
        for (float f : vec) detail::write_f32le(out, f);
    }
}

inline void save_store(const EmbeddingStore& store, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write store file: " + path);
    save_store(store, out);
    if (!out) throw IoError("short write to store file: " + path);
}

inline EmbeddingStore load_store(std::istream& in) {
    char magic[8];
    if (!detail::read_bytes(in, magic, 8) || std::memcmp(magic, kStoreMagic, 8) != 0) {
        throw MalformedStore("bad store magic, not an embedding store");
    }
    const uint32_t version = detail::read_u32le(in);
    if (version != kStoreVersion) {
        throw MalformedStore("unsupported store version " + std::to_string(version));
    }
    EmbeddingStore store;
    store.dim = detail::read_u32le(in);
    const uint64_t count = detail::read_u64le(in);
    store.fixed_counterpart_id = detail::read_store_string(in);
    store.records.reserve(count);
    for (uint64_t i = 0; i < count; ++i) {
        std::string id = detail::read_store_string(in);
        std::vector<float> vec(store.dim);
        for (auto& f : vec) f = detail::read_f32le(in);
        store.records.emplace_back(std::move(id), std::move(vec));
    }
    in.peek();
    if (!in.eof()) throw MalformedStore("trailing bytes after records");
    store.rebuild_index();
    return store;
}

inline EmbeddingStore load_store(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open store file: " + path);
    return load_store(in);
}

}  // namespace t2sg
