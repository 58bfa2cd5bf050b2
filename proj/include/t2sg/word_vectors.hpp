#pragma once

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "t2sg/errors.hpp"
#include "t2sg/linalg.hpp"
#include "t2sg/rng.hpp"

namespace t2sg {

// Immutable after load; safe for concurrent reads.
struct WordVectorTable {
    int dim = 300;
    std::unordered_map<std::string, Vec> entries;
    uint64_t fallback_seed = 0x5eedULL;

    bool contains(const std::string& token) const { return entries.count(token) != 0; }
};

// Deterministic unit-norm vector for an out-of-vocabulary word. Stable
// across processes: a pure function of (word bytes, fallback_seed, dim).
inline Vec oov_vector(const WordVectorTable& table, const std::string& word) {
    Rng rng(mix64(table.fallback_seed, fnv1a64(word)));
    Vec v(table.dim);
    for (auto& x : v) x = rng.uniform(-1.0, 1.0);
    double n = norm2(v.data(), table.dim);
    if (n < 1e-12) {
        v.assign(table.dim, 0.0);
        v[0] = 1.0;
        return v;
    }
    for (auto& x : v) x /= n;
    return v;
}

// Single word: stored vector or the OOV fallback. Multi-word tokens map to
// the mean of their per-word vectors.
inline Vec token_vector(const WordVectorTable& table, const std::string& token) {
    std::vector<std::string> words;
    std::istringstream iss(token);
    std::string w;
    while (iss >> w) words.push_back(w);
    if (words.empty()) throw InvalidArgument("token_vector: empty token");

    auto single = [&](const std::string& word) -> Vec {
        auto it = table.entries.find(word);
        if (it != table.entries.end()) return it->second;
        return oov_vector(table, word);
    };

    if (words.size() == 1) return single(words[0]);
    Vec acc(table.dim, 0.0);
    for (const auto& word : words) {
        Vec v = single(word);
        for (int i = 0; i < table.dim; ++i) acc[i] += v[i];
    }
    for (auto& x : acc) x /= double(words.size());
    return acc;
}

// Plain-text word-vector file: header "<count> <dim>", then one
// "token v1 ... v_dim" line per entry.
inline WordVectorTable load_word_vectors(const std::string& path,
                                         uint64_t fallback_seed = 0x5eedULL) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open word-vector file: " + path);

    std::string header;
    if (!std::getline(in, header)) throw MalformedVectorFile("empty word-vector file: " + path);
    long long count = -1, dim = -1;
    {
        std::istringstream iss(header);
        std::string extra;
        if (!(iss >> count >> dim) || (iss >> extra) || count < 0 || dim <= 0) {
            throw MalformedVectorFile("bad header line '" + header + "' in " + path);
        }
    }

    WordVectorTable table;
    table.dim = int(dim);
    table.fallback_seed = fallback_seed;
    table.entries.reserve(size_t(count));

    std::string line;
    for (long long i = 0; i < count; ++i) {
        if (!std::getline(in, line)) {
            throw MalformedVectorFile("expected " + std::to_string(count) + " entries, file ended after " +
                                      std::to_string(i));
        }
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::istringstream iss(line);
        std::string token;
        if (!(iss >> token)) throw MalformedVectorFile("blank entry line " + std::to_string(i + 2));
        Vec v;
        v.reserve(size_t(dim));
        double x;
        while (iss >> x) v.push_back(x);
        if (!iss.eof()) {
            throw MalformedVectorFile("non-numeric value for token '" + token + "'");
        }
        if (static_cast<long long>(v.size()) != dim) {
            throw DimensionMismatch("token '" + token + "' has " + std::to_string(v.size()) +
                                    " values, expected " + std::to_string(dim));
        }
        table.entries[token] = std::move(v);
    }
    return table;
}

inline void save_word_vectors(const WordVectorTable& table, const std::string& path,
                              const std::vector<std::string>& token_order) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write word-vector file: " + path);
    out << token_order.size() << " " << table.dim << "\n";
    out.precision(17);
    for (const auto& tok : token_order) {
        out << tok;
        for (double x : table.entries.at(tok)) out << " " << x;
        out << "\n";
    }
}

}  // namespace t2sg
