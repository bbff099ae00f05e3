#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "clipit/errors.hpp"
#include "clipit/ops.hpp"
#include "clipit/rng.hpp"

namespace clipit {

// Deterministic signed feature hashing: no learned state, identical output
// in any implementation that follows the same FNV-1a constants.
struct HashedEncoderConfig {
    std::size_t dim = 64;        // d_t >= 2
    std::uint64_t hash_seed = 0;
};

inline std::uint64_t fnv1a64(const std::string& bytes) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

// Lowercase, split on anything outside [a-z0-9].
inline std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> tokens;
    std::string cur;
    for (char raw : text) {
        char c = raw;
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
        const bool alnum = (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9');
        if (alnum) {
            cur.push_back(c);
        } else if (!cur.empty()) {
            tokens.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) tokens.push_back(std::move(cur));
    return tokens;
}

/// Bag-of-words embedding: each token hashes (FNV-1a 64, XOR hash_seed) to a
/// bucket = hash mod dim with sign from the hash's top bit; the accumulated
/// vector is L2-normalized.
inline std::vector<double> encode_text(const std::string& text,
                                       const HashedEncoderConfig& cfg) {
    if (cfg.dim < 2) throw ConfigInvalidError("encode_text: dim must be >= 2");
    const std::vector<std::string> tokens = tokenize(text);
    if (tokens.empty()) throw EmptyTextError("encode_text: no tokens in input");
    std::vector<double> v(cfg.dim, 0.0);
    for (const auto& tok : tokens) {
        const std::uint64_t h = fnv1a64(tok) ^ cfg.hash_seed;
        const std::size_t bucket = static_cast<std::size_t>(h % cfg.dim);
        v[bucket] += (h >> 63) == 0 ? 1.0 : -1.0;
    }
    return l2_normalize(v);
}

/// Word dropout: each whitespace-delimited word is removed independently
/// with probability p; survivors are rejoined with single spaces. May return
/// an empty string (encode_text then reports EmptyText).
inline std::string corrupt_text(const std::string& text, double p, std::uint64_t seed) {
    if (p < 0.0 || p > 1.0) throw ConfigInvalidError("corrupt_text: p outside [0, 1]");
    Rng rng(seed);
    std::string out;
    std::string word;
    auto flush = [&] {
        if (word.empty()) return;
        if (rng.next_double() >= p) {
            if (!out.empty()) out.push_back(' ');
            out += word;
        }
        word.clear();
    };
    for (char c : text) {
        if (c == ' ' || c == '\t' || c == '\r' || c == '\n') flush();
        else word.push_back(c);
    }
    flush();
    return out;
}

}  // namespace clipit
