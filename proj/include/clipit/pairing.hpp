#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <string>
#include <thread>
#include <vector>

#include "clipit/data.hpp"
#include "clipit/errors.hpp"
#include "clipit/ops.hpp"
#include "clipit/rng.hpp"

namespace clipit {

// Inputs to the retrieval step: image and report embeddings in one shared
// retrieval space. Images must carry labels (they flow into the pairing
// records); reports must carry ids.
struct PairingRequest {
    const EmbeddingStore* images = nullptr;
    const EmbeddingStore* texts = nullptr;
    int workers = 1;
};

namespace detail {

struct NormalizedViews {
    std::vector<std::vector<double>> images;
    std::vector<std::vector<double>> texts;
};

inline NormalizedViews normalize_request(const PairingRequest& req) {
    if (req.images == nullptr || req.texts == nullptr)
        throw ConfigInvalidError("pairing: missing embedding store");
    if (req.images->dim() != req.texts->dim())
        throw DimensionMismatchError("pairing: retrieval dimensions differ");
    if (!req.images->has_labels())
        throw MissingLabelsError("pairing: image store has no labels");
    if (!req.texts->has_ids())
        throw MissingIdsError("pairing: text store has no ids");
    NormalizedViews nv;
    nv.images.reserve(req.images->count());
    for (std::size_t i = 0; i < req.images->count(); ++i)
        nv.images.push_back(l2_normalize(req.images->row(i)));
    nv.texts.reserve(req.texts->count());
    for (std::size_t j = 0; j < req.texts->count(); ++j)
        nv.texts.push_back(l2_normalize(req.texts->row(j)));
    return nv;
}

template <typename Fn>
inline void for_each_image(std::size_t n, int workers, Fn fn) {
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    // Results land at each image's own index, so the chunking has no
    // observable effect on the output.
    std::vector<std::thread> pool;
    const std::size_t w = static_cast<std::size_t>(workers);
    for (std::size_t t = 0; t < w; ++t)
        pool.emplace_back([&, t] {
            for (std::size_t i = t; i < n; i += w) fn(i);
        });
    for (auto& th : pool) th.join();
}

}  // namespace detail

/// Match every image with the rank-k most cosine-similar report (k = 1 is
/// the argmax). Ties break toward the lower text index.
inline PseudoPairedDataset pair_modalities(const PairingRequest& req, std::size_t rank = 1) {
    const auto nv = detail::normalize_request(req);
    const std::size_t n = nv.images.size();
    const std::size_t m = nv.texts.size();
    if (rank < 1) throw ConfigInvalidError("pair_modalities: rank must be >= 1");
    if (rank > m)
        throw RankExceedsCorpusError("pair_modalities: rank " + std::to_string(rank) +
                                     " exceeds corpus size " + std::to_string(m));
    PseudoPairedDataset out;
    out.records.resize(n);
    detail::for_each_image(n, req.workers, [&](std::size_t i) {
        std::vector<double> sims(m);
        for (std::size_t j = 0; j < m; ++j)
            sims[j] = dot(nv.images[i], nv.texts[j]);
        std::vector<std::size_t> order(m);
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            if (sims[a] != sims[b]) return sims[a] > sims[b];
            return a < b;
        });
        const std::size_t pick = order[rank - 1];
        out.records[i] = PairRecord{i, req.texts->ids[pick], req.images->labels[i],
                                    std::clamp(sims[pick], -1.0, 1.0)};
    });
    return out;
}

/// Ablation pairing: a uniformly random report per image. The stored
/// similarity is the actual cosine of the sampled pair.
inline PseudoPairedDataset pair_random(const PairingRequest& req, std::uint64_t seed) {
    const auto nv = detail::normalize_request(req);
    const std::size_t n = nv.images.size();
    const std::size_t m = nv.texts.size();
    Rng rng(seed);
    PseudoPairedDataset out;
    out.records.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t pick = rng.next_index(m);
        const double sim = dot(nv.images[i], nv.texts[pick]);
        out.records.push_back(PairRecord{i, req.texts->ids[pick], req.images->labels[i],
                                         std::clamp(sim, -1.0, 1.0)});
    }
    return out;
}

struct SimilarityHistogram {
    std::vector<std::size_t> counts;  // equal-width bins over [-1, 1]
    double mean = 0.0;
    double stddev = 0.0;  // population convention

    double bin_low(std::size_t b) const {
        return -1.0 + 2.0 * static_cast<double>(b) / static_cast<double>(counts.size());
    }
    double bin_high(std::size_t b) const {
        return -1.0 + 2.0 * static_cast<double>(b + 1) / static_cast<double>(counts.size());
    }
};

inline SimilarityHistogram similarity_histogram(const PseudoPairedDataset& pairs,
                                                std::size_t bins) {
    if (bins < 1) throw ConfigInvalidError("similarity_histogram: bins must be >= 1");
    SimilarityHistogram h;
    h.counts.assign(bins, 0);
    double sum = 0.0;
    for (const auto& rec : pairs.records) {
        const double s = rec.similarity;
        auto b = static_cast<std::ptrdiff_t>((s + 1.0) / 2.0 * static_cast<double>(bins));
        b = std::clamp<std::ptrdiff_t>(b, 0, static_cast<std::ptrdiff_t>(bins) - 1);
        ++h.counts[static_cast<std::size_t>(b)];
        sum += s;
    }
    const auto n = static_cast<double>(pairs.records.size());
    if (!pairs.records.empty()) {
        h.mean = sum / n;
        double ss = 0.0;
        for (const auto& rec : pairs.records)
            ss += (rec.similarity - h.mean) * (rec.similarity - h.mean);
        h.stddev = std::sqrt(ss / n);
    }
    return h;
}

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline void save_histogram_csv(const SimilarityHistogram& h, const std::string& path) {
    std::string buf = "bin_low,bin_high,count\n";
    for (std::size_t b = 0; b < h.counts.size(); ++b) {
        buf += format_double(h.bin_low(b));
        buf += ',';
        buf += format_double(h.bin_high(b));
        buf += ',';
        buf += std::to_string(h.counts[b]);
        buf += '\n';
    }
    detail::write_file(path, buf);
}

}  // namespace clipit
