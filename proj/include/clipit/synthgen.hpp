#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "clipit/data.hpp"
#include "clipit/errors.hpp"
#include "clipit/matrix.hpp"
#include "clipit/rng.hpp"

namespace clipit {

struct SynthConfig {
    std::size_t classes = 2;
    std::size_t samples = 1000;
    std::size_t reports = 40;
    std::size_t d_r = 32;  // retrieval space
    std::size_t d_v = 64;  // vision task space
    std::size_t d_t = 64;  // text embedding dim (recorded for the encoder)
    double ambiguous_fraction = 0.0;  // c
    double noise = 0.1;               // sigma
    std::size_t vocab_per_class = 8;
    std::size_t filler_pool = 8;
    std::size_t fillers_per_report = 1;
    double cue_amplitude = 1.2;
    std::string organ = "breast";
    bool class_pure_reports = true;  // false: keywords drawn across classes
    std::uint64_t seed = 0;

    void validate() const {
        if (classes < 2) throw ConfigInvalidError("synth: classes must be >= 2");
        if (samples < 1 || reports < 1)
            throw ConfigInvalidError("synth: counts must be positive");
        if (reports < classes)
            throw ConfigInvalidError("synth: need at least one report per class");
        if (ambiguous_fraction < 0.0 || ambiguous_fraction > 1.0)
            throw ConfigInvalidError("synth: ambiguous fraction outside [0, 1]");
        if (noise < 0.0) throw ConfigInvalidError("synth: noise must be >= 0");
        if (d_r < classes || d_v < classes)
            throw ConfigInvalidError("synth: embedding dims must be >= class count");
        if (ambiguous_fraction > 0.0 && d_v < classes + 2 * cue_plane_count())
            throw ConfigInvalidError("synth: d_v too small for the ambiguity construction");
        if (vocab_per_class < 1) throw ConfigInvalidError("synth: empty class vocabulary");
        if (fillers_per_report > filler_pool)
            throw ConfigInvalidError("synth: filler draw exceeds pool");
    }

    std::size_t cue_plane_count() const { return classes == 2 ? 1 : classes; }
};

struct SynthManifest {
    std::size_t classes = 0;
    std::size_t samples = 0;
    std::size_t reports = 0;
    double ambiguous_fraction = 0.0;
    double noise = 0.0;
    std::size_t text_dim = 0;
    std::vector<std::uint32_t> sample_class;
    std::vector<std::uint8_t> sample_ambiguous;
    std::vector<std::string> report_ids;
    std::vector<std::uint32_t> report_class;
};

struct SynthDataset {
    EmbeddingStore img_retrieval;   // labels
    EmbeddingStore img_task;        // labels
    EmbeddingStore text_retrieval;  // ids
    TextCorpus corpus;
    SynthManifest manifest;
};

namespace detail {

// Draw a unit vector orthogonal to every row already in `basis`.
inline std::vector<double> orthonormal_direction(std::vector<std::vector<double>>& basis,
                                                 std::size_t dim, Rng& rng) {
    for (int attempt = 0; attempt < 32; ++attempt) {
        std::vector<double> v(dim);
        for (auto& x : v) x = rng.next_gaussian();
        for (const auto& b : basis) {
            double proj = 0.0;
            for (std::size_t i = 0; i < dim; ++i) proj += v[i] * b[i];
            for (std::size_t i = 0; i < dim; ++i) v[i] -= proj * b[i];
        }
        double n = 0.0;
        for (double x : v) n += x * x;
        n = std::sqrt(n);
        if (n > 1e-8) {
            for (auto& x : v) x /= n;
            basis.push_back(v);
            return basis.back();
        }
    }
    throw ConfigInvalidError("synth: cannot orthogonalize (dimension too small)");
}

}  // namespace detail

/// Deterministic benchmark generator. Class geometry:
///   - every space gets orthonormal class prototypes;
///   - retrieval embeddings sit at the true-class prototype plus noise for
///     images and reports alike, so argmax pairing recovers a same-class
///     report with probability controlled by the noise scale;
///   - a fraction c of task embeddings are vision-ambiguous: they sit at
///     the midpoint of their class prototype and the decoy prototype
///     ((y+1) mod C), carrying the class only in a two-direction sign
///     pattern (corners +(p+q)/-(p+q) for one class of a decoy pair,
///     +(p-q)/-(p-q) for the other). Both corner sets are symmetric about
///     the shared midpoint, so no linear probe of the task embedding beats
///     chance on them, while the distillation path's nonlinear head can
///     separate them when its training signal carries the class;
///   - reports are keyword bundles: the full class vocabulary
///     ("c{y}kw{j}") plus a few shared filler tokens, tagged with the
///     configured organ term. Distinct class vocabularies keep hashed text
///     embeddings of different classes near-orthogonal.
inline SynthDataset generate(const SynthConfig& cfg) {
    cfg.validate();
    Rng rng(cfg.seed);
    SynthDataset out;

    // prototypes (draw order fixed: retrieval, task, cue planes)
    std::vector<std::vector<double>> retr_basis;
    std::vector<std::vector<double>> retr_proto;
    for (std::size_t c = 0; c < cfg.classes; ++c)
        retr_proto.push_back(detail::orthonormal_direction(retr_basis, cfg.d_r, rng));
    std::vector<std::vector<double>> task_basis;
    std::vector<std::vector<double>> task_proto;
    for (std::size_t c = 0; c < cfg.classes; ++c)
        task_proto.push_back(detail::orthonormal_direction(task_basis, cfg.d_v, rng));
    std::vector<std::vector<double>> cue_p, cue_q;
    if (cfg.ambiguous_fraction > 0.0) {
        for (std::size_t k = 0; k < cfg.cue_plane_count(); ++k) {
            cue_p.push_back(detail::orthonormal_direction(task_basis, cfg.d_v, rng));
            cue_q.push_back(detail::orthonormal_direction(task_basis, cfg.d_v, rng));
        }
    }

    // labels and ambiguity flags
    const std::size_t n = cfg.samples;
    out.manifest.classes = cfg.classes;
    out.manifest.samples = n;
    out.manifest.reports = cfg.reports;
    out.manifest.ambiguous_fraction = cfg.ambiguous_fraction;
    out.manifest.noise = cfg.noise;
    out.manifest.text_dim = cfg.d_t;
    out.manifest.sample_class.resize(n);
    out.manifest.sample_ambiguous.assign(n, 0);
    for (std::size_t i = 0; i < n; ++i)
        out.manifest.sample_class[i] = static_cast<std::uint32_t>(i % cfg.classes);
    {
        std::vector<std::size_t> idx(n);
        for (std::size_t i = 0; i < n; ++i) idx[i] = i;
        rng.shuffle(idx);
        const auto flagged =
            static_cast<std::size_t>(cfg.ambiguous_fraction * static_cast<double>(n));
        for (std::size_t k = 0; k < flagged; ++k) out.manifest.sample_ambiguous[idx[k]] = 1;
    }

    // task embeddings
    out.img_task.data = Matrix(n, cfg.d_v);
    out.img_task.labels.assign(out.manifest.sample_class.begin(),
                               out.manifest.sample_class.end());
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t y = out.manifest.sample_class[i];
        if (out.manifest.sample_ambiguous[i]) {
            const std::size_t z = (y + 1) % cfg.classes;
            const std::size_t plane = cfg.classes == 2 ? 0 : y;
            const double sign = rng.next_double() < 0.5 ? -1.0 : 1.0;
            const double q_sign = y < z ? 1.0 : -1.0;
            for (std::size_t d = 0; d < cfg.d_v; ++d) {
                const double mid = 0.5 * (task_proto[y][d] + task_proto[z][d]);
                const double cue = cfg.cue_amplitude *
                                   (sign * cue_p[plane][d] + sign * q_sign * cue_q[plane][d]);
                out.img_task.data(i, d) = mid + cue + cfg.noise * rng.next_gaussian();
            }
        } else {
            for (std::size_t d = 0; d < cfg.d_v; ++d)
                out.img_task.data(i, d) =
                    task_proto[y][d] + cfg.noise * rng.next_gaussian();
        }
    }

    // retrieval embeddings always key on the true class
    out.img_retrieval.data = Matrix(n, cfg.d_r);
    out.img_retrieval.labels = out.img_task.labels;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t y = out.manifest.sample_class[i];
        for (std::size_t d = 0; d < cfg.d_r; ++d)
            out.img_retrieval.data(i, d) =
                retr_proto[y][d] + cfg.noise * rng.next_gaussian();
    }

    // reports: round-robin classes, full class vocabulary plus fillers
    out.text_retrieval.data = Matrix(cfg.reports, cfg.d_r);
    for (std::size_t j = 0; j < cfg.reports; ++j) {
        const std::size_t z = j % cfg.classes;
        out.manifest.report_class.push_back(static_cast<std::uint32_t>(z));
        TextRecord rec;
        rec.id = "report-" + std::to_string(j);
        out.manifest.report_ids.push_back(rec.id);
        std::string text;
        for (std::size_t k = 0; k < cfg.vocab_per_class; ++k) {
            const std::size_t voc_class =
                cfg.class_pure_reports ? z : rng.next_index(cfg.classes);
            const std::size_t voc_idx =
                cfg.class_pure_reports ? k : rng.next_index(cfg.vocab_per_class);
            if (!text.empty()) text += ' ';
            text += "c" + std::to_string(voc_class) + "kw" + std::to_string(voc_idx);
        }
        // fillers drawn without replacement from the shared pool
        std::vector<std::size_t> pool(cfg.filler_pool);
        for (std::size_t k = 0; k < pool.size(); ++k) pool[k] = k;
        rng.shuffle(pool);
        for (std::size_t k = 0; k < cfg.fillers_per_report; ++k)
            text += " filler" + std::to_string(pool[k]);
        rec.text = std::move(text);
        rec.tags.push_back(ascii_lower(cfg.organ));
        out.corpus.records.push_back(std::move(rec));
        for (std::size_t d = 0; d < cfg.d_r; ++d)
            out.text_retrieval.data(j, d) =
                retr_proto[z][d] + cfg.noise * rng.next_gaussian();
    }
    out.text_retrieval.ids = out.manifest.report_ids;
    return out;
}

/// Fraction of images whose matched report carries the image's true class.
inline double oracle_eval(const SynthManifest& manifest, const PseudoPairedDataset& pairs) {
    if (pairs.records.size() != manifest.sample_class.size())
        throw InstanceMismatchError("oracle_eval: pairing size differs from manifest");
    std::unordered_map<std::string, std::uint32_t> report_class;
    for (std::size_t j = 0; j < manifest.report_ids.size(); ++j)
        report_class.emplace(manifest.report_ids[j], manifest.report_class[j]);
    std::size_t pure = 0;
    for (std::size_t i = 0; i < pairs.records.size(); ++i) {
        auto it = report_class.find(pairs.records[i].text_id);
        if (it == report_class.end())
            throw InstanceMismatchError("oracle_eval: unknown report id '" +
                                        pairs.records[i].text_id + "'");
        if (it->second == manifest.sample_class[i]) ++pure;
    }
    return static_cast<double>(pure) / static_cast<double>(pairs.records.size());
}

inline void save_manifest(const SynthManifest& m, const std::string& path) {
    nlohmann::json j;
    j["classes"] = m.classes;
    j["samples"] = m.samples;
    j["reports"] = m.reports;
    j["ambiguous_fraction"] = m.ambiguous_fraction;
    j["noise"] = m.noise;
    j["text_dim"] = m.text_dim;
    j["sample_class"] = m.sample_class;
    j["sample_ambiguous"] = m.sample_ambiguous;
    j["report_ids"] = m.report_ids;
    j["report_class"] = m.report_class;
    detail::write_file(path, j.dump(2) + "\n");
}

inline SynthManifest load_manifest(const std::string& path) {
    nlohmann::json j = nlohmann::json::parse(detail::read_file(path), nullptr, false);
    if (j.is_discarded() || !j.is_object())
        throw MalformedLineError(path + ": not a manifest");
    SynthManifest m;
    try {
        m.classes = j.at("classes").get<std::size_t>();
        m.samples = j.at("samples").get<std::size_t>();
        m.reports = j.at("reports").get<std::size_t>();
        m.ambiguous_fraction = j.at("ambiguous_fraction").get<double>();
        m.noise = j.at("noise").get<double>();
        m.text_dim = j.at("text_dim").get<std::size_t>();
        m.sample_class = j.at("sample_class").get<std::vector<std::uint32_t>>();
        m.sample_ambiguous = j.at("sample_ambiguous").get<std::vector<std::uint8_t>>();
        m.report_ids = j.at("report_ids").get<std::vector<std::string>>();
        m.report_class = j.at("report_class").get<std::vector<std::uint32_t>>();
    } catch (const nlohmann::json::exception&) {
        throw MalformedLineError(path + ": manifest field missing or mistyped");
    }
    return m;
}

}  // namespace clipit
