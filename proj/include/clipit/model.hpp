#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "clipit/data.hpp"
#include "clipit/errors.hpp"
#include "clipit/matrix.hpp"
#include "clipit/rng.hpp"

namespace clipit {

// ---------------------------------------------------------------------------
// Building blocks
// ---------------------------------------------------------------------------

/// Low-rank adapted linear map: forward(x) = W x + (alpha/r) B (A x) + bias.
/// W is frozen; only A, B and the optional bias ever receive gradients.
/// With B = 0 the layer equals its base map exactly.
struct LoraLinear {
    Matrix w;  // d_out x d_in, frozen
    Matrix a;  // r x d_in
    Matrix b;  // d_out x r
    std::optional<Matrix> bias;
    double alpha = 1.0;

    std::size_t rank() const { return a.rows(); }
    std::size_t d_in() const { return w.cols(); }
    std::size_t d_out() const { return w.rows(); }
    double scaling() const { return alpha / static_cast<double>(rank()); }
};

inline Matrix lora_forward(const LoraLinear& layer, const Matrix& x) {
    if (x.rows() != layer.d_in() || x.cols() != 1)
        throw DimensionMismatchError("lora_forward: input dimension mismatch");
    Matrix y = matmul(layer.w, x);
    const Matrix ax = matmul(layer.a, x);
    const Matrix bax = matmul(layer.b, ax);
    const double s = layer.scaling();
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += s * bax[i];
    if (layer.bias)
        for (std::size_t i = 0; i < y.size(); ++i) y[i] += (*layer.bias)[i];
    return y;
}

struct Affine {
    Matrix w;  // d_out x d_in
    Matrix b;  // d_out x 1

    Matrix forward(const Matrix& x) const {
        if (x.rows() != w.cols() || x.cols() != 1)
            throw DimensionMismatchError("affine: input dimension mismatch");
        Matrix y = matmul(w, x);
        for (std::size_t i = 0; i < y.size(); ++i) y[i] += b[i];
        return y;
    }
};

/// Two-layer perceptron with tanh hidden activation (the distillation head).
struct Mlp {
    Matrix w1, b1;  // hidden x d_in
    Matrix w2, b2;  // d_out x hidden

    Matrix forward(const Matrix& x) const {
        if (x.rows() != w1.cols() || x.cols() != 1)
            throw DimensionMismatchError("mlp: input dimension mismatch");
        Matrix z = matmul(w1, x);
        for (std::size_t i = 0; i < z.size(); ++i) z[i] = std::tanh(z[i] + b1[i]);
        Matrix y = matmul(w2, z);
        for (std::size_t i = 0; i < y.size(); ++i) y[i] += b2[i];
        return y;
    }
};

// ---------------------------------------------------------------------------
// Model container
// ---------------------------------------------------------------------------

enum class Variant : std::uint8_t {
    Standard = 0,
    NoLora = 1,
    EarlyFusion = 2,
    DirectDistill = 3,
    ArchOnly = 4,
    VisionOnly = 5,
};

inline const char* variant_name(Variant v) {
    switch (v) {
        case Variant::Standard: return "standard";
        case Variant::NoLora: return "no_lora";
        case Variant::EarlyFusion: return "early_fusion";
        case Variant::DirectDistill: return "direct_distill";
        case Variant::ArchOnly: return "arch_only";
        case Variant::VisionOnly: return "vision_only";
    }
    return "unknown";
}

inline Variant variant_from_name(const std::string& s) {
    if (s == "standard") return Variant::Standard;
    if (s == "no_lora") return Variant::NoLora;
    if (s == "early_fusion") return Variant::EarlyFusion;
    if (s == "direct_distill") return Variant::DirectDistill;
    if (s == "arch_only") return Variant::ArchOnly;
    if (s == "vision_only") return Variant::VisionOnly;
    throw ConfigInvalidError("unknown variant '" + s + "'");
}

struct ModelConfig {
    std::size_t d_v = 64;
    std::size_t d_t = 64;
    std::size_t classes = 2;
    std::size_t hidden = 0;  // 0 = max(d_v, d_t)
    std::size_t lora_rank = 8;
    double lora_alpha = 4.0;
    double lambda = 1.0;
    Variant variant = Variant::Standard;

    std::size_t hidden_dim() const { return hidden == 0 ? std::max(d_v, d_t) : hidden; }
    bool uses_lora() const {
        return variant != Variant::NoLora && variant != Variant::VisionOnly;
    }
};

/// Parameter container for the adapted encoders, heads, distillation module
/// and logit fusion. Submodule presence depends on the variant; the standard
/// family carries all six of {f_v, f_t, h_v, h_t, h_d, g}. The stage-1 text
/// head h_t also exists during training for the early-fusion and
/// direct-distillation variants and is removed by finalize_unimodal().
struct ClipItModel {
    ModelConfig cfg;
    bool text_dropped = false;       // set once finalize_unimodal() ran
    std::optional<LoraLinear> f_v;   // vision adapter, identity base
    std::optional<LoraLinear> f_t;   // text adapter, identity base
    std::optional<Affine> h_v;       // vision head d_v -> C
    std::optional<Affine> h_t;       // text head d_t -> C
    std::optional<Mlp> h_d;          // distillation head d_v -> hidden -> d_t
    std::optional<Affine> g;         // logit fusion 2C -> C
    std::optional<Affine> early;     // early-fusion classifier (d_v + d_t) -> C
    std::optional<Matrix> proj;      // direct-distill projection d_v x d_t
};

/// Deterministic initialization. Weights draw from the seeded generator in a
/// fixed order; LoRA B blocks and all biases start at zero, so every adapted
/// layer equals its base exactly and the fusion g starts as the elementwise
/// mean of the two branch logit vectors ([I/2 | I/2], zero bias).
inline ClipItModel init_model(const ModelConfig& cfg, std::uint64_t seed) {
    if (cfg.classes < 2) throw ConfigInvalidError("model: need at least 2 classes");
    if (cfg.d_v < 1 || cfg.d_t < 1) throw ConfigInvalidError("model: empty dimensions");
    if (cfg.uses_lora() && cfg.lora_rank < 1)
        throw ConfigInvalidError("model: LoRA rank must be >= 1");
    Rng rng(seed);
    ClipItModel m;
    m.cfg = cfg;
    const std::size_t h = cfg.hidden_dim();
    const std::size_t c = cfg.classes;

    auto make_lora = [&](std::size_t d) {
        LoraLinear l;
        l.w = Matrix::identity(d);
        l.a = Matrix::gaussian(cfg.lora_rank, d, 1.0 / std::sqrt(static_cast<double>(d)), rng);
        l.b = Matrix(d, cfg.lora_rank);
        l.alpha = cfg.lora_alpha;
        return l;
    };
    auto make_affine = [&](std::size_t dout, std::size_t din) {
        Affine aff;
        aff.w = Matrix::gaussian(dout, din, 1.0 / std::sqrt(static_cast<double>(din)), rng);
        aff.b = Matrix(dout, 1);
        return aff;
    };

    const Variant v = cfg.variant;
    const bool standard_family =
        v == Variant::Standard || v == Variant::NoLora || v == Variant::ArchOnly;

    if (v != Variant::VisionOnly && cfg.uses_lora()) {
        m.f_v = make_lora(cfg.d_v);
        m.f_t = make_lora(cfg.d_t);
    }
    if (v != Variant::EarlyFusion) m.h_v = make_affine(c, cfg.d_v);
    if (v != Variant::VisionOnly) m.h_t = make_affine(c, cfg.d_t);
    if (standard_family || v == Variant::EarlyFusion) {
        Mlp mlp;
        mlp.w1 = Matrix::gaussian(h, cfg.d_v, 1.0 / std::sqrt(static_cast<double>(cfg.d_v)), rng);
        mlp.b1 = Matrix(h, 1);
        mlp.w2 = Matrix::gaussian(cfg.d_t, h, 1.0 / std::sqrt(static_cast<double>(h)), rng);
        mlp.b2 = Matrix(cfg.d_t, 1);
        m.h_d = std::move(mlp);
    }
    if (standard_family) {
        Affine fuse;
        fuse.w = Matrix(c, 2 * c);
        for (std::size_t i = 0; i < c; ++i) {
            fuse.w(i, i) = 0.5;
            fuse.w(i, c + i) = 0.5;
        }
        fuse.b = Matrix(c, 1);
        m.g = fuse;
    }
    if (v == Variant::EarlyFusion) m.early = make_affine(c, cfg.d_v + cfg.d_t);
    if (v == Variant::DirectDistill)
        m.proj = Matrix::gaussian(cfg.d_v, cfg.d_t, 1.0 / std::sqrt(static_cast<double>(cfg.d_t)),
                                  rng);
    return m;
}

// ---------------------------------------------------------------------------
// Forward paths
// ---------------------------------------------------------------------------

inline Matrix adapt_vision(const ClipItModel& m, const Matrix& x_v) {
    return m.f_v ? lora_forward(*m.f_v, x_v) : x_v;
}

inline Matrix text_features(const ClipItModel& m, const Matrix& x_t) {
    return m.f_t ? lora_forward(*m.f_t, x_t) : x_t;
}

struct VisionPathResult {
    Matrix v;
    Matrix t_hat;  // empty for variants without a distillation head
    Matrix logits;
};

/// Everything computable from the image alone; this is the inference path
/// and also the image half of the joint training forward, so the two are
/// bit-identical by construction.
inline VisionPathResult vision_path(const ClipItModel& m, const Matrix& x_v) {
    VisionPathResult r;
    if (m.cfg.variant == Variant::VisionOnly) {
        r.v = x_v;
        r.logits = m.h_v->forward(x_v);
        return r;
    }
    r.v = adapt_vision(m, x_v);
    switch (m.cfg.variant) {
        case Variant::Standard:
        case Variant::NoLora:
        case Variant::ArchOnly: {
            r.t_hat = m.h_d->forward(r.v);
            const Matrix lt = m.h_t->forward(r.t_hat);
            const Matrix lv = m.h_v->forward(r.v);
            Matrix cat(lt.rows() + lv.rows(), 1);
            for (std::size_t i = 0; i < lt.rows(); ++i) cat[i] = lt[i];
            for (std::size_t i = 0; i < lv.rows(); ++i) cat[lt.rows() + i] = lv[i];
            r.logits = m.g->forward(cat);
            break;
        }
        case Variant::EarlyFusion: {
            r.t_hat = m.h_d->forward(r.v);
            Matrix cat(r.v.rows() + r.t_hat.rows(), 1);
            for (std::size_t i = 0; i < r.v.rows(); ++i) cat[i] = r.v[i];
            for (std::size_t i = 0; i < r.t_hat.rows(); ++i) cat[r.v.rows() + i] = r.t_hat[i];
            r.logits = m.early->forward(cat);
            break;
        }
        case Variant::DirectDistill:
            r.logits = m.h_v->forward(r.v);
            break;
        case Variant::VisionOnly:
            break;
    }
    return r;
}

struct JointForwardResult {
    Matrix logits;
    Matrix t;
    Matrix t_hat;
};

/// Joint training forward: the prediction consumes only the image-derived
/// t_hat; the real text features t feed nothing but the distillation loss.
inline JointForwardResult forward_joint(const ClipItModel& m, const Matrix& x_v,
                                        const Matrix& x_t) {
    if (m.text_dropped)
        throw ConfigInvalidError("forward_joint: text branch was dropped");
    VisionPathResult vp = vision_path(m, x_v);
    JointForwardResult out;
    out.logits = std::move(vp.logits);
    out.t_hat = std::move(vp.t_hat);
    out.t = text_features(m, x_t);
    return out;
}

inline std::uint32_t argmax_index(const Matrix& logits) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < logits.size(); ++i)
        if (logits[i] > logits[best]) best = i;  // ties keep the lower index
    return static_cast<std::uint32_t>(best);
}

struct Prediction {
    std::uint32_t label = 0;
    Matrix logits;
};

inline Prediction predict_unimodal(const ClipItModel& m, const Matrix& x_v) {
    Prediction p;
    p.logits = vision_path(m, x_v).logits;
    p.label = argmax_index(p.logits);
    return p;
}

/// Text-branch prediction (used for the complementarity measure).
inline Prediction predict_text(const ClipItModel& m, const Matrix& x_t) {
    if (!m.h_t) throw ConfigInvalidError("predict_text: model has no text head");
    Prediction p;
    p.logits = m.h_t->forward(text_features(m, x_t));
    p.label = argmax_index(p.logits);
    return p;
}

/// Early-fusion sub-mode that consumes real text features at prediction
/// time (ablation only; the default path uses t_hat and stays text-free).
inline Prediction predict_early_fusion_with_text(const ClipItModel& m, const Matrix& x_v,
                                                 const Matrix& x_t) {
    if (m.cfg.variant != Variant::EarlyFusion || !m.early)
        throw ConfigInvalidError("predict_early_fusion_with_text: wrong variant");
    const Matrix v = adapt_vision(m, x_v);
    const Matrix t = text_features(m, x_t);
    Matrix cat(v.rows() + t.rows(), 1);
    for (std::size_t i = 0; i < v.rows(); ++i) cat[i] = v[i];
    for (std::size_t i = 0; i < t.rows(); ++i) cat[v.rows() + i] = t[i];
    Prediction p;
    p.logits = m.early->forward(cat);
    p.label = argmax_index(p.logits);
    return p;
}

/// Drop the text encoder (and, for variants that only needed it for stage-1
/// supervision, the scratch text head and projection) leaving the unimodal
/// model.
inline void finalize_unimodal(ClipItModel& m) {
    m.text_dropped = true;
    m.f_t.reset();
    if (m.cfg.variant == Variant::EarlyFusion || m.cfg.variant == Variant::DirectDistill)
        m.h_t.reset();
    if (m.cfg.variant == Variant::DirectDistill) m.proj.reset();
}

// ---------------------------------------------------------------------------
// Cost accounting
// ---------------------------------------------------------------------------

struct CostReport {
    std::size_t param_total = 0;
    std::size_t param_trainable = 0;
    std::size_t flops_unimodal = 0;     // inference path per sample
    std::size_t flops_text_branch = 0;  // f_t, training only
};

/// Exact parameter counts plus a fixed FLOP convention: every matrix
/// multiply d_out x d_in costs 2*d_in*d_out, every elementwise nonlinearity
/// costs its width; bias and residual adds are not counted.
inline CostReport count_cost(const ClipItModel& m) {
    CostReport r;
    auto lora_cost = [&](const LoraLinear& l, std::size_t& flops_sink) {
        r.param_total += l.w.size() + l.a.size() + l.b.size();
        r.param_trainable += l.a.size() + l.b.size();
        if (l.bias) {
            r.param_total += l.bias->size();
            r.param_trainable += l.bias->size();
        }
        flops_sink += 2 * l.d_in() * l.d_out() + 2 * l.d_in() * l.rank() +
                      2 * l.rank() * l.d_out();
    };
    auto affine_cost = [&](const Affine& a, std::size_t& flops_sink) {
        r.param_total += a.w.size() + a.b.size();
        r.param_trainable += a.w.size() + a.b.size();
        flops_sink += 2 * a.w.rows() * a.w.cols();
    };
    if (m.f_v) lora_cost(*m.f_v, r.flops_unimodal);
    if (m.f_t) lora_cost(*m.f_t, r.flops_text_branch);
    if (m.h_d) {
        r.param_total += m.h_d->w1.size() + m.h_d->b1.size() + m.h_d->w2.size() +
                         m.h_d->b2.size();
        r.param_trainable += m.h_d->w1.size() + m.h_d->b1.size() + m.h_d->w2.size() +
                             m.h_d->b2.size();
        r.flops_unimodal += 2 * m.h_d->w1.rows() * m.h_d->w1.cols() + m.h_d->w1.rows() +
                            2 * m.h_d->w2.rows() * m.h_d->w2.cols();
    }
    if (m.h_t) affine_cost(*m.h_t, m.cfg.variant == Variant::DirectDistill ||
                                           m.cfg.variant == Variant::EarlyFusion
                                       ? r.flops_text_branch
                                       : r.flops_unimodal);
    if (m.h_v) affine_cost(*m.h_v, r.flops_unimodal);
    if (m.g) affine_cost(*m.g, r.flops_unimodal);
    if (m.early) affine_cost(*m.early, r.flops_unimodal);
    if (m.proj) {
        r.param_total += m.proj->size();
        r.param_trainable += m.proj->size();
        r.flops_text_branch += 2 * m.proj->rows() * m.proj->cols();
    }
    return r;
}

// ---------------------------------------------------------------------------
// Checkpoints: "CIPM" version 1.
//   magic "CIPM" | version u32 | variant u8 | presence u8 | state u8
//   | d_v u32 | d_t u32 | hidden u32 | C u32 | r u32 | alpha f64
//   | lambda f64 | parameter blocks.
// Presence bits: 0 f_v, 1 f_t, 2 h_v, 3 h_t, 4 h_d, 5 g, 6 early, 7 proj.
// State bit 0: text branch dropped. Blocks are written in presence-bit
// order; each block stores its matrices in declaration order (LoRA: W, A,
// B; affine: W, b; MLP: W1, b1, W2, b2) as raw 64-bit little-endian reals.
// ---------------------------------------------------------------------------

inline void save_model(const ClipItModel& m, const std::string& path) {
    std::string buf = "CIPM";
    detail::put_u32(buf, 1);
    buf.push_back(static_cast<char>(m.cfg.variant));
    std::uint8_t presence = 0;
    if (m.f_v) presence |= 1u << 0;
    if (m.f_t) presence |= 1u << 1;
    if (m.h_v) presence |= 1u << 2;
    if (m.h_t) presence |= 1u << 3;
    if (m.h_d) presence |= 1u << 4;
    if (m.g) presence |= 1u << 5;
    if (m.early) presence |= 1u << 6;
    if (m.proj) presence |= 1u << 7;
    buf.push_back(static_cast<char>(presence));
    buf.push_back(static_cast<char>(m.text_dropped ? 1 : 0));
    detail::put_u32(buf, static_cast<std::uint32_t>(m.cfg.d_v));
    detail::put_u32(buf, static_cast<std::uint32_t>(m.cfg.d_t));
    detail::put_u32(buf, static_cast<std::uint32_t>(m.cfg.hidden_dim()));
    detail::put_u32(buf, static_cast<std::uint32_t>(m.cfg.classes));
    detail::put_u32(buf, static_cast<std::uint32_t>(m.cfg.lora_rank));
    detail::put_f64(buf, m.cfg.lora_alpha);
    detail::put_f64(buf, m.cfg.lambda);
    auto put_matrix = [&buf](const Matrix& mat) {
        for (std::size_t i = 0; i < mat.size(); ++i) detail::put_f64(buf, mat[i]);
    };
    auto put_lora = [&](const LoraLinear& l) {
        put_matrix(l.w);
        put_matrix(l.a);
        put_matrix(l.b);
    };
    auto put_affine = [&](const Affine& a) {
        put_matrix(a.w);
        put_matrix(a.b);
    };
    if (m.f_v) put_lora(*m.f_v);
    if (m.f_t) put_lora(*m.f_t);
    if (m.h_v) put_affine(*m.h_v);
    if (m.h_t) put_affine(*m.h_t);
    if (m.h_d) {
        put_matrix(m.h_d->w1);
        put_matrix(m.h_d->b1);
        put_matrix(m.h_d->w2);
        put_matrix(m.h_d->b2);
    }
    if (m.g) put_affine(*m.g);
    if (m.early) put_affine(*m.early);
    if (m.proj) put_matrix(*m.proj);
    detail::write_file(path, buf);
}

inline ClipItModel load_model(const std::string& path) {
    const std::string buf = detail::read_file(path);
    detail::ByteReader r(buf, path);
    if (r.bytes(4) != "CIPM") throw BadMagicError(path + ": not a CIPM checkpoint");
    const std::uint32_t version = r.u32();
    if (version != 1)
        throw UnsupportedVersionError(path + ": version " + std::to_string(version));
    const auto variant_raw = r.u8();
    if (variant_raw > static_cast<std::uint8_t>(Variant::VisionOnly))
        throw UnsupportedVersionError(path + ": unknown variant tag");
    const std::uint8_t presence = r.u8();
    const std::uint8_t state = r.u8();
    ClipItModel m;
    m.cfg.variant = static_cast<Variant>(variant_raw);
    m.text_dropped = (state & 1) != 0;
    m.cfg.d_v = r.u32();
    m.cfg.d_t = r.u32();
    m.cfg.hidden = r.u32();
    m.cfg.classes = r.u32();
    m.cfg.lora_rank = r.u32();
    m.cfg.lora_alpha = r.f64();
    m.cfg.lambda = r.f64();
    if (m.cfg.d_v < 1 || m.cfg.d_t < 1 || m.cfg.classes < 2)
        throw TruncatedFileError(path + ": inconsistent header dimensions");
    auto get_matrix = [&r](std::size_t rows, std::size_t cols) {
        Matrix mat(rows, cols);
        for (std::size_t i = 0; i < mat.size(); ++i) mat[i] = r.f64();
        return mat;
    };
    auto get_lora = [&](std::size_t d) {
        LoraLinear l;
        l.w = get_matrix(d, d);
        l.a = get_matrix(m.cfg.lora_rank, d);
        l.b = get_matrix(d, m.cfg.lora_rank);
        l.alpha = m.cfg.lora_alpha;
        return l;
    };
    auto get_affine = [&](std::size_t dout, std::size_t din) {
        Affine a;
        a.w = get_matrix(dout, din);
        a.b = get_matrix(dout, 1);
        return a;
    };
    const std::size_t c = m.cfg.classes;
    const std::size_t h = m.cfg.hidden_dim();
    if (presence & (1u << 0)) m.f_v = get_lora(m.cfg.d_v);
    if (presence & (1u << 1)) m.f_t = get_lora(m.cfg.d_t);
    if (presence & (1u << 2)) m.h_v = get_affine(c, m.cfg.d_v);
    if (presence & (1u << 3)) m.h_t = get_affine(c, m.cfg.d_t);
    if (presence & (1u << 4)) {
        Mlp mlp;
        mlp.w1 = get_matrix(h, m.cfg.d_v);
        mlp.b1 = get_matrix(h, 1);
        mlp.w2 = get_matrix(m.cfg.d_t, h);
        mlp.b2 = get_matrix(m.cfg.d_t, 1);
        m.h_d = std::move(mlp);
    }
    if (presence & (1u << 5)) m.g = get_affine(c, 2 * c);
    if (presence & (1u << 6)) m.early = get_affine(c, m.cfg.d_v + m.cfg.d_t);
    if (presence & (1u << 7)) m.proj = get_matrix(m.cfg.d_v, m.cfg.d_t);
    if (!r.exhausted()) throw TruncatedFileError(path + ": trailing bytes after parameters");
    return m;
}

}  // namespace clipit
