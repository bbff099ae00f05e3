#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "clipit/adam.hpp"
#include "clipit/data.hpp"
#include "clipit/errors.hpp"
#include "clipit/model.hpp"
#include "clipit/ops.hpp"
#include "clipit/pairing.hpp"
#include "clipit/rng.hpp"
#include "clipit/stats.hpp"
#include "clipit/tape.hpp"
#include "clipit/text_encoder.hpp"

namespace clipit {

// ---------------------------------------------------------------------------
// Seed derivation. Every invocation funnels one seed; submodule streams are
// derived from it with these documented offsets so a single number
// reproduces a whole run.
// ---------------------------------------------------------------------------

namespace seeds {
inline constexpr std::uint64_t kPairRandom = 1;
inline constexpr std::uint64_t kModelInit = 2;
inline constexpr std::uint64_t kStage1Shuffle = 1000;  // + epoch
inline constexpr std::uint64_t kStage2Shuffle = 2000;  // + epoch
inline constexpr std::uint64_t kWordDropout = 3000;    // mixed per stage/epoch/sample
}  // namespace seeds

// hash_combine-style mixing for per-sample streams
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b,
                                 std::uint64_t c) {
    std::uint64_t s = base;
    for (std::uint64_t v : {a, b, c})
        s ^= v + 0x9E3779B97F4A7C15ULL + (s << 6) + (s >> 2);
    return s;
}

// ---------------------------------------------------------------------------
// Training configuration
// ---------------------------------------------------------------------------

struct TrainConfig {
    double lr = 1e-3;
    double weight_decay = 1e-4;
    std::size_t batch_size = 64;
    std::size_t epochs_stage1 = 25;
    std::size_t epochs_stage2 = 25;
    double lambda = 1.0;
    std::size_t lora_rank = 8;
    double lora_alpha = 4.0;
    std::uint64_t seed = 0;
    Variant variant = Variant::Standard;
    double word_dropout = 0.0;
    bool freeze_text = false;  // stage-2 text-branch (f_t, h_t) updates off
    int workers = 1;

    void validate() const {
        if (!(lr > 0.0)) throw ConfigInvalidError("train: lr must be positive");
        if (batch_size < 1) throw ConfigInvalidError("train: batch size must be >= 1");
        if (lambda < 0.0) throw ConfigInvalidError("train: lambda must be >= 0");
        if (word_dropout < 0.0 || word_dropout > 1.0)
            throw ConfigInvalidError("train: word dropout outside [0, 1]");
        if (workers < 1) throw ConfigInvalidError("train: workers must be >= 1");
    }
};

struct EpochStats {
    double ce_loss = 0.0;
    double kd_loss = 0.0;
    double train_acc = 0.0;
};

struct TrainLog {
    std::vector<EpochStats> epochs;
    double wall_seconds = 0.0;  // informational; never written into metrics
};

// ---------------------------------------------------------------------------
// Text side: per-sample embeddings from a corpus (with optional word
// dropout) or from a precomputed embedding store.
// ---------------------------------------------------------------------------

class TextProvider {
public:
    static TextProvider from_corpus(const TextCorpus& corpus, HashedEncoderConfig enc) {
        TextProvider tp;
        tp.enc_ = enc;
        for (std::size_t i = 0; i < corpus.records.size(); ++i) {
            tp.index_.emplace(corpus.records[i].id, i);
            tp.texts_.push_back(corpus.records[i].text);
            tp.clean_.push_back(
                Matrix::column(encode_text(corpus.records[i].text, enc)));
        }
        return tp;
    }

    static TextProvider from_store(const EmbeddingStore& store) {
        if (!store.has_ids()) throw MissingIdsError("text embeddings: store has no ids");
        TextProvider tp;
        for (std::size_t i = 0; i < store.count(); ++i) {
            tp.index_.emplace(store.ids[i], i);
            std::span<const double> row = store.row(i);
            tp.clean_.push_back(Matrix::column({row.begin(), row.end()}));
        }
        return tp;
    }

    std::size_t dim() const { return clean_.empty() ? 0 : clean_[0].rows(); }

    const Matrix& clean(const std::string& text_id) const {
        return clean_[index_of(text_id)];
    }

    /// Training-time embedding. Word dropout applies only in corpus mode;
    /// returns nullopt when every token was removed (the distillation term
    /// is skipped for that presentation).
    std::optional<Matrix> training(const std::string& text_id, double p,
                                   std::uint64_t seed) const {
        if (p <= 0.0) return clean(text_id);
        if (texts_.empty())
            throw ConfigInvalidError(
                "word dropout requires raw text; precomputed embeddings given");
        const std::string corrupted = corrupt_text(texts_[index_of(text_id)], p, seed);
        try {
            return Matrix::column(encode_text(corrupted, enc_));
        } catch (const EmptyTextError&) {
            return std::nullopt;
        } catch (const ZeroVectorError&) {
            return std::nullopt;
        }
    }

private:
    std::size_t index_of(const std::string& id) const {
        auto it = index_.find(id);
        if (it == index_.end())
            throw InstanceMismatchError("text provider: unknown id '" + id + "'");
        return it->second;
    }

    HashedEncoderConfig enc_;
    std::unordered_map<std::string, std::size_t> index_;
    std::vector<std::string> texts_;  // raw texts (corpus mode only)
    std::vector<Matrix> clean_;
};

// ---------------------------------------------------------------------------
// Per-sample loss graphs
// ---------------------------------------------------------------------------

namespace detail {

// Leaf bookkeeping for one sample's tape.
struct Graph {
    Tape tape;
    std::vector<std::pair<const Matrix*, Tape::NodeId>> leaves;

    Tape::NodeId leaf(const Matrix& m) {
        for (const auto& [ptr, id] : leaves)
            if (ptr == &m) return id;
        const Tape::NodeId id = tape.leaf(m);
        leaves.emplace_back(&m, id);
        return id;
    }

    Tape::NodeId lora(const LoraLinear& l, Tape::NodeId x) {
        const Tape::NodeId wx = tape.matmul(leaf(l.w), x);
        const Tape::NodeId ax = tape.matmul(leaf(l.a), x);
        const Tape::NodeId bax = tape.matmul(leaf(l.b), ax);
        Tape::NodeId y = tape.add_scaled(wx, tape.scale(bax, l.scaling()), 1.0, 1.0);
        if (l.bias) y = tape.add(y, leaf(*l.bias));
        return y;
    }

    Tape::NodeId affine(const Affine& a, Tape::NodeId x) {
        return tape.add(tape.matmul(leaf(a.w), x), leaf(a.b));
    }

    Tape::NodeId mlp(const Mlp& m, Tape::NodeId x) {
        const Tape::NodeId z = tape.tanh(tape.add(tape.matmul(leaf(m.w1), x), leaf(m.b1)));
        return tape.add(tape.matmul(leaf(m.w2), z), leaf(m.b2));
    }

    Tape::NodeId grad_leaf_id(const Matrix* p) const {
        for (const auto& [ptr, id] : leaves)
            if (ptr == p) return id;
        return -1;
    }
};

struct SampleOutcome {
    double ce = 0.0;
    double kd = 0.0;
    bool kd_present = false;
    bool included = false;  // false when stage-1 text vanished under dropout
    bool correct = false;
    std::vector<Matrix> grads;  // aligned with the trainable list
};

enum class Stage { TextFinetune, Multimodal };

// Builds the loss graph for one sample, backpropagates, and extracts the
// gradients of the requested parameters.
//
// Gradient routing: the distillation head is trained by the KD term alone.
// The predicted text features t_hat enter the classifier path as a constant
// (a fresh leaf), so cross-entropy shapes the heads and the fusion but
// never reaches h_d; KD reaches h_d and, through its input, the vision
// adapter. The KD term is recorded whenever text is available and joins
// the loss only when lambda is nonzero, so a lambda of zero reports KD
// values while optimizing exactly cross-entropy-only.
inline SampleOutcome eval_sample(const ClipItModel& m, Stage stage,
                                 const Matrix* x_v, const std::optional<Matrix>& x_t,
                                 std::uint32_t label, double lambda,
                                 const std::vector<Matrix*>& trainable) {
    SampleOutcome out;
    Graph gb;
    Tape::NodeId logits = -1;
    Tape::NodeId kd = -1;

    if (stage == Stage::TextFinetune) {
        if (!x_t) return out;  // dropped by word dropout
        Tape::NodeId t = gb.tape.leaf(*x_t);
        if (m.f_t) t = gb.lora(*m.f_t, t);
        logits = gb.affine(*m.h_t, t);
    } else {
        const Tape::NodeId xv = gb.tape.leaf(*x_v);
        const Variant variant = m.cfg.variant;
        if (variant == Variant::VisionOnly) {
            logits = gb.affine(*m.h_v, xv);
        } else {
            const Tape::NodeId v = m.f_v ? gb.lora(*m.f_v, xv) : xv;
            Tape::NodeId t = -1;
            if (x_t && variant != Variant::ArchOnly) {
                t = gb.tape.leaf(*x_t);
                if (m.f_t) t = gb.lora(*m.f_t, t);
            }
            // The distillation term is recorded whenever text is available;
            // it only joins the loss when lambda is nonzero, so a lambda of
            // zero reports KD values while optimizing exactly CE-only.
            switch (variant) {
                case Variant::Standard:
                case Variant::NoLora:
                case Variant::ArchOnly: {
                    const Tape::NodeId that = gb.mlp(*m.h_d, v);
                    const Tape::NodeId that_const = gb.tape.leaf(gb.tape.val(that));
                    const Tape::NodeId lt = gb.affine(*m.h_t, that_const);
                    const Tape::NodeId lv = gb.affine(*m.h_v, v);
                    logits = gb.affine(*m.g, gb.tape.concat_rows(lt, lv));
                    if (t >= 0) kd = gb.tape.kd_cosine(t, that);
                    break;
                }
                case Variant::EarlyFusion: {
                    const Tape::NodeId that = gb.mlp(*m.h_d, v);
                    const Tape::NodeId that_const = gb.tape.leaf(gb.tape.val(that));
                    logits = gb.affine(*m.early, gb.tape.concat_rows(v, that_const));
                    if (t >= 0) kd = gb.tape.kd_cosine(t, that);
                    break;
                }
                case Variant::DirectDistill: {
                    logits = gb.affine(*m.h_v, v);
                    if (t >= 0) {
                        const Tape::NodeId pt = gb.tape.matmul(gb.leaf(*m.proj), t);
                        kd = gb.tape.kd_cosine(pt, v);
                    }
                    break;
                }
                default:
                    break;
            }
        }
    }

    const Tape::NodeId ce = gb.tape.softmax_ce(logits, label);
    const Tape::NodeId loss =
        (kd >= 0 && lambda != 0.0) ? gb.tape.add_scaled(ce, kd, 1.0, lambda) : ce;

    out.included = true;
    out.ce = gb.tape.val(ce)[0];
    if (kd >= 0) {
        out.kd = gb.tape.val(kd)[0];
        out.kd_present = true;
    }
    if (!std::isfinite(gb.tape.val(loss)[0]))
        throw NonFiniteLossError("training diverged: non-finite sample loss");
    out.correct = argmax_index(gb.tape.val(logits)) == label;

    gb.tape.backward(loss);
    out.grads.reserve(trainable.size());
    for (Matrix* p : trainable) {
        const Tape::NodeId id = gb.grad_leaf_id(p);
        if (id >= 0) {
            out.grads.push_back(gb.tape.grad(id));
        } else {
            out.grads.emplace_back(p->rows(), p->cols());  // not in this graph
        }
    }
    return out;
}

// Stage-2 parameters in fixed documented order; W blocks never appear.
inline std::vector<Matrix*> trainable_params(ClipItModel& m, Stage stage,
                                             const TrainConfig& cfg) {
    std::vector<Matrix*> out;
    auto push_lora = [&out](std::optional<LoraLinear>& l) {
        if (l) {
            out.push_back(&l->a);
            out.push_back(&l->b);
            if (l->bias) out.push_back(&*l->bias);
        }
    };
    auto push_affine = [&out](std::optional<Affine>& a) {
        if (a) {
            out.push_back(&a->w);
            out.push_back(&a->b);
        }
    };
    if (stage == Stage::TextFinetune) {
        push_lora(m.f_t);
        push_affine(m.h_t);
        return out;
    }
    const Variant v = m.cfg.variant;
    const bool text_trains = !cfg.freeze_text && v != Variant::ArchOnly &&
                             v != Variant::VisionOnly;
    push_lora(m.f_v);
    if (text_trains) push_lora(m.f_t);
    push_affine(m.h_v);
    if (v == Variant::ArchOnly || (text_trains && v != Variant::EarlyFusion &&
                                   v != Variant::DirectDistill))
        push_affine(m.h_t);
    if (m.h_d && v != Variant::VisionOnly && v != Variant::DirectDistill) {
        out.push_back(&m.h_d->w1);
        out.push_back(&m.h_d->b1);
        out.push_back(&m.h_d->w2);
        out.push_back(&m.h_d->b2);
    }
    if (v != Variant::EarlyFusion && v != Variant::DirectDistill && v != Variant::VisionOnly)
        push_affine(m.g);
    push_affine(m.early);
    if (v == Variant::DirectDistill && m.proj) out.push_back(&*m.proj);
    return out;
}

struct BatchSample {
    const Matrix* x_v = nullptr;
    std::optional<Matrix> x_t;
    std::uint32_t label = 0;
};

// One optimizer step over a batch. Per-sample gradients may be computed by
// several workers, but the reduction always sums slot 0, 1, 2, ... so the
// result is bit-identical for any worker count.
inline void run_batch(const ClipItModel& m, Stage stage,
                      const std::vector<BatchSample>& batch, double lambda,
                      const std::vector<Matrix*>& trainable, int workers,
                      AdamState& adam, double& ce_sum, double& kd_sum,
                      std::size_t& kd_count, std::size_t& included, std::size_t& correct) {
    std::vector<SampleOutcome> slots(batch.size());
    auto work = [&](std::size_t i) {
        slots[i] = eval_sample(m, stage, batch[i].x_v, batch[i].x_t, batch[i].label,
                               lambda, trainable);
    };
    if (workers <= 1 || batch.size() < 2) {
        for (std::size_t i = 0; i < batch.size(); ++i) work(i);
    } else {
        std::vector<std::thread> pool;
        const std::size_t w = std::min<std::size_t>(static_cast<std::size_t>(workers),
                                                    batch.size());
        for (std::size_t t = 0; t < w; ++t)
            pool.emplace_back([&, t] {
                for (std::size_t i = t; i < batch.size(); i += w) work(i);
            });
        for (auto& th : pool) th.join();
    }

    std::vector<Matrix> grads;
    grads.reserve(trainable.size());
    for (Matrix* p : trainable) grads.emplace_back(p->rows(), p->cols());
    std::size_t used = 0;
    for (std::size_t i = 0; i < batch.size(); ++i) {  // ascending sample order
        const SampleOutcome& s = slots[i];
        if (!s.included) continue;
        ++used;
        ce_sum += s.ce;
        if (s.kd_present) {
            kd_sum += s.kd;
            ++kd_count;
        }
        if (s.correct) ++correct;
        for (std::size_t k = 0; k < grads.size(); ++k)
            add_scaled_into(grads[k], s.grads[k], 1.0);
    }
    included += used;
    if (used == 0) return;
    const double inv = 1.0 / static_cast<double>(used);
    for (auto& gmat : grads)
        for (std::size_t i = 0; i < gmat.size(); ++i) gmat[i] *= inv;
    adam.step(trainable, grads);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Stage drivers
// ---------------------------------------------------------------------------

/// Stage 1: fit the text adapter and text head with cross-entropy on the
/// pseudo-paired (report, label) data. Shuffling is epoch-reseeded; word
/// dropout, when configured, redraws per presentation.
inline TrainLog finetune_text_stage(ClipItModel& model, const PseudoPairedDataset& pairs,
                                    const TextProvider& text, const TrainConfig& cfg) {
    cfg.validate();
    if (pairs.records.empty()) throw EmptyDatasetError("stage 1: no paired samples");
    if (!model.h_t) throw ConfigInvalidError("stage 1: model has no text head");
    if (text.dim() != model.cfg.d_t)
        throw DimensionMismatchError("stage 1: text embedding dimension mismatch");
    const auto t0 = std::chrono::steady_clock::now();
    TrainLog log;
    std::vector<Matrix*> trainable =
        detail::trainable_params(model, detail::Stage::TextFinetune, cfg);
    AdamState adam({cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay}, trainable);

    std::vector<std::size_t> order(pairs.records.size());
    for (std::size_t e = 0; e < cfg.epochs_stage1; ++e) {
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        Rng shuffle_rng(cfg.seed + seeds::kStage1Shuffle + e);
        shuffle_rng.shuffle(order);
        double ce_sum = 0.0, kd_sum = 0.0;
        std::size_t kd_count = 0, included = 0, correct = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
            std::vector<detail::BatchSample> batch;
            batch.reserve(stop - start);
            for (std::size_t k = start; k < stop; ++k) {
                const PairRecord& rec = pairs.records[order[k]];
                detail::BatchSample s;
                s.label = rec.label;
                s.x_t = text.training(
                    rec.text_id, cfg.word_dropout,
                    derive_seed(cfg.seed + seeds::kWordDropout, 1, e, order[k]));
                batch.push_back(std::move(s));
            }
            detail::run_batch(model, detail::Stage::TextFinetune, batch, 0.0, trainable,
                              cfg.workers, adam, ce_sum, kd_sum, kd_count, included,
                              correct);
        }
        EpochStats st;
        st.ce_loss = included ? ce_sum / static_cast<double>(included) : 0.0;
        st.kd_loss = 0.0;
        st.train_acc = included ? static_cast<double>(correct) / static_cast<double>(included)
                                : 0.0;
        if (!std::isfinite(st.ce_loss))
            throw NonFiniteLossError("stage 1: non-finite epoch loss");
        log.epochs.push_back(st);
    }
    log.wall_seconds = std::chrono::duration<double>(
        std::chrono::steady_clock::now() - t0).count();
    return log;
}

/// Stage 2: joint multimodal training (Standard family, EarlyFusion,
/// DirectDistill) or the plain vision baseline. Per batch the loss is
/// CE + lambda*KD averaged over the batch; frozen LoRA base weights never
/// receive updates.
inline TrainLog train_multimodal(ClipItModel& model, const EmbeddingStore& task,
                                 const PseudoPairedDataset& pairs,
                                 const TextProvider* text, const TrainConfig& cfg) {
    cfg.validate();
    if (pairs.records.empty()) throw EmptyDatasetError("stage 2: no paired samples");
    if (task.count() != pairs.records.size())
        throw InstanceMismatchError("stage 2: task store and pairing sizes differ");
    if (task.dim() != model.cfg.d_v)
        throw DimensionMismatchError("stage 2: task embedding dimension mismatch");
    const bool uses_text = model.cfg.variant != Variant::ArchOnly &&
                           model.cfg.variant != Variant::VisionOnly;
    if (uses_text && text == nullptr)
        throw ConfigInvalidError("stage 2: variant requires text embeddings");
    if (uses_text && text->dim() != model.cfg.d_t)
        throw DimensionMismatchError("stage 2: text embedding dimension mismatch");
    const double lambda = model.cfg.variant == Variant::ArchOnly ? 0.0 : cfg.lambda;

    const auto t0 = std::chrono::steady_clock::now();
    TrainLog log;
    std::vector<Matrix*> trainable =
        detail::trainable_params(model, detail::Stage::Multimodal, cfg);
    AdamState adam({cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay}, trainable);

    std::vector<Matrix> xv_cache;
    xv_cache.reserve(task.count());
    for (std::size_t i = 0; i < task.count(); ++i) {
        std::span<const double> row = task.row(i);
        xv_cache.push_back(Matrix::column({row.begin(), row.end()}));
    }

    std::vector<std::size_t> order(pairs.records.size());
    for (std::size_t e = 0; e < cfg.epochs_stage2; ++e) {
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        Rng shuffle_rng(cfg.seed + seeds::kStage2Shuffle + e);
        shuffle_rng.shuffle(order);
        double ce_sum = 0.0, kd_sum = 0.0;
        std::size_t kd_count = 0, included = 0, correct = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
            std::vector<detail::BatchSample> batch;
            batch.reserve(stop - start);
            for (std::size_t k = start; k < stop; ++k) {
                const std::size_t idx = order[k];
                const PairRecord& rec = pairs.records[idx];
                detail::BatchSample s;
                s.x_v = &xv_cache[idx];
                s.label = rec.label;
                if (uses_text)
                    s.x_t = text->training(
                        rec.text_id, cfg.word_dropout,
                        derive_seed(cfg.seed + seeds::kWordDropout, 2, e, idx));
                batch.push_back(std::move(s));
            }
            detail::run_batch(model, detail::Stage::Multimodal, batch, lambda, trainable,
                              cfg.workers, adam, ce_sum, kd_sum, kd_count, included,
                              correct);
        }
        EpochStats st;
        st.ce_loss = included ? ce_sum / static_cast<double>(included) : 0.0;
        st.kd_loss = kd_count ? kd_sum / static_cast<double>(kd_count) : 0.0;
        st.train_acc = included ? static_cast<double>(correct) / static_cast<double>(included)
                                : 0.0;
        if (!std::isfinite(st.ce_loss) || !std::isfinite(st.kd_loss))
            throw NonFiniteLossError("stage 2: non-finite epoch loss");
        log.epochs.push_back(st);
    }
    log.wall_seconds = std::chrono::duration<double>(
        std::chrono::steady_clock::now() - t0).count();
    return log;
}

// ---------------------------------------------------------------------------
// Variant orchestration and the end-to-end pipeline
// ---------------------------------------------------------------------------

struct TrainResult {
    ClipItModel model;
    TrainLog stage1;
    TrainLog stage2;
};

inline std::size_t class_count(const EmbeddingStore& task) {
    if (!task.has_labels()) throw MissingLabelsError("training data has no labels");
    std::uint32_t top = 0;
    for (std::uint32_t y : task.labels) top = std::max(top, y);
    return std::max<std::size_t>(2, top + 1);
}

/// Full two-stage run for any variant. arch_only and vision_only skip
/// stage 1 (arch_only additionally forces lambda to zero); the returned
/// model still carries its text branch so callers can evaluate it before
/// finalize_unimodal().
inline TrainResult train_variant(const EmbeddingStore& task, const PseudoPairedDataset& pairs,
                                 const TextProvider* text, const TrainConfig& cfg) {
    cfg.validate();
    ModelConfig mc;
    mc.d_v = task.dim();
    mc.d_t = text != nullptr ? text->dim() : task.dim();
    mc.classes = class_count(task);
    mc.lora_rank = cfg.lora_rank;
    mc.lora_alpha = cfg.lora_alpha;
    mc.lambda = cfg.variant == Variant::ArchOnly ? 0.0 : cfg.lambda;
    mc.variant = cfg.variant;
    TrainResult r;
    r.model = init_model(mc, cfg.seed + seeds::kModelInit);
    const bool run_stage1 =
        cfg.variant != Variant::ArchOnly && cfg.variant != Variant::VisionOnly;
    if (run_stage1) {
        if (text == nullptr)
            throw ConfigInvalidError("train: variant requires text embeddings");
        r.stage1 = finetune_text_stage(r.model, pairs, *text, cfg);
    }
    r.stage2 = train_multimodal(r.model, task, pairs, text, cfg);
    return r;
}

inline std::vector<std::uint32_t> predict_store(const ClipItModel& m,
                                                const EmbeddingStore& task) {
    std::vector<std::uint32_t> preds;
    preds.reserve(task.count());
    for (std::size_t i = 0; i < task.count(); ++i) {
        std::span<const double> row = task.row(i);
        preds.push_back(predict_unimodal(m, Matrix::column({row.begin(), row.end()})).label);
    }
    return preds;
}

inline std::vector<std::uint32_t> predict_text_for_pairs(const ClipItModel& m,
                                                         const PseudoPairedDataset& pairs,
                                                         const TextProvider& text) {
    std::vector<std::uint32_t> preds;
    preds.reserve(pairs.records.size());
    for (const auto& rec : pairs.records)
        preds.push_back(predict_text(m, text.clean(rec.text_id)).label);
    return preds;
}

struct PairMode {
    bool random = false;
    std::size_t rank = 1;
};

struct PipelineInputs {
    const EmbeddingStore* img_retrieval = nullptr;   // train images, retrieval space
    const EmbeddingStore* text_retrieval = nullptr;  // reports, retrieval space (ids)
    const EmbeddingStore* img_task = nullptr;        // train images, task space (labels)
    const TextCorpus* corpus = nullptr;
    std::vector<std::string> keywords;               // empty = no filtering
    const EmbeddingStore* text_task = nullptr;       // optional precomputed text embeddings
    const EmbeddingStore* test_task = nullptr;       // optional held-out eval store
    const EmbeddingStore* test_retrieval = nullptr;  // optional, enables text preds / omega
    PairMode pair_mode;
    HashedEncoderConfig encoder;
    std::size_t histogram_bins = 20;
};

struct PipelineResult {
    ClipItModel model;  // finalized unimodal model
    PseudoPairedDataset pairs;
    SimilarityHistogram histogram;
    TrainLog stage1;
    TrainLog stage2;
    CostReport cost;
    double test_accuracy = -1.0;  // -1 when no labeled test store was given
    std::vector<std::uint32_t> test_preds;
    std::vector<std::uint32_t> test_text_preds;
    OmegaResult omega;
    bool omega_valid = false;
};

namespace detail {

// Restrict a retrieval store (ids) to the given corpus, in corpus order.
inline EmbeddingStore select_rows(const EmbeddingStore& store, const TextCorpus& corpus) {
    if (!store.has_ids()) throw MissingIdsError("text retrieval store has no ids");
    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < store.count(); ++i) index.emplace(store.ids[i], i);
    EmbeddingStore out;
    out.data = Matrix(corpus.size(), store.dim());
    out.ids.reserve(corpus.size());
    for (std::size_t r = 0; r < corpus.size(); ++r) {
        auto it = index.find(corpus.records[r].id);
        if (it == index.end())
            throw InstanceMismatchError("no retrieval embedding for report '" +
                                        corpus.records[r].id + "'");
        for (std::size_t c = 0; c < store.dim(); ++c)
            out.data(r, c) = store.data(it->second, c);
        out.ids.push_back(corpus.records[r].id);
    }
    return out;
}

}  // namespace detail

/// The whole run: filter reports, pair modalities, encode text, fine-tune
/// the text head, distill, drop the text encoder, and evaluate the unimodal
/// model on the held-out store.
inline PipelineResult run_pipeline(const PipelineInputs& in, const TrainConfig& cfg) {
    cfg.validate();
    if (in.img_retrieval == nullptr || in.text_retrieval == nullptr ||
        in.img_task == nullptr || in.corpus == nullptr)
        throw ConfigInvalidError("pipeline: missing required inputs");

    TextCorpus filtered =
        in.keywords.empty() ? *in.corpus : filter_corpus(*in.corpus, in.keywords);
    EmbeddingStore text_retr = detail::select_rows(*in.text_retrieval, filtered);

    PairingRequest req;
    req.images = in.img_retrieval;
    req.texts = &text_retr;
    req.workers = cfg.workers;
    PipelineResult out;
    out.pairs = in.pair_mode.random
                    ? pair_random(req, cfg.seed + seeds::kPairRandom)
                    : pair_modalities(req, in.pair_mode.rank);
    out.histogram = similarity_histogram(out.pairs, in.histogram_bins);

    std::optional<TextProvider> text;
    if (cfg.variant != Variant::ArchOnly && cfg.variant != Variant::VisionOnly) {
        text = in.text_task != nullptr ? TextProvider::from_store(*in.text_task)
                                       : TextProvider::from_corpus(filtered, in.encoder);
    }

    TrainResult trained =
        train_variant(*in.img_task, out.pairs, text ? &*text : nullptr, cfg);
    out.stage1 = std::move(trained.stage1);
    out.stage2 = std::move(trained.stage2);

    if (in.test_task != nullptr) {
        out.test_preds = predict_store(trained.model, *in.test_task);
        if (in.test_task->has_labels())
            out.test_accuracy = accuracy(out.test_preds, in.test_task->labels);
        if (in.test_retrieval != nullptr && text && trained.model.h_t) {
            PairingRequest treq;
            treq.images = in.test_retrieval;
            treq.texts = &text_retr;
            treq.workers = cfg.workers;
            PseudoPairedDataset test_pairs =
                in.pair_mode.random
                    ? pair_random(treq, cfg.seed + seeds::kPairRandom + 1)
                    : pair_modalities(treq, in.pair_mode.rank);
            out.test_text_preds = predict_text_for_pairs(trained.model, test_pairs, *text);
            if (in.test_task->has_labels()) {
                PredictionSet ps;
                ps.labels = in.test_task->labels;
                ps.vision = out.test_preds;
                ps.text = out.test_text_preds;
                out.omega = omega(ps);
                out.omega_valid = true;
            }
        }
    }

    finalize_unimodal(trained.model);
    out.cost = count_cost(trained.model);
    out.model = std::move(trained.model);
    return out;
}

}  // namespace clipit
