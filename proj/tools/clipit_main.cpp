// clipit: retrieval-based pseudo-pairing, dual-branch distillation training,
// and text-free inference over precomputed embeddings.
//
// Exit codes: 0 success, 2 usage error, 3 input error, 4 runtime failure.
// Errors print one line to stderr: "error: <Category>: <detail>".

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "clipit/config.hpp"
#include "clipit/data.hpp"
#include "clipit/model.hpp"
#include "clipit/pairing.hpp"
#include "clipit/stats.hpp"
#include "clipit/synthgen.hpp"
#include "clipit/text_encoder.hpp"
#include "clipit/trainer.hpp"

namespace fs = std::filesystem;
using namespace clipit;

namespace {

// --out default comes from CLIPIT_OUT_DIR when the flag is not given.
std::string resolve_out_dir(const CLI::App* cmd, const std::string& flag_value) {
    if (cmd->count("--out") == 0) {
        if (const char* env = std::getenv("CLIPIT_OUT_DIR")) return env;
    }
    return flag_value;
}

std::string ensure_dir(const std::string& dir) {
    fs::create_directories(dir);
    return dir;
}

std::vector<std::string> split_commas(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ',') {
            if (!trim_copy(cur).empty()) out.push_back(trim_copy(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!trim_copy(cur).empty()) out.push_back(trim_copy(cur));
    return out;
}

void write_train_log_csv(const TrainLog& log, const std::string& path) {
    std::string buf = "epoch,ce_loss,kd_loss,train_acc\n";
    for (std::size_t e = 0; e < log.epochs.size(); ++e) {
        buf += std::to_string(e);
        buf += ',';
        buf += format_double(log.epochs[e].ce_loss);
        buf += ',';
        buf += format_double(log.epochs[e].kd_loss);
        buf += ',';
        buf += format_double(log.epochs[e].train_acc);
        buf += '\n';
    }
    detail::write_file(path, buf);
}

void write_predictions_csv(const std::vector<std::uint32_t>& preds,
                           const std::vector<double>& max_logits, const std::string& path) {
    std::string buf = "index,predicted_class,max_logit\n";
    for (std::size_t i = 0; i < preds.size(); ++i) {
        buf += std::to_string(i);
        buf += ',';
        buf += std::to_string(preds[i]);
        buf += ',';
        buf += format_double(max_logits[i]);
        buf += '\n';
    }
    detail::write_file(path, buf);
}

std::vector<std::uint32_t> read_predictions_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::vector<std::uint32_t> preds;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (lineno == 1 || trim_copy(line).empty()) continue;  // header
        const auto cells = split_commas(line);
        if (cells.size() < 2) throw MalformedLineError(path + ": line " + std::to_string(lineno));
        try {
            preds.push_back(static_cast<std::uint32_t>(std::stoul(cells[1])));
        } catch (...) {
            throw MalformedLineError(path + ": line " + std::to_string(lineno));
        }
    }
    if (preds.empty()) throw EmptyInputError(path + ": no prediction rows");
    return preds;
}

struct MetricsBundle {
    double accuracy_mean = 0.0;
    double accuracy_std = 0.0;
    std::size_t omega_count = 0;
    double omega_pct = 0.0;
    double fisher_stat = 0.0;
    std::size_t fisher_dof = 0;
    double fisher_p = 1.0;
    std::size_t param_total = 0;
    std::size_t param_trainable = 0;
    std::size_t flops_per_sample = 0;
};

void write_metrics(const MetricsBundle& m, const std::string& json_path,
                   const std::string& csv_path) {
    nlohmann::json j;
    j["accuracy_mean"] = m.accuracy_mean;
    j["accuracy_std"] = m.accuracy_std;
    j["omega_count"] = m.omega_count;
    j["omega_pct"] = m.omega_pct;
    j["fisher_stat"] = m.fisher_stat;
    j["fisher_dof"] = m.fisher_dof;
    j["fisher_p"] = m.fisher_p;
    j["param_total"] = m.param_total;
    j["param_trainable"] = m.param_trainable;
    j["flops_per_sample"] = m.flops_per_sample;
    detail::write_file(json_path, j.dump(2) + "\n");
    std::string csv =
        "accuracy_mean,accuracy_std,omega_count,omega_pct,fisher_stat,fisher_dof,"
        "fisher_p,param_total,param_trainable,flops_per_sample\n";
    csv += format_double(m.accuracy_mean);
    csv += ',';
    csv += format_double(m.accuracy_std);
    csv += ',';
    csv += std::to_string(m.omega_count);
    csv += ',';
    csv += format_double(m.omega_pct);
    csv += ',';
    csv += format_double(m.fisher_stat);
    csv += ',';
    csv += std::to_string(m.fisher_dof);
    csv += ',';
    csv += format_double(m.fisher_p);
    csv += ',';
    csv += std::to_string(m.param_total);
    csv += ',';
    csv += std::to_string(m.param_trainable);
    csv += ',';
    csv += std::to_string(m.flops_per_sample);
    csv += '\n';
    detail::write_file(csv_path, csv);
}

// Shared training options; config file values fill anything the command
// line left untouched, command-line flags win.
struct TrainOpts {
    std::string config_path;
    TrainConfig cfg;
    std::string variant_name = "standard";
    std::size_t epochs_both = 0;  // --epochs sets both stages

    void attach(CLI::App* cmd) {
        cmd->add_option("--config", config_path, "TOML config file");
        cmd->add_option("--variant", variant_name,
                        "standard|no_lora|early_fusion|direct_distill|arch_only|vision_only");
        cmd->add_option("--lambda", cfg.lambda, "distillation weight")
            ->capture_default_str();
        cmd->add_option("--lora-r", cfg.lora_rank, "LoRA rank")->capture_default_str();
        cmd->add_option("--lora-alpha", cfg.lora_alpha, "LoRA scale")->capture_default_str();
        cmd->add_option("--seed", cfg.seed, "run seed")->capture_default_str();
        cmd->add_option("--epochs", epochs_both, "epochs for both stages");
        cmd->add_option("--epochs-stage1", cfg.epochs_stage1, "text fine-tuning epochs")
            ->capture_default_str();
        cmd->add_option("--epochs-stage2", cfg.epochs_stage2, "distillation epochs")
            ->capture_default_str();
        cmd->add_option("--batch", cfg.batch_size, "batch size")->capture_default_str();
        cmd->add_option("--lr", cfg.lr, "learning rate")->capture_default_str();
        cmd->add_option("--weight-decay", cfg.weight_decay, "decoupled weight decay")
            ->capture_default_str();
        cmd->add_option("--word-dropout", cfg.word_dropout,
                        "training-time word dropout probability")
            ->capture_default_str();
        cmd->add_flag("--freeze-text", cfg.freeze_text,
                      "freeze f_t/h_t during stage 2");
        cmd->add_option("--workers", cfg.workers, "per-batch worker threads")
            ->capture_default_str();
    }

    TrainConfig resolve(const CLI::App* cmd) {
        if (!config_path.empty()) {
            const ConfigFile cf = ConfigFile::parse_file(config_path);
            auto absent = [&](const char* flag) { return cmd->count(flag) == 0; };
            if (absent("--lambda")) cfg.lambda = cf.get_double("lambda", cfg.lambda);
            if (absent("--lora-r"))
                cfg.lora_rank = static_cast<std::size_t>(cf.get_u64("lora_rank", cfg.lora_rank));
            if (absent("--lora-alpha"))
                cfg.lora_alpha = cf.get_double("lora_alpha", cfg.lora_alpha);
            if (absent("--seed")) cfg.seed = cf.get_u64("seed", cfg.seed);
            if (absent("--epochs-stage1"))
                cfg.epochs_stage1 =
                    static_cast<std::size_t>(cf.get_u64("epochs_stage1", cfg.epochs_stage1));
            if (absent("--epochs-stage2"))
                cfg.epochs_stage2 =
                    static_cast<std::size_t>(cf.get_u64("epochs_stage2", cfg.epochs_stage2));
            if (absent("--batch"))
                cfg.batch_size = static_cast<std::size_t>(cf.get_u64("batch_size", cfg.batch_size));
            if (absent("--lr")) cfg.lr = cf.get_double("lr", cfg.lr);
            if (absent("--weight-decay"))
                cfg.weight_decay = cf.get_double("weight_decay", cfg.weight_decay);
            if (absent("--word-dropout"))
                cfg.word_dropout = cf.get_double("word_dropout", cfg.word_dropout);
            if (absent("--freeze-text"))
                cfg.freeze_text = cf.get_bool("freeze_text", cfg.freeze_text);
            if (absent("--workers"))
                cfg.workers = static_cast<int>(cf.get_u64("workers", cfg.workers));
            if (absent("--variant")) variant_name = cf.get_string("variant", variant_name);
            if (cmd->count("--epochs") == 0 && cf.has("epochs")) {
                const auto both = static_cast<std::size_t>(cf.get_u64("epochs", 0));
                cfg.epochs_stage1 = both;
                cfg.epochs_stage2 = both;
            }
        }
        if (cmd->count("--epochs") > 0) {
            cfg.epochs_stage1 = epochs_both;
            cfg.epochs_stage2 = epochs_both;
        }
        cfg.variant = variant_from_name(variant_name);
        if (cfg.variant == Variant::ArchOnly && cfg.lambda != 0.0) {
            if (cmd->count("--lambda") > 0)
                std::cerr << "warning: arch_only ignores --lambda (forced to 0)\n";
            cfg.lambda = 0.0;
        }
        cfg.validate();
        return cfg;
    }
};

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

struct SynthCmd {
    std::string out = ".";
    SynthConfig sc;
    bool mixed_vocab = false;

    void run(const CLI::App* cmd) {
        sc.class_pure_reports = !mixed_vocab;
        const std::string dir = ensure_dir(resolve_out_dir(cmd, out));
        const SynthDataset data = generate(sc);
        save_embeddings(data.img_retrieval, dir + "/img_retrieval.cipe");
        save_embeddings(data.img_task, dir + "/img_task.cipe");
        save_embeddings(data.text_retrieval, dir + "/text_retrieval.cipe");
        save_corpus(data.corpus, dir + "/corpus.jsonl");
        save_manifest(data.manifest, dir + "/manifest.json");
        std::cout << "synth: " << sc.samples << " samples, " << sc.reports
                  << " reports -> " << dir << "\n";
    }
};

// ---------------------------------------------------------------------------
// encode-text
// ---------------------------------------------------------------------------

struct EncodeCmd {
    std::string corpus_path;
    std::string out = "text_emb.cipe";
    HashedEncoderConfig enc;
    double dropout = 0.0;
    std::uint64_t seed = 0;

    void run(const CLI::App*) {
        const TextCorpus corpus = load_corpus(corpus_path);
        if (corpus.size() == 0) throw EmptyDatasetError(corpus_path + ": empty corpus");
        EmbeddingStore store;
        store.data = Matrix(corpus.size(), enc.dim);
        for (std::size_t i = 0; i < corpus.size(); ++i) {
            std::string text = corpus.records[i].text;
            if (dropout > 0.0)
                text = corrupt_text(text, dropout,
                                    derive_seed(seed + seeds::kWordDropout, 0, 0, i));
            const auto v = encode_text(text, enc);
            for (std::size_t d = 0; d < enc.dim; ++d) store.data(i, d) = v[d];
            store.ids.push_back(corpus.records[i].id);
        }
        save_embeddings(store, out);
        std::cout << "encode-text: " << corpus.size() << " reports -> " << out << "\n";
    }
};

// ---------------------------------------------------------------------------
// pair
// ---------------------------------------------------------------------------

struct PairCmd {
    std::string img_retrieval, text_retrieval, corpus_path;
    std::string out = ".";
    std::string keywords_csv;
    std::size_t rank = 1;
    bool random = false;
    std::uint64_t seed = 0;
    std::size_t bins = 20;
    int workers = 1;

    void run(const CLI::App* cmd) {
        const std::string dir = ensure_dir(resolve_out_dir(cmd, out));
        const EmbeddingStore images = load_embeddings(img_retrieval);
        const EmbeddingStore texts_all = load_embeddings(text_retrieval);
        TextCorpus corpus = load_corpus(corpus_path);
        if (!keywords_csv.empty()) corpus = filter_corpus(corpus, split_commas(keywords_csv));
        const EmbeddingStore texts = detail::select_rows(texts_all, corpus);
        PairingRequest req{&images, &texts, workers};
        const PseudoPairedDataset pairs =
            random ? pair_random(req, seed + seeds::kPairRandom) : pair_modalities(req, rank);
        save_pairs(pairs, dir + "/pairs.jsonl");
        save_histogram_csv(similarity_histogram(pairs, bins), dir + "/histogram.csv");
        std::cout << "pair: " << pairs.size() << " images matched against "
                  << texts.count() << " reports -> " << dir << "\n";
    }
};

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainCmd {
    std::string img_task, pairs_path, corpus_path, text_emb;
    std::string out = ".";
    TrainOpts opts;
    std::size_t text_dim = 64;
    std::uint64_t hash_seed = 0;

    void run(const CLI::App* cmd) {
        const TrainConfig cfg = opts.resolve(cmd);
        const std::string dir = ensure_dir(resolve_out_dir(cmd, out));
        const EmbeddingStore task = load_embeddings(img_task);
        const PseudoPairedDataset pairs = load_pairs(pairs_path);

        std::optional<TextProvider> text;
        const bool needs_text =
            cfg.variant != Variant::ArchOnly && cfg.variant != Variant::VisionOnly;
        std::optional<TextCorpus> corpus;
        if (needs_text) {
            if (!text_emb.empty()) {
                if (cfg.word_dropout > 0.0)
                    throw ConfigInvalidError(
                        "--word-dropout needs raw text (--corpus), not --text-emb");
                text = TextProvider::from_store(load_embeddings(text_emb));
            } else if (!corpus_path.empty()) {
                corpus = load_corpus(corpus_path);
                text = TextProvider::from_corpus(*corpus, {text_dim, hash_seed});
            } else {
                throw ConfigInvalidError("train: give --corpus or --text-emb");
            }
        }

        TrainResult r = train_variant(task, pairs, text ? &*text : nullptr, cfg);
        save_model(r.model, dir + "/checkpoint.cipm");
        write_train_log_csv(r.stage1, dir + "/train_log_stage1.csv");
        write_train_log_csv(r.stage2, dir + "/train_log_stage2.csv");
        nlohmann::json j;
        j["variant"] = variant_name(cfg.variant);
        j["epochs_stage1"] = r.stage1.epochs.size();
        j["epochs_stage2"] = r.stage2.epochs.size();
        j["final_ce_loss"] =
            r.stage2.epochs.empty() ? 0.0 : r.stage2.epochs.back().ce_loss;
        j["final_kd_loss"] =
            r.stage2.epochs.empty() ? 0.0 : r.stage2.epochs.back().kd_loss;
        j["final_train_acc"] =
            r.stage2.epochs.empty() ? 0.0 : r.stage2.epochs.back().train_acc;
        const CostReport cost = count_cost(r.model);
        j["param_total"] = cost.param_total;
        j["param_trainable"] = cost.param_trainable;
        detail::write_file(dir + "/summary.json", j.dump(2) + "\n");
        std::cout << "train: " << variant_name(cfg.variant) << " -> " << dir
                  << " (wall " << format_double(r.stage1.wall_seconds + r.stage2.wall_seconds)
                  << "s)\n";
    }
};

// ---------------------------------------------------------------------------
// infer
// ---------------------------------------------------------------------------

struct InferCmd {
    std::string checkpoint, img_task;
    std::string out = "predictions.csv";

    void run(const CLI::App*) {
        const ClipItModel model = load_model(checkpoint);
        const EmbeddingStore task = load_embeddings(img_task);
        if (task.dim() != model.cfg.d_v)
            throw DimensionMismatchError("infer: store dimension differs from checkpoint");
        std::vector<std::uint32_t> preds;
        std::vector<double> logits;
        preds.reserve(task.count());
        for (std::size_t i = 0; i < task.count(); ++i) {
            std::span<const double> row = task.row(i);
            const Prediction p =
                predict_unimodal(model, Matrix::column({row.begin(), row.end()}));
            preds.push_back(p.label);
            logits.push_back(p.logits[p.label]);
        }
        write_predictions_csv(preds, logits, out);
        std::cout << "infer: " << preds.size() << " predictions -> " << out << "\n";
    }
};

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalCmd {
    std::string preds_path, labels_from, text_preds_path, checkpoint, p_values_csv;
    std::string out = "metrics.json";

    void run(const CLI::App*) {
        const std::vector<std::uint32_t> preds = read_predictions_csv(preds_path);
        const EmbeddingStore labeled = load_embeddings(labels_from);
        if (!labeled.has_labels())
            throw MissingLabelsError(labels_from + ": store has no labels");
        MetricsBundle m;
        m.accuracy_mean = accuracy(preds, labeled.labels);
        m.accuracy_std = 0.0;
        if (!text_preds_path.empty()) {
            PredictionSet ps;
            ps.labels = labeled.labels;
            ps.vision = preds;
            ps.text = read_predictions_csv(text_preds_path);
            const OmegaResult o = omega(ps);
            m.omega_count = o.count;
            m.omega_pct = 100.0 * o.fraction;
        }
        if (!p_values_csv.empty()) {
            std::vector<double> ps;
            for (const auto& tok : split_commas(p_values_csv)) ps.push_back(std::stod(tok));
            const FisherResult f = fisher_combined(ps);
            m.fisher_stat = f.statistic;
            m.fisher_dof = f.dof;
            m.fisher_p = f.combined_p;
        }
        if (!checkpoint.empty()) {
            const CostReport cost = count_cost(load_model(checkpoint));
            m.param_total = cost.param_total;
            m.param_trainable = cost.param_trainable;
            m.flops_per_sample = cost.flops_unimodal;
        }
        const std::string csv_path =
            out.size() > 5 && out.substr(out.size() - 5) == ".json"
                ? out.substr(0, out.size() - 5) + ".csv"
                : out + ".csv";
        write_metrics(m, out, csv_path);
        std::cout << "eval: accuracy " << format_double(m.accuracy_mean) << " -> " << out
                  << "\n";
    }
};

// ---------------------------------------------------------------------------
// pipeline
// ---------------------------------------------------------------------------

struct PipelineCmd {
    std::string img_retrieval, text_retrieval, img_task, corpus_path;
    std::string test_task, test_retrieval, text_emb;
    std::string out = ".";
    std::string keywords_csv;
    std::size_t rank = 1;
    bool random = false;
    std::size_t bins = 20;
    std::size_t text_dim = 64;
    std::uint64_t hash_seed = 0;
    TrainOpts opts;

    void run(const CLI::App* cmd) {
        const TrainConfig cfg = opts.resolve(cmd);
        const std::string dir = ensure_dir(resolve_out_dir(cmd, out));

        const EmbeddingStore img_retr = load_embeddings(img_retrieval);
        const EmbeddingStore text_retr = load_embeddings(text_retrieval);
        const EmbeddingStore task = load_embeddings(img_task);
        const TextCorpus corpus = load_corpus(corpus_path);
        std::optional<EmbeddingStore> test_store, test_retr_store, text_emb_store;
        if (!test_task.empty()) test_store = load_embeddings(test_task);
        if (!test_retrieval.empty()) test_retr_store = load_embeddings(test_retrieval);
        if (!text_emb.empty()) {
            if (cfg.word_dropout > 0.0)
                throw ConfigInvalidError(
                    "--word-dropout needs raw text, not --text-emb");
            text_emb_store = load_embeddings(text_emb);
        }

        PipelineInputs in;
        in.img_retrieval = &img_retr;
        in.text_retrieval = &text_retr;
        in.img_task = &task;
        in.corpus = &corpus;
        in.keywords = split_commas(keywords_csv);
        in.text_task = text_emb_store ? &*text_emb_store : nullptr;
        in.test_task = test_store ? &*test_store : nullptr;
        in.test_retrieval = test_retr_store ? &*test_retr_store : nullptr;
        in.pair_mode = PairMode{random, rank};
        in.encoder = {text_dim, hash_seed};
        in.histogram_bins = bins;

        const PipelineResult r = run_pipeline(in, cfg);

        nlohmann::json manifest;
        auto emit = [&](const std::string& name, const std::string& kind) {
            manifest["artifacts"].push_back({{"path", name}, {"kind", kind}});
        };
        save_pairs(r.pairs, dir + "/pairs.jsonl");
        emit("pairs.jsonl", "pairing");
        save_histogram_csv(r.histogram, dir + "/histogram.csv");
        emit("histogram.csv", "similarity-histogram");
        save_model(r.model, dir + "/model_unimodal.cipm");
        emit("model_unimodal.cipm", "checkpoint");
        write_train_log_csv(r.stage1, dir + "/train_log_stage1.csv");
        emit("train_log_stage1.csv", "train-log");
        write_train_log_csv(r.stage2, dir + "/train_log_stage2.csv");
        emit("train_log_stage2.csv", "train-log");

        MetricsBundle m;
        m.param_total = r.cost.param_total;
        m.param_trainable = r.cost.param_trainable;
        m.flops_per_sample = r.cost.flops_unimodal;
        if (!r.test_preds.empty()) {
            std::vector<double> logits(r.test_preds.size(), 0.0);
            for (std::size_t i = 0; i < r.test_preds.size(); ++i) {
                std::span<const double> row = test_store->row(i);
                const Prediction p =
                    predict_unimodal(r.model, Matrix::column({row.begin(), row.end()}));
                logits[i] = p.logits[p.label];
            }
            write_predictions_csv(r.test_preds, logits, dir + "/test_predictions.csv");
            emit("test_predictions.csv", "predictions");
            if (r.test_accuracy >= 0.0) m.accuracy_mean = r.test_accuracy;
        }
        if (!r.test_text_preds.empty()) {
            const std::vector<double> zeros(r.test_text_preds.size(), 0.0);
            write_predictions_csv(r.test_text_preds, zeros,
                                  dir + "/test_text_predictions.csv");
            emit("test_text_predictions.csv", "predictions");
        }
        if (r.omega_valid) {
            m.omega_count = r.omega.count;
            m.omega_pct = 100.0 * r.omega.fraction;
        }
        write_metrics(m, dir + "/metrics.json", dir + "/metrics.csv");
        emit("metrics.json", "metrics");
        emit("metrics.csv", "metrics");
        detail::write_file(dir + "/pipeline_manifest.json", manifest.dump(2) + "\n");
        std::cout << "pipeline: " << variant_name(cfg.variant) << " done, test accuracy "
                  << (r.test_accuracy >= 0 ? format_double(r.test_accuracy) : "n/a")
                  << " -> " << dir << "\n";
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"retrieval-paired distillation training over precomputed embeddings"};
    app.require_subcommand(1);

    SynthCmd synth;
    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic benchmark");
    synth_cmd->add_option("--out", synth.out, "output directory")->capture_default_str();
    synth_cmd->add_option("--classes", synth.sc.classes)->capture_default_str();
    synth_cmd->add_option("--samples", synth.sc.samples)->capture_default_str();
    synth_cmd->add_option("--reports", synth.sc.reports)->capture_default_str();
    synth_cmd->add_option("--retrieval-dim", synth.sc.d_r)->capture_default_str();
    synth_cmd->add_option("--task-dim", synth.sc.d_v)->capture_default_str();
    synth_cmd->add_option("--text-dim", synth.sc.d_t)->capture_default_str();
    synth_cmd->add_option("--ambiguous", synth.sc.ambiguous_fraction,
                          "vision-ambiguous fraction")->capture_default_str();
    synth_cmd->add_option("--noise", synth.sc.noise)->capture_default_str();
    synth_cmd->add_option("--vocab", synth.sc.vocab_per_class, "keywords per class")
        ->capture_default_str();
    synth_cmd->add_option("--cue", synth.sc.cue_amplitude, "ambiguity cue amplitude")
        ->capture_default_str();
    synth_cmd->add_option("--organ", synth.sc.organ)->capture_default_str();
    synth_cmd->add_flag("--mixed-vocab", synth.mixed_vocab,
                        "draw report keywords across classes");
    synth_cmd->add_option("--seed", synth.sc.seed)->capture_default_str();

    EncodeCmd encode;
    auto* encode_cmd = app.add_subcommand("encode-text", "hash reports into embeddings");
    encode_cmd->add_option("--corpus", encode.corpus_path)->required();
    encode_cmd->add_option("--out", encode.out)->capture_default_str();
    encode_cmd->add_option("--dim", encode.enc.dim)->capture_default_str();
    encode_cmd->add_option("--hash-seed", encode.enc.hash_seed)->capture_default_str();
    encode_cmd->add_option("--dropout", encode.dropout, "word dropout probability")
        ->capture_default_str();
    encode_cmd->add_option("--seed", encode.seed)->capture_default_str();

    PairCmd pair;
    auto* pair_cmd = app.add_subcommand("pair", "match images with reports");
    pair_cmd->add_option("--img-retrieval", pair.img_retrieval)->required();
    pair_cmd->add_option("--text-retrieval", pair.text_retrieval)->required();
    pair_cmd->add_option("--corpus", pair.corpus_path)->required();
    pair_cmd->add_option("--out", pair.out)->capture_default_str();
    pair_cmd->add_option("--keywords", pair.keywords_csv, "comma-separated filter terms");
    pair_cmd->add_option("--rank", pair.rank, "use the k-th most similar report")
        ->capture_default_str();
    pair_cmd->add_flag("--random", pair.random, "random pairing ablation");
    pair_cmd->add_option("--seed", pair.seed)->capture_default_str();
    pair_cmd->add_option("--bins", pair.bins, "histogram bins")->capture_default_str();
    pair_cmd->add_option("--workers", pair.workers)->capture_default_str();

    TrainCmd train;
    auto* train_cmd = app.add_subcommand("train", "two-stage distillation training");
    train_cmd->add_option("--img-task", train.img_task)->required();
    train_cmd->add_option("--pairs", train.pairs_path)->required();
    train_cmd->add_option("--corpus", train.corpus_path);
    train_cmd->add_option("--text-emb", train.text_emb,
                          "precomputed text embeddings (bypasses the hashed encoder)");
    train_cmd->add_option("--text-dim", train.text_dim)->capture_default_str();
    train_cmd->add_option("--hash-seed", train.hash_seed)->capture_default_str();
    train_cmd->add_option("--out", train.out)->capture_default_str();
    train.opts.attach(train_cmd);

    InferCmd infer;
    auto* infer_cmd = app.add_subcommand("infer", "text-free predictions from a checkpoint");
    infer_cmd->add_option("--checkpoint", infer.checkpoint)->required();
    infer_cmd->add_option("--img-task", infer.img_task)->required();
    infer_cmd->add_option("--out", infer.out)->capture_default_str();

    EvalCmd eval;
    auto* eval_cmd = app.add_subcommand("eval", "metrics from predictions and labels");
    eval_cmd->add_option("--preds", eval.preds_path)->required();
    eval_cmd->add_option("--labels-from", eval.labels_from,
                         "embedding store carrying the true labels")->required();
    eval_cmd->add_option("--text-preds", eval.text_preds_path,
                         "text-branch predictions (enables the complementarity count)");
    eval_cmd->add_option("--p-values", eval.p_values_csv,
                         "comma-separated p-values for Fisher's combined test");
    eval_cmd->add_option("--checkpoint", eval.checkpoint, "checkpoint for cost accounting");
    eval_cmd->add_option("--out", eval.out)->capture_default_str();

    PipelineCmd pipe;
    auto* pipe_cmd = app.add_subcommand(
        "pipeline", "filter, pair, train, drop the text branch, evaluate");
    pipe_cmd->add_option("--img-retrieval", pipe.img_retrieval)->required();
    pipe_cmd->add_option("--text-retrieval", pipe.text_retrieval)->required();
    pipe_cmd->add_option("--img-task", pipe.img_task)->required();
    pipe_cmd->add_option("--corpus", pipe.corpus_path)->required();
    pipe_cmd->add_option("--test-task", pipe.test_task, "held-out task store");
    pipe_cmd->add_option("--test-retrieval", pipe.test_retrieval,
                         "held-out retrieval store (enables text predictions)");
    pipe_cmd->add_option("--text-emb", pipe.text_emb, "precomputed text embeddings");
    pipe_cmd->add_option("--keywords", pipe.keywords_csv);
    pipe_cmd->add_option("--rank", pipe.rank)->capture_default_str();
    pipe_cmd->add_flag("--random", pipe.random);
    pipe_cmd->add_option("--bins", pipe.bins)->capture_default_str();
    pipe_cmd->add_option("--text-dim", pipe.text_dim)->capture_default_str();
    pipe_cmd->add_option("--hash-seed", pipe.hash_seed)->capture_default_str();
    pipe_cmd->add_option("--out", pipe.out)->capture_default_str();
    pipe.opts.attach(pipe_cmd);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: UsageError: " << e.what() << "\n";
        return 2;
    }

    try {
        if (synth_cmd->parsed()) synth.run(synth_cmd);
        else if (encode_cmd->parsed()) encode.run(encode_cmd);
        else if (pair_cmd->parsed()) pair.run(pair_cmd);
        else if (train_cmd->parsed()) train.run(train_cmd);
        else if (infer_cmd->parsed()) infer.run(infer_cmd);
        else if (eval_cmd->parsed()) eval.run(eval_cmd);
        else if (pipe_cmd->parsed()) pipe.run(pipe_cmd);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        switch (e.error_class()) {
            case ErrorClass::Usage: return 2;
            case ErrorClass::Input: return 3;
            case ErrorClass::Runtime: return 4;
        }
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: RuntimeFailure: " << e.what() << "\n";
        return 4;
    }
    return 0;
}
