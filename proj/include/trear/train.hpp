#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "trear/adam.hpp"
#include "trear/checkpoint.hpp"
#include "trear/clip.hpp"
#include "trear/config.hpp"
#include "trear/model.hpp"
#include "trear/pipeline.hpp"
#include "trear/synthetic.hpp"

namespace trear {

struct Dataset {
    std::vector<ClipPair> train;
    std::vector<ClipPair> test;
};

/// Loads every clip a manifest names, in manifest order (the canonical
/// order batching follows). Labels must fit the class count.
inline Dataset load_dataset(const std::filesystem::path& manifest, std::size_t num_classes) {
    Dataset ds;
    for (const ManifestEntry& e : read_dataset_manifest(manifest)) {
        if (e.label < 0 || static_cast<std::size_t>(e.label) >= num_classes)
            throw ConfigError("manifest label " + std::to_string(e.label) +
                              " out of range for " + std::to_string(num_classes) +
                              " classes (" + e.path.string() + ")");
        ClipPair clip = read_clip(e.path);
        clip.label = e.label;
        (e.split == "train" ? ds.train : ds.test).push_back(std::move(clip));
    }
    return ds;
}

struct EvalResult {
    double accuracy = 0.0;
    std::size_t total = 0;
    std::size_t correct = 0;
    std::vector<std::size_t> confusion;  // num_classes x num_classes, [true][pred]
};

/// Deterministic evaluation: dropout off, center crop at the given extents.
inline EvalResult evaluate_model(const TrearModel& model, const std::vector<ClipPair>& clips,
                                 const CropSpec& spec) {
    const ModelConfig& cfg = model.config();
    CropSpec eval_spec = spec;
    eval_spec.mode = CropMode::center;
    RngStream unused(0, "eval");  // center mode draws nothing
    EvalResult r;
    r.confusion.assign(cfg.num_classes * cfg.num_classes, 0);
    for (const ClipPair& clip : clips) {
        PreparedClip prep = preprocess_clip(clip, cfg.k, eval_spec, unused);
        Graph g;
        RngStream drop(0, "eval-dropout");  // untouched in eval mode
        ForwardResult fr = model.forward(g, prep.rgb, prep.depth, prep.side,
                                         Mode::eval, drop);
        const auto& out = fr.clip_output.value();
        std::size_t pred = 0;
        for (std::size_t c = 1; c < out.size(); ++c)
            if (out[c] > out[pred]) pred = c;
        r.confusion[static_cast<std::size_t>(clip.label) * cfg.num_classes + pred]++;
        if (pred == static_cast<std::size_t>(clip.label)) ++r.correct;
        ++r.total;
    }
    r.accuracy = r.total == 0 ? std::nan("")
                              : static_cast<double>(r.correct) / static_cast<double>(r.total);
    return r;
}

struct MetricsRow {
    std::size_t epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    double train_acc = 0.0;
    double test_acc = 0.0;
    double seconds = 0.0;
};

inline std::string metrics_csv(const std::vector<MetricsRow>& rows) {
    std::string out = "epoch,lr,train_loss,train_acc,test_acc,seconds\n";
    char buf[160];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%.3f\n", r.epoch, r.lr,
                      r.train_loss, r.train_acc, r.test_acc, r.seconds);
        out += buf;
    }
    return out;
}

struct TrainResult {
    TrearModel model;
    std::vector<MetricsRow> log;
    double final_train_acc = 0.0;
    double final_test_acc = 0.0;
};

/// Batch loss on already-prepared clips: every clip's forward pass shares
/// one graph (parameters bind once), outputs stack into a [batch, classes]
/// block for the loss.
inline Tensor batch_loss(const TrearModel& model, Graph& g,
                         const std::vector<const PreparedClip*>& batch, Mode mode,
                         RngStream& drop) {
    std::vector<Tensor> outs;
    std::vector<int> labels;
    outs.reserve(batch.size());
    for (const PreparedClip* p : batch) {
        ForwardResult fr = model.forward(g, p->rgb, p->depth, p->side, mode, drop);
        outs.push_back(fr.clip_output);
        labels.push_back(p->label);
    }
    Tensor stacked = stack_rows(outs);
    if (model.config().average_mode == AverageMode::logits)
        return cross_entropy(stacked, labels);
    return nll_from_probs(stacked, labels);
}

/// Full training run on a loaded dataset. Every random choice (shuffle,
/// crops, dropout) comes from streams named off cfg.seed, so the result is
/// a pure function of (config, data, seed).
inline TrainResult train_on(const TrainConfig& cfg, const Dataset& ds) {
    cfg.validate();
    if (ds.train.empty()) throw DataError("train split is empty");
    TrearModel model(cfg.model);
    model.init(cfg.seed);
    AdamState adam;
    RngStream shuffle_stream(cfg.seed, "shuffle");
    RngStream crop_stream(cfg.seed, "crop");
    RngStream drop_stream(cfg.seed, "dropout");
    TrainResult result{std::move(model), {}, 0.0, 0.0};
    TrearModel& m = result.model;
    std::vector<std::size_t> order(ds.train.size());
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        auto t0 = std::chrono::steady_clock::now();
        double lr = cfg.lr_at(epoch);
        shuffle_stream.shuffle(order);
        double loss_sum = 0.0;
        std::size_t seen = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            std::size_t end = std::min(order.size(), start + cfg.batch_size);
            std::vector<PreparedClip> prepped;
            prepped.reserve(end - start);
            for (std::size_t i = start; i < end; ++i)
                prepped.push_back(
                    preprocess_clip(ds.train[order[i]], cfg.model.k, cfg.crop, crop_stream));
            std::vector<const PreparedClip*> batch;
            for (const auto& p : prepped) batch.push_back(&p);
            Graph g;
            Tensor loss = batch_loss(m, g, batch, Mode::train, drop_stream);
            double lv = loss.scalar();
            if (!std::isfinite(lv))
                throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch) +
                                      ", batch " + std::to_string(start / cfg.batch_size));
            m.params().zero_grad();
            g.backward(loss);
            adam_step(m.params(), adam, lr);
            loss_sum += lv * static_cast<double>(end - start);
            seen += end - start;
        }
        MetricsRow row;
        row.epoch = epoch;
        row.lr = lr;
        row.train_loss = loss_sum / static_cast<double>(seen);
        row.train_acc = evaluate_model(m, ds.train, cfg.crop).accuracy;
        row.test_acc = evaluate_model(m, ds.test, cfg.crop).accuracy;
        row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        result.log.push_back(row);
        result.final_train_acc = row.train_acc;
        result.final_test_acc = row.test_acc;
    }
    if (cfg.epochs == 0) {
        result.final_train_acc = evaluate_model(m, ds.train, cfg.crop).accuracy;
        result.final_test_acc = evaluate_model(m, ds.test, cfg.crop).accuracy;
    }
    return result;
}

/// Loads the dataset, trains, and writes whatever output paths are set.
inline TrainResult train(const TrainConfig& cfg) {
    cfg.validate();
    if (cfg.manifest.empty()) throw ConfigError("data.manifest is required");
    Dataset ds = load_dataset(cfg.manifest, cfg.model.num_classes);
    TrainResult result = train_on(cfg, ds);
    if (!cfg.metrics_out.empty()) {
        std::ofstream out(cfg.metrics_out);
        if (!out) throw IoError("cannot open for writing: " + cfg.metrics_out);
        out << metrics_csv(result.log);
        if (!out) throw IoError("write failed: " + cfg.metrics_out);
    }
    if (!cfg.checkpoint_out.empty())
        save_checkpoint(result.model, cfg.crop, cfg.checkpoint_out);
    return result;
}

// ---------------------------------------------------------------------------
// Gradient verification

struct BlockReport {
    std::string name;
    double rel_err = 0.0;
};

struct GradCheckReport {
    std::vector<BlockReport> blocks;
    double max_rel_err = 0.0;
    std::string worst_block;

    bool ok(double tol = 1e-4) const { return max_rel_err < tol; }
};

/// Compares backward() against a central finite difference through the full
/// forward + loss, one directional probe per parameter block: the analytic
/// directional derivative (gradient dotted with a random unit direction)
/// must match (L(p + h u) - L(p - h u)) / 2h. The loss is re-evaluated with
/// identically seeded dropout streams, so it is a deterministic function of
/// the parameters. `corrupt`, when set, runs after the analytic pass —
/// test hook for fault injection.
inline GradCheckReport grad_check_model(
    TrearModel& model, const PreparedClip& clip, std::uint64_t seed,
    const std::function<void(ParamStore&)>& corrupt = {}) {
    const double h = 1e-5;
    ParamStore& ps = model.params();
    auto loss_eval = [&]() {
        Graph g;
        RngStream drop(seed, "dropout");
        std::vector<const PreparedClip*> batch{&clip};
        return batch_loss(model, g, batch, Mode::train, drop).scalar();
    };
    ps.zero_grad();
    {
        Graph g;
        RngStream drop(seed, "dropout");
        std::vector<const PreparedClip*> batch{&clip};
        Tensor loss = batch_loss(model, g, batch, Mode::train, drop);
        g.backward(loss);
    }
    if (corrupt) corrupt(ps);
    GradCheckReport report;
    RngStream dir_stream(seed, "fd-direction");
    for (std::size_t b = 0; b < ps.size(); ++b) {
        Variable& v = ps.at(b);
        std::vector<double> u(v.value.size());
        for (double& x : u) x = dir_stream.next_double() < 0.5 ? -1.0 : 1.0;
        double analytic = 0.0;
        for (std::size_t i = 0; i < u.size(); ++i) analytic += v.grad[i] * u[i];
        std::vector<double> saved = v.value;
        for (std::size_t i = 0; i < u.size(); ++i) v.value[i] = saved[i] + h * u[i];
        double lp = loss_eval();
        for (std::size_t i = 0; i < u.size(); ++i) v.value[i] = saved[i] - h * u[i];
        double lm = loss_eval();
        v.value = saved;
        double numeric = (lp - lm) / (2.0 * h);
        double rel = std::fabs(analytic - numeric) /
                     std::max(std::max(std::fabs(analytic), std::fabs(numeric)), 1e-6);
        report.blocks.push_back(BlockReport{v.name, rel});
        if (rel > report.max_rel_err) {
            report.max_rel_err = rel;
            report.worst_block = v.name;
        }
    }
    return report;
}

/// Small-model gradient check: random weights, one random clip pair.
inline GradCheckReport grad_check(std::uint64_t seed) {
    ModelConfig mc;
    mc.d_model = 16;
    mc.k = 4;
    mc.heads_encoder = 2;
    mc.heads_mutual = 2;
    mc.num_classes = 3;
    mc.dropout_rate = 0.1;
    TrearModel model(mc);
    model.init(seed);
    RngStream data(seed, "fd-data");
    PreparedClip clip;
    clip.k = mc.k;
    clip.side = 16;
    clip.label = static_cast<int>(data.below(mc.num_classes));
    std::size_t n = mc.k * 3 * clip.side * clip.side;
    clip.rgb.resize(n);
    clip.depth.resize(n);
    for (double& v : clip.rgb) v = data.next_double();
    for (double& v : clip.depth) v = data.next_double();
    return grad_check_model(model, clip, seed);
}

// ---------------------------------------------------------------------------
// Attention export

/// Writes one CSV per self-attention head plus the two head-averaged mutual
/// maps. Layout: header row of context-frame indices, then one row of
/// weights per query frame. Returns the written paths in write order.
inline std::vector<std::filesystem::path> export_attention(
    const TrearModel& model, const PreparedClip& clip,
    const std::filesystem::path& out_dir) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
    Graph g;
    RngStream drop(0, "export");  // untouched in eval mode
    ForwardResult fr = model.forward(g, clip.rgb, clip.depth, clip.side, Mode::eval, drop);
    auto write_map = [&](const std::filesystem::path& path, std::size_t k,
                         const std::vector<double>& w) {
        std::ofstream out(path);
        if (!out) throw IoError("cannot open for writing: " + path.string());
        for (std::size_t j = 0; j < k; ++j) out << (j ? "," : "") << j;
        out << "\n";
        char buf[32];
        for (std::size_t i = 0; i < k; ++i) {
            for (std::size_t j = 0; j < k; ++j) {
                std::snprintf(buf, sizeof buf, "%.17g", w[i * k + j]);
                out << (j ? "," : "") << buf;
            }
            out << "\n";
        }
        if (!out) throw IoError("write failed: " + path.string());
    };
    std::vector<std::filesystem::path> written;
    for (const AttnMap& m : fr.self_maps) {
        std::filesystem::path p = out_dir / (m.stream + "_" + std::to_string(m.layer) +
                                             "_" + std::to_string(m.head) + ".csv");
        write_map(p, m.k, m.w);
        written.push_back(p);
    }
    // Mutual maps: average the per-head maps per direction (a mean of
    // row-stochastic matrices stays row-stochastic).
    std::map<std::string, std::pair<std::size_t, std::vector<double>>> acc;
    for (const AttnMap& m : fr.mutual_maps) {
        auto& slot = acc[m.stream];
        if (slot.second.empty()) {
            slot.first = 0;
            slot.second.assign(m.w.size(), 0.0);
        }
        for (std::size_t i = 0; i < m.w.size(); ++i) slot.second[i] += m.w[i];
        slot.first++;
    }
    for (auto& [stream, slot] : acc) {
        for (double& v : slot.second) v /= static_cast<double>(slot.first);
        std::filesystem::path p = out_dir / (stream + ".csv");
        write_map(p, model.config().k, slot.second);
        written.push_back(p);
    }
    return written;
}

// ---------------------------------------------------------------------------
// Ablation

struct AblateRow {
    std::string section;
    std::string variant;
    CropMode crop_mode = CropMode::random_per_frame;
    double test_acc = 0.0;
};

/// Applies an ablation variant to a base config.
inline TrainConfig make_variant(const TrainConfig& base, Modality modality,
                                bool use_mutual, FusionMode fusion, CropMode crop_mode) {
    TrainConfig cfg = base;
    cfg.model.modality = modality;
    cfg.model.use_mutual = modality == Modality::both && use_mutual;
    cfg.model.fusion_mode = fusion;
    cfg.crop.mode = crop_mode;
    cfg.checkpoint_out.clear();
    cfg.metrics_out.clear();
    cfg.table_out.clear();
    return cfg;
}

/// Fusion grid plus crop comparison, every variant trained with the same
/// seed and data order. Eight rows cover single-modality and the three
/// direct / three mutual fusion operators at the base crop mode; six more
/// compare random_per_frame and same_region for the single streams and
/// mutual-add. Duplicate (variant, crop) cells reuse one training run.
inline std::vector<AblateRow> ablate(const TrainConfig& base, const Dataset& ds) {
    struct VariantKey {
        Modality modality;
        bool use_mutual;
        FusionMode fusion;
        CropMode crop_mode;
        bool operator<(const VariantKey& o) const {
            return std::tie(modality, use_mutual, fusion, crop_mode) <
                   std::tie(o.modality, o.use_mutual, o.fusion, o.crop_mode);
        }
    };
    std::map<VariantKey, double> cache;
    auto run = [&](Modality mo, bool mu, FusionMode fu, CropMode cm) {
        VariantKey key{mo, mo == Modality::both && mu, fu, cm};
        auto it = cache.find(key);
        if (it != cache.end()) return it->second;
        TrainConfig cfg = make_variant(base, mo, mu, fu, cm);
        double acc = train_on(cfg, ds).final_test_acc;
        cache[key] = acc;
        return acc;
    };
    std::vector<AblateRow> rows;
    CropMode base_crop = CropMode::random_per_frame;
    auto add = [&](const std::string& section, const std::string& variant, Modality mo,
                   bool mu, FusionMode fu, CropMode cm) {
        rows.push_back(AblateRow{section, variant, cm, run(mo, mu, fu, cm)});
    };
    const FusionMode fusions[] = {FusionMode::concat, FusionMode::multiply, FusionMode::add};
    add("single-modality", "depth", Modality::depth, false, FusionMode::add, base_crop);
    add("single-modality", "rgb", Modality::rgb, false, FusionMode::add, base_crop);
    for (FusionMode f : fusions)
        add("direct-fusion", to_string(f), Modality::both, false, f, base_crop);
    for (FusionMode f : fusions)
        add("mutual-fusion", to_string(f), Modality::both, true, f, base_crop);
    const CropMode crops[] = {CropMode::random_per_frame, CropMode::same_region};
    for (CropMode cm : crops) add("crop", "depth", Modality::depth, false, FusionMode::add, cm);
    for (CropMode cm : crops) add("crop", "rgb", Modality::rgb, false, FusionMode::add, cm);
    for (CropMode cm : crops)
        add("crop", "mutual-add", Modality::both, true, FusionMode::add, cm);
    return rows;
}

inline std::string ablate_table(const std::vector<AblateRow>& rows) {
    std::string out;
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-16s %-12s %-18s %s\n", "section", "variant", "crop",
                  "test_acc");
    out += buf;
    out += std::string(56, '-') + "\n";
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%-16s %-12s %-18s %.4f\n", r.section.c_str(),
                      r.variant.c_str(), to_string(r.crop_mode).c_str(), r.test_acc);
        out += buf;
    }
    return out;
}

}  // namespace trear
