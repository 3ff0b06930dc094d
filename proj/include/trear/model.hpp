#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "trear/nn.hpp"
#include "trear/positional.hpp"
#include "trear/rng.hpp"
#include "trear/tensor.hpp"

namespace trear {

enum class FusionMode { add, concat, multiply };
enum class AverageMode { logits, probs };
enum class Modality { rgb, depth, both };
enum class Mode { train, eval };

inline std::string to_string(FusionMode m) {
    switch (m) {
        case FusionMode::add: return "add";
        case FusionMode::concat: return "concat";
        case FusionMode::multiply: return "multiply";
    }
    throw ConfigError("unknown fusion mode");
}

inline FusionMode fusion_mode_from(const std::string& s) {
    if (s == "add") return FusionMode::add;
    if (s == "concat") return FusionMode::concat;
    if (s == "multiply") return FusionMode::multiply;
    throw ConfigError("unknown fusion mode: " + s);
}

inline std::string to_string(AverageMode m) {
    return m == AverageMode::logits ? "logits" : "probs";
}

inline AverageMode average_mode_from(const std::string& s) {
    if (s == "logits") return AverageMode::logits;
    if (s == "probs") return AverageMode::probs;
    throw ConfigError("unknown average mode: " + s);
}

inline std::string to_string(Modality m) {
    switch (m) {
        case Modality::rgb: return "rgb";
        case Modality::depth: return "depth";
        case Modality::both: return "both";
    }
    throw ConfigError("unknown modality");
}

inline Modality modality_from(const std::string& s) {
    if (s == "rgb") return Modality::rgb;
    if (s == "depth") return Modality::depth;
    if (s == "both") return Modality::both;
    throw ConfigError("unknown modality: " + s);
}

/// Every architectural hyperparameter. Desk-size defaults; the full-scale
/// values (d_model 512, k 32) stay reachable through the same fields.
struct ModelConfig {
    std::size_t d_model = 64;
    std::size_t k = 8;  // frames per clip
    std::size_t heads_encoder = 8;
    std::size_t heads_mutual = 8;
    std::size_t num_encoders = 1;
    std::size_t ffn_hidden = 0;  // 0 means 4 * d_model
    double dropout_rate = 0.1;
    FusionMode fusion_mode = FusionMode::add;
    std::size_t num_classes = 4;
    bool use_positional_encoding = true;
    AverageMode average_mode = AverageMode::logits;
    Modality modality = Modality::both;
    bool use_mutual = true;   // cross-modal block; false fuses encoder outputs directly
    bool use_encoder = true;  // false classifies straight off the frame embeddings

    std::size_t ffn() const { return ffn_hidden ? ffn_hidden : 4 * d_model; }

    bool uses_mutual() const { return modality == Modality::both && use_mutual; }
    bool uses_stream(Modality s) const { return modality == Modality::both || modality == s; }

    std::size_t classifier_width() const {
        if (modality == Modality::both && fusion_mode == FusionMode::concat)
            return 2 * d_model;
        return d_model;
    }

    void validate() const {
        if (d_model < 2) throw ConfigError("d_model must be at least 2");
        if (k < 1) throw ConfigError("k must be at least 1");
        if (num_classes < 2) throw ConfigError("num_classes must be at least 2");
        if (num_encoders < 1) throw ConfigError("num_encoders must be at least 1");
        if (dropout_rate < 0.0 || dropout_rate >= 1.0)
            throw ConfigError("dropout_rate must be in [0, 1)");
        if (use_positional_encoding && d_model % 2 != 0)
            throw ConfigError("positional encoding requires even d_model");
        if (use_encoder && (heads_encoder < 1 || d_model % heads_encoder != 0))
            throw ConfigError("d_model " + std::to_string(d_model) +
                              " not divisible by heads_encoder " +
                              std::to_string(heads_encoder));
        if (modality != Modality::both && use_mutual)
            throw ConfigError("mutual attention requires both modalities");
        if (uses_mutual() && (heads_mutual < 1 || d_model % heads_mutual != 0))
            throw ConfigError("d_model " + std::to_string(d_model) +
                              " not divisible by heads_mutual " +
                              std::to_string(heads_mutual));
    }
};

/// One attention map: k x k row-stochastic weights for a single head.
/// stream is "rgb" / "depth" for self-attention (with the encoder layer
/// index) or "mutual_rgb2depth" / "mutual_depth2rgb" (layer 0).
struct AttnMap {
    std::string stream;
    std::size_t layer = 0;
    std::size_t head = 0;
    std::size_t k = 0;
    std::vector<double> w;  // k x k, row-major
};

struct ForwardResult {
    Tensor frame_logits;  // [k, num_classes]
    /// Mean over frames: logits in AverageMode::logits, class probabilities
    /// in AverageMode::probs.
    Tensor clip_output;
    std::vector<AttnMap> self_maps;
    std::vector<AttnMap> mutual_maps;
    Tensor fused;  // classifier input, [k, width]
};

namespace detail {

struct Proj {
    Variable* w = nullptr;
    Variable* b = nullptr;
};

struct LnParams {
    Variable* gamma = nullptr;
    Variable* beta = nullptr;
};

struct EncoderLayerParams {
    Proj q, k, v, o;
    LnParams ln1;
    Proj ffn1, ffn2;
    LnParams ln2;
};

struct StreamParams {
    Proj conv1, conv2, conv3;
    std::vector<EncoderLayerParams> layers;
};

struct MutualParams {
    Proj q_rgb, k_rgb, v_rgb;
    Proj q_depth, k_depth, v_depth;
    Proj o_r2d, o_d2r;
    LnParams ln_r2d, ln_d2r;
};

}  // namespace detail

/// The full network: per-frame convolutional backbone (three stride-2 3x3
/// conv+ReLU blocks, then global average pooling) feeding per-modality
/// inter-frame encoders, an optional cross-modal attention block, feature
/// fusion, and a per-frame linear classifier averaged over frames. The RGB
/// and depth streams share architecture but never parameters.
class TrearModel {
public:
    explicit TrearModel(ModelConfig cfg) : cfg_(std::move(cfg)) {
        cfg_.validate();
        if (cfg_.use_positional_encoding)
            pe_ = positional_encoding(cfg_.k, cfg_.d_model);
        if (cfg_.uses_stream(Modality::rgb)) build_stream("rgb", rgb_);
        if (cfg_.uses_stream(Modality::depth)) build_stream("depth", depth_);
        if (cfg_.uses_mutual()) build_mutual();
        cls_.w = &store_.create("classifier.w", {cfg_.classifier_width(), cfg_.num_classes});
        cls_.b = &store_.create("classifier.b", {cfg_.num_classes});
    }

    /// Glorot-uniform weights, zero biases, identity layer norms. Drawing
    /// order follows parameter creation order, so (config, seed) fully
    /// determines the initial state.
    void init(std::uint64_t seed) {
        RngStream stream(seed, "init");
        for (std::size_t i = 0; i < store_.size(); ++i) {
            Variable& v = store_.at(i);
            if (ends_with(v.name, ".gamma")) {
                std::fill(v.value.begin(), v.value.end(), 1.0);
            } else if (ends_with(v.name, ".beta") || v.shape.size() == 1) {
                std::fill(v.value.begin(), v.value.end(), 0.0);
            } else {
                double bound = glorot_bound(v.shape);
                for (double& x : v.value) x = stream.uniform(-bound, bound);
            }
        }
    }

    const ModelConfig& config() const { return cfg_; }
    ParamStore& params() { return store_; }
    const ParamStore& params() const { return store_; }
    const PositionalEncodingTable& pe_table() const { return pe_; }

    /// Runs one clip. rgb and depth are flattened [k][3][side][side] pixel
    /// blocks in [0, 1]; a stream the config does not use may be empty. The
    /// dropout stream is only consumed in train mode.
    ForwardResult forward(Graph& g, const std::vector<double>& rgb,
                          const std::vector<double>& depth, std::size_t side,
                          Mode mode, RngStream& drop) const {
        if (side < 16)
            throw DataError("frame side must be at least 16, got " + std::to_string(side));
        ForwardResult r;
        Tensor f_rgb, f_depth;
        if (cfg_.uses_stream(Modality::rgb))
            f_rgb = embed_frames(g, rgb, side, rgb_, "rgb");
        if (cfg_.uses_stream(Modality::depth))
            f_depth = embed_frames(g, depth, side, depth_, "depth");
        if (cfg_.use_encoder) {
            if (cfg_.uses_stream(Modality::rgb))
                f_rgb = encode_stream(g, f_rgb, rgb_, "rgb", mode, drop, r.self_maps);
            if (cfg_.uses_stream(Modality::depth))
                f_depth = encode_stream(g, f_depth, depth_, "depth", mode, drop, r.self_maps);
        }
        Tensor fused;
        if (cfg_.modality == Modality::rgb) {
            fused = f_rgb;
        } else if (cfg_.modality == Modality::depth) {
            fused = f_depth;
        } else {
            Tensor fr = f_rgb, fd = f_depth;
            if (cfg_.use_mutual) {
                fr = mutual_direction(g, f_rgb, f_depth, mut_.q_rgb, mut_.k_depth,
                                      mut_.v_depth, mut_.o_r2d, mut_.ln_r2d,
                                      "mutual_rgb2depth", mode, drop, r.mutual_maps);
                fd = mutual_direction(g, f_depth, f_rgb, mut_.q_depth, mut_.k_rgb,
                                      mut_.v_rgb, mut_.o_d2r, mut_.ln_d2r,
                                      "mutual_depth2rgb", mode, drop, r.mutual_maps);
            }
            fused = fuse(fr, fd, cfg_.fusion_mode);
        }
        r.fused = fused;
        r.frame_logits = add_row(matmul(fused, g.param(*cls_.w)), g.param(*cls_.b));
        if (cfg_.average_mode == AverageMode::logits)
            r.clip_output = mean_rows(r.frame_logits);
        else
            r.clip_output = mean_rows(softmax(r.frame_logits, 1));
        return r;
    }

    /// Combines the two refined streams per frame. add and multiply keep the
    /// width; concat doubles it (the classifier width adapts).
    static Tensor fuse(Tensor a, Tensor b, FusionMode mode) {
        switch (mode) {
            case FusionMode::add: return add(a, b);
            case FusionMode::multiply: return mul(a, b);
            case FusionMode::concat: return concat_cols({a, b});
        }
        throw ConfigError("unknown fusion mode");
    }

private:
    static bool ends_with(const std::string& s, const std::string& suffix) {
        return s.size() >= suffix.size() &&
               s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
    }

    static double glorot_bound(const Shape& shape) {
        double fan_in, fan_out;
        if (shape.size() == 4) {
            double rf = static_cast<double>(shape[2] * shape[3]);
            fan_in = static_cast<double>(shape[1]) * rf;
            fan_out = static_cast<double>(shape[0]) * rf;
        } else {
            fan_in = static_cast<double>(shape[0]);
            fan_out = static_cast<double>(shape.size() > 1 ? shape[1] : shape[0]);
        }
        return std::sqrt(6.0 / (fan_in + fan_out));
    }

    detail::Proj make_proj(const std::string& prefix, std::size_t in, std::size_t out) {
        detail::Proj p;
        p.w = &store_.create(prefix + ".w", {in, out});
        p.b = &store_.create(prefix + ".b", {out});
        return p;
    }

    detail::LnParams make_ln(const std::string& prefix) {
        detail::LnParams ln;
        ln.gamma = &store_.create(prefix + ".gamma", {cfg_.d_model});
        ln.beta = &store_.create(prefix + ".beta", {cfg_.d_model});
        return ln;
    }

    void build_stream(const std::string& name, detail::StreamParams& s) {
        std::size_t d = cfg_.d_model;
        s.conv1.w = &store_.create(name + ".backbone.conv1.w", {8, 3, 3, 3});
        s.conv1.b = &store_.create(name + ".backbone.conv1.b", {8});
        s.conv2.w = &store_.create(name + ".backbone.conv2.w", {16, 8, 3, 3});
        s.conv2.b = &store_.create(name + ".backbone.conv2.b", {16});
        s.conv3.w = &store_.create(name + ".backbone.conv3.w", {d, 16, 3, 3});
        s.conv3.b = &store_.create(name + ".backbone.conv3.b", {d});
        if (!cfg_.use_encoder) return;
        for (std::size_t l = 0; l < cfg_.num_encoders; ++l) {
            std::string pre = name + ".enc" + std::to_string(l);
            detail::EncoderLayerParams layer;
            layer.q = make_proj(pre + ".attn.q", d, d);
            layer.k = make_proj(pre + ".attn.k", d, d);
            layer.v = make_proj(pre + ".attn.v", d, d);
            layer.o = make_proj(pre + ".attn.o", d, d);
            layer.ln1 = make_ln(pre + ".ln1");
            layer.ffn1 = make_proj(pre + ".ffn.l1", d, cfg_.ffn());
            layer.ffn2 = make_proj(pre + ".ffn.l2", cfg_.ffn(), d);
            layer.ln2 = make_ln(pre + ".ln2");
            s.layers.push_back(layer);
        }
    }

    void build_mutual() {
        std::size_t d = cfg_.d_model;
        mut_.q_rgb = make_proj("mutual.rgb.q", d, d);
        mut_.k_rgb = make_proj("mutual.rgb.k", d, d);
        mut_.v_rgb = make_proj("mutual.rgb.v", d, d);
        mut_.q_depth = make_proj("mutual.depth.q", d, d);
        mut_.k_depth = make_proj("mutual.depth.k", d, d);
        mut_.v_depth = make_proj("mutual.depth.v", d, d);
        mut_.o_r2d = make_proj("mutual.rgb2depth.o", d, d);
        mut_.ln_r2d = make_ln("mutual.rgb2depth.ln");
        mut_.o_d2r = make_proj("mutual.depth2rgb.o", d, d);
        mut_.ln_d2r = make_ln("mutual.depth2rgb.ln");
    }

    /// Backbone over each frame, stacked into [k, d_model], plus the
    /// positional table when enabled. No dropout here.
    Tensor embed_frames(Graph& g, const std::vector<double>& frames, std::size_t side,
                        const detail::StreamParams& s, const char* name) const {
        std::size_t frame_len = 3 * side * side;
        if (frames.size() != cfg_.k * frame_len)
            throw DataError(std::string(name) + " stream: expected " +
                            std::to_string(cfg_.k) + " frames of " +
                            std::to_string(frame_len) + " values, got " +
                            std::to_string(frames.size()) + " values");
        Tensor w1 = g.param(*s.conv1.w), b1 = g.param(*s.conv1.b);
        Tensor w2 = g.param(*s.conv2.w), b2 = g.param(*s.conv2.b);
        Tensor w3 = g.param(*s.conv3.w), b3 = g.param(*s.conv3.b);
        std::vector<Tensor> rows;
        rows.reserve(cfg_.k);
        for (std::size_t f = 0; f < cfg_.k; ++f) {
            std::vector<double> px(frames.begin() + f * frame_len,
                                   frames.begin() + (f + 1) * frame_len);
            Tensor x = g.leaf({3, side, side}, std::move(px));
            Tensor h = relu(conv2d(x, w1, b1, 2, 1));
            h = relu(conv2d(h, w2, b2, 2, 1));
            h = relu(conv2d(h, w3, b3, 2, 1));
            rows.push_back(global_avg_pool(h));
        }
        Tensor f = stack_rows(rows);
        if (cfg_.use_positional_encoding)
            f = add(f, g.leaf({cfg_.k, cfg_.d_model}, pe_.data));
        return f;
    }

    /// Shared attention kernel. Queries come from q_src, keys and values
    /// from kv_src (equal for self-attention). Per head: rows of
    /// softmax(Q Kt / sqrt(d_k)) weight the V rows; head outputs are
    /// concatenated and output-projected. Appends one k x k map per head.
    Tensor attention(Graph& g, Tensor q_src, Tensor kv_src, const detail::Proj& qp,
                     const detail::Proj& kp, const detail::Proj& vp,
                     const detail::Proj& op, std::size_t heads,
                     const std::string& stream, std::size_t layer,
                     std::vector<AttnMap>& maps) const {
        std::size_t d = cfg_.d_model;
        std::size_t dk = d / heads;
        Tensor q = add_row(matmul(q_src, g.param(*qp.w)), g.param(*qp.b));
        Tensor kt = add_row(matmul(kv_src, g.param(*kp.w)), g.param(*kp.b));
        Tensor v = add_row(matmul(kv_src, g.param(*vp.w)), g.param(*vp.b));
        std::vector<Tensor> heads_out;
        heads_out.reserve(heads);
        for (std::size_t h = 0; h < heads; ++h) {
            Tensor qh = slice_cols(q, h * dk, (h + 1) * dk);
            Tensor kh = slice_cols(kt, h * dk, (h + 1) * dk);
            Tensor vh = slice_cols(v, h * dk, (h + 1) * dk);
            Tensor scores = scale(matmul(qh, transpose(kh)),
                                  1.0 / std::sqrt(static_cast<double>(dk)));
            Tensor a = softmax(scores, 1);
            maps.push_back(AttnMap{stream, layer, h, cfg_.k, a.value()});
            heads_out.push_back(matmul(a, vh));
        }
        Tensor cat = heads == 1 ? heads_out[0] : concat_cols(heads_out);
        return add_row(matmul(cat, g.param(*op.w)), g.param(*op.b));
    }

    /// One encoder layer: self-attention, then a per-position two-layer ReLU
    /// feed-forward, each wrapped in dropout + residual + layer norm.
    Tensor encode_stream(Graph& g, Tensor f, const detail::StreamParams& s,
                         const std::string& stream, Mode mode, RngStream& drop,
                         std::vector<AttnMap>& maps) const {
        bool training = mode == Mode::train;
        for (std::size_t l = 0; l < s.layers.size(); ++l) {
            const auto& lay = s.layers[l];
            Tensor att = attention(g, f, f, lay.q, lay.k, lay.v, lay.o,
                                   cfg_.heads_encoder, stream, l, maps);
            Tensor f1 = layer_norm(add(f, dropout(att, cfg_.dropout_rate, drop, training)),
                                   g.param(*lay.ln1.gamma), g.param(*lay.ln1.beta));
            Tensor hidden = relu(add_row(matmul(f1, g.param(*lay.ffn1.w)),
                                         g.param(*lay.ffn1.b)));
            Tensor ff = add_row(matmul(hidden, g.param(*lay.ffn2.w)), g.param(*lay.ffn2.b));
            f = layer_norm(add(f1, dropout(ff, cfg_.dropout_rate, drop, training)),
                           g.param(*lay.ln2.gamma), g.param(*lay.ln2.beta));
        }
        return f;
    }

    /// One direction of the cross-modal block: queries from `own`, keys and
    /// values from `other`, then dropout + residual from `own` + layer norm.
    /// No feed-forward here.
    Tensor mutual_direction(Graph& g, Tensor own, Tensor other, const detail::Proj& qp,
                            const detail::Proj& kp, const detail::Proj& vp,
                            const detail::Proj& op, const detail::LnParams& ln,
                            const std::string& stream, Mode mode, RngStream& drop,
                            std::vector<AttnMap>& maps) const {
        Tensor att = attention(g, own, other, qp, kp, vp, op, cfg_.heads_mutual,
                               stream, 0, maps);
        bool training = mode == Mode::train;
        return layer_norm(add(own, dropout(att, cfg_.dropout_rate, drop, training)),
                          g.param(*ln.gamma), g.param(*ln.beta));
    }

    ModelConfig cfg_;
    ParamStore store_;
    PositionalEncodingTable pe_;
    detail::StreamParams rgb_, depth_;
    detail::MutualParams mut_;
    detail::Proj cls_;
};

}  // namespace trear
