#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "trear/clip.hpp"
#include "trear/image.hpp"
#include "trear/rng.hpp"

namespace trear {

/// Synthetic task layout: class label = texture * motions + motion. A
/// textured square moves along a random in-plane path; the RGB stream shows
/// only the texture (its pixel stream is drawn from generators keyed by
/// (texture, clip index) alone, so it is byte-identical across motion
/// labels), while the depth stream encodes the motion pattern as the time
/// at which the square crosses the background depth plane. RGB alone
/// therefore identifies the texture, depth alone the motion, and only the
/// pair identifies the class.
struct GenConfig {
    std::size_t textures = 2;         // T
    std::size_t motions = 2;          // M
    std::size_t clips_per_class = 10; // train split
    std::size_t test_per_class = 0;   // test split
    std::size_t frames = 12;
    std::size_t side = 64;
    std::uint64_t seed = 1;

    std::size_t num_classes() const { return textures * motions; }

    void validate() const {
        if (textures < 1 || motions < 1)
            throw ParameterError("generator: textures and motions must be at least 1");
        if (clips_per_class < 1)
            throw ParameterError("generator: clips_per_class must be at least 1");
        if (frames < 1)
            throw ParameterError("generator: frames must be at least 1");
        if (side < 16)
            throw ParameterError("generator: side must be at least 16");
    }
};

namespace detail {

struct ClipRecipe {
    // In-plane path of the square, shared by both streams.
    std::size_t x0, y0, x1, y1, obj;
    // Texture colors (two alternating stripe colors).
    double ca[3], cb[3];
    double bg;
    bool horizontal;
    std::size_t period;
};

/// Everything random about a clip, drawn from streams keyed by (seed,
/// texture, clip index) only — never by the motion label.
inline ClipRecipe make_recipe(std::uint64_t seed, std::size_t t, std::size_t i,
                              std::size_t side) {
    ClipRecipe r;
    r.obj = side / 3;
    std::string key = "/t" + std::to_string(t) + "/i" + std::to_string(i);
    RngStream traj(seed, "gen/traj" + key);
    std::size_t span = side - r.obj;
    r.x0 = static_cast<std::size_t>(traj.below(span + 1));
    r.y0 = static_cast<std::size_t>(traj.below(span + 1));
    r.x1 = static_cast<std::size_t>(traj.below(span + 1));
    r.y1 = static_cast<std::size_t>(traj.below(span + 1));
    RngStream look(seed, "gen/rgb" + key);
    r.bg = 0.25 + 0.2 * look.next_double();
    static const double palette[6][6] = {
        {0.9, 0.15, 0.1, 0.95, 0.85, 0.2},  // red / yellow
        {0.1, 0.2, 0.9, 0.15, 0.85, 0.3},   // blue / green
        {0.85, 0.1, 0.8, 0.1, 0.8, 0.85},   // magenta / cyan
        {0.95, 0.55, 0.1, 0.4, 0.1, 0.6},   // orange / purple
        {0.9, 0.9, 0.9, 0.1, 0.1, 0.1},     // white / black
        {0.6, 0.8, 0.2, 0.2, 0.4, 0.8},     // lime / steel
    };
    const double* base = palette[t % 6];
    for (int c = 0; c < 3; ++c) {
        r.ca[c] = base[c] + 0.1 * (look.next_double() - 0.5);
        r.cb[c] = base[3 + c] + 0.1 * (look.next_double() - 0.5);
    }
    r.horizontal = t % 2 == 0;
    r.period = 3 + (t / 2) % 3;
    return r;
}

inline std::size_t lerp_pos(std::size_t a, std::size_t b, std::size_t s, std::size_t last) {
    if (last == 0) return a;
    double f = static_cast<double>(s) / static_cast<double>(last);
    double v = static_cast<double>(a) + (static_cast<double>(b) - static_cast<double>(a)) * f;
    return static_cast<std::size_t>(std::lround(v));
}

}  // namespace detail

/// Renders one clip. Kept public so tests can compare streams directly.
inline ClipPair render_clip(const GenConfig& cfg, std::size_t t, std::size_t m,
                            std::size_t i, const std::string& id) {
    cfg.validate();
    if (t >= cfg.textures || m >= cfg.motions)
        throw ParameterError("render_clip: class component out of range");
    detail::ClipRecipe r = detail::make_recipe(cfg.seed, t, i, cfg.side);
    // The square crosses the background depth plane at a motion-specific
    // fraction of the clip, so the pattern survives per-frame min-max
    // normalization no matter how frames are cropped.
    double tau = (static_cast<double>(m) + 0.5) / static_cast<double>(cfg.motions);
    double denom = std::max(tau, 1.0 - tau);
    ClipPair clip;
    clip.id = id;
    clip.label = static_cast<int>(t * cfg.motions + m);
    std::size_t last = cfg.frames - 1;
    for (std::size_t s = 0; s < cfg.frames; ++s) {
        std::size_t ox = detail::lerp_pos(r.x0, r.x1, s, last);
        std::size_t oy = detail::lerp_pos(r.y0, r.y1, s, last);
        Image img(cfg.side, cfg.side);
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t y = 0; y < cfg.side; ++y)
                for (std::size_t x = 0; x < cfg.side; ++x)
                    img.at(c, y, x) = r.bg;
        double frac = last == 0 ? 0.0 : static_cast<double>(s) / static_cast<double>(last);
        long obj_depth = 36000 + std::lround(28000.0 * (frac - tau) / denom);
        DepthMap dep(cfg.side, cfg.side, 36000);
        for (std::size_t y = 0; y < r.obj; ++y)
            for (std::size_t x = 0; x < r.obj; ++x) {
                std::size_t band = (r.horizontal ? y : x) / r.period;
                const double* col = band % 2 == 0 ? r.ca : r.cb;
                for (std::size_t c = 0; c < 3; ++c)
                    img.at(c, oy + y, ox + x) = col[c];
                dep.at(oy + y, ox + x) =
                    static_cast<std::uint16_t>(std::clamp(obj_depth, 0L, 65535L));
            }
        // Snap to the 8-bit grid so the in-memory clip matches its on-disk
        // form exactly.
        for (double& v : img.data)
            v = static_cast<double>(detail::quantize8(v)) / 255.0;
        clip.rgb.push_back(std::move(img));
        clip.depth.push_back(std::move(dep));
    }
    return clip;
}

/// Writes every clip plus a `clip-path<TAB>label<TAB>split` manifest under
/// out_dir; returns the manifest path. Train clips use per-class indices
/// [0, clips_per_class), test clips continue after them, so the two splits
/// never share a recipe.
inline std::filesystem::path generate_synthetic_dataset(const GenConfig& cfg,
                                                        const std::filesystem::path& out_dir) {
    cfg.validate();
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
    std::vector<ManifestEntry> entries;
    std::size_t next_id = 0;
    auto emit = [&](const std::string& split, std::size_t lo, std::size_t hi) {
        for (std::size_t t = 0; t < cfg.textures; ++t)
            for (std::size_t m = 0; m < cfg.motions; ++m)
                for (std::size_t i = lo; i < hi; ++i) {
                    char id[16];
                    std::snprintf(id, sizeof id, "%04zu", next_id++);
                    ClipPair clip = render_clip(cfg, t, m, i, id);
                    std::filesystem::path dir = write_clip(clip, out_dir);
                    entries.push_back(ManifestEntry{dir.filename(), clip.label, split});
                }
    };
    emit("train", 0, cfg.clips_per_class);
    emit("test", cfg.clips_per_class, cfg.clips_per_class + cfg.test_per_class);
    std::filesystem::path manifest = out_dir / "manifest.tsv";
    write_dataset_manifest(entries, manifest);
    return manifest;
}

}  // namespace trear
