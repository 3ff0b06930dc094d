#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "trear/clip.hpp"
#include "trear/image.hpp"
#include "trear/rng.hpp"

namespace trear {

enum class CropMode { random_per_frame, same_region, center };

inline std::string to_string(CropMode m) {
    switch (m) {
        case CropMode::random_per_frame: return "random_per_frame";
        case CropMode::same_region: return "same_region";
        case CropMode::center: return "center";
    }
    throw ConfigError("unknown crop mode");
}

inline CropMode crop_mode_from(const std::string& s) {
    if (s == "random_per_frame") return CropMode::random_per_frame;
    if (s == "same_region") return CropMode::same_region;
    if (s == "center") return CropMode::center;
    throw ConfigError("unknown crop mode: " + s);
}

/// Resize-then-crop policy. random_per_frame draws one offset per frame,
/// same_region one offset per clip, center none. Offsets are always shared
/// between an RGB frame and its aligned depth map.
struct CropSpec {
    CropMode mode = CropMode::random_per_frame;
    std::size_t resize_side = 64;
    std::size_t crop_side = 56;

    void validate() const {
        if (crop_side < 1 || resize_side < 1)
            throw ParameterError("crop: extents must be positive");
        if (crop_side > resize_side)
            throw ParameterError("crop_side " + std::to_string(crop_side) +
                                 " exceeds resize_side " + std::to_string(resize_side));
    }
};

/// k indices uniformly spaced over [0, len-1], both endpoints included,
/// rounded to nearest; duplicates appear when len < k.
inline std::vector<std::size_t> sample_frame_indices(std::size_t len, std::size_t k) {
    if (k < 1) throw ParameterError("sample_frames: k must be at least 1");
    if (len < 1) throw ParameterError("sample_frames: empty clip");
    std::vector<std::size_t> idx(k);
    if (k == 1) {
        idx[0] = 0;
        return idx;
    }
    for (std::size_t j = 0; j < k; ++j) {
        double pos = static_cast<double>(j) * static_cast<double>(len - 1) /
                     static_cast<double>(k - 1);
        idx[j] = static_cast<std::size_t>(std::lround(pos));
    }
    return idx;
}

/// Temporal subsampling to k frames; the same indices select rgb and depth.
inline ClipPair sample_frames(const ClipPair& clip, std::size_t k) {
    clip.validate();
    auto idx = sample_frame_indices(clip.num_frames(), k);
    ClipPair out;
    out.id = clip.id;
    out.label = clip.label;
    for (std::size_t i : idx) {
        out.rgb.push_back(clip.rgb[i]);
        out.depth.push_back(clip.depth[i]);
    }
    return out;
}

namespace detail {

inline Image crop_window(const Image& img, std::size_t oy, std::size_t ox, std::size_t c) {
    Image out(c, c);
    for (std::size_t ch = 0; ch < 3; ++ch)
        for (std::size_t y = 0; y < c; ++y)
            for (std::size_t x = 0; x < c; ++x)
                out.at(ch, y, x) = img.at(ch, oy + y, ox + x);
    return out;
}

inline DepthMap crop_window(const DepthMap& d, std::size_t oy, std::size_t ox, std::size_t c) {
    DepthMap out(c, c);
    for (std::size_t y = 0; y < c; ++y)
        for (std::size_t x = 0; x < c; ++x)
            out.at(y, x) = d.at(oy + y, ox + x);
    return out;
}

}  // namespace detail

/// Bilinear-resizes each frame so its shorter side equals resize_side
/// (aspect preserved), then crops a crop_side square per the mode. Random
/// modes consume the given stream: one (y, x) offset pair per frame, or one
/// per clip in same_region mode.
inline ClipPair crop(const ClipPair& clip, const CropSpec& spec, RngStream& stream) {
    clip.validate();
    spec.validate();
    std::size_t w = clip.rgb[0].width, h = clip.rgb[0].height;
    std::size_t shorter = std::min(w, h);
    std::size_t rw = w, rh = h;
    if (shorter != spec.resize_side) {
        double scale = static_cast<double>(spec.resize_side) / static_cast<double>(shorter);
        rw = std::max<std::size_t>(
            1, static_cast<std::size_t>(std::lround(static_cast<double>(w) * scale)));
        rh = std::max<std::size_t>(
            1, static_cast<std::size_t>(std::lround(static_cast<double>(h) * scale)));
        if (w <= h) rw = spec.resize_side; else rh = spec.resize_side;
    }
    if (spec.crop_side > rw || spec.crop_side > rh)
        throw ParameterError("crop_side " + std::to_string(spec.crop_side) +
                             " exceeds resized extents " + std::to_string(rw) + "x" +
                             std::to_string(rh));
    std::size_t max_oy = rh - spec.crop_side, max_ox = rw - spec.crop_side;
    std::size_t shared_oy = max_oy / 2, shared_ox = max_ox / 2;
    if (spec.mode == CropMode::same_region) {
        shared_oy = static_cast<std::size_t>(stream.below(max_oy + 1));
        shared_ox = static_cast<std::size_t>(stream.below(max_ox + 1));
    }
    ClipPair out;
    out.id = clip.id;
    out.label = clip.label;
    for (std::size_t i = 0; i < clip.num_frames(); ++i) {
        std::size_t oy = shared_oy, ox = shared_ox;
        if (spec.mode == CropMode::random_per_frame) {
            oy = static_cast<std::size_t>(stream.below(max_oy + 1));
            ox = static_cast<std::size_t>(stream.below(max_ox + 1));
        }
        Image r = resize_bilinear(clip.rgb[i], rw, rh);
        DepthMap d = resize_bilinear(clip.depth[i], rw, rh);
        out.rgb.push_back(detail::crop_window(r, oy, ox, spec.crop_side));
        out.depth.push_back(detail::crop_window(d, oy, ox, spec.crop_side));
    }
    return out;
}

/// Per-frame min-max normalization of a 16-bit depth map to [0, 1]
/// (a constant frame maps to all zeros), replicated into 3 channels.
inline Image preprocess_depth(const DepthMap& d) {
    if (d.width == 0 || d.height == 0) throw DataError("preprocess_depth: empty frame");
    std::uint16_t lo = d.data[0], hi = d.data[0];
    for (std::uint16_t v : d.data) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    Image out(d.width, d.height);
    double range = static_cast<double>(hi) - static_cast<double>(lo);
    for (std::size_t y = 0; y < d.height; ++y)
        for (std::size_t x = 0; x < d.width; ++x) {
            double v = range == 0.0
                           ? 0.0
                           : (static_cast<double>(d.at(y, x)) - static_cast<double>(lo)) / range;
            out.at(0, y, x) = v;
            out.at(1, y, x) = v;
            out.at(2, y, x) = v;
        }
    return out;
}

/// Model-ready pixel blocks: k frames per stream, each 3 x side x side,
/// flattened in frame order.
struct PreparedClip {
    std::size_t k = 0;
    std::size_t side = 0;
    int label = 0;
    std::vector<double> rgb;
    std::vector<double> depth;
};

/// Full preprocessing chain: temporal sampling, resize + crop (shared
/// offsets across streams), depth normalization and channel replication.
inline PreparedClip preprocess_clip(const ClipPair& clip, std::size_t k,
                                    const CropSpec& spec, RngStream& stream) {
    ClipPair sampled = sample_frames(clip, k);
    ClipPair cropped = crop(sampled, spec, stream);
    PreparedClip out;
    out.k = k;
    out.side = spec.crop_side;
    out.label = clip.label;
    std::size_t frame_len = 3 * spec.crop_side * spec.crop_side;
    out.rgb.reserve(k * frame_len);
    out.depth.reserve(k * frame_len);
    for (std::size_t i = 0; i < k; ++i) {
        const Image& r = cropped.rgb[i];
        out.rgb.insert(out.rgb.end(), r.data.begin(), r.data.end());
        Image d = preprocess_depth(cropped.depth[i]);
        out.depth.insert(out.depth.end(), d.data.begin(), d.data.end());
    }
    return out;
}

}  // namespace trear
