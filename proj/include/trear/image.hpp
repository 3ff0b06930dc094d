#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "trear/error.hpp"

namespace trear {

/// 3-channel image, planar channel-major layout, values in [0, 1].
/// On disk this is an 8-bit binary PPM, so values are multiples of 1/255
/// whenever the image came from (or has been through) a file.
struct Image {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<double> data;  // 3 * height * width

    Image() = default;
    Image(std::size_t w, std::size_t h, double fill = 0.0)
        : width(w), height(h), data(3 * w * h, fill) {}

    double& at(std::size_t c, std::size_t y, std::size_t x) {
        return data[(c * height + y) * width + x];
    }
    double at(std::size_t c, std::size_t y, std::size_t x) const {
        return data[(c * height + y) * width + x];
    }
};

/// Single-channel 16-bit depth map. On disk: binary PGM, maxval 65535,
/// big-endian samples.
struct DepthMap {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint16_t> data;  // height * width

    DepthMap() = default;
    DepthMap(std::size_t w, std::size_t h, std::uint16_t fill = 0)
        : width(w), height(h), data(w * h, fill) {}

    std::uint16_t& at(std::size_t y, std::size_t x) { return data[y * width + x]; }
    std::uint16_t at(std::size_t y, std::size_t x) const { return data[y * width + x]; }
};

namespace detail {

inline int pnm_token(std::istream& in, const std::string& path) {
    // Whitespace- and comment-tolerant integer field per the PNM spec.
    int c = in.get();
    while (c != EOF && (std::isspace(c) || c == '#')) {
        if (c == '#')
            while (c != EOF && c != '\n') c = in.get();
        c = in.get();
    }
    if (c == EOF || !std::isdigit(c))
        throw FormatError(path + ": malformed header");
    long v = 0;
    while (c != EOF && std::isdigit(c)) {
        v = v * 10 + (c - '0');
        if (v > 1 << 30) throw FormatError(path + ": header value out of range");
        c = in.get();
    }
    if (c != EOF) in.unget();
    return static_cast<int>(v);
}

inline std::uint8_t quantize8(double v) {
    double c = std::clamp(v, 0.0, 1.0);
    return static_cast<std::uint8_t>(std::lround(c * 255.0));
}

}  // namespace detail

inline void write_ppm(const Image& img, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out << "P6\n" << img.width << " " << img.height << "\n255\n";
    std::vector<std::uint8_t> row(img.width * 3);
    for (std::size_t y = 0; y < img.height; ++y) {
        for (std::size_t x = 0; x < img.width; ++x)
            for (std::size_t c = 0; c < 3; ++c)
                row[x * 3 + c] = detail::quantize8(img.at(c, y, x));
        out.write(reinterpret_cast<const char*>(row.data()),
                  static_cast<std::streamsize>(row.size()));
    }
    if (!out) throw IoError("write failed: " + path.string());
}

inline Image read_ppm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path.string());
    char m0 = 0, m1 = 0;
    in.get(m0);
    in.get(m1);
    if (m0 != 'P' || m1 != '6')
        throw FormatError(path.string() + ": not a binary PPM (P6)");
    int w = detail::pnm_token(in, path.string());
    int h = detail::pnm_token(in, path.string());
    int maxval = detail::pnm_token(in, path.string());
    if (maxval != 255)
        throw FormatError(path.string() + ": maxval must be 255, got " +
                          std::to_string(maxval));
    in.get();  // single whitespace byte before raster
    if (w < 1 || h < 1) throw FormatError(path.string() + ": empty raster");
    Image img(static_cast<std::size_t>(w), static_cast<std::size_t>(h));
    std::vector<std::uint8_t> row(img.width * 3);
    for (std::size_t y = 0; y < img.height; ++y) {
        in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size()));
        if (static_cast<std::size_t>(in.gcount()) != row.size())
            throw FormatError(path.string() + ": truncated raster");
        for (std::size_t x = 0; x < img.width; ++x)
            for (std::size_t c = 0; c < 3; ++c)
                img.at(c, y, x) = static_cast<double>(row[x * 3 + c]) / 255.0;
    }
    return img;
}

inline void write_pgm16(const DepthMap& d, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out << "P5\n" << d.width << " " << d.height << "\n65535\n";
    std::vector<std::uint8_t> row(d.width * 2);
    for (std::size_t y = 0; y < d.height; ++y) {
        for (std::size_t x = 0; x < d.width; ++x) {
            std::uint16_t v = d.at(y, x);
            row[x * 2] = static_cast<std::uint8_t>(v >> 8);  // big-endian
            row[x * 2 + 1] = static_cast<std::uint8_t>(v & 0xFF);
        }
        out.write(reinterpret_cast<const char*>(row.data()),
                  static_cast<std::streamsize>(row.size()));
    }
    if (!out) throw IoError("write failed: " + path.string());
}

inline DepthMap read_pgm16(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path.string());
    char m0 = 0, m1 = 0;
    in.get(m0);
    in.get(m1);
    if (m0 != 'P' || m1 != '5')
        throw FormatError(path.string() + ": not a binary PGM (P5)");
    int w = detail::pnm_token(in, path.string());
    int h = detail::pnm_token(in, path.string());
    int maxval = detail::pnm_token(in, path.string());
    if (maxval != 65535)
        throw FormatError(path.string() + ": maxval must be 65535, got " +
                          std::to_string(maxval));
    in.get();
    if (w < 1 || h < 1) throw FormatError(path.string() + ": empty raster");
    DepthMap d(static_cast<std::size_t>(w), static_cast<std::size_t>(h));
    std::vector<std::uint8_t> row(d.width * 2);
    for (std::size_t y = 0; y < d.height; ++y) {
        in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size()));
        if (static_cast<std::size_t>(in.gcount()) != row.size())
            throw FormatError(path.string() + ": truncated raster");
        for (std::size_t x = 0; x < d.width; ++x)
            d.at(y, x) = static_cast<std::uint16_t>((row[x * 2] << 8) | row[x * 2 + 1]);
    }
    return d;
}

namespace detail {

/// Bilinear sample positions with half-pixel centers: source coordinate of
/// output index i is (i + 0.5) * in/out - 0.5, clamped. Identity when
/// in == out.
struct ResizeAxis {
    std::vector<std::size_t> lo, hi;
    std::vector<double> frac;

    ResizeAxis(std::size_t in, std::size_t out) : lo(out), hi(out), frac(out) {
        double ratio = static_cast<double>(in) / static_cast<double>(out);
        for (std::size_t i = 0; i < out; ++i) {
            double src = (static_cast<double>(i) + 0.5) * ratio - 0.5;
            src = std::clamp(src, 0.0, static_cast<double>(in - 1));
            double fl = std::floor(src);
            lo[i] = static_cast<std::size_t>(fl);
            hi[i] = std::min(lo[i] + 1, in - 1);
            frac[i] = src - fl;
        }
    }
};

template <class Get, class Set>
void resize_plane(std::size_t in_w, std::size_t in_h, std::size_t out_w,
                  std::size_t out_h, Get get, Set set) {
    ResizeAxis ax(in_w, out_w), ay(in_h, out_h);
    for (std::size_t y = 0; y < out_h; ++y)
        for (std::size_t x = 0; x < out_w; ++x) {
            double a = get(ay.lo[y], ax.lo[x]);
            double b = get(ay.lo[y], ax.hi[x]);
            double c = get(ay.hi[y], ax.lo[x]);
            double d = get(ay.hi[y], ax.hi[x]);
            double top = a + (b - a) * ax.frac[x];
            double bot = c + (d - c) * ax.frac[x];
            set(y, x, top + (bot - top) * ay.frac[y]);
        }
}

}  // namespace detail

inline Image resize_bilinear(const Image& img, std::size_t out_w, std::size_t out_h) {
    if (out_w == 0 || out_h == 0)
        throw ParameterError("resize: output extent must be positive");
    if (img.width == 0 || img.height == 0)
        throw DataError("resize: empty image");
    if (out_w == img.width && out_h == img.height) return img;
    Image out(out_w, out_h);
    for (std::size_t c = 0; c < 3; ++c)
        detail::resize_plane(
            img.width, img.height, out_w, out_h,
            [&](std::size_t y, std::size_t x) { return img.at(c, y, x); },
            [&](std::size_t y, std::size_t x, double v) { out.at(c, y, x) = v; });
    return out;
}

inline DepthMap resize_bilinear(const DepthMap& d, std::size_t out_w, std::size_t out_h) {
    if (out_w == 0 || out_h == 0)
        throw ParameterError("resize: output extent must be positive");
    if (d.width == 0 || d.height == 0)
        throw DataError("resize: empty depth map");
    if (out_w == d.width && out_h == d.height) return d;
    DepthMap out(out_w, out_h);
    detail::resize_plane(
        d.width, d.height, out_w, out_h,
        [&](std::size_t y, std::size_t x) { return static_cast<double>(d.at(y, x)); },
        [&](std::size_t y, std::size_t x, double v) {
            out.at(y, x) = static_cast<std::uint16_t>(
                std::clamp(std::lround(v), 0L, 65535L));
        });
    return out;
}

}  // namespace trear
