#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "trear/error.hpp"
#include "trear/image.hpp"

namespace trear {

/// An aligned RGB / depth frame sequence with its class label. Frame i of
/// each stream shows the same instant; every pipeline stage preserves that
/// pairing.
struct ClipPair {
    std::string id;
    int label = 0;
    std::vector<Image> rgb;
    std::vector<DepthMap> depth;

    std::size_t num_frames() const { return rgb.size(); }

    void validate() const {
        if (rgb.empty())
            throw DataError("clip " + id + ": no frames");
        if (rgb.size() != depth.size())
            throw DataError("clip " + id + ": " + std::to_string(rgb.size()) +
                            " rgb frames vs " + std::to_string(depth.size()) +
                            " depth frames");
        for (std::size_t i = 0; i < rgb.size(); ++i) {
            if (rgb[i].width != rgb[0].width || rgb[i].height != rgb[0].height)
                throw DataError("clip " + id + ": rgb frame " + std::to_string(i) +
                                " has inconsistent extents");
            if (depth[i].width != rgb[0].width || depth[i].height != rgb[0].height)
                throw DataError("clip " + id + ": depth frame " + std::to_string(i) +
                                " has inconsistent extents");
        }
    }
};

namespace detail {

inline std::string frame_name(const char* prefix, std::size_t i, const char* ext) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s_%04zu.%s", prefix, i, ext);
    return buf;
}

}  // namespace detail

/// Writes clip_<id>/manifest.txt plus rgb_%04d.ppm / depth_%04d.pgm frames
/// under `dir`. RGB values are quantized to the 8-bit grid on write, so a
/// clip that already sits on that grid round-trips exactly.
inline std::filesystem::path write_clip(const ClipPair& clip,
                                        const std::filesystem::path& dir) {
    clip.validate();
    std::filesystem::path root = dir / ("clip_" + clip.id);
    std::error_code ec;
    std::filesystem::create_directories(root, ec);
    if (ec) throw IoError("cannot create " + root.string() + ": " + ec.message());
    std::ofstream man(root / "manifest.txt");
    if (!man) throw IoError("cannot open " + (root / "manifest.txt").string());
    man << "id=" << clip.id << "\n"
        << "label=" << clip.label << "\n"
        << "num_frames=" << clip.num_frames() << "\n"
        << "width=" << clip.rgb[0].width << "\n"
        << "height=" << clip.rgb[0].height << "\n";
    if (!man) throw IoError("write failed: " + (root / "manifest.txt").string());
    man.close();
    for (std::size_t i = 0; i < clip.num_frames(); ++i) {
        write_ppm(clip.rgb[i], root / detail::frame_name("rgb", i, "ppm"));
        write_pgm16(clip.depth[i], root / detail::frame_name("depth", i, "pgm"));
    }
    return root;
}

inline ClipPair read_clip(const std::filesystem::path& dir) {
    std::filesystem::path man_path = dir / "manifest.txt";
    std::ifstream man(man_path);
    if (!man) throw IoError("cannot open: " + man_path.string());
    std::map<std::string, std::string> kv;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(man, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw FormatError(man_path.string() + ":" + std::to_string(line_no) +
                              ": expected key=value");
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    for (const char* key : {"id", "label", "num_frames", "width", "height"})
        if (!kv.count(key))
            throw FormatError(man_path.string() + ": missing field " + key);
    ClipPair clip;
    clip.id = kv["id"];
    std::size_t n, w, h;
    try {
        clip.label = std::stoi(kv["label"]);
        n = std::stoul(kv["num_frames"]);
        w = std::stoul(kv["width"]);
        h = std::stoul(kv["height"]);
    } catch (const std::exception&) {
        throw FormatError(man_path.string() + ": non-numeric field value");
    }
    if (n == 0) throw FormatError(man_path.string() + ": num_frames must be positive");
    for (std::size_t i = 0; i < n; ++i) {
        std::filesystem::path rp = dir / detail::frame_name("rgb", i, "ppm");
        std::filesystem::path dp = dir / detail::frame_name("depth", i, "pgm");
        if (!std::filesystem::exists(rp))
            throw FormatError(dir.string() + ": manifest declares " + std::to_string(n) +
                              " frames but rgb frame " + std::to_string(i) + " is missing");
        if (!std::filesystem::exists(dp))
            throw FormatError(dir.string() + ": manifest declares " + std::to_string(n) +
                              " frames but depth frame " + std::to_string(i) + " is missing");
        clip.rgb.push_back(read_ppm(rp));
        clip.depth.push_back(read_pgm16(dp));
        if (clip.rgb.back().width != w || clip.rgb.back().height != h)
            throw FormatError(rp.string() + ": extents disagree with manifest width/height");
        if (clip.depth.back().width != w || clip.depth.back().height != h)
            throw FormatError(dp.string() + ": extents disagree with manifest width/height");
    }
    clip.validate();
    return clip;
}

/// One dataset manifest line: clip directory, label, split name.
struct ManifestEntry {
    std::filesystem::path path;
    int label = 0;
    std::string split;
};

inline void write_dataset_manifest(const std::vector<ManifestEntry>& entries,
                                   const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    for (const auto& e : entries)
        out << e.path.string() << "\t" << e.label << "\t" << e.split << "\n";
    if (!out) throw IoError("write failed: " + path.string());
}

/// Reads a `clip-path<TAB>label<TAB>split` manifest. Relative clip paths are
/// resolved against the manifest's own directory.
inline std::vector<ManifestEntry> read_dataset_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open: " + path.string());
    std::vector<ManifestEntry> entries;
    std::string line;
    std::size_t line_no = 0;
    std::filesystem::path base = path.parent_path();
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto t1 = line.find('\t');
        auto t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
        if (t2 == std::string::npos)
            throw FormatError(path.string() + ":" + std::to_string(line_no) +
                              ": expected clip-path<TAB>label<TAB>split");
        ManifestEntry e;
        std::filesystem::path p(line.substr(0, t1));
        e.path = p.is_absolute() ? p : base / p;
        try {
            e.label = std::stoi(line.substr(t1 + 1, t2 - t1 - 1));
        } catch (const std::exception&) {
            throw FormatError(path.string() + ":" + std::to_string(line_no) +
                              ": non-numeric label");
        }
        e.split = line.substr(t2 + 1);
        if (e.split != "train" && e.split != "test")
            throw FormatError(path.string() + ":" + std::to_string(line_no) +
                              ": unknown split '" + e.split + "'");
        entries.push_back(std::move(e));
    }
    return entries;
}

}  // namespace trear
