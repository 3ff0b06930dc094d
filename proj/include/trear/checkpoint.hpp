#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "trear/error.hpp"
#include "trear/model.hpp"
#include "trear/pipeline.hpp"

namespace trear {

namespace detail {

constexpr char kCkptMagic[] = "TREARCKPT1";
constexpr std::size_t kCkptMagicLen = 10;

inline void put_u64(std::ostream& out, std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    out.write(b, 8);
}

inline std::uint64_t get_u64(std::istream& in, const std::string& path) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    if (in.gcount() != 8) throw FormatError(path + ": truncated");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

inline void put_f64(std::ostream& out, double d) {
    put_u64(out, std::bit_cast<std::uint64_t>(d));
}

inline double get_f64(std::istream& in, const std::string& path) {
    return std::bit_cast<double>(get_u64(in, path));
}

}  // namespace detail

/// One named tensor in a checkpoint file.
struct CkptEntry {
    std::string name;
    Shape shape;
    std::vector<double> data;
};

/// Wire format: the 10-byte magic, then per entry: name length (u64 LE),
/// name bytes, rank (u64 LE), extents (u64 LE each), payload (f64 LE each).
inline void write_checkpoint_entries(const std::vector<CkptEntry>& entries,
                                     const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out.write(detail::kCkptMagic, detail::kCkptMagicLen);
    for (const auto& e : entries) {
        if (e.data.size() != numel(e.shape))
            throw ContractError("checkpoint entry " + e.name + ": payload size " +
                                std::to_string(e.data.size()) + " does not match shape " +
                                shape_str(e.shape));
        detail::put_u64(out, e.name.size());
        out.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
        detail::put_u64(out, e.shape.size());
        for (std::size_t d : e.shape) detail::put_u64(out, d);
        for (double v : e.data) detail::put_f64(out, v);
    }
    if (!out) throw IoError("write failed: " + path.string());
}

inline std::vector<CkptEntry> read_checkpoint_entries(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path.string());
    char magic[detail::kCkptMagicLen];
    in.read(magic, detail::kCkptMagicLen);
    if (in.gcount() != static_cast<std::streamsize>(detail::kCkptMagicLen) ||
        std::string(magic, detail::kCkptMagicLen) != detail::kCkptMagic)
        throw FormatError(path.string() + ": bad magic");
    std::vector<CkptEntry> entries;
    while (true) {
        int peek = in.peek();
        if (peek == EOF) break;
        CkptEntry e;
        std::uint64_t name_len = detail::get_u64(in, path.string());
        if (name_len == 0 || name_len > 4096)
            throw FormatError(path.string() + ": implausible name length " +
                              std::to_string(name_len));
        e.name.resize(name_len);
        in.read(e.name.data(), static_cast<std::streamsize>(name_len));
        if (in.gcount() != static_cast<std::streamsize>(name_len))
            throw FormatError(path.string() + ": truncated");
        std::uint64_t rank = detail::get_u64(in, path.string());
        if (rank > 8) throw FormatError(path.string() + ": implausible rank " +
                                        std::to_string(rank));
        std::uint64_t count = 1;
        for (std::uint64_t i = 0; i < rank; ++i) {
            std::uint64_t d = detail::get_u64(in, path.string());
            if (d == 0 || d > (1ULL << 32))
                throw FormatError(path.string() + ": implausible extent");
            e.shape.push_back(static_cast<std::size_t>(d));
            count *= d;
        }
        e.data.resize(count);
        for (std::uint64_t i = 0; i < count; ++i)
            e.data[i] = detail::get_f64(in, path.string());
        entries.push_back(std::move(e));
    }
    return entries;
}

namespace detail {

// Field order of the reserved "config" entry. The checkpoint carries the
// architecture and the evaluation-time crop extents so a saved model can be
// rebuilt from the file alone.
enum ConfigField : std::size_t {
    kVersion = 0,
    kDModel,
    kFrames,
    kHeadsEncoder,
    kHeadsMutual,
    kNumEncoders,
    kFfnHidden,
    kDropoutRate,
    kFusionMode,
    kNumClasses,
    kUsePe,
    kAverageMode,
    kModality,
    kUseMutual,
    kUseEncoder,
    kResizeSide,
    kCropSide,
    kConfigFields
};

}  // namespace detail

inline CkptEntry encode_config(const ModelConfig& m, const CropSpec& crop) {
    CkptEntry e;
    e.name = "config";
    e.shape = {detail::kConfigFields};
    e.data.assign(detail::kConfigFields, 0.0);
    e.data[detail::kVersion] = 1.0;
    e.data[detail::kDModel] = static_cast<double>(m.d_model);
    e.data[detail::kFrames] = static_cast<double>(m.k);
    e.data[detail::kHeadsEncoder] = static_cast<double>(m.heads_encoder);
    e.data[detail::kHeadsMutual] = static_cast<double>(m.heads_mutual);
    e.data[detail::kNumEncoders] = static_cast<double>(m.num_encoders);
    e.data[detail::kFfnHidden] = static_cast<double>(m.ffn());
    e.data[detail::kDropoutRate] = m.dropout_rate;
    e.data[detail::kFusionMode] = static_cast<double>(static_cast<int>(m.fusion_mode));
    e.data[detail::kNumClasses] = static_cast<double>(m.num_classes);
    e.data[detail::kUsePe] = m.use_positional_encoding ? 1.0 : 0.0;
    e.data[detail::kAverageMode] = static_cast<double>(static_cast<int>(m.average_mode));
    e.data[detail::kModality] = static_cast<double>(static_cast<int>(m.modality));
    e.data[detail::kUseMutual] = m.use_mutual ? 1.0 : 0.0;
    e.data[detail::kUseEncoder] = m.use_encoder ? 1.0 : 0.0;
    e.data[detail::kResizeSide] = static_cast<double>(crop.resize_side);
    e.data[detail::kCropSide] = static_cast<double>(crop.crop_side);
    return e;
}

inline void decode_config(const CkptEntry& e, ModelConfig& m, CropSpec& crop,
                          const std::string& path) {
    if (e.shape != Shape{detail::kConfigFields} || e.data.size() != detail::kConfigFields)
        throw FormatError(path + ": config entry has wrong shape " + shape_str(e.shape));
    if (e.data[detail::kVersion] != 1.0)
        throw FormatError(path + ": unsupported checkpoint version");
    auto as_size = [&](detail::ConfigField f) {
        double v = e.data[f];
        if (v < 0 || v != std::floor(v))
            throw FormatError(path + ": non-integral config field");
        return static_cast<std::size_t>(v);
    };
    m.d_model = as_size(detail::kDModel);
    m.k = as_size(detail::kFrames);
    m.heads_encoder = as_size(detail::kHeadsEncoder);
    m.heads_mutual = as_size(detail::kHeadsMutual);
    m.num_encoders = as_size(detail::kNumEncoders);
    m.ffn_hidden = as_size(detail::kFfnHidden);
    m.dropout_rate = e.data[detail::kDropoutRate];
    std::size_t fm = as_size(detail::kFusionMode);
    if (fm > 2) throw FormatError(path + ": invalid fusion mode field");
    m.fusion_mode = static_cast<FusionMode>(fm);
    m.num_classes = as_size(detail::kNumClasses);
    m.use_positional_encoding = e.data[detail::kUsePe] != 0.0;
    std::size_t am = as_size(detail::kAverageMode);
    if (am > 1) throw FormatError(path + ": invalid average mode field");
    m.average_mode = static_cast<AverageMode>(am);
    std::size_t mo = as_size(detail::kModality);
    if (mo > 2) throw FormatError(path + ": invalid modality field");
    m.modality = static_cast<Modality>(mo);
    m.use_mutual = e.data[detail::kUseMutual] != 0.0;
    m.use_encoder = e.data[detail::kUseEncoder] != 0.0;
    crop.resize_side = as_size(detail::kResizeSide);
    crop.crop_side = as_size(detail::kCropSide);
}

/// Writes the reserved "config" entry followed by every parameter in
/// creation order. Identical model state produces identical bytes.
inline void save_checkpoint(const TrearModel& model, const CropSpec& crop,
                            const std::filesystem::path& path) {
    std::vector<CkptEntry> entries;
    entries.push_back(encode_config(model.config(), crop));
    const ParamStore& ps = model.params();
    for (std::size_t i = 0; i < ps.size(); ++i) {
        const Variable& v = ps.at(i);
        entries.push_back(CkptEntry{v.name, v.shape, v.value});
    }
    write_checkpoint_entries(entries, path);
}

struct LoadedCheckpoint {
    TrearModel model;
    CropSpec crop;
};

inline LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
    std::vector<CkptEntry> entries = read_checkpoint_entries(path);
    if (entries.empty() || entries[0].name != "config")
        throw FormatError(path.string() + ": first entry must be config");
    ModelConfig mc;
    CropSpec crop;
    crop.mode = CropMode::center;
    decode_config(entries[0], mc, crop, path.string());
    TrearModel model(mc);
    ParamStore& ps = model.params();
    std::size_t filled = 0;
    for (std::size_t i = 1; i < entries.size(); ++i) {
        const CkptEntry& e = entries[i];
        if (!ps.has(e.name))
            throw FormatError(path.string() + ": unknown parameter " + e.name);
        Variable& v = ps.get(e.name);
        if (v.shape != e.shape)
            throw FormatError(path.string() + ": parameter " + e.name + " has shape " +
                              shape_str(e.shape) + ", expected " + shape_str(v.shape));
        v.value = e.data;
        ++filled;
    }
    if (filled != ps.size())
        throw FormatError(path.string() + ": " + std::to_string(filled) +
                          " parameters in file, model needs " + std::to_string(ps.size()));
    return LoadedCheckpoint{std::move(model), crop};
}

}  // namespace trear
