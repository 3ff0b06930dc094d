#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>

#include "trear/error.hpp"
#include "trear/model.hpp"
#include "trear/pipeline.hpp"

namespace trear {

/// Full run description: architecture, crop policy (training; evaluation
/// always center-crops), optimization schedule, seed, and file locations.
struct TrainConfig {
    ModelConfig model;
    CropSpec crop;
    std::size_t epochs = 50;
    std::size_t batch_size = 4;
    double lr = 1e-4;
    double lr_decay_factor = 0.1;
    long lr_decay_epoch = 30;  // negative disables the decay
    std::uint64_t seed = 1;
    std::string manifest;
    std::string checkpoint_out;
    std::string metrics_out;
    std::string table_out;

    /// Learning rate in force during `epoch` (0-based): the base rate before
    /// the decay epoch, the decayed rate from it onward.
    double lr_at(std::size_t epoch) const {
        if (lr_decay_epoch >= 0 && epoch >= static_cast<std::size_t>(lr_decay_epoch))
            return lr * lr_decay_factor;
        return lr;
    }

    void validate() const {
        model.validate();
        crop.validate();
        if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
        if (!(lr > 0.0)) throw ConfigError("lr must be positive");
        if (!(lr_decay_factor > 0.0) || lr_decay_factor > 1.0)
            throw ConfigError("lr_decay_factor must be in (0, 1]");
        if (crop.crop_side < 16)
            throw ConfigError("crop_side must be at least 16 for the backbone");
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError(key + ": expected true/false, got '" + v + "'");
}

inline std::size_t parse_size(const std::string& v, const std::string& key) {
    try {
        std::size_t pos = 0;
        long long x = std::stoll(v, &pos);
        if (pos != v.size() || x < 0) throw std::invalid_argument("");
        return static_cast<std::size_t>(x);
    } catch (const std::exception&) {
        throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
    }
}

inline long parse_long(const std::string& v, const std::string& key) {
    try {
        std::size_t pos = 0;
        long x = std::stol(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("");
        return x;
    } catch (const std::exception&) {
        throw ConfigError(key + ": expected an integer, got '" + v + "'");
    }
}

inline double parse_double(const std::string& v, const std::string& key) {
    try {
        std::size_t pos = 0;
        double x = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("");
        return x;
    } catch (const std::exception&) {
        throw ConfigError(key + ": expected a number, got '" + v + "'");
    }
}

}  // namespace detail

/// Applies one key=value assignment. Unknown keys are errors so a typo
/// never silently trains the wrong model.
inline void apply_config_entry(TrainConfig& c, const std::string& key,
                               const std::string& value) {
    using detail::parse_bool;
    using detail::parse_double;
    using detail::parse_long;
    using detail::parse_size;
    if (key == "model.d_model") c.model.d_model = parse_size(value, key);
    else if (key == "model.k") c.model.k = parse_size(value, key);
    else if (key == "model.heads_encoder") c.model.heads_encoder = parse_size(value, key);
    else if (key == "model.heads_mutual") c.model.heads_mutual = parse_size(value, key);
    else if (key == "model.num_encoders") c.model.num_encoders = parse_size(value, key);
    else if (key == "model.ffn_hidden") c.model.ffn_hidden = parse_size(value, key);
    else if (key == "model.dropout_rate") c.model.dropout_rate = parse_double(value, key);
    else if (key == "model.fusion_mode") c.model.fusion_mode = fusion_mode_from(value);
    else if (key == "model.num_classes") c.model.num_classes = parse_size(value, key);
    else if (key == "model.use_positional_encoding")
        c.model.use_positional_encoding = parse_bool(value, key);
    else if (key == "model.average_mode") c.model.average_mode = average_mode_from(value);
    else if (key == "model.modality") c.model.modality = modality_from(value);
    else if (key == "model.use_mutual") c.model.use_mutual = parse_bool(value, key);
    else if (key == "model.use_encoder") c.model.use_encoder = parse_bool(value, key);
    else if (key == "crop.mode") c.crop.mode = crop_mode_from(value);
    else if (key == "crop.resize_side") c.crop.resize_side = parse_size(value, key);
    else if (key == "crop.crop_side") c.crop.crop_side = parse_size(value, key);
    else if (key == "train.epochs") c.epochs = parse_size(value, key);
    else if (key == "train.batch_size") c.batch_size = parse_size(value, key);
    else if (key == "train.lr") c.lr = parse_double(value, key);
    else if (key == "train.lr_decay_factor") c.lr_decay_factor = parse_double(value, key);
    else if (key == "train.lr_decay_epoch") c.lr_decay_epoch = parse_long(value, key);
    else if (key == "train.seed")
        c.seed = static_cast<std::uint64_t>(parse_long(value, key));
    else if (key == "data.manifest") c.manifest = value;
    else if (key == "out.checkpoint") c.checkpoint_out = value;
    else if (key == "out.metrics") c.metrics_out = value;
    else if (key == "out.table") c.table_out = value;
    else throw ConfigError("unknown config key: " + key);
}

/// Flat key=value text; '#' starts a comment line, blank lines are skipped.
inline TrainConfig parse_train_config(std::istream& in, const std::string& origin) {
    TrainConfig c;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string t = detail::trim(line);
        if (t.empty() || t[0] == '#') continue;
        auto eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError(origin + ":" + std::to_string(line_no) +
                              ": expected key=value, got '" + t + "'");
        apply_config_entry(c, detail::trim(t.substr(0, eq)), detail::trim(t.substr(eq + 1)));
    }
    return c;
}

inline TrainConfig load_train_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config: " + path.string());
    return parse_train_config(in, path.string());
}

inline std::string serialize(const TrainConfig& c) {
    std::ostringstream os;
    char buf[64];
    auto num = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return std::string(buf);
    };
    os << "model.d_model=" << c.model.d_model << "\n"
       << "model.k=" << c.model.k << "\n"
       << "model.heads_encoder=" << c.model.heads_encoder << "\n"
       << "model.heads_mutual=" << c.model.heads_mutual << "\n"
       << "model.num_encoders=" << c.model.num_encoders << "\n"
       << "model.ffn_hidden=" << c.model.ffn_hidden << "\n"
       << "model.dropout_rate=" << num(c.model.dropout_rate) << "\n"
       << "model.fusion_mode=" << to_string(c.model.fusion_mode) << "\n"
       << "model.num_classes=" << c.model.num_classes << "\n"
       << "model.use_positional_encoding="
       << (c.model.use_positional_encoding ? "true" : "false") << "\n"
       << "model.average_mode=" << to_string(c.model.average_mode) << "\n"
       << "model.modality=" << to_string(c.model.modality) << "\n"
       << "model.use_mutual=" << (c.model.use_mutual ? "true" : "false") << "\n"
       << "model.use_encoder=" << (c.model.use_encoder ? "true" : "false") << "\n"
       << "crop.mode=" << to_string(c.crop.mode) << "\n"
       << "crop.resize_side=" << c.crop.resize_side << "\n"
       << "crop.crop_side=" << c.crop.crop_side << "\n"
       << "train.epochs=" << c.epochs << "\n"
       << "train.batch_size=" << c.batch_size << "\n"
       << "train.lr=" << num(c.lr) << "\n"
       << "train.lr_decay_factor=" << num(c.lr_decay_factor) << "\n"
       << "train.lr_decay_epoch=" << c.lr_decay_epoch << "\n"
       << "train.seed=" << c.seed << "\n"
       << "data.manifest=" << c.manifest << "\n"
       << "out.checkpoint=" << c.checkpoint_out << "\n"
       << "out.metrics=" << c.metrics_out << "\n"
       << "out.table=" << c.table_out << "\n";
    return os.str();
}

}  // namespace trear
