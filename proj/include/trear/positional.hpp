#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "trear/error.hpp"

namespace trear {

/// Sinusoidal position table: entry (pos, 2i) = sin(pos / 10000^(2i/d)),
/// entry (pos, 2i+1) = cos of the same argument. Deterministic in (k, d);
/// consecutive rows are related by a per-frequency rotation, which lets the
/// model express relative offsets linearly.
struct PositionalEncodingTable {
    std::size_t k = 0;
    std::size_t d_model = 0;
    std::vector<double> data;  // k x d_model, row-major

    double at(std::size_t pos, std::size_t dim) const {
        if (pos >= k || dim >= d_model)
            throw IndexError("positional encoding: (" + std::to_string(pos) + ", " +
                             std::to_string(dim) + ") outside " + std::to_string(k) +
                             " x " + std::to_string(d_model));
        return data[pos * d_model + dim];
    }
};

inline PositionalEncodingTable positional_encoding(std::size_t k, std::size_t d_model) {
    if (d_model == 0 || d_model % 2 != 0)
        throw ConfigError("positional encoding requires even d_model, got " +
                          std::to_string(d_model));
    if (k == 0)
        throw ConfigError("positional encoding requires k >= 1");
    PositionalEncodingTable t;
    t.k = k;
    t.d_model = d_model;
    t.data.resize(k * d_model);
    for (std::size_t pos = 0; pos < k; ++pos) {
        for (std::size_t i = 0; 2 * i < d_model; ++i) {
            double freq = std::pow(10000.0, -(2.0 * static_cast<double>(i)) /
                                                static_cast<double>(d_model));
            double arg = static_cast<double>(pos) * freq;
            t.data[pos * d_model + 2 * i] = std::sin(arg);
            t.data[pos * d_model + 2 * i + 1] = std::cos(arg);
        }
    }
    return t;
}

}  // namespace trear
