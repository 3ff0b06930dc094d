#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "trear/rng.hpp"
#include "trear/tensor.hpp"

namespace trear {

/// Softmax over one axis of an [n, m] matrix with max subtraction.
/// axis 1 normalizes each row, axis 0 each column.
inline Tensor softmax(Tensor a, int axis = 1) {
    detail::require_rank(a, 2, "softmax");
    if (axis != 0 && axis != 1)
        throw ParameterError("softmax: axis must be 0 or 1, got " + std::to_string(axis));
    std::size_t n = a.shape()[0], m = a.shape()[1];
    // Walk `lanes` slices of length `len`, stepping `stride` inside a slice.
    std::size_t lanes = axis == 1 ? n : m;
    std::size_t len = axis == 1 ? m : n;
    std::size_t lane_step = axis == 1 ? m : 1;
    std::size_t stride = axis == 1 ? 1 : m;
    const auto& av = a.value();
    std::vector<double> out(av.size());
    for (std::size_t l = 0; l < lanes; ++l) {
        std::size_t base = l * lane_step;
        double mx = av[base];
        for (std::size_t i = 1; i < len; ++i)
            mx = std::max(mx, av[base + i * stride]);
        double z = 0.0;
        for (std::size_t i = 0; i < len; ++i) {
            double e = std::exp(av[base + i * stride] - mx);
            out[base + i * stride] = e;
            z += e;
        }
        for (std::size_t i = 0; i < len; ++i) out[base + i * stride] /= z;
    }
    int pa = a.id;
    return a.g->make(a.shape(), std::move(out), {pa},
                     [pa, lanes, len, lane_step, stride](Graph& g, int id) {
                         const auto& y = g.val(id);
                         const auto& go = g.grad_buf(id);
                         auto& ga = g.grad_buf(pa);
                         for (std::size_t l = 0; l < lanes; ++l) {
                             std::size_t base = l * lane_step;
                             double dot = 0.0;
                             for (std::size_t i = 0; i < len; ++i) {
                                 std::size_t ix = base + i * stride;
                                 dot += go[ix] * y[ix];
                             }
                             for (std::size_t i = 0; i < len; ++i) {
                                 std::size_t ix = base + i * stride;
                                 ga[ix] += y[ix] * (go[ix] - dot);
                             }
                         }
                     });
}

/// Per-row layer normalization of an [n, d] matrix with a learned affine.
/// gamma and beta are length-d vectors. The tiny default eps keeps the
/// normalized rows at unit variance to near machine precision while still
/// mapping constant rows to zero.
inline Tensor layer_norm(Tensor a, Tensor gamma, Tensor beta, double eps = 1e-12) {
    detail::same_graph(a, gamma, "layer_norm");
    detail::same_graph(a, beta, "layer_norm");
    detail::require_rank(a, 2, "layer_norm");
    detail::require_rank(gamma, 1, "layer_norm");
    detail::require_rank(beta, 1, "layer_norm");
    if (eps < 0.0)
        throw ParameterError("layer_norm: eps must be non-negative");
    std::size_t n = a.shape()[0], d = a.shape()[1];
    if (gamma.shape()[0] != d || beta.shape()[0] != d)
        throw DimensionError("layer_norm: input " + shape_str(a.shape()) +
                             " vs gamma " + shape_str(gamma.shape()) +
                             " vs beta " + shape_str(beta.shape()));
    const auto& av = a.value();
    const auto& gv = gamma.value();
    const auto& bv = beta.value();
    std::vector<double> out(av.size());
    // Saved per row for backward: mean and 1/sqrt(var + eps).
    auto stats = std::make_shared<std::vector<double>>(2 * n);
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = av.data() + i * d;
        double mean = 0.0;
        for (std::size_t j = 0; j < d; ++j) mean += row[j];
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            double c = row[j] - mean;
            var += c * c;
        }
        var /= static_cast<double>(d);
        double inv = 1.0 / std::sqrt(var + eps);
        (*stats)[2 * i] = mean;
        (*stats)[2 * i + 1] = inv;
        for (std::size_t j = 0; j < d; ++j)
            out[i * d + j] = gv[j] * (row[j] - mean) * inv + bv[j];
    }
    int pa = a.id, pg = gamma.id, pb = beta.id;
    return a.g->make(a.shape(), std::move(out), {pa, pg, pb},
                     [pa, pg, pb, n, d, stats](Graph& g, int id) {
                         const auto& go = g.grad_buf(id);
                         const auto& av2 = g.val(pa);
                         const auto& gv2 = g.val(pg);
                         auto& ga = g.grad_buf(pa);
                         auto& gg = g.grad_buf(pg);
                         auto& gb = g.grad_buf(pb);
                         for (std::size_t i = 0; i < n; ++i) {
                             double mean = (*stats)[2 * i];
                             double inv = (*stats)[2 * i + 1];
                             const double* row = av2.data() + i * d;
                             const double* gr = go.data() + i * d;
                             double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
                             for (std::size_t j = 0; j < d; ++j) {
                                 double xhat = (row[j] - mean) * inv;
                                 double dxhat = gr[j] * gv2[j];
                                 gg[j] += gr[j] * xhat;
                                 gb[j] += gr[j];
                                 sum_dxhat += dxhat;
                                 sum_dxhat_xhat += dxhat * xhat;
                             }
                             double invd = 1.0 / static_cast<double>(d);
                             for (std::size_t j = 0; j < d; ++j) {
                                 double xhat = (row[j] - mean) * inv;
                                 double dxhat = gr[j] * gv2[j];
                                 ga[i * d + j] += inv * (dxhat - invd * sum_dxhat -
                                                         xhat * invd * sum_dxhat_xhat);
                             }
                         }
                     });
}

/// Inverted dropout. Training mode zeroes each element with probability p
/// and scales survivors by 1/(1-p), so the expected value is unchanged and
/// evaluation is the identity (the input handle is returned as-is). Draws
/// exactly numel values from the stream in training mode with p > 0.
inline Tensor dropout(Tensor a, double p, RngStream& stream, bool training) {
    if (p < 0.0 || p >= 1.0)
        throw ParameterError("dropout: p must be in [0, 1), got " + std::to_string(p));
    if (!training || p == 0.0) return a;
    const auto& av = a.value();
    double keep_scale = 1.0 / (1.0 - p);
    auto mask = std::make_shared<std::vector<double>>(av.size());
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) {
        double m = stream.next_double() >= p ? keep_scale : 0.0;
        (*mask)[i] = m;
        out[i] = av[i] * m;
    }
    int pa = a.id;
    return a.g->make(a.shape(), std::move(out), {pa},
                     [pa, mask](Graph& g, int id) {
                         const auto& go = g.grad_buf(id);
                         auto& ga = g.grad_buf(pa);
                         for (std::size_t i = 0; i < go.size(); ++i)
                             ga[i] += go[i] * (*mask)[i];
                     });
}

/// Mean cross entropy of [n, c] logits against n integer labels,
/// computed through log-sum-exp. Returns a scalar.
inline Tensor cross_entropy(Tensor logits, const std::vector<int>& labels) {
    detail::require_rank(logits, 2, "cross_entropy");
    std::size_t n = logits.shape()[0], c = logits.shape()[1];
    if (labels.size() != n)
        throw DimensionError("cross_entropy: " + std::to_string(labels.size()) +
                             " labels for " + std::to_string(n) + " rows");
    for (int y : labels)
        if (y < 0 || static_cast<std::size_t>(y) >= c)
            throw IndexError("cross_entropy: label " + std::to_string(y) +
                             " out of range for " + std::to_string(c) + " classes");
    const auto& zv = logits.value();
    // Save softmax probabilities for backward.
    auto probs = std::make_shared<std::vector<double>>(zv.size());
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = zv.data() + i * c;
        double mx = row[0];
        for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
        double z = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            double e = std::exp(row[j] - mx);
            (*probs)[i * c + j] = e;
            z += e;
        }
        for (std::size_t j = 0; j < c; ++j) (*probs)[i * c + j] /= z;
        loss += mx + std::log(z) - row[labels[i]];
    }
    loss /= static_cast<double>(n);
    int pz = logits.id;
    auto lab = std::make_shared<std::vector<int>>(labels);
    return logits.g->make({}, {loss}, {pz},
                          [pz, n, c, probs, lab](Graph& g, int id) {
                              double go = g.grad_buf(id)[0];
                              auto& gz = g.grad_buf(pz);
                              double inv = go / static_cast<double>(n);
                              for (std::size_t i = 0; i < n; ++i) {
                                  for (std::size_t j = 0; j < c; ++j)
                                      gz[i * c + j] += inv * (*probs)[i * c + j];
                                  gz[i * c + (*lab)[i]] -= inv;
                              }
                          });
}

/// Single-sample form: length-C logits against one label.
inline Tensor cross_entropy(Tensor logits, int label) {
    detail::require_rank(logits, 1, "cross_entropy");
    return cross_entropy(reshape(logits, {1, logits.shape()[0]}),
                         std::vector<int>{label});
}

/// Mean negative log likelihood of [n, c] class probabilities (already
/// normalized, e.g. frame-averaged softmax outputs) against n labels.
inline Tensor nll_from_probs(Tensor probs, const std::vector<int>& labels) {
    detail::require_rank(probs, 2, "nll_from_probs");
    std::size_t n = probs.shape()[0], c = probs.shape()[1];
    if (labels.size() != n)
        throw DimensionError("nll_from_probs: " + std::to_string(labels.size()) +
                             " labels for " + std::to_string(n) + " rows");
    for (int y : labels)
        if (y < 0 || static_cast<std::size_t>(y) >= c)
            throw IndexError("nll_from_probs: label " + std::to_string(y) +
                             " out of range for " + std::to_string(c) + " classes");
    const auto& pv = probs.value();
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double p = pv[i * c + labels[i]];
        if (!(p > 0.0))
            throw DataError("nll_from_probs: non-positive probability " +
                            std::to_string(p) + " at row " + std::to_string(i));
        loss -= std::log(p);
    }
    loss /= static_cast<double>(n);
    int pp = probs.id;
    auto lab = std::make_shared<std::vector<int>>(labels);
    return probs.g->make({}, {loss}, {pp},
                         [pp, n, c, lab](Graph& g, int id) {
                             double go = g.grad_buf(id)[0];
                             const auto& pv2 = g.val(pp);
                             auto& gp = g.grad_buf(pp);
                             for (std::size_t i = 0; i < n; ++i) {
                                 std::size_t ix = i * c + (*lab)[i];
                                 gp[ix] -= go / (static_cast<double>(n) * pv2[ix]);
                             }
                         });
}

/// 2-D convolution of a [C_in, H, W] input with [C_out, C_in, KH, KW]
/// weights and a length-C_out bias. Zero padding.
inline Tensor conv2d(Tensor x, Tensor w, Tensor b,
                     std::size_t stride = 2, std::size_t pad = 1) {
    detail::same_graph(x, w, "conv2d");
    detail::same_graph(x, b, "conv2d");
    detail::require_rank(x, 3, "conv2d");
    if (w.shape().size() != 4)
        throw DimensionError("conv2d: weight must be rank 4, got " + shape_str(w.shape()));
    detail::require_rank(b, 1, "conv2d");
    if (stride == 0) throw ParameterError("conv2d: stride must be positive");
    std::size_t ci = x.shape()[0], h = x.shape()[1], wd = x.shape()[2];
    std::size_t co = w.shape()[0], kh = w.shape()[2], kw = w.shape()[3];
    if (w.shape()[1] != ci)
        throw DimensionError("conv2d: input channels " + shape_str(x.shape()) +
                             " vs weight " + shape_str(w.shape()));
    if (b.shape()[0] != co)
        throw DimensionError("conv2d: bias " + shape_str(b.shape()) +
                             " vs weight " + shape_str(w.shape()));
    if (h + 2 * pad < kh || wd + 2 * pad < kw)
        throw DimensionError("conv2d: kernel larger than padded input");
    std::size_t oh = (h + 2 * pad - kh) / stride + 1;
    std::size_t ow = (wd + 2 * pad - kw) / stride + 1;
    const auto& xv = x.value();
    const auto& wv = w.value();
    const auto& bv = b.value();
    std::vector<double> out(co * oh * ow);
    for (std::size_t oc = 0; oc < co; ++oc)
        for (std::size_t oy = 0; oy < oh; ++oy)
            for (std::size_t ox = 0; ox < ow; ++ox) {
                double acc = bv[oc];
                for (std::size_t ic = 0; ic < ci; ++ic)
                    for (std::size_t ky = 0; ky < kh; ++ky) {
                        std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) -
                                            static_cast<std::ptrdiff_t>(pad);
                        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                        for (std::size_t kx = 0; kx < kw; ++kx) {
                            std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) -
                                                static_cast<std::ptrdiff_t>(pad);
                            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(wd)) continue;
                            acc += xv[(ic * h + iy) * wd + ix] *
                                   wv[((oc * ci + ic) * kh + ky) * kw + kx];
                        }
                    }
                out[(oc * oh + oy) * ow + ox] = acc;
            }
    int px = x.id, pw = w.id, pb = b.id;
    return x.g->make({co, oh, ow}, std::move(out), {px, pw, pb},
                     [px, pw, pb, ci, h, wd, co, kh, kw, oh, ow, stride, pad](Graph& g, int id) {
                         const auto& go = g.grad_buf(id);
                         const auto& xv2 = g.val(px);
                         const auto& wv2 = g.val(pw);
                         auto& gx = g.grad_buf(px);
                         auto& gw = g.grad_buf(pw);
                         auto& gb = g.grad_buf(pb);
                         for (std::size_t oc = 0; oc < co; ++oc)
                             for (std::size_t oy = 0; oy < oh; ++oy)
                                 for (std::size_t ox = 0; ox < ow; ++ox) {
                                     double gout = go[(oc * oh + oy) * ow + ox];
                                     if (gout == 0.0) continue;
                                     gb[oc] += gout;
                                     for (std::size_t ic = 0; ic < ci; ++ic)
                                         for (std::size_t ky = 0; ky < kh; ++ky) {
                                             std::ptrdiff_t iy =
                                                 static_cast<std::ptrdiff_t>(oy * stride + ky) -
                                                 static_cast<std::ptrdiff_t>(pad);
                                             if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h))
                                                 continue;
                                             for (std::size_t kx = 0; kx < kw; ++kx) {
                                                 std::ptrdiff_t ix =
                                                     static_cast<std::ptrdiff_t>(ox * stride + kx) -
                                                     static_cast<std::ptrdiff_t>(pad);
                                                 if (ix < 0 ||
                                                     ix >= static_cast<std::ptrdiff_t>(wd))
                                                     continue;
                                                 std::size_t xi = (ic * h + iy) * wd + ix;
                                                 std::size_t wi =
                                                     ((oc * ci + ic) * kh + ky) * kw + kx;
                                                 gx[xi] += gout * wv2[wi];
                                                 gw[wi] += gout * xv2[xi];
                                             }
                                         }
                                 }
                     });
}

/// Mean over the spatial extent of a [C, H, W] tensor, giving a length-C vector.
inline Tensor global_avg_pool(Tensor x) {
    detail::require_rank(x, 3, "global_avg_pool");
    std::size_t c = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
    std::size_t hw = h * w;
    const auto& xv = x.value();
    std::vector<double> out(c, 0.0);
    for (std::size_t ch = 0; ch < c; ++ch) {
        double s = 0.0;
        for (std::size_t i = 0; i < hw; ++i) s += xv[ch * hw + i];
        out[ch] = s / static_cast<double>(hw);
    }
    int px = x.id;
    return x.g->make({c}, std::move(out), {px},
                     [px, c, hw](Graph& g, int id) {
                         const auto& go = g.grad_buf(id);
                         auto& gx = g.grad_buf(px);
                         double inv = 1.0 / static_cast<double>(hw);
                         for (std::size_t ch = 0; ch < c; ++ch)
                             for (std::size_t i = 0; i < hw; ++i)
                                 gx[ch * hw + i] += go[ch] * inv;
                     });
}

}  // namespace trear
