#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "trear/error.hpp"

namespace trear {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << ", ";
        os << s[i];
    }
    os << ']';
    return os.str();
}

/// Persistent named parameter. Gradients accumulate across backward passes
/// until zero_grad(); the optimizer reads grad and writes value.
struct Variable {
    std::string name;
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;

    Variable(std::string n, Shape s)
        : name(std::move(n)), shape(std::move(s)),
          value(numel(shape), 0.0), grad(numel(shape), 0.0) {}
};

/// Ordered collection of uniquely named Variables with stable addresses.
class ParamStore {
public:
    Variable& create(const std::string& name, Shape shape) {
        if (index_.count(name))
            throw ContractError("parameter already exists: " + name);
        vars_.push_back(std::make_unique<Variable>(name, std::move(shape)));
        index_[name] = vars_.size() - 1;
        return *vars_.back();
    }

    bool has(const std::string& name) const { return index_.count(name) != 0; }

    Variable& get(const std::string& name) {
        auto it = index_.find(name);
        if (it == index_.end())
            throw ContractError("no such parameter: " + name);
        return *vars_[it->second];
    }

    const Variable& get(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end())
            throw ContractError("no such parameter: " + name);
        return *vars_[it->second];
    }

    void zero_grad() {
        for (auto& v : vars_)
            std::fill(v->grad.begin(), v->grad.end(), 0.0);
    }

    std::size_t size() const { return vars_.size(); }
    Variable& at(std::size_t i) { return *vars_[i]; }
    const Variable& at(std::size_t i) const { return *vars_[i]; }

private:
    std::vector<std::unique_ptr<Variable>> vars_;
    std::unordered_map<std::string, std::size_t> index_;
};

class Graph;

/// Lightweight handle to a node inside a Graph. Valid as long as the graph
/// lives; copying the handle does not copy data.
struct Tensor {
    Graph* g = nullptr;
    int id = -1;

    const Shape& shape() const;
    const std::vector<double>& value() const;
    /// Gradient of the last backward() w.r.t. this node. Empty if the node
    /// was not reached.
    const std::vector<double>& grad() const;
    double scalar() const;
};

/// Define-by-run computation tape. Built fresh for every forward pass;
/// backward() runs one reverse sweep and accumulates parameter gradients
/// into the bound Variables.
class Graph {
public:
    using BackFn = std::function<void(Graph&, int)>;

    struct Node {
        Shape shape;
        std::vector<double> value;
        std::vector<int> parents;
        BackFn back;
        Variable* var = nullptr;
    };

    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    /// Constant input node; no gradient flows out of the graph.
    Tensor leaf(Shape shape, std::vector<double> value) {
        if (value.size() != numel(shape))
            throw DimensionError("leaf: value size " + std::to_string(value.size()) +
                                 " does not match shape " + shape_str(shape));
        return push(Node{std::move(shape), std::move(value), {}, nullptr, nullptr});
    }

    Tensor leaf(Shape shape, double fill = 0.0) {
        std::vector<double> v(numel(shape), fill);
        return push(Node{std::move(shape), std::move(v), {}, nullptr, nullptr});
    }

    /// Binds a Variable into this graph. Repeated calls with the same
    /// Variable return the same node, so gradients from every use are summed
    /// exactly once into Variable::grad.
    Tensor param(Variable& v) {
        auto it = param_ids_.find(&v);
        if (it != param_ids_.end()) return Tensor{this, it->second};
        Tensor t = push(Node{v.shape, v.value, {}, nullptr, &v});
        param_ids_[&v] = t.id;
        return t;
    }

    Tensor make(Shape shape, std::vector<double> value,
                std::vector<int> parents, BackFn back) {
        if (value.size() != numel(shape))
            throw ContractError("make: value size does not match shape " + shape_str(shape));
        return push(Node{std::move(shape), std::move(value),
                         std::move(parents), std::move(back), nullptr});
    }

    const Node& node(int id) const { return nodes_[id]; }
    const std::vector<double>& val(int id) const { return nodes_[id].value; }
    const Shape& shape(int id) const { return nodes_[id].shape; }
    std::size_t size() const { return nodes_.size(); }

    /// Gradient buffer for a node, allocated to zeros on first touch.
    std::vector<double>& grad_buf(int id) {
        auto& g = grads_[id];
        if (g.empty()) g.assign(numel(nodes_[id].shape), 0.0);
        return g;
    }

    const std::vector<double>& grad_of(int id) const {
        static const std::vector<double> empty;
        if (id < 0 || static_cast<std::size_t>(id) >= grads_.size()) return empty;
        return grads_[id];
    }

    /// Reverse sweep from a scalar node. Accumulates into Variable::grad for
    /// every parameter reachable from `loss`.
    void backward(Tensor loss) {
        if (loss.g != this) throw ContractError("backward: tensor from another graph");
        if (numel(nodes_[loss.id].shape) != 1)
            throw ContractError("backward: loss must be scalar, got " +
                                shape_str(nodes_[loss.id].shape));
        grads_.assign(nodes_.size(), {});
        std::vector<char> reached(nodes_.size(), 0);
        std::vector<int> stack{loss.id};
        reached[loss.id] = 1;
        while (!stack.empty()) {
            int id = stack.back();
            stack.pop_back();
            for (int p : nodes_[id].parents) {
                if (!reached[p]) {
                    reached[p] = 1;
                    stack.push_back(p);
                }
            }
        }
        grad_buf(loss.id)[0] = 1.0;
        for (int id = loss.id; id >= 0; --id) {
            if (!reached[id] || grads_[id].empty()) continue;
            Node& n = nodes_[id];
            if (n.back) n.back(*this, id);
            if (n.var) {
                const auto& g = grads_[id];
                for (std::size_t i = 0; i < g.size(); ++i) n.var->grad[i] += g[i];
            }
        }
    }

private:
    Tensor push(Node n) {
        nodes_.push_back(std::move(n));
        return Tensor{this, static_cast<int>(nodes_.size()) - 1};
    }

    std::vector<Node> nodes_;
    std::vector<std::vector<double>> grads_;
    std::unordered_map<const Variable*, int> param_ids_;
};

inline const Shape& Tensor::shape() const { return g->shape(id); }
inline const std::vector<double>& Tensor::value() const { return g->val(id); }
inline const std::vector<double>& Tensor::grad() const { return g->grad_of(id); }
inline double Tensor::scalar() const {
    if (numel(shape()) != 1)
        throw DimensionError("scalar: tensor has shape " + shape_str(shape()));
    return value()[0];
}

namespace detail {

inline void same_graph(Tensor a, Tensor b, const char* op) {
    if (a.g == nullptr || a.g != b.g)
        throw ContractError(std::string(op) + ": tensors belong to different graphs");
}

inline void same_shape(Tensor a, Tensor b, const char* op) {
    if (a.shape() != b.shape())
        throw DimensionError(std::string(op) + ": shape mismatch " +
                             shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

inline void require_rank(Tensor a, std::size_t r, const char* op) {
    if (a.shape().size() != r)
        throw DimensionError(std::string(op) + ": expected rank " + std::to_string(r) +
                             ", got " + shape_str(a.shape()));
}

/// c[n,m] += a[n,k] * b[k,m], plain ikj loops.
inline void matmul_acc(const double* a, const double* b, double* c,
                       std::size_t n, std::size_t k, std::size_t m) {
    for (std::size_t i = 0; i < n; ++i) {
        const double* ai = a + i * k;
        double* ci = c + i * m;
        for (std::size_t kk = 0; kk < k; ++kk) {
            double av = ai[kk];
            if (av == 0.0) continue;
            const double* bk = b + kk * m;
            for (std::size_t j = 0; j < m; ++j) ci[j] += av * bk[j];
        }
    }
}

/// c[n,m] += a[n,k] * b[m,k]^T
inline void matmul_bt_acc(const double* a, const double* b, double* c,
                          std::size_t n, std::size_t k, std::size_t m) {
    for (std::size_t i = 0; i < n; ++i) {
        const double* ai = a + i * k;
        double* ci = c + i * m;
        for (std::size_t j = 0; j < m; ++j) {
            const double* bj = b + j * k;
            double s = 0.0;
            for (std::size_t kk = 0; kk < k; ++kk) s += ai[kk] * bj[kk];
            ci[j] += s;
        }
    }
}

/// c[k,m] += a[n,k]^T * b[n,m]
inline void matmul_at_acc(const double* a, const double* b, double* c,
                          std::size_t n, std::size_t k, std::size_t m) {
    for (std::size_t i = 0; i < n; ++i) {
        const double* ai = a + i * k;
        const double* bi = b + i * m;
        for (std::size_t kk = 0; kk < k; ++kk) {
            double av = ai[kk];
            if (av == 0.0) continue;
            double* ck = c + kk * m;
            for (std::size_t j = 0; j < m; ++j) ck[j] += av * bi[j];
        }
    }
}

}  // namespace detail

inline Tensor add(Tensor a, Tensor b) {
    detail::same_graph(a, b, "add");
    detail::same_shape(a, b, "add");
    const auto& av = a.value();
    const auto& bv = b.value();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] + bv[i];
    int pa = a.id, pb = b.id;
    return a.g->make(a.shape(), std::move(out), {pa, pb},
                     [pa, pb](Graph& g, int id) {
                         const auto& go = g.grad_buf(id);
                         auto& ga = g.grad_buf(pa);
                         auto& gb = g.grad_buf(pb);
                         for (std::size_t i = 0; i < go.size(); ++i) {
                             ga[i] += go[i];
                             gb[i] += go[i];
                         }
                     });
}

inline Tensor sub(Tensor a, Tensor b) {
    detail::same_graph(a, b, "sub");
    detail::same_shape(a, b, "sub");
    const auto& av = a.value();
    const auto& bv = b.value();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] - bv[i];
    int pa = a.id, pb = b.id;
    return a.g->make(a.shape(), std::move(out), {pa, pb},
                     [pa, pb](Graph& g, int id) {
                         const auto& go = g.grad_buf(id);
                         auto& ga = g.grad_buf(pa);
                         auto& gb = g.grad_buf(pb);
                         for (std::size_t i = 0; i < go.size(); ++i) {
                             ga[i] += go[i];
                             gb[i] -= go[i];
                         }
                     });
}

inline Tensor mul(Tensor a, Tensor b) {
    detail::same_graph(a, b, "mul");
    detail::same_shape(a, b, "mul");
    const auto& av = a.value();
    const auto& bv = b.value();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * bv[i];
    int pa = a.id, pb = b.id;
    return a.g->make(a.shape(), std::move(out), {pa, pb},
                     [pa, pb](Graph& g, int id) {
                         const auto& go = g.grad_buf(id);
                         const auto& av2 = g.val(pa);
                         const auto& bv2 = g.val(pb);
                         auto& ga = g.grad_buf(pa);
                         auto& gb = g.grad_buf(pb);
                         for (std::size_t i = 0; i < go.size(); ++i) {
                             ga[i] += go[i] * bv2[i];
                             gb[i] += go[i] * av2[i];
                         }
                     });
}

inline Tensor scale(Tensor a, double c) {
    const auto& av = a.value();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * c;
    int pa = a.id;
    return a.g->make(a.shape(), std::move(out), {pa},
                     [pa, c](Graph& g, int id) {
                         const auto& go = g.grad_buf(id);
                         auto& ga = g.grad_buf(pa);
                         for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * c;
                     });
}

/// Adds a length-d vector to every row of an [n, d] matrix.
inline Tensor add_row(Tensor a, Tensor r) {
    detail::same_graph(a, r, "add_row");
    detail::require_rank(a, 2, "add_row");
    detail::require_rank(r, 1, "add_row");
    std::size_t n = a.shape()[0], d = a.shape()[1];
    if (r.shape()[0] != d)
        throw DimensionError("add_row: matrix " + shape_str(a.shape()) +
                             " vs vector " + shape_str(r.shape()));
    const auto& av = a.value();
    const auto& rv = r.value();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) out[i * d + j] = av[i * d + j] + rv[j];
    int pa = a.id, pr = r.id;
    return a.g->make(a.shape(), std::move(out), {pa, pr},
                     [pa, pr, n, d](Graph& g, int id) {
                         const auto& go = g.grad_buf(id);
                         auto& ga = g.grad_buf(pa);
                         auto& gr = g.grad_buf(pr);
                         for (std::size_t i = 0; i < n; ++i)
                             for (std::size_t j = 0; j < d; ++j) {
                                 ga[i * d + j] += go[i * d + j];
                                 gr[j] += go[i * d + j];
                             }
                     });
}

inline Tensor matmul(Tensor a, Tensor b) {
    detail::same_graph(a, b, "matmul");
    detail::require_rank(a, 2, "matmul");
    detail::require_rank(b, 2, "matmul");
    std::size_t n = a.shape()[0], k = a.shape()[1];
    std::size_t k2 = b.shape()[0], m = b.shape()[1];
    if (k != k2)
        throw DimensionError("matmul: inner dimensions disagree, " +
                             shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    std::vector<double> out(n * m, 0.0);
    detail::matmul_acc(a.value().data(), b.value().data(), out.data(), n, k, m);
    int pa = a.id, pb = b.id;
    return a.g->make({n, m}, std::move(out), {pa, pb},
                     [pa, pb, n, k, m](Graph& g, int id) {
                         const auto& go = g.grad_buf(id);
                         // dA = dC * B^T, dB = A^T * dC
                         detail::matmul_bt_acc(go.data(), g.val(pb).data(),
                                               g.grad_buf(pa).data(), n, m, k);
                         detail::matmul_at_acc(g.val(pa).data(), go.data(),
                                               g.grad_buf(pb).data(), n, k, m);
                     });
}

inline Tensor transpose(Tensor a) {
    detail::require_rank(a, 2, "transpose");
    std::size_t n = a.shape()[0], m = a.shape()[1];
    const auto& av = a.value();
    std::vector<double> out(n * m);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) out[j * n + i] = av[i * m + j];
    int pa = a.id;
    return a.g->make({m, n}, std::move(out), {pa},
                     [pa, n, m](Graph& g, int id) {
                         const auto& go = g.grad_buf(id);
                         auto& ga = g.grad_buf(pa);
                         for (std::size_t i = 0; i < n; ++i)
                             for (std::size_t j = 0; j < m; ++j)
                                 ga[i * m + j] += go[j * n + i];
                     });
}

inline Tensor relu(Tensor a) {
    const auto& av = a.value();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] > 0.0 ? av[i] : 0.0;
    int pa = a.id;
    return a.g->make(a.shape(), std::move(out), {pa},
                     [pa](Graph& g, int id) {
                         const auto& go = g.grad_buf(id);
                         const auto& av2 = g.val(pa);
                         auto& ga = g.grad_buf(pa);
                         for (std::size_t i = 0; i < go.size(); ++i)
                             if (av2[i] > 0.0) ga[i] += go[i];
                     });
}

/// Columns [lo, hi) of an [n, d] matrix.
inline Tensor slice_cols(Tensor a, std::size_t lo, std::size_t hi) {
    detail::require_rank(a, 2, "slice_cols");
    std::size_t n = a.shape()[0], d = a.shape()[1];
    if (lo >= hi || hi > d)
        throw IndexError("slice_cols: range [" + std::to_string(lo) + ", " +
                         std::to_string(hi) + ") out of " + std::to_string(d) + " columns");
    std::size_t w = hi - lo;
    const auto& av = a.value();
    std::vector<double> out(n * w);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < w; ++j) out[i * w + j] = av[i * d + lo + j];
    int pa = a.id;
    return a.g->make({n, w}, std::move(out), {pa},
                     [pa, n, d, lo, w](Graph& g, int id) {
                         const auto& go = g.grad_buf(id);
                         auto& ga = g.grad_buf(pa);
                         for (std::size_t i = 0; i < n; ++i)
                             for (std::size_t j = 0; j < w; ++j)
                                 ga[i * d + lo + j] += go[i * w + j];
                     });
}

/// Horizontal concatenation of [n, d_i] matrices.
inline Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ContractError("concat_cols: no inputs");
    Graph* g = parts[0].g;
    std::size_t n = 0, total = 0;
    for (std::size_t p = 0; p < parts.size(); ++p) {
        detail::same_graph(parts[0], parts[p], "concat_cols");
        detail::require_rank(parts[p], 2, "concat_cols");
        if (p == 0) n = parts[p].shape()[0];
        else if (parts[p].shape()[0] != n)
            throw DimensionError("concat_cols: row counts disagree, " +
                                 shape_str(parts[0].shape()) + " vs " +
                                 shape_str(parts[p].shape()));
        total += parts[p].shape()[1];
    }
    std::vector<double> out(n * total);
    std::vector<int> pids;
    std::vector<std::size_t> widths;
    std::size_t off = 0;
    for (const Tensor& t : parts) {
        std::size_t w = t.shape()[1];
        const auto& tv = t.value();
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < w; ++j) out[i * total + off + j] = tv[i * w + j];
        pids.push_back(t.id);
        widths.push_back(w);
        off += w;
    }
    return g->make({n, total}, std::move(out), pids,
                   [pids, widths, n, total](Graph& gr, int id) {
                       const auto& go = gr.grad_buf(id);
                       std::size_t off2 = 0;
                       for (std::size_t p = 0; p < pids.size(); ++p) {
                           auto& gp = gr.grad_buf(pids[p]);
                           std::size_t w = widths[p];
                           for (std::size_t i = 0; i < n; ++i)
                               for (std::size_t j = 0; j < w; ++j)
                                   gp[i * w + j] += go[i * total + off2 + j];
                           off2 += w;
                       }
                   });
}

/// Stacks k length-d vectors into a [k, d] matrix.
inline Tensor stack_rows(const std::vector<Tensor>& rows) {
    if (rows.empty()) throw ContractError("stack_rows: no inputs");
    Graph* g = rows[0].g;
    detail::require_rank(rows[0], 1, "stack_rows");
    std::size_t d = rows[0].shape()[0];
    std::size_t k = rows.size();
    std::vector<double> out(k * d);
    std::vector<int> pids;
    for (std::size_t i = 0; i < k; ++i) {
        detail::same_graph(rows[0], rows[i], "stack_rows");
        detail::require_rank(rows[i], 1, "stack_rows");
        if (rows[i].shape()[0] != d)
            throw DimensionError("stack_rows: lengths disagree, " +
                                 shape_str(rows[0].shape()) + " vs " +
                                 shape_str(rows[i].shape()));
        const auto& rv = rows[i].value();
        for (std::size_t j = 0; j < d; ++j) out[i * d + j] = rv[j];
        pids.push_back(rows[i].id);
    }
    return g->make({k, d}, std::move(out), pids,
                   [pids, d](Graph& gr, int id) {
                       const auto& go = gr.grad_buf(id);
                       for (std::size_t i = 0; i < pids.size(); ++i) {
                           auto& gp = gr.grad_buf(pids[i]);
                           for (std::size_t j = 0; j < d; ++j) gp[j] += go[i * d + j];
                       }
                   });
}

/// Mean over rows: [n, d] -> length-d vector.
inline Tensor mean_rows(Tensor a) {
    detail::require_rank(a, 2, "mean_rows");
    std::size_t n = a.shape()[0], d = a.shape()[1];
    const auto& av = a.value();
    std::vector<double> out(d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) out[j] += av[i * d + j];
    for (std::size_t j = 0; j < d; ++j) out[j] /= static_cast<double>(n);
    int pa = a.id;
    return a.g->make({d}, std::move(out), {pa},
                     [pa, n, d](Graph& g, int id) {
                         const auto& go = g.grad_buf(id);
                         auto& ga = g.grad_buf(pa);
                         double inv = 1.0 / static_cast<double>(n);
                         for (std::size_t i = 0; i < n; ++i)
                             for (std::size_t j = 0; j < d; ++j)
                                 ga[i * d + j] += go[j] * inv;
                     });
}

/// Same data, new shape; numel must match.
inline Tensor reshape(Tensor a, Shape shape) {
    if (numel(shape) != numel(a.shape()))
        throw DimensionError("reshape: " + shape_str(a.shape()) + " to " +
                             shape_str(shape) + " changes element count");
    int pa = a.id;
    return a.g->make(std::move(shape), a.value(), {pa},
                     [pa](Graph& g, int id) {
                         const auto& go = g.grad_buf(id);
                         auto& ga = g.grad_buf(pa);
                         for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
                     });
}

inline Tensor sum_all(Tensor a) {
    const auto& av = a.value();
    double s = 0.0;
    for (double v : av) s += v;
    int pa = a.id;
    return a.g->make({}, {s}, {pa},
                     [pa](Graph& g, int id) {
                         double go = g.grad_buf(id)[0];
                         auto& ga = g.grad_buf(pa);
                         for (double& v : ga) v += go;
                     });
}

}  // namespace trear
