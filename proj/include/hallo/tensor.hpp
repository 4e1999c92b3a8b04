#pragma once

#include <algorithm>
#include <cstring>
#include <functional>
#include <memory>
#include <optional>
#include <unordered_set>

#include "hallo/core.hpp"

namespace hallo {

namespace detail {

struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    // Propagates this node's grad into parents' grads.
    std::function<void(Node&)> backprop;

    Node(Shape s, std::vector<double> v, bool rg)
        : shape(std::move(s)), value(std::move(v)), requires_grad(rg) {
        MemStats::add(std::int64_t(value.capacity() * sizeof(double)));
    }
    ~Node() {
        MemStats::sub(std::int64_t((value.capacity() + grad.capacity()) * sizeof(double)));
    }
    Node(const Node&) = delete;
    Node& operator=(const Node&) = delete;

    void ensure_grad() {
        if (grad.size() != value.size()) {
            grad.assign(value.size(), 0.0);
            MemStats::add(std::int64_t(grad.capacity() * sizeof(double)));
        }
    }
};

}  // namespace detail

// Dense 64-bit tensor with reverse-mode autodiff. Value semantics over a
// shared node: copies alias the same storage and tape entry.
class Tensor {
public:
    Tensor() = default;

    Tensor(Shape shape, std::vector<double> data, bool requires_grad = false) {
        require(numel(shape) == data.size(),
                "tensor: shape " + shape_str(shape) + " does not match data length " +
                    std::to_string(data.size()));
        node_ = std::make_shared<detail::Node>(std::move(shape), std::move(data), requires_grad);
    }

    static Tensor full(Shape shape, double v, bool requires_grad = false) {
        std::vector<double> d(numel(shape), v);
        return Tensor(std::move(shape), std::move(d), requires_grad);
    }
    static Tensor zeros(Shape shape, bool requires_grad = false) {
        return full(std::move(shape), 0.0, requires_grad);
    }
    static Tensor ones(Shape shape, bool requires_grad = false) {
        return full(std::move(shape), 1.0, requires_grad);
    }
    static Tensor scalar(double v, bool requires_grad = false) {
        return Tensor({1}, {v}, requires_grad);
    }
    static Tensor randn(Shape shape, Rng& rng, double stddev = 1.0, bool requires_grad = false) {
        std::vector<double> d(numel(shape));
        for (double& x : d) x = stddev * rng.normal();
        return Tensor(std::move(shape), std::move(d), requires_grad);
    }

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    std::size_t size() const { return node_->value.size(); }
    std::size_t extent(std::size_t axis) const { return node_->shape[axis]; }
    std::size_t rank() const { return node_->shape.size(); }

    const std::vector<double>& data() const { return node_->value; }
    std::vector<double>& mutable_data() { return node_->value; }
    double item() const {
        require(size() == 1, "item: tensor " + shape_str(shape()) + " is not scalar");
        return node_->value[0];
    }
    double operator[](std::size_t i) const { return node_->value[i]; }

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool rg) { node_->requires_grad = rg; }

    const std::vector<double>& grad() const {
        node_->ensure_grad();
        return node_->grad;
    }
    void zero_grad() {
        node_->ensure_grad();
        std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
    }

    bool all_finite() const {
        for (double v : node_->value)
            if (!std::isfinite(v)) return false;
        return true;
    }

    // Detached copy: same values, no tape history.
    Tensor detach(bool requires_grad = false) const {
        return Tensor(node_->shape, node_->value, requires_grad);
    }

    // Reverse-mode accumulation from a scalar loss.
    void backward() const {
        require(size() == 1, "backward: loss must be scalar, got " + shape_str(shape()));
        std::vector<detail::Node*> order;
        std::unordered_set<detail::Node*> seen;
        topo(node_.get(), seen, order);
        node_->ensure_grad();
        node_->grad[0] = 1.0;
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            if ((*it)->backprop) (*it)->backprop(**it);
        }
    }

    std::shared_ptr<detail::Node> node() const { return node_; }

    static Tensor from_node(std::shared_ptr<detail::Node> n) {
        Tensor t;
        t.node_ = std::move(n);
        return t;
    }

private:
    static void topo(detail::Node* n, std::unordered_set<detail::Node*>& seen,
                     std::vector<detail::Node*>& order) {
        // Iterative DFS; graphs can be deep for long training compositions.
        struct Frame {
            detail::Node* node;
            std::size_t next;
        };
        if (seen.count(n)) return;
        std::vector<Frame> stack{{n, 0}};
        seen.insert(n);
        while (!stack.empty()) {
            Frame& f = stack.back();
            if (f.next < f.node->parents.size()) {
                detail::Node* p = f.node->parents[f.next++].get();
                if (!seen.count(p)) {
                    seen.insert(p);
                    stack.push_back({p, 0});
                }
            } else {
                order.push_back(f.node);
                stack.pop_back();
            }
        }
    }

    std::shared_ptr<detail::Node> node_;
};

namespace detail {

inline Tensor make_op(Shape shape, std::vector<double> value,
                      std::vector<Tensor> inputs,
                      std::function<void(Node&)> backprop) {
    bool rg = false;
    for (const Tensor& t : inputs) rg = rg || t.requires_grad();
    Tensor out(std::move(shape), std::move(value), rg);
    if (rg) {
        auto n = out.node();
        for (const Tensor& t : inputs) n->parents.push_back(t.node());
        n->backprop = std::move(backprop);
        for (auto& p : n->parents) p->ensure_grad();
    }
    return out;
}

}  // namespace detail

// ---- elementwise ----

inline Tensor add(const Tensor& a, const Tensor& b) {
    require(a.shape() == b.shape(),
            "add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    std::vector<double> v(a.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] + b[i];
    auto an = a.node(), bn = b.node();
    return detail::make_op(a.shape(), std::move(v), {a, b}, [an, bn](detail::Node& o) {
        if (an->requires_grad)
            for (std::size_t i = 0; i < o.grad.size(); ++i) an->grad[i] += o.grad[i];
        if (bn->requires_grad)
            for (std::size_t i = 0; i < o.grad.size(); ++i) bn->grad[i] += o.grad[i];
    });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    require(a.shape() == b.shape(),
            "sub: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    std::vector<double> v(a.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] - b[i];
    auto an = a.node(), bn = b.node();
    return detail::make_op(a.shape(), std::move(v), {a, b}, [an, bn](detail::Node& o) {
        if (an->requires_grad)
            for (std::size_t i = 0; i < o.grad.size(); ++i) an->grad[i] += o.grad[i];
        if (bn->requires_grad)
            for (std::size_t i = 0; i < o.grad.size(); ++i) bn->grad[i] -= o.grad[i];
    });
}

inline Tensor scale(const Tensor& a, double s) {
    std::vector<double> v(a.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = s * a[i];
    auto an = a.node();
    return detail::make_op(a.shape(), std::move(v), {a}, [an, s](detail::Node& o) {
        if (an->requires_grad)
            for (std::size_t i = 0; i < o.grad.size(); ++i) an->grad[i] += s * o.grad[i];
    });
}

// Elementwise product. Besides equal shapes, supports the single documented
// mask broadcasts: a[m,n] with b[m] (mask over rows, broadcast along the
// feature axis) and a[C,H,W] with b[H,W] (spatial mask over channels).
inline Tensor hadamard(const Tensor& a, const Tensor& b) {
    if (a.shape() == b.shape()) {
        std::vector<double> v(a.size());
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] * b[i];
        auto an = a.node(), bn = b.node();
        return detail::make_op(a.shape(), std::move(v), {a, b}, [an, bn](detail::Node& o) {
            if (an->requires_grad)
                for (std::size_t i = 0; i < o.grad.size(); ++i)
                    an->grad[i] += o.grad[i] * bn->value[i];
            if (bn->requires_grad)
                for (std::size_t i = 0; i < o.grad.size(); ++i)
                    bn->grad[i] += o.grad[i] * an->value[i];
        });
    }
    if (a.rank() == 2 && b.rank() == 1 && a.extent(0) == b.extent(0)) {
        std::size_t m = a.extent(0), n = a.extent(1);
        std::vector<double> v(a.size());
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) v[i * n + j] = a[i * n + j] * b[i];
        auto an = a.node(), bn = b.node();
        return detail::make_op(a.shape(), std::move(v), {a, b}, [an, bn, m, n](detail::Node& o) {
            if (an->requires_grad)
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j)
                        an->grad[i * n + j] += o.grad[i * n + j] * bn->value[i];
            if (bn->requires_grad)
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j)
                        bn->grad[i] += o.grad[i * n + j] * an->value[i * n + j];
        });
    }
    if (a.rank() == 3 && b.rank() == 2 && a.extent(1) == b.extent(0) &&
        a.extent(2) == b.extent(1)) {
        std::size_t c = a.extent(0), hw = a.extent(1) * a.extent(2);
        std::vector<double> v(a.size());
        for (std::size_t k = 0; k < c; ++k)
            for (std::size_t i = 0; i < hw; ++i) v[k * hw + i] = a[k * hw + i] * b[i];
        auto an = a.node(), bn = b.node();
        return detail::make_op(a.shape(), std::move(v), {a, b}, [an, bn, c, hw](detail::Node& o) {
            if (an->requires_grad)
                for (std::size_t k = 0; k < c; ++k)
                    for (std::size_t i = 0; i < hw; ++i)
                        an->grad[k * hw + i] += o.grad[k * hw + i] * bn->value[i];
            if (bn->requires_grad)
                for (std::size_t k = 0; k < c; ++k)
                    for (std::size_t i = 0; i < hw; ++i)
                        bn->grad[i] += o.grad[k * hw + i] * an->value[k * hw + i];
        });
    }
    fail("hadamard: incompatible shapes " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

inline Tensor relu(const Tensor& a) {
    std::vector<double> v(a.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] > 0.0 ? a[i] : 0.0;
    auto an = a.node();
    return detail::make_op(a.shape(), std::move(v), {a}, [an](detail::Node& o) {
        if (an->requires_grad)
            for (std::size_t i = 0; i < o.grad.size(); ++i)
                if (an->value[i] > 0.0) an->grad[i] += o.grad[i];
    });
}

// clamp to [0,1]; gradient passes through inside the closed interval
inline Tensor clamp01(const Tensor& a) {
    std::vector<double> v(a.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::clamp(a[i], 0.0, 1.0);
    auto an = a.node();
    return detail::make_op(a.shape(), std::move(v), {a}, [an](detail::Node& o) {
        if (an->requires_grad)
            for (std::size_t i = 0; i < o.grad.size(); ++i)
                if (an->value[i] >= 0.0 && an->value[i] <= 1.0) an->grad[i] += o.grad[i];
    });
}

// ---- reductions ----

inline Tensor sum(const Tensor& a) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i];
    auto an = a.node();
    return detail::make_op({1}, {s}, {a}, [an](detail::Node& o) {
        if (an->requires_grad)
            for (double& g : an->grad) g += o.grad[0];
    });
}

inline Tensor mean(const Tensor& a) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i];
    double inv = 1.0 / double(a.size());
    auto an = a.node();
    return detail::make_op({1}, {s * inv}, {a}, [an, inv](detail::Node& o) {
        if (an->requires_grad)
            for (double& g : an->grad) g += inv * o.grad[0];
    });
}

// ---- structure ----

inline Tensor reshape(const Tensor& a, Shape shape) {
    require(numel(shape) == a.size(),
            "reshape: " + shape_str(a.shape()) + " -> " + shape_str(shape) + " changes size");
    auto an = a.node();
    return detail::make_op(std::move(shape), a.data(), {a}, [an](detail::Node& o) {
        if (an->requires_grad)
            for (std::size_t i = 0; i < o.grad.size(); ++i) an->grad[i] += o.grad[i];
    });
}

inline Tensor transpose(const Tensor& a) {
    require(a.rank() == 2, "transpose: need rank-2 tensor, got " + shape_str(a.shape()));
    std::size_t m = a.extent(0), n = a.extent(1);
    std::vector<double> v(a.size());
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) v[j * m + i] = a[i * n + j];
    auto an = a.node();
    return detail::make_op({n, m}, std::move(v), {a}, [an, m, n](detail::Node& o) {
        if (an->requires_grad)
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) an->grad[i * n + j] += o.grad[j * m + i];
    });
}

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    require(a.rank() == 2 && b.rank() == 2 && a.extent(1) == b.extent(0),
            "matmul: shape mismatch " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    std::size_t m = a.extent(0), k = a.extent(1), n = b.extent(1);
    std::vector<double> v(m * n, 0.0);
    const double* pa = a.data().data();
    const double* pb = b.data().data();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
            double aip = pa[i * k + p];
            if (aip == 0.0) continue;
            const double* brow = pb + p * n;
            double* vrow = v.data() + i * n;
            for (std::size_t j = 0; j < n; ++j) vrow[j] += aip * brow[j];
        }
    auto an = a.node(), bn = b.node();
    return detail::make_op({m, n}, std::move(v), {a, b}, [an, bn, m, k, n](detail::Node& o) {
        if (an->requires_grad) {
            // dA = dC * B^T
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    double acc = 0.0;
                    const double* grow = o.grad.data() + i * n;
                    const double* brow = bn->value.data() + p * n;
                    for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
                    an->grad[i * k + p] += acc;
                }
        }
        if (bn->requires_grad) {
            // dB = A^T * dC
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    double aip = an->value[i * k + p];
                    if (aip == 0.0) continue;
                    const double* grow = o.grad.data() + i * n;
                    double* brow = bn->grad.data() + p * n;
                    for (std::size_t j = 0; j < n; ++j) brow[j] += aip * grow[j];
                }
        }
    });
}

inline Tensor softmax_rows(const Tensor& x) {
    require(x.rank() == 2, "softmax_rows: need rank-2 tensor, got " + shape_str(x.shape()));
    std::size_t m = x.extent(0), n = x.extent(1);
    std::vector<double> v(x.size());
    for (std::size_t i = 0; i < m; ++i) {
        double mx = x[i * n];
        for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, x[i * n + j]);
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            v[i * n + j] = std::exp(x[i * n + j] - mx);
            s += v[i * n + j];
        }
        double inv = 1.0 / s;
        for (std::size_t j = 0; j < n; ++j) v[i * n + j] *= inv;
    }
    auto xn = x.node();
    return detail::make_op({m, n}, std::move(v), {x}, [xn, m, n](detail::Node& o) {
        if (!xn->requires_grad) return;
        for (std::size_t i = 0; i < m; ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < n; ++j) dot += o.grad[i * n + j] * o.value[i * n + j];
            for (std::size_t j = 0; j < n; ++j)
                xn->grad[i * n + j] += o.value[i * n + j] * (o.grad[i * n + j] - dot);
        }
    });
}

inline Tensor slice_rows(const Tensor& a, std::size_t r0, std::size_t r1) {
    require(a.rank() == 2 && r0 < r1 && r1 <= a.extent(0),
            "slice_rows: bad range [" + std::to_string(r0) + "," + std::to_string(r1) +
                ") for " + shape_str(a.shape()));
    std::size_t n = a.extent(1);
    std::vector<double> v(a.data().begin() + std::ptrdiff_t(r0 * n),
                          a.data().begin() + std::ptrdiff_t(r1 * n));
    auto an = a.node();
    return detail::make_op({r1 - r0, n}, std::move(v), {a}, [an, r0, n](detail::Node& o) {
        if (an->requires_grad)
            for (std::size_t i = 0; i < o.grad.size(); ++i) an->grad[r0 * n + i] += o.grad[i];
    });
}

// Row gather with repetition allowed; backward scatter-adds.
inline Tensor gather_rows(const Tensor& a, const std::vector<std::size_t>& idx) {
    require(a.rank() == 2, "gather_rows: need rank-2 tensor, got " + shape_str(a.shape()));
    std::size_t n = a.extent(1);
    std::vector<double> v(idx.size() * n);
    for (std::size_t i = 0; i < idx.size(); ++i) {
        require(idx[i] < a.extent(0), "gather_rows: index out of range");
        std::memcpy(v.data() + i * n, a.data().data() + idx[i] * n, n * sizeof(double));
    }
    auto an = a.node();
    auto ids = idx;
    return detail::make_op({idx.size(), n}, std::move(v), {a},
                           [an, ids = std::move(ids), n](detail::Node& o) {
                               if (!an->requires_grad) return;
                               for (std::size_t i = 0; i < ids.size(); ++i)
                                   for (std::size_t j = 0; j < n; ++j)
                                       an->grad[ids[i] * n + j] += o.grad[i * n + j];
                           });
}

// Flat-index gather; index -1 reads an implicit zero (used for conv padding).
inline Tensor index_select_flat(const Tensor& a, const std::vector<std::int64_t>& idx,
                                Shape out_shape) {
    require(numel(out_shape) == idx.size(), "index_select_flat: shape/index size mismatch");
    std::vector<double> v(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] < 0) {
            v[i] = 0.0;
        } else {
            require(std::size_t(idx[i]) < a.size(), "index_select_flat: index out of range");
            v[i] = a[std::size_t(idx[i])];
        }
    }
    auto an = a.node();
    return detail::make_op(std::move(out_shape), std::move(v), {a},
                           [an, ids = idx](detail::Node& o) {
                               if (!an->requires_grad) return;
                               for (std::size_t i = 0; i < ids.size(); ++i)
                                   if (ids[i] >= 0) an->grad[std::size_t(ids[i])] += o.grad[i];
                           });
}

inline Tensor concat_rows(const std::vector<Tensor>& parts) {
    require(!parts.empty(), "concat_rows: empty list");
    std::size_t n = parts[0].extent(1), m = 0;
    for (const Tensor& p : parts) {
        require(p.rank() == 2 && p.extent(1) == n, "concat_rows: column mismatch");
        m += p.extent(0);
    }
    std::vector<double> v;
    v.reserve(m * n);
    for (const Tensor& p : parts) v.insert(v.end(), p.data().begin(), p.data().end());
    std::vector<std::shared_ptr<detail::Node>> nodes;
    for (const Tensor& p : parts) nodes.push_back(p.node());
    return detail::make_op({m, n}, std::move(v), parts, [nodes](detail::Node& o) {
        std::size_t off = 0;
        for (auto& pn : nodes) {
            if (pn->requires_grad)
                for (std::size_t i = 0; i < pn->value.size(); ++i) pn->grad[i] += o.grad[off + i];
            off += pn->value.size();
        }
    });
}

inline Tensor concat_cols(const std::vector<Tensor>& parts) {
    require(!parts.empty(), "concat_cols: empty list");
    std::size_t m = parts[0].extent(0), n = 0;
    for (const Tensor& p : parts) {
        require(p.rank() == 2 && p.extent(0) == m, "concat_cols: row mismatch");
        n += p.extent(1);
    }
    std::vector<double> v(m * n);
    std::size_t off = 0;
    for (const Tensor& p : parts) {
        std::size_t pn = p.extent(1);
        for (std::size_t i = 0; i < m; ++i)
            std::memcpy(v.data() + i * n + off, p.data().data() + i * pn, pn * sizeof(double));
        off += pn;
    }
    std::vector<std::shared_ptr<detail::Node>> nodes;
    std::vector<std::size_t> widths;
    for (const Tensor& p : parts) {
        nodes.push_back(p.node());
        widths.push_back(p.extent(1));
    }
    return detail::make_op({m, n}, std::move(v), parts, [nodes, widths, m, n](detail::Node& o) {
        std::size_t off = 0;
        for (std::size_t k = 0; k < nodes.size(); ++k) {
            if (nodes[k]->requires_grad)
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < widths[k]; ++j)
                        nodes[k]->grad[i * widths[k] + j] += o.grad[i * n + off + j];
            off += widths[k];
        }
    });
}

// x[m,n] + b[n] broadcast down rows
inline Tensor add_col_bias(const Tensor& x, const Tensor& b) {
    require(x.rank() == 2 && b.rank() == 1 && b.extent(0) == x.extent(1),
            "add_col_bias: shape mismatch " + shape_str(x.shape()) + " + " + shape_str(b.shape()));
    std::size_t m = x.extent(0), n = x.extent(1);
    std::vector<double> v(x.size());
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) v[i * n + j] = x[i * n + j] + b[j];
    auto xn = x.node(), bn = b.node();
    return detail::make_op(x.shape(), std::move(v), {x, b}, [xn, bn, m, n](detail::Node& o) {
        if (xn->requires_grad)
            for (std::size_t i = 0; i < o.grad.size(); ++i) xn->grad[i] += o.grad[i];
        if (bn->requires_grad)
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) bn->grad[j] += o.grad[i * n + j];
    });
}

// x[C,H,W] + b[C] broadcast over spatial sites
inline Tensor add_channel_bias(const Tensor& x, const Tensor& b) {
    require(x.rank() == 3 && b.rank() == 1 && b.extent(0) == x.extent(0),
            "add_channel_bias: shape mismatch " + shape_str(x.shape()) + " + " +
                shape_str(b.shape()));
    std::size_t c = x.extent(0), hw = x.extent(1) * x.extent(2);
    std::vector<double> v(x.size());
    for (std::size_t k = 0; k < c; ++k)
        for (std::size_t i = 0; i < hw; ++i) v[k * hw + i] = x[k * hw + i] + b[k];
    auto xn = x.node(), bn = b.node();
    return detail::make_op(x.shape(), std::move(v), {x, b}, [xn, bn, c, hw](detail::Node& o) {
        if (xn->requires_grad)
            for (std::size_t i = 0; i < o.grad.size(); ++i) xn->grad[i] += o.grad[i];
        if (bn->requires_grad)
            for (std::size_t k = 0; k < c; ++k)
                for (std::size_t i = 0; i < hw; ++i) bn->grad[k] += o.grad[k * hw + i];
    });
}

// unit L2 normalization of a rank-1 tensor
inline Tensor l2_normalize(const Tensor& x) {
    require(x.rank() == 1, "l2_normalize: need rank-1 tensor");
    double r2 = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) r2 += x[i] * x[i];
    double r = std::sqrt(r2);
    require(r > 0.0, "l2_normalize: zero vector");
    double inv = 1.0 / r;
    std::vector<double> v(x.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = x[i] * inv;
    auto xn = x.node();
    return detail::make_op(x.shape(), std::move(v), {x}, [xn, inv](detail::Node& o) {
        if (!xn->requires_grad) return;
        double dot = 0.0;
        for (std::size_t i = 0; i < o.grad.size(); ++i) dot += o.grad[i] * o.value[i];
        for (std::size_t i = 0; i < o.grad.size(); ++i)
            xn->grad[i] += inv * (o.grad[i] - o.value[i] * dot);
    });
}

// ---- parameterized layers ----

struct LinearParams {
    Tensor weight;  // [out_dim, in_dim]
    std::optional<Tensor> bias;  // [out_dim]

    static LinearParams init(std::size_t out_dim, std::size_t in_dim, Rng& rng,
                             bool with_bias = true, double gain = 1.0) {
        LinearParams p;
        p.weight = Tensor::randn({out_dim, in_dim}, rng, gain / std::sqrt(double(in_dim)), true);
        if (with_bias) p.bias = Tensor::zeros({out_dim}, true);
        return p;
    }
};

// Affine map over the last axis; leading axes are flattened to rows.
inline Tensor linear_forward(const LinearParams& p, const Tensor& x) {
    std::size_t in_dim = p.weight.extent(1);
    require(x.rank() >= 1 && x.shape().back() == in_dim,
            "linear_forward: input " + shape_str(x.shape()) + " does not end in in_dim " +
                std::to_string(in_dim));
    Shape lead(x.shape().begin(), x.shape().end() - 1);
    std::size_t rows = numel(lead);
    Tensor flat = reshape(x, {rows, in_dim});
    Tensor y = matmul(flat, transpose(p.weight));
    if (p.bias) y = add_col_bias(y, *p.bias);
    Shape out = lead;
    out.push_back(p.weight.extent(0));
    return reshape(y, out);
}

struct Conv1x1Params {
    Tensor weight;  // [out_channels, in_channels]
    Tensor bias;    // [out_channels]
    bool zero_init = false;

    static Conv1x1Params zeros(std::size_t out_c, std::size_t in_c) {
        Conv1x1Params p;
        p.weight = Tensor::zeros({out_c, in_c}, true);
        p.bias = Tensor::zeros({out_c}, true);
        p.zero_init = true;
        return p;
    }
    static Conv1x1Params init(std::size_t out_c, std::size_t in_c, Rng& rng, double gain = 1.0) {
        Conv1x1Params p;
        p.weight = Tensor::randn({out_c, in_c}, rng, gain / std::sqrt(double(in_c)), true);
        p.bias = Tensor::zeros({out_c}, true);
        p.zero_init = false;
        return p;
    }
};

// Per-pixel channel mixing on x[C,H,W].
inline Tensor conv1x1_forward(const Conv1x1Params& p, const Tensor& x) {
    require(x.rank() == 3, "conv1x1_forward: need [C,H,W] input, got " + shape_str(x.shape()));
    require(x.extent(0) == p.weight.extent(1),
            "conv1x1_forward: channel mismatch, input has " + std::to_string(x.extent(0)) +
                " channels, weight expects " + std::to_string(p.weight.extent(1)));
    std::size_t h = x.extent(1), w = x.extent(2);
    Tensor xm = reshape(x, {x.extent(0), h * w});  // [C_in, HW]
    Tensor y = matmul(p.weight, xm);               // [C_out, HW]
    Tensor y3 = reshape(y, {p.weight.extent(0), h, w});
    return add_channel_bias(y3, p.bias);
}

// ---- gradient checking ----

// max over coordinates of |analytic - numeric| / max(1,|analytic|,|numeric|)
inline double check_gradients(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                              double eps = 1e-4) {
    require(eps > 0.0, "check_gradients: eps must be positive");
    Tensor probe = x.detach(true);
    Tensor loss = f(probe);
    require(loss.size() == 1, "check_gradients: f must be scalar-valued");
    loss.backward();
    std::vector<double> analytic = probe.grad();

    double worst = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        Tensor xp = x.detach(false);
        xp.mutable_data()[i] += eps;
        Tensor xm = x.detach(false);
        xm.mutable_data()[i] -= eps;
        double numeric = (f(xp).item() - f(xm).item()) / (2.0 * eps);
        double denom = std::max({1.0, std::fabs(analytic[i]), std::fabs(numeric)});
        worst = std::max(worst, std::fabs(analytic[i] - numeric) / denom);
    }
    return worst;
}

// ---- optimizer ----

inline void sgd_step(const std::vector<Tensor>& params, double lr) {
    for (const Tensor& p : params) {
        Tensor t = p;
        const std::vector<double>& g = t.grad();
        std::vector<double>& d = t.mutable_data();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] -= lr * g[i];
        t.zero_grad();
    }
}

}  // namespace hallo
