#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <stdexcept>
#include <unordered_set>
#include <vector>

#include "core/tensor.hpp"

namespace ccd::nn {

using ccd::Tensor;

// Reverse-mode tape. Nodes record creation order; backward replays in
// descending order, which is a valid topological order for a tape built
// by forward evaluation.
template <typename T>
struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    bool grad_ready = false;
    int64_t order = 0;
    std::vector<std::shared_ptr<Node<T>>> parents;
    std::function<void(Node<T>&)> backfn;

    Tensor<T>& ensure_grad() {
        if (!grad_ready) {
            grad = Tensor<T>::zeros(value.shape);
            grad_ready = true;
        }
        return grad;
    }
};

inline int64_t& tape_counter() {
    thread_local int64_t c = 0;
    return c;
}

template <typename T>
class Var {
public:
    Var() = default;
    explicit Var(std::shared_ptr<Node<T>> n) : node_(std::move(n)) {}

    static Var leaf(Tensor<T> v, bool requires_grad) {
        auto n = std::make_shared<Node<T>>();
        n->value = std::move(v);
        n->requires_grad = requires_grad;
        n->order = ++tape_counter();
        return Var(std::move(n));
    }
    static Var constant(Tensor<T> v) { return leaf(std::move(v), false); }

    const Tensor<T>& value() const { return node_->value; }
    Tensor<T>& value() { return node_->value; }
    const Tensor<T>& grad() const { return node_->grad; }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    std::shared_ptr<Node<T>> node() const { return node_; }
    bool defined() const { return node_ != nullptr; }

    T item() const {
        if (node_->value.numel() != 1) throw std::logic_error("item() on non-scalar");
        return node_->value[0];
    }

    void zero_grad() {
        node_->grad_ready = false;
        node_->grad = Tensor<T>();
    }

private:
    std::shared_ptr<Node<T>> node_;
};

template <typename T>
Var<T> make_op(Tensor<T> value, std::vector<Var<T>> parents,
               std::function<void(Node<T>&)> backfn) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    bool rg = false;
    for (auto& p : parents) {
        rg = rg || p.requires_grad();
        n->parents.push_back(p.node());
    }
    n->requires_grad = rg;
    if (rg) n->backfn = std::move(backfn);
    n->order = ++tape_counter();
    return Var<T>(std::move(n));
}

template <typename T>
void accumulate(std::shared_ptr<Node<T>>& p, const Tensor<T>& g) {
    Tensor<T>& dst = p->ensure_grad();
    const int64_t n = dst.numel();
    for (int64_t i = 0; i < n; ++i) dst[i] += g[i];
}

template <typename T>
void backward(const Var<T>& root) {
    auto r = root.node();
    if (!r->requires_grad) throw std::logic_error("backward on non-differentiable value");
    // Collect reachable subgraph.
    std::vector<std::shared_ptr<Node<T>>> nodes;
    std::unordered_set<Node<T>*> seen;
    std::vector<std::shared_ptr<Node<T>>> stack{r};
    seen.insert(r.get());
    while (!stack.empty()) {
        auto n = stack.back();
        stack.pop_back();
        nodes.push_back(n);
        for (auto& p : n->parents)
            if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p);
    }
    std::sort(nodes.begin(), nodes.end(),
              [](const auto& a, const auto& b) { return a->order > b->order; });
    r->ensure_grad();
    for (int64_t i = 0; i < r->grad.numel(); ++i) r->grad[i] = T(1);
    for (auto& n : nodes)
        if (n->backfn && n->grad_ready) n->backfn(*n);
}

// ---------------------------------------------------------------------------
// Elementwise and scalar ops
// ---------------------------------------------------------------------------

template <typename T>
void check_same_shape(const Var<T>& a, const Var<T>& b, const char* op) {
    if (!a.value().same_shape(b.value()))
        throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                    a.value().shape_str() + " vs " + b.value().shape_str());
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
    check_same_shape(a, b, "add");
    Tensor<T> out = a.value();
    for (int64_t i = 0; i < out.numel(); ++i) out[i] += b.value()[i];
    return make_op<T>(std::move(out), {a, b}, [](Node<T>& n) {
        if (n.parents[0]->requires_grad) accumulate(n.parents[0], n.grad);
        if (n.parents[1]->requires_grad) accumulate(n.parents[1], n.grad);
    });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
    check_same_shape(a, b, "sub");
    Tensor<T> out = a.value();
    for (int64_t i = 0; i < out.numel(); ++i) out[i] -= b.value()[i];
    return make_op<T>(std::move(out), {a, b}, [](Node<T>& n) {
        if (n.parents[0]->requires_grad) accumulate(n.parents[0], n.grad);
        if (n.parents[1]->requires_grad) {
            Tensor<T> g = n.grad;
            for (int64_t i = 0; i < g.numel(); ++i) g[i] = -g[i];
            accumulate(n.parents[1], g);
        }
    });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
    check_same_shape(a, b, "mul");
    Tensor<T> out = a.value();
    for (int64_t i = 0; i < out.numel(); ++i) out[i] *= b.value()[i];
    return make_op<T>(std::move(out), {a, b}, [](Node<T>& n) {
        if (n.parents[0]->requires_grad) {
            Tensor<T> g = n.grad;
            for (int64_t i = 0; i < g.numel(); ++i) g[i] *= n.parents[1]->value[i];
            accumulate(n.parents[0], g);
        }
        if (n.parents[1]->requires_grad) {
            Tensor<T> g = n.grad;
            for (int64_t i = 0; i < g.numel(); ++i) g[i] *= n.parents[0]->value[i];
            accumulate(n.parents[1], g);
        }
    });
}

template <typename T>
Var<T> div(const Var<T>& a, const Var<T>& b) {
    check_same_shape(a, b, "div");
    Tensor<T> out = a.value();
    for (int64_t i = 0; i < out.numel(); ++i) out[i] /= b.value()[i];
    return make_op<T>(std::move(out), {a, b}, [](Node<T>& n) {
        if (n.parents[0]->requires_grad) {
            Tensor<T> g = n.grad;
            for (int64_t i = 0; i < g.numel(); ++i) g[i] /= n.parents[1]->value[i];
            accumulate(n.parents[0], g);
        }
        if (n.parents[1]->requires_grad) {
            Tensor<T> g = n.grad;
            for (int64_t i = 0; i < g.numel(); ++i) {
                const T bv = n.parents[1]->value[i];
                g[i] *= -n.parents[0]->value[i] / (bv * bv);
            }
            accumulate(n.parents[1], g);
        }
    });
}

template <typename T>
Var<T> add_scalar(const Var<T>& a, T s) {
    Tensor<T> out = a.value();
    for (int64_t i = 0; i < out.numel(); ++i) out[i] += s;
    return make_op<T>(std::move(out), {a},
                      [](Node<T>& n) { accumulate(n.parents[0], n.grad); });
}

template <typename T>
Var<T> mul_scalar(const Var<T>& a, T s) {
    Tensor<T> out = a.value();
    for (int64_t i = 0; i < out.numel(); ++i) out[i] *= s;
    return make_op<T>(std::move(out), {a}, [s](Node<T>& n) {
        Tensor<T> g = n.grad;
        for (int64_t i = 0; i < g.numel(); ++i) g[i] *= s;
        accumulate(n.parents[0], g);
    });
}

template <typename T>
Var<T> neg(const Var<T>& a) { return mul_scalar(a, T(-1)); }

template <typename T>
Var<T> relu(const Var<T>& a) {
    Tensor<T> out = a.value();
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = out[i] > T(0) ? out[i] : T(0);
    return make_op<T>(std::move(out), {a}, [](Node<T>& n) {
        Tensor<T> g = n.grad;
        for (int64_t i = 0; i < g.numel(); ++i)
            if (n.parents[0]->value[i] <= T(0)) g[i] = T(0);
        accumulate(n.parents[0], g);
    });
}

template <typename T>
Var<T> leaky_relu(const Var<T>& a, T slope) {
    Tensor<T> out = a.value();
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = out[i] > T(0) ? out[i] : slope * out[i];
    return make_op<T>(std::move(out), {a}, [slope](Node<T>& n) {
        Tensor<T> g = n.grad;
        for (int64_t i = 0; i < g.numel(); ++i)
            if (n.parents[0]->value[i] <= T(0)) g[i] *= slope;
        accumulate(n.parents[0], g);
    });
}

template <typename T>
Var<T> sigmoid(const Var<T>& a) {
    Tensor<T> out = a.value();
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = T(1) / (T(1) + std::exp(-out[i]));
    Tensor<T> saved = out;
    return make_op<T>(std::move(out), {a}, [saved](Node<T>& n) {
        Tensor<T> g = n.grad;
        for (int64_t i = 0; i < g.numel(); ++i) g[i] *= saved[i] * (T(1) - saved[i]);
        accumulate(n.parents[0], g);
    });
}

template <typename T>
Var<T> log_(const Var<T>& a) {
    Tensor<T> out = a.value();
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = std::log(out[i]);
    return make_op<T>(std::move(out), {a}, [](Node<T>& n) {
        Tensor<T> g = n.grad;
        for (int64_t i = 0; i < g.numel(); ++i) g[i] /= n.parents[0]->value[i];
        accumulate(n.parents[0], g);
    });
}

template <typename T>
Var<T> abs_(const Var<T>& a) {
    Tensor<T> out = a.value();
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = std::abs(out[i]);
    return make_op<T>(std::move(out), {a}, [](Node<T>& n) {
        Tensor<T> g = n.grad;
        for (int64_t i = 0; i < g.numel(); ++i) {
            const T x = n.parents[0]->value[i];
            g[i] *= (x > T(0)) ? T(1) : (x < T(0) ? T(-1) : T(0));
        }
        accumulate(n.parents[0], g);
    });
}

template <typename T>
Var<T> pow_scalar(const Var<T>& a, T p) {
    Tensor<T> out = a.value();
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = std::pow(out[i], p);
    return make_op<T>(std::move(out), {a}, [p](Node<T>& n) {
        Tensor<T> g = n.grad;
        for (int64_t i = 0; i < g.numel(); ++i)
            g[i] *= p * std::pow(n.parents[0]->value[i], p - T(1));
        accumulate(n.parents[0], g);
    });
}

template <typename T>
Var<T> clamp_min(const Var<T>& a, T lo) {
    Tensor<T> out = a.value();
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = std::max(out[i], lo);
    return make_op<T>(std::move(out), {a}, [lo](Node<T>& n) {
        Tensor<T> g = n.grad;
        for (int64_t i = 0; i < g.numel(); ++i)
            if (n.parents[0]->value[i] < lo) g[i] = T(0);
        accumulate(n.parents[0], g);
    });
}

template <typename T>
Var<T> sqrt_(const Var<T>& a) {
    Tensor<T> out = a.value();
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = std::sqrt(out[i]);
    Tensor<T> saved = out;
    return make_op<T>(std::move(out), {a}, [saved](Node<T>& n) {
        Tensor<T> g = n.grad;
        for (int64_t i = 0; i < g.numel(); ++i) g[i] *= T(0.5) / saved[i];
        accumulate(n.parents[0], g);
    });
}

// ---------------------------------------------------------------------------
// Reductions and reshapes
// ---------------------------------------------------------------------------

template <typename T>
Var<T> sum_all(const Var<T>& a) {
    T s = 0;
    for (int64_t i = 0; i < a.value().numel(); ++i) s += a.value()[i];
    return make_op<T>(Tensor<T>::scalar(s), {a}, [](Node<T>& n) {
        Tensor<T> g(n.parents[0]->value.shape, n.grad[0]);
        accumulate(n.parents[0], g);
    });
}

template <typename T>
Var<T> mean_all(const Var<T>& a) {
    const int64_t cnt = a.value().numel();
    T s = 0;
    for (int64_t i = 0; i < cnt; ++i) s += a.value()[i];
    return make_op<T>(Tensor<T>::scalar(s / static_cast<T>(cnt)), {a}, [cnt](Node<T>& n) {
        Tensor<T> g(n.parents[0]->value.shape, n.grad[0] / static_cast<T>(cnt));
        accumulate(n.parents[0], g);
    });
}

template <typename T>
Var<T> reshape(const Var<T>& a, std::vector<int64_t> shape) {
    if (Tensor<T>::count(shape) != a.value().numel())
        throw std::invalid_argument("reshape: element count mismatch");
    Tensor<T> out = a.value();
    out.shape = shape;
    return make_op<T>(std::move(out), {a}, [](Node<T>& n) {
        Tensor<T> g = n.grad;
        g.shape = n.parents[0]->value.shape;
        accumulate(n.parents[0], g);
    });
}

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
    const auto& A = a.value();
    const auto& B = b.value();
    if (A.ndim() != 2 || B.ndim() != 2 || A.dim(1) != B.dim(0))
        throw std::invalid_argument("matmul: incompatible shapes");
    const int64_t m = A.dim(0), k = A.dim(1), n = B.dim(1);
    Tensor<T> out({m, n});
    out.mat(m, n).noalias() = A.mat(m, k) * B.mat(k, n);
    return make_op<T>(std::move(out), {a, b}, [m, k, n](Node<T>& node) {
        auto G = node.grad.mat(m, n);
        if (node.parents[0]->requires_grad) {
            Tensor<T> ga({m, k});
            ga.mat(m, k).noalias() = G * node.parents[1]->value.mat(k, n).transpose();
            accumulate(node.parents[0], ga);
        }
        if (node.parents[1]->requires_grad) {
            Tensor<T> gb({k, n});
            gb.mat(k, n).noalias() = node.parents[0]->value.mat(m, k).transpose() * G;
            accumulate(node.parents[1], gb);
        }
    });
}

// a[m,k] x b[n,k]^T -> [m,n]
template <typename T>
Var<T> matmul_nt(const Var<T>& a, const Var<T>& b) {
    const auto& A = a.value();
    const auto& B = b.value();
    if (A.ndim() != 2 || B.ndim() != 2 || A.dim(1) != B.dim(1))
        throw std::invalid_argument("matmul_nt: incompatible shapes");
    const int64_t m = A.dim(0), k = A.dim(1), n = B.dim(0);
    Tensor<T> out({m, n});
    out.mat(m, n).noalias() = A.mat(m, k) * B.mat(n, k).transpose();
    return make_op<T>(std::move(out), {a, b}, [m, k, n](Node<T>& node) {
        auto G = node.grad.mat(m, n);
        if (node.parents[0]->requires_grad) {
            Tensor<T> ga({m, k});
            ga.mat(m, k).noalias() = G * node.parents[1]->value.mat(n, k);
            accumulate(node.parents[0], ga);
        }
        if (node.parents[1]->requires_grad) {
            Tensor<T> gb({n, k});
            gb.mat(n, k).noalias() = G.transpose() * node.parents[0]->value.mat(m, k);
            accumulate(node.parents[1], gb);
        }
    });
}

// x[B,in] * w[out,in]^T + b  ->  [B,out]
template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
    const int64_t B = x.value().dim(0), in = x.value().dim(1), out_dim = w.value().dim(0);
    if (w.value().dim(1) != in || b.value().numel() != out_dim)
        throw std::invalid_argument("linear: incompatible shapes");
    Tensor<T> out({B, out_dim});
    out.mat(B, out_dim).noalias() = x.value().mat(B, in) * w.value().mat(out_dim, in).transpose();
    for (int64_t i = 0; i < B; ++i)
        for (int64_t j = 0; j < out_dim; ++j) out[i * out_dim + j] += b.value()[j];
    return make_op<T>(std::move(out), {x, w, b}, [B, in, out_dim](Node<T>& node) {
        auto G = node.grad.mat(B, out_dim);
        if (node.parents[0]->requires_grad) {
            Tensor<T> gx({B, in});
            gx.mat(B, in).noalias() = G * node.parents[1]->value.mat(out_dim, in);
            accumulate(node.parents[0], gx);
        }
        if (node.parents[1]->requires_grad) {
            Tensor<T> gw({out_dim, in});
            gw.mat(out_dim, in).noalias() = G.transpose() * node.parents[0]->value.mat(B, in);
            accumulate(node.parents[1], gw);
        }
        if (node.parents[2]->requires_grad) {
            Tensor<T> gb({out_dim});
            for (int64_t i = 0; i < B; ++i)
                for (int64_t j = 0; j < out_dim; ++j) gb[j] += node.grad[i * out_dim + j];
            accumulate(node.parents[2], gb);
        }
    });
}

template <typename T>
Var<T> concat_cols(const Var<T>& a, const Var<T>& b) {
    const int64_t n = a.value().dim(0);
    if (b.value().dim(0) != n) throw std::invalid_argument("concat_cols: row mismatch");
    const int64_t ca = a.value().dim(1), cb = b.value().dim(1);
    Tensor<T> out({n, ca + cb});
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t j = 0; j < ca; ++j) out[i * (ca + cb) + j] = a.value()[i * ca + j];
        for (int64_t j = 0; j < cb; ++j) out[i * (ca + cb) + ca + j] = b.value()[i * cb + j];
    }
    return make_op<T>(std::move(out), {a, b}, [n, ca, cb](Node<T>& node) {
        if (node.parents[0]->requires_grad) {
            Tensor<T> g({n, ca});
            for (int64_t i = 0; i < n; ++i)
                for (int64_t j = 0; j < ca; ++j) g[i * ca + j] = node.grad[i * (ca + cb) + j];
            accumulate(node.parents[0], g);
        }
        if (node.parents[1]->requires_grad) {
            Tensor<T> g({n, cb});
            for (int64_t i = 0; i < n; ++i)
                for (int64_t j = 0; j < cb; ++j)
                    g[i * cb + j] = node.grad[i * (ca + cb) + ca + j];
            accumulate(node.parents[1], g);
        }
    });
}

// ---------------------------------------------------------------------------
// Row-wise softmax family
// ---------------------------------------------------------------------------

template <typename T>
Var<T> log_softmax_rows(const Var<T>& x) {
    const int64_t n = x.value().dim(0), k = x.value().dim(1);
    Tensor<T> out = x.value();
    for (int64_t i = 0; i < n; ++i) {
        T* row = out.ptr() + i * k;
        T m = row[0];
        for (int64_t j = 1; j < k; ++j) m = std::max(m, row[j]);
        T s = 0;
        for (int64_t j = 0; j < k; ++j) s += std::exp(row[j] - m);
        const T lse = m + std::log(s);
        for (int64_t j = 0; j < k; ++j) row[j] -= lse;
    }
    Tensor<T> saved = out;
    return make_op<T>(std::move(out), {x}, [n, k, saved](Node<T>& node) {
        Tensor<T> g({n, k});
        for (int64_t i = 0; i < n; ++i) {
            T gs = 0;
            for (int64_t j = 0; j < k; ++j) gs += node.grad[i * k + j];
            for (int64_t j = 0; j < k; ++j)
                g[i * k + j] = node.grad[i * k + j] - std::exp(saved[i * k + j]) * gs;
        }
        accumulate(node.parents[0], g);
    });
}

template <typename T>
Var<T> softmax_rows(const Var<T>& x) {
    auto lsm = log_softmax_rows(x);
    Tensor<T> out = lsm.value();
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = std::exp(out[i]);
    Tensor<T> saved = out;
    return make_op<T>(std::move(out), {lsm}, [saved](Node<T>& node) {
        Tensor<T> g = node.grad;
        for (int64_t i = 0; i < g.numel(); ++i) g[i] *= saved[i];
        accumulate(node.parents[0], g);
    });
}

// -mean_i log_probs[i, labels[i]]
template <typename T>
Var<T> nll_rows(const Var<T>& log_probs, const std::vector<int>& labels) {
    const int64_t n = log_probs.value().dim(0), k = log_probs.value().dim(1);
    if (static_cast<int64_t>(labels.size()) != n)
        throw std::invalid_argument("nll_rows: label count mismatch");
    T s = 0;
    for (int64_t i = 0; i < n; ++i) {
        const int l = labels[static_cast<size_t>(i)];
        if (l < 0 || l >= k) throw std::invalid_argument("nll_rows: label out of range");
        s -= log_probs.value()[i * k + l];
    }
    return make_op<T>(Tensor<T>::scalar(s / static_cast<T>(n)), {log_probs},
                      [n, k, labels](Node<T>& node) {
                          Tensor<T> g({n, k});
                          for (int64_t i = 0; i < n; ++i)
                              g[i * k + labels[static_cast<size_t>(i)]] =
                                  -node.grad[0] / static_cast<T>(n);
                          accumulate(node.parents[0], g);
                      });
}

template <typename T>
Var<T> cross_entropy_logits(const Var<T>& logits, const std::vector<int>& labels) {
    return nll_rows(log_softmax_rows(logits), labels);
}

template <typename T>
Var<T> logsumexp_rows(const Var<T>& x) {
    const int64_t n = x.value().dim(0), k = x.value().dim(1);
    Tensor<T> out({n, 1});
    Tensor<T> soft({n, k});
    for (int64_t i = 0; i < n; ++i) {
        const T* row = x.value().ptr() + i * k;
        T m = row[0];
        for (int64_t j = 1; j < k; ++j) m = std::max(m, row[j]);
        T s = 0;
        for (int64_t j = 0; j < k; ++j) s += std::exp(row[j] - m);
        out[i] = m + std::log(s);
        for (int64_t j = 0; j < k; ++j) soft[i * k + j] = std::exp(row[j] - m) / s;
    }
    return make_op<T>(std::move(out), {x}, [n, k, soft](Node<T>& node) {
        Tensor<T> g({n, k});
        for (int64_t i = 0; i < n; ++i)
            for (int64_t j = 0; j < k; ++j) g[i * k + j] = soft[i * k + j] * node.grad[i];
        accumulate(node.parents[0], g);
    });
}

// Row-wise L2 normalisation: y_i = x_i / max(||x_i||, eps)
template <typename T>
Var<T> l2_normalize_rows(const Var<T>& x, T eps = T(1e-12)) {
    const int64_t n = x.value().dim(0), d = x.value().dim(1);
    Tensor<T> out({n, d});
    std::vector<T> norms(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        T s = 0;
        for (int64_t j = 0; j < d; ++j) {
            const T v = x.value()[i * d + j];
            s += v * v;
        }
        const T norm = std::max(std::sqrt(s), eps);
        norms[static_cast<size_t>(i)] = norm;
        for (int64_t j = 0; j < d; ++j) out[i * d + j] = x.value()[i * d + j] / norm;
    }
    Tensor<T> saved = out;
    return make_op<T>(std::move(out), {x}, [n, d, norms, saved](Node<T>& node) {
        Tensor<T> g({n, d});
        for (int64_t i = 0; i < n; ++i) {
            T dot = 0;
            for (int64_t j = 0; j < d; ++j) dot += node.grad[i * d + j] * saved[i * d + j];
            for (int64_t j = 0; j < d; ++j)
                g[i * d + j] =
                    (node.grad[i * d + j] - saved[i * d + j] * dot) / norms[static_cast<size_t>(i)];
        }
        accumulate(node.parents[0], g);
    });
}

// Row-wise dot product of two [N,D] matrices -> [N,1]
template <typename T>
Var<T> rows_dot(const Var<T>& a, const Var<T>& b) {
    check_same_shape(a, b, "rows_dot");
    const int64_t n = a.value().dim(0), d = a.value().dim(1);
    Tensor<T> out({n, 1});
    for (int64_t i = 0; i < n; ++i) {
        T s = 0;
        for (int64_t j = 0; j < d; ++j) s += a.value()[i * d + j] * b.value()[i * d + j];
        out[i] = s;
    }
    return make_op<T>(std::move(out), {a, b}, [n, d](Node<T>& node) {
        if (node.parents[0]->requires_grad) {
            Tensor<T> g({n, d});
            for (int64_t i = 0; i < n; ++i)
                for (int64_t j = 0; j < d; ++j)
                    g[i * d + j] = node.grad[i] * node.parents[1]->value[i * d + j];
            accumulate(node.parents[0], g);
        }
        if (node.parents[1]->requires_grad) {
            Tensor<T> g({n, d});
            for (int64_t i = 0; i < n; ++i)
                for (int64_t j = 0; j < d; ++j)
                    g[i * d + j] = node.grad[i] * node.parents[0]->value[i * d + j];
            accumulate(node.parents[1], g);
        }
    });
}

}  // namespace ccd::nn
