#pragma once

// Reverse-mode automatic differentiation over dense row-major matrices.
//
// Every operation records its inputs and a backward closure on a dynamic
// graph that is rebuilt each step. backward() on a scalar walks the graph in
// reverse topological order and accumulates gradients additively; gradients
// persist until zero_grad() so micro-batch accumulation works. The scalar
// type is a template parameter: float for training, double for the
// finite-difference oracles.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <unordered_set>
#include <vector>

#include "evqa/errors.hpp"

namespace evqa {

namespace detail {

template <class T>
inline T dot(const T* a, const T* b, int n) {
    T s0 = 0, s1 = 0, s2 = 0, s3 = 0;
    int i = 0;
    for (; i + 4 <= n; i += 4) {
        s0 += a[i] * b[i];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
    }
    for (; i < n; ++i) s0 += a[i] * b[i];
    return ((s0 + s1) + (s2 + s3));
}

template <class T>
inline void axpy(T* __restrict y, T a, const T* __restrict x, int n) {
    for (int i = 0; i < n; ++i) y[i] += a * x[i];
}

inline constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
inline constexpr double kGeluA = 0.044715;

}  // namespace detail

template <class T>
struct TensorNode {
    int rows = 0, cols = 0;
    std::vector<T> val;
    std::vector<T> grad;  // allocated on first use, kept until zeroed
    bool requires_grad = false;
    std::vector<std::shared_ptr<TensorNode<T>>> parents;
    std::function<void(TensorNode<T>&)> backprop;  // empty for leaves

    size_t size() const { return val.size(); }
    void ensure_grad() {
        if (grad.empty()) grad.assign(val.size(), T(0));
    }
};

template <class T>
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(int rows, int cols, bool requires_grad = false) {
        return make(rows, cols, std::vector<T>(size_t(rows) * cols, T(0)), requires_grad);
    }

    static Tensor full(int rows, int cols, T value, bool requires_grad = false) {
        return make(rows, cols, std::vector<T>(size_t(rows) * cols, value), requires_grad);
    }

    static Tensor scalar(T value, bool requires_grad = false) {
        return make(1, 1, std::vector<T>{value}, requires_grad);
    }

    static Tensor from(int rows, int cols, std::vector<T> values, bool requires_grad = false) {
        if (values.size() != size_t(rows) * cols)
            throw ShapeError("Tensor::from: " + std::to_string(values.size()) +
                             " values for shape " + std::to_string(rows) + "x" +
                             std::to_string(cols));
        return make(rows, cols, std::move(values), requires_grad);
    }

    static Tensor randn(int rows, int cols, std::mt19937_64& rng, T stddev,
                        bool requires_grad = false) {
        std::normal_distribution<double> normal(0.0, 1.0);
        std::vector<T> v(size_t(rows) * cols);
        for (auto& x : v) x = T(normal(rng)) * stddev;
        return make(rows, cols, std::move(v), requires_grad);
    }

    bool defined() const { return n_ != nullptr; }
    int rows() const { return n_->rows; }
    int cols() const { return n_->cols; }
    size_t size() const { return n_->val.size(); }
    bool requires_grad() const { return n_->requires_grad; }

    const std::vector<T>& values() const { return n_->val; }
    std::vector<T>& mutable_values() { return n_->val; }

    T item() const {
        if (rows() != 1 || cols() != 1)
            throw ContractError("item: tensor is not a scalar");
        return n_->val[0];
    }

    const std::vector<T>& grad() const {
        if (n_->grad.empty())
            throw ContractError("grad: no gradient has been accumulated for this tensor");
        return n_->grad;
    }

    bool has_grad() const { return !n_->grad.empty(); }

    void zero_grad() {
        if (!n_->grad.empty()) std::fill(n_->grad.begin(), n_->grad.end(), T(0));
    }

    // Reverse-mode sweep from a scalar. Gradients accumulate additively
    // across repeated calls until zero_grad().
    void backward() const {
        if (rows() != 1 || cols() != 1)
            throw ContractError("backward: loss must be a scalar tensor");
        std::vector<TensorNode<T>*> order;
        topo_order(order);
        n_->ensure_grad();
        n_->grad[0] += T(1);
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            TensorNode<T>* node = *it;
            if (node->backprop && node->requires_grad) {
                node->ensure_grad();
                node->backprop(*node);
            }
        }
        for (TensorNode<T>* node : order) {
            for (T g : node->grad)
                if (!std::isfinite(double(g)))
                    throw NumericError("backward: non-finite gradient produced");
        }
    }

    std::shared_ptr<TensorNode<T>> node() const { return n_; }

    static Tensor wrap(std::shared_ptr<TensorNode<T>> n) {
        Tensor t;
        t.n_ = std::move(n);
        return t;
    }

    static Tensor make(int rows, int cols, std::vector<T> values, bool requires_grad) {
        auto n = std::make_shared<TensorNode<T>>();
        n->rows = rows;
        n->cols = cols;
        n->val = std::move(values);
        n->requires_grad = requires_grad;
        Tensor t;
        t.n_ = std::move(n);
        return t;
    }

private:
    void topo_order(std::vector<TensorNode<T>*>& order) const {
        std::unordered_set<TensorNode<T>*> seen;
        // Iterative post-order DFS; graphs can be a few thousand nodes deep.
        std::vector<std::pair<TensorNode<T>*, size_t>> stack;
        stack.emplace_back(n_.get(), 0);
        seen.insert(n_.get());
        while (!stack.empty()) {
            auto& [node, next] = stack.back();
            if (next < node->parents.size()) {
                TensorNode<T>* p = node->parents[next++].get();
                if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
            } else {
                order.push_back(node);
                stack.pop_back();
            }
        }
    }

    std::shared_ptr<TensorNode<T>> n_;
};

namespace detail {

template <class T>
inline void check_finite(const std::vector<T>& v, const char* op) {
    for (T x : v)
        if (!std::isfinite(double(x)))
            throw NumericError(std::string(op) + ": produced a non-finite value");
}

template <class T>
inline Tensor<T> new_op(int rows, int cols, std::vector<T> values,
                        std::vector<Tensor<T>> parents,
                        std::function<void(TensorNode<T>&)> backprop, const char* op) {
    check_finite(values, op);
    bool rg = false;
    for (const auto& p : parents) rg = rg || p.requires_grad();
    auto t = Tensor<T>::make(rows, cols, std::move(values), rg);
    if (rg) {
        auto n = t.node();
        for (const auto& p : parents) n->parents.push_back(p.node());
        n->backprop = std::move(backprop);
    }
    return t;
}

template <class T>
inline void add_grad(TensorNode<T>& parent, const T* g, size_t n) {
    if (!parent.requires_grad) return;
    parent.ensure_grad();
    for (size_t i = 0; i < n; ++i) parent.grad[i] += g[i];
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Primitives
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.cols() != b.rows())
        throw ShapeError("matmul: inner dimensions " + std::to_string(a.cols()) + " and " +
                         std::to_string(b.rows()) + " do not match");
    const int r = a.rows(), k = a.cols(), c = b.cols();
    std::vector<T> out(size_t(r) * c, T(0));
    {
        const T* av = a.values().data();
        const T* bv = b.values().data();
        for (int i = 0; i < r; ++i)
            for (int l = 0; l < k; ++l)
                detail::axpy(out.data() + size_t(i) * c, av[size_t(i) * k + l],
                             bv + size_t(l) * c, c);
    }
    auto back = [r, k, c](TensorNode<T>& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        const T* g = self.grad.data();
        if (pa.requires_grad) {
            pa.ensure_grad();
            // dA[i,l] += dot(dC[i,:], B[l,:]) would need B^T; use dC * B^T via dots
            for (int i = 0; i < r; ++i)
                for (int l = 0; l < k; ++l) {
                    T s = 0;
                    const T* gr = g + size_t(i) * c;
                    const T* br = pb.val.data() + size_t(l) * c;
                    s = detail::dot(gr, br, c);
                    pa.grad[size_t(i) * k + l] += s;
                }
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (int i = 0; i < r; ++i)
                for (int l = 0; l < k; ++l)
                    detail::axpy(pb.grad.data() + size_t(l) * c, pa.val[size_t(i) * k + l],
                                 g + size_t(i) * c, c);
        }
    };
    return detail::new_op<T>(r, c, std::move(out), {a, b}, back, "matmul");
}

// a * b^T; both operands indexed along their rows.
template <class T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.cols() != b.cols())
        throw ShapeError("matmul_nt: widths " + std::to_string(a.cols()) + " and " +
                         std::to_string(b.cols()) + " do not match");
    const int r = a.rows(), k = a.cols(), c = b.rows();
    std::vector<T> out(size_t(r) * c);
    {
        const T* av = a.values().data();
        const T* bv = b.values().data();
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < c; ++j)
                out[size_t(i) * c + j] =
                    detail::dot(av + size_t(i) * k, bv + size_t(j) * k, k);
    }
    auto back = [r, k, c](TensorNode<T>& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        const T* g = self.grad.data();
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (int i = 0; i < r; ++i)
                for (int j = 0; j < c; ++j)
                    detail::axpy(pa.grad.data() + size_t(i) * k, g[size_t(i) * c + j],
                                 pb.val.data() + size_t(j) * k, k);
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (int i = 0; i < r; ++i)
                for (int j = 0; j < c; ++j)
                    detail::axpy(pb.grad.data() + size_t(j) * k, g[size_t(i) * c + j],
                                 pa.val.data() + size_t(i) * k, k);
        }
    };
    return detail::new_op<T>(r, c, std::move(out), {a, b}, back, "matmul_nt");
}

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw ShapeError("add: shapes " + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + " and " + std::to_string(b.rows()) + "x" +
                         std::to_string(b.cols()) + " differ");
    std::vector<T> out(a.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
    auto back = [](TensorNode<T>& self) {
        detail::add_grad(*self.parents[0], self.grad.data(), self.grad.size());
        detail::add_grad(*self.parents[1], self.grad.data(), self.grad.size());
    };
    return detail::new_op<T>(a.rows(), a.cols(), std::move(out), {a, b}, back, "add");
}

// Adds a 1 x c row vector to every row of a.
template <class T>
Tensor<T> add_rowvec(const Tensor<T>& a, const Tensor<T>& v) {
    if (v.rows() != 1 || v.cols() != a.cols())
        throw ShapeError("add_rowvec: vector 1x" + std::to_string(v.cols()) +
                         " does not broadcast over " + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()));
    const int r = a.rows(), c = a.cols();
    std::vector<T> out(a.size());
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j)
            out[size_t(i) * c + j] = a.values()[size_t(i) * c + j] + v.values()[j];
    auto back = [r, c](TensorNode<T>& self) {
        detail::add_grad(*self.parents[0], self.grad.data(), self.grad.size());
        auto& pv = *self.parents[1];
        if (pv.requires_grad) {
            pv.ensure_grad();
            for (int i = 0; i < r; ++i)
                for (int j = 0; j < c; ++j) pv.grad[j] += self.grad[size_t(i) * c + j];
        }
    };
    return detail::new_op<T>(r, c, std::move(out), {a, v}, back, "add_rowvec");
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw ShapeError("sub: shapes differ");
    std::vector<T> out(a.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] - b.values()[i];
    auto back = [](TensorNode<T>& self) {
        detail::add_grad(*self.parents[0], self.grad.data(), self.grad.size());
        auto& pb = *self.parents[1];
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) pb.grad[i] -= self.grad[i];
        }
    };
    return detail::new_op<T>(a.rows(), a.cols(), std::move(out), {a, b}, back, "sub");
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw ShapeError("mul: shapes differ");
    std::vector<T> out(a.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
    auto back = [](TensorNode<T>& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i)
                pa.grad[i] += self.grad[i] * pb.val[i];
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i)
                pb.grad[i] += self.grad[i] * pa.val[i];
        }
    };
    return detail::new_op<T>(a.rows(), a.cols(), std::move(out), {a, b}, back, "mul");
}

template <class T>
Tensor<T> scale(const Tensor<T>& a, T s) {
    std::vector<T> out(a.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * s;
    auto back = [s](TensorNode<T>& self) {
        auto& pa = *self.parents[0];
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i] * s;
        }
    };
    return detail::new_op<T>(a.rows(), a.cols(), std::move(out), {a}, back, "scale");
}

// Smooth tanh-form GELU; smoothness keeps finite-difference checks clean.
template <class T>
Tensor<T> gelu(const Tensor<T>& a) {
    std::vector<T> out(a.size());
    for (size_t i = 0; i < out.size(); ++i) {
        const double x = double(a.values()[i]);
        out[i] = T(0.5 * x * (1.0 + std::tanh(detail::kGeluC * (x + detail::kGeluA * x * x * x))));
    }
    auto back = [](TensorNode<T>& self) {
        auto& pa = *self.parents[0];
        if (!pa.requires_grad) return;
        pa.ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) {
            const double x = double(pa.val[i]);
            const double u = detail::kGeluC * (x + detail::kGeluA * x * x * x);
            const double t = std::tanh(u);
            const double du = detail::kGeluC * (1.0 + 3.0 * detail::kGeluA * x * x);
            const double d = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
            pa.grad[i] += self.grad[i] * T(d);
        }
    };
    return detail::new_op<T>(a.rows(), a.cols(), std::move(out), {a}, back, "gelu");
}

template <class T>
Tensor<T> softmax_rows(const Tensor<T>& a) {
    const int r = a.rows(), c = a.cols();
    std::vector<T> out(a.size());
    for (int i = 0; i < r; ++i) {
        const T* row = a.values().data() + size_t(i) * c;
        T* orow = out.data() + size_t(i) * c;
        T mx = row[0];
        for (int j = 1; j < c; ++j) mx = std::max(mx, row[j]);
        T sum = 0;
        for (int j = 0; j < c; ++j) {
            orow[j] = std::exp(row[j] - mx);
            sum += orow[j];
        }
        for (int j = 0; j < c; ++j) orow[j] /= sum;
    }
    auto back = [r, c](TensorNode<T>& self) {
        auto& pa = *self.parents[0];
        if (!pa.requires_grad) return;
        pa.ensure_grad();
        for (int i = 0; i < r; ++i) {
            const T* y = self.val.data() + size_t(i) * c;
            const T* g = self.grad.data() + size_t(i) * c;
            T dotv = 0;
            for (int j = 0; j < c; ++j) dotv += y[j] * g[j];
            T* pg = pa.grad.data() + size_t(i) * c;
            for (int j = 0; j < c; ++j) pg[j] += y[j] * (g[j] - dotv);
        }
    };
    return detail::new_op<T>(r, c, std::move(out), {a}, back, "softmax");
}

template <class T>
Tensor<T> log_softmax_rows(const Tensor<T>& a) {
    const int r = a.rows(), c = a.cols();
    std::vector<T> out(a.size());
    for (int i = 0; i < r; ++i) {
        const T* row = a.values().data() + size_t(i) * c;
        T* orow = out.data() + size_t(i) * c;
        T mx = row[0];
        for (int j = 1; j < c; ++j) mx = std::max(mx, row[j]);
        T sum = 0;
        for (int j = 0; j < c; ++j) sum += std::exp(row[j] - mx);
        const T lse = mx + std::log(sum);
        for (int j = 0; j < c; ++j) orow[j] = row[j] - lse;
    }
    auto back = [r, c](TensorNode<T>& self) {
        auto& pa = *self.parents[0];
        if (!pa.requires_grad) return;
        pa.ensure_grad();
        for (int i = 0; i < r; ++i) {
            const T* y = self.val.data() + size_t(i) * c;
            const T* g = self.grad.data() + size_t(i) * c;
            T gsum = 0;
            for (int j = 0; j < c; ++j) gsum += g[j];
            T* pg = pa.grad.data() + size_t(i) * c;
            for (int j = 0; j < c; ++j) pg[j] += g[j] - std::exp(y[j]) * gsum;
        }
    };
    return detail::new_op<T>(r, c, std::move(out), {a}, back, "log_softmax");
}

template <class T>
Tensor<T> vlog(const Tensor<T>& a) {
    std::vector<T> out(a.size());
    for (size_t i = 0; i < out.size(); ++i) {
        if (!(a.values()[i] > T(0)))
            throw NumericError("log: input must be strictly positive");
        out[i] = std::log(a.values()[i]);
    }
    auto back = [](TensorNode<T>& self) {
        auto& pa = *self.parents[0];
        if (!pa.requires_grad) return;
        pa.ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i] / pa.val[i];
    };
    return detail::new_op<T>(a.rows(), a.cols(), std::move(out), {a}, back, "log");
}

template <class T>
Tensor<T> vexp(const Tensor<T>& a) {
    std::vector<T> out(a.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = std::exp(a.values()[i]);
    auto back = [](TensorNode<T>& self) {
        auto& pa = *self.parents[0];
        if (!pa.requires_grad) return;
        pa.ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i)
            pa.grad[i] += self.grad[i] * self.val[i];
    };
    return detail::new_op<T>(a.rows(), a.cols(), std::move(out), {a}, back, "exp");
}

template <class T>
Tensor<T> layer_norm_rows(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                          T eps = T(1e-5)) {
    const int r = x.rows(), c = x.cols();
    if (gamma.rows() != 1 || gamma.cols() != c || beta.rows() != 1 || beta.cols() != c)
        throw ShapeError("layer_norm: gamma/beta must be 1x" + std::to_string(c));
    std::vector<T> out(x.size());
    std::vector<T> inv_std(r), xhat(x.size());
    for (int i = 0; i < r; ++i) {
        const T* row = x.values().data() + size_t(i) * c;
        T mean = 0;
        for (int j = 0; j < c; ++j) mean += row[j];
        mean /= T(c);
        T var = 0;
        for (int j = 0; j < c; ++j) {
            const T d = row[j] - mean;
            var += d * d;
        }
        var /= T(c);
        const T is = T(1) / std::sqrt(var + eps);
        inv_std[i] = is;
        for (int j = 0; j < c; ++j) {
            const T h = (row[j] - mean) * is;
            xhat[size_t(i) * c + j] = h;
            out[size_t(i) * c + j] = gamma.values()[j] * h + beta.values()[j];
        }
    }
    auto back = [r, c, inv_std = std::move(inv_std), xhat = std::move(xhat)](TensorNode<T>& self) {
        auto& px = *self.parents[0];
        auto& pg = *self.parents[1];
        auto& pb = *self.parents[2];
        for (int i = 0; i < r; ++i) {
            const T* g = self.grad.data() + size_t(i) * c;
            const T* h = xhat.data() + size_t(i) * c;
            if (pg.requires_grad) {
                pg.ensure_grad();
                for (int j = 0; j < c; ++j) pg.grad[j] += g[j] * h[j];
            }
            if (pb.requires_grad) {
                pb.ensure_grad();
                for (int j = 0; j < c; ++j) pb.grad[j] += g[j];
            }
            if (px.requires_grad) {
                px.ensure_grad();
                T sum_gh = 0, sum_ghh = 0;
                for (int j = 0; j < c; ++j) {
                    const T gh = g[j] * pg.val[j];
                    sum_gh += gh;
                    sum_ghh += gh * h[j];
                }
                T* out_g = px.grad.data() + size_t(i) * c;
                for (int j = 0; j < c; ++j) {
                    const T gh = g[j] * pg.val[j];
                    out_g[j] += inv_std[i] * (gh - sum_gh / T(c) - h[j] * sum_ghh / T(c));
                }
            }
        }
    };
    return detail::new_op<T>(r, c, std::move(out), {x, gamma, beta}, back, "layer_norm");
}

template <class T>
Tensor<T> embedding(const Tensor<T>& table, const std::vector<int>& ids) {
    const int v = table.rows(), d = table.cols();
    std::vector<T> out(ids.size() * size_t(d));
    for (size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || ids[i] >= v)
            throw ShapeError("embedding: id " + std::to_string(ids[i]) +
                             " out of range for vocabulary of " + std::to_string(v));
        std::copy_n(table.values().data() + size_t(ids[i]) * d, d, out.data() + i * size_t(d));
    }
    auto back = [ids, d](TensorNode<T>& self) {
        auto& pt = *self.parents[0];
        if (!pt.requires_grad) return;
        pt.ensure_grad();
        for (size_t i = 0; i < ids.size(); ++i)
            detail::axpy(pt.grad.data() + size_t(ids[i]) * d, T(1),
                         self.grad.data() + i * size_t(d), d);
    };
    return detail::new_op<T>(int(ids.size()), d, std::move(out), {table}, back, "embedding");
}

template <class T>
Tensor<T> select_rows(const Tensor<T>& x, const std::vector<int>& idx) {
    const int c = x.cols();
    std::vector<T> out(idx.size() * size_t(c));
    for (size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] < 0 || idx[i] >= x.rows())
            throw ShapeError("select_rows: row " + std::to_string(idx[i]) + " out of range");
        std::copy_n(x.values().data() + size_t(idx[i]) * c, c, out.data() + i * size_t(c));
    }
    auto back = [idx, c](TensorNode<T>& self) {
        auto& px = *self.parents[0];
        if (!px.requires_grad) return;
        px.ensure_grad();
        for (size_t i = 0; i < idx.size(); ++i)
            detail::axpy(px.grad.data() + size_t(idx[i]) * c, T(1),
                         self.grad.data() + i * size_t(c), c);
    };
    return detail::new_op<T>(int(idx.size()), c, std::move(out), {x}, back, "select_rows");
}

template <class T>
Tensor<T> slice_cols(const Tensor<T>& x, int first, int count) {
    if (first < 0 || count <= 0 || first + count > x.cols())
        throw ShapeError("slice_cols: range [" + std::to_string(first) + ", " +
                         std::to_string(first + count) + ") outside width " +
                         std::to_string(x.cols()));
    const int r = x.rows(), c = x.cols();
    std::vector<T> out(size_t(r) * count);
    for (int i = 0; i < r; ++i)
        std::copy_n(x.values().data() + size_t(i) * c + first, count,
                    out.data() + size_t(i) * count);
    auto back = [r, c, first, count](TensorNode<T>& self) {
        auto& px = *self.parents[0];
        if (!px.requires_grad) return;
        px.ensure_grad();
        for (int i = 0; i < r; ++i)
            detail::axpy(px.grad.data() + size_t(i) * c + first, T(1),
                         self.grad.data() + size_t(i) * count, count);
    };
    return detail::new_op<T>(r, count, std::move(out), {x}, back, "slice_cols");
}

template <class T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no inputs");
    const int r = parts[0].rows();
    int total = 0;
    for (const auto& p : parts) {
        if (p.rows() != r) throw ShapeError("concat_cols: row counts differ");
        total += p.cols();
    }
    std::vector<T> out(size_t(r) * total);
    std::vector<int> widths;
    int off = 0;
    for (const auto& p : parts) {
        const int c = p.cols();
        for (int i = 0; i < r; ++i)
            std::copy_n(p.values().data() + size_t(i) * c, c,
                        out.data() + size_t(i) * total + off);
        widths.push_back(c);
        off += c;
    }
    auto back = [r, total, widths](TensorNode<T>& self) {
        int off2 = 0;
        for (size_t p = 0; p < widths.size(); ++p) {
            auto& pp = *self.parents[p];
            const int c = widths[p];
            if (pp.requires_grad) {
                pp.ensure_grad();
                for (int i = 0; i < r; ++i)
                    detail::axpy(pp.grad.data() + size_t(i) * c, T(1),
                                 self.grad.data() + size_t(i) * total + off2, c);
            }
            off2 += c;
        }
    };
    return detail::new_op<T>(r, total, std::move(out), parts, back, "concat_cols");
}

template <class T>
Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts) {
    if (parts.empty()) throw ShapeError("concat_rows: no inputs");
    const int c = parts[0].cols();
    int total = 0;
    for (const auto& p : parts) {
        if (p.cols() != c) throw ShapeError("concat_rows: widths differ");
        total += p.rows();
    }
    std::vector<T> out;
    out.reserve(size_t(total) * c);
    std::vector<int> heights;
    for (const auto& p : parts) {
        out.insert(out.end(), p.values().begin(), p.values().end());
        heights.push_back(p.rows());
    }
    auto back = [c, heights](TensorNode<T>& self) {
        size_t off = 0;
        for (size_t p = 0; p < heights.size(); ++p) {
            auto& pp = *self.parents[p];
            const size_t n = size_t(heights[p]) * c;
            if (pp.requires_grad) {
                pp.ensure_grad();
                detail::axpy(pp.grad.data(), T(1), self.grad.data() + off, int(n));
            }
            off += n;
        }
    };
    return detail::new_op<T>(total, c, std::move(out), parts, back, "concat_rows");
}

// Mean over the row axis: n x c -> 1 x c.
template <class T>
Tensor<T> mean_rows(const Tensor<T>& x) {
    const int r = x.rows(), c = x.cols();
    if (r == 0) throw ShapeError("mean_rows: empty input");
    std::vector<T> out(c, T(0));
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) out[j] += x.values()[size_t(i) * c + j];
    for (int j = 0; j < c; ++j) out[j] /= T(r);
    auto back = [r, c](TensorNode<T>& self) {
        auto& px = *self.parents[0];
        if (!px.requires_grad) return;
        px.ensure_grad();
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < c; ++j) px.grad[size_t(i) * c + j] += self.grad[j] / T(r);
    };
    return detail::new_op<T>(1, c, std::move(out), {x}, back, "mean_rows");
}

template <class T>
Tensor<T> sum_all(const Tensor<T>& x) {
    T s = 0;
    for (T v : x.values()) s += v;
    auto back = [](TensorNode<T>& self) {
        auto& px = *self.parents[0];
        if (!px.requires_grad) return;
        px.ensure_grad();
        for (size_t i = 0; i < px.grad.size(); ++i) px.grad[i] += self.grad[0];
    };
    return detail::new_op<T>(1, 1, std::vector<T>{s}, {x}, back, "sum_all");
}

// Cosine similarity of two 1 x d row vectors.
template <class T>
Tensor<T> cosine(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rows() != 1 || b.rows() != 1 || a.cols() != b.cols())
        throw ShapeError("cosine: expects two row vectors of equal width");
    const int d = a.cols();
    const T* av = a.values().data();
    const T* bv = b.values().data();
    T dotv = 0, na2 = 0, nb2 = 0;
    for (int i = 0; i < d; ++i) {
        dotv += av[i] * bv[i];
        na2 += av[i] * av[i];
        nb2 += bv[i] * bv[i];
    }
    if (na2 == T(0) || nb2 == T(0)) throw NumericError("cosine: zero-norm vector");
    const T na = std::sqrt(na2), nb = std::sqrt(nb2);
    const T c = dotv / (na * nb);
    auto back = [d, na, nb, c](TensorNode<T>& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        const T g = self.grad[0];
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (int i = 0; i < d; ++i)
                pa.grad[i] += g * (pb.val[i] / (na * nb) - c * pa.val[i] / (na * na));
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (int i = 0; i < d; ++i)
                pb.grad[i] += g * (pa.val[i] / (na * nb) - c * pb.val[i] / (nb * nb));
        }
    };
    return detail::new_op<T>(1, 1, std::vector<T>{c}, {a, b}, back, "cosine");
}

// Weighted mean token cross entropy: loss = sum_i w_i * (lse_i - x[i, t_i]) / sum_i w_i.
template <class T>
Tensor<T> weighted_cross_entropy(const Tensor<T>& logits, const std::vector<int>& targets,
                                 const std::vector<T>& weights) {
    const int r = logits.rows(), c = logits.cols();
    if (int(targets.size()) != r || int(weights.size()) != r)
        throw ShapeError("weighted_cross_entropy: " + std::to_string(targets.size()) +
                         " targets / " + std::to_string(weights.size()) + " weights for " +
                         std::to_string(r) + " rows");
    T wsum = 0;
    for (T w : weights) wsum += w;
    if (!(wsum > T(0))) throw ConfigError("weighted_cross_entropy: weights must sum > 0");
    std::vector<T> lse(r);
    T loss = 0;
    for (int i = 0; i < r; ++i) {
        if (targets[i] < 0 || targets[i] >= c)
            throw ShapeError("weighted_cross_entropy: target out of range");
        const T* row = logits.values().data() + size_t(i) * c;
        T mx = row[0];
        for (int j = 1; j < c; ++j) mx = std::max(mx, row[j]);
        T s = 0;
        for (int j = 0; j < c; ++j) s += std::exp(row[j] - mx);
        lse[i] = mx + std::log(s);
        loss += weights[i] * (lse[i] - row[targets[i]]);
    }
    loss /= wsum;
    auto back = [r, c, targets, weights, wsum, lse = std::move(lse)](TensorNode<T>& self) {
        auto& pl = *self.parents[0];
        if (!pl.requires_grad) return;
        pl.ensure_grad();
        const T g = self.grad[0];
        for (int i = 0; i < r; ++i) {
            const T* row = pl.val.data() + size_t(i) * c;
            T* grow = pl.grad.data() + size_t(i) * c;
            const T wi = g * weights[i] / wsum;
            for (int j = 0; j < c; ++j) grow[j] += wi * std::exp(row[j] - lse[i]);
            grow[targets[i]] -= wi;
        }
    };
    return detail::new_op<T>(1, 1, std::vector<T>{loss}, {logits}, back, "cross_entropy");
}

// Dispatch-style wrapper over the primitive set, mirroring the engine's
// catalog for callers that build graphs from names (used by the CLI check).
template <class T>
Tensor<T> forward_primitive(const std::string& kind, const std::vector<Tensor<T>>& in) {
    auto need = [&](size_t n) {
        if (in.size() != n)
            throw ShapeError("forward_primitive(" + kind + "): expected " + std::to_string(n) +
                             " inputs, got " + std::to_string(in.size()));
    };
    if (kind == "matmul") { need(2); return matmul(in[0], in[1]); }
    if (kind == "add") { need(2); return add(in[0], in[1]); }
    if (kind == "sub") { need(2); return sub(in[0], in[1]); }
    if (kind == "mul") { need(2); return mul(in[0], in[1]); }
    if (kind == "gelu") { need(1); return gelu(in[0]); }
    if (kind == "softmax") { need(1); return softmax_rows(in[0]); }
    if (kind == "log") { need(1); return vlog(in[0]); }
    if (kind == "exp") { need(1); return vexp(in[0]); }
    if (kind == "mean_rows") { need(1); return mean_rows(in[0]); }
    if (kind == "sum") { need(1); return sum_all(in[0]); }
    if (kind == "cosine") { need(2); return cosine(in[0], in[1]); }
    if (kind == "concat_rows") { return concat_rows(in); }
    if (kind == "layer_norm") { need(3); return layer_norm_rows(in[0], in[1], in[2]); }
    throw ConfigError("forward_primitive: unknown op kind '" + kind + "'");
}

}  // namespace evqa
