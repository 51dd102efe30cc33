#pragma once

// Small dense double-precision linear algebra: LU factorization, Cholesky,
// a cyclic Jacobi eigensolver, 2-D PCA, and a KD-tree based nearest-neighbor
// entropy estimator. Sized for the d <= 64 matrices this project works with.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <vector>

#include "evqa/errors.hpp"

namespace evqa::la {

class Mat {
public:
    Mat() = default;
    Mat(int rows, int cols, double fill = 0.0)
        : rows_(rows), cols_(cols), a_(static_cast<size_t>(rows) * cols, fill) {}

    static Mat identity(int n) {
        Mat m(n, n);
        for (int i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    double& operator()(int r, int c) { return a_[static_cast<size_t>(r) * cols_ + c]; }
    double operator()(int r, int c) const { return a_[static_cast<size_t>(r) * cols_ + c]; }
    const std::vector<double>& data() const { return a_; }
    std::vector<double>& data() { return a_; }

    Mat transposed() const {
        Mat t(cols_, rows_);
        for (int r = 0; r < rows_; ++r)
            for (int c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
        return t;
    }

    bool symmetric(double tol = 1e-12) const {
        if (rows_ != cols_) return false;
        for (int r = 0; r < rows_; ++r)
            for (int c = r + 1; c < cols_; ++c)
                if (std::abs((*this)(r, c) - (*this)(c, r)) > tol) return false;
        return true;
    }

private:
    int rows_ = 0, cols_ = 0;
    std::vector<double> a_;
};

inline Mat operator*(const Mat& a, const Mat& b) {
    if (a.cols() != b.rows())
        throw ShapeError("matmul: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                         " * " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
    Mat c(a.rows(), b.cols());
    for (int i = 0; i < a.rows(); ++i)
        for (int k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            for (int j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
        }
    return c;
}

struct LuFactors {
    Mat lu;                  // combined L (unit diagonal) and U
    std::vector<int> perm;   // row permutation
    int sign = 1;
    bool singular = false;
};

inline LuFactors lu_factor(Mat a) {
    const int n = a.rows();
    if (n != a.cols()) throw ShapeError("lu_factor: matrix must be square");
    LuFactors f;
    f.perm.resize(n);
    std::iota(f.perm.begin(), f.perm.end(), 0);
    for (int k = 0; k < n; ++k) {
        int piv = k;
        double best = std::abs(a(k, k));
        for (int r = k + 1; r < n; ++r) {
            if (std::abs(a(r, k)) > best) {
                best = std::abs(a(r, k));
                piv = r;
            }
        }
        if (best == 0.0) {
            f.singular = true;
            f.lu = std::move(a);
            return f;
        }
        if (piv != k) {
            for (int c = 0; c < n; ++c) std::swap(a(k, c), a(piv, c));
            std::swap(f.perm[k], f.perm[piv]);
            f.sign = -f.sign;
        }
        for (int r = k + 1; r < n; ++r) {
            const double m = a(r, k) / a(k, k);
            a(r, k) = m;
            for (int c = k + 1; c < n; ++c) a(r, c) -= m * a(k, c);
        }
    }
    f.lu = std::move(a);
    return f;
}

inline double determinant(const Mat& a) {
    LuFactors f = lu_factor(a);
    if (f.singular) return 0.0;
    double det = f.sign;
    for (int i = 0; i < f.lu.rows(); ++i) det *= f.lu(i, i);
    return det;
}

// log|det A| plus its sign; avoids overflow for larger matrices.
inline std::pair<double, int> log_abs_determinant(const Mat& a) {
    LuFactors f = lu_factor(a);
    if (f.singular) return {-std::numeric_limits<double>::infinity(), 0};
    double log_abs = 0.0;
    int sign = f.sign;
    for (int i = 0; i < f.lu.rows(); ++i) {
        const double d = f.lu(i, i);
        log_abs += std::log(std::abs(d));
        if (d < 0) sign = -sign;
    }
    return {log_abs, sign};
}

inline std::vector<double> lu_solve(const LuFactors& f, const std::vector<double>& b) {
    const int n = f.lu.rows();
    std::vector<double> x(n);
    for (int i = 0; i < n; ++i) x[i] = b[f.perm[i]];
    for (int i = 1; i < n; ++i)
        for (int j = 0; j < i; ++j) x[i] -= f.lu(i, j) * x[j];
    for (int i = n - 1; i >= 0; --i) {
        for (int j = i + 1; j < n; ++j) x[i] -= f.lu(i, j) * x[j];
        x[i] /= f.lu(i, i);
    }
    return x;
}

inline Mat inverse(const Mat& a) {
    LuFactors f = lu_factor(a);
    if (f.singular) throw SingularMatrixError("inverse: matrix is singular");
    const int n = a.rows();
    Mat inv(n, n);
    std::vector<double> e(n, 0.0);
    for (int c = 0; c < n; ++c) {
        e.assign(n, 0.0);
        e[c] = 1.0;
        std::vector<double> col = lu_solve(f, e);
        for (int r = 0; r < n; ++r) inv(r, c) = col[r];
    }
    return inv;
}

inline double norm1(const Mat& a) {
    double best = 0.0;
    for (int c = 0; c < a.cols(); ++c) {
        double s = 0.0;
        for (int r = 0; r < a.rows(); ++r) s += std::abs(a(r, c));
        best = std::max(best, s);
    }
    return best;
}

// 1-norm condition number via the explicit inverse; infinite when singular.
inline double condition_estimate(const Mat& a) {
    LuFactors f = lu_factor(a);
    if (f.singular) return std::numeric_limits<double>::infinity();
    return norm1(a) * norm1(inverse(a));
}

inline std::optional<Mat> cholesky(const Mat& a) {
    if (!a.symmetric(1e-9)) return std::nullopt;
    const int n = a.rows();
    Mat l(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j <= i; ++j) {
            double s = a(i, j);
            for (int k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
            if (i == j) {
                if (s <= 0.0) return std::nullopt;
                l(i, i) = std::sqrt(s);
            } else {
                l(i, j) = s / l(j, j);
            }
        }
    }
    return l;
}

struct EigenSym {
    std::vector<double> values;  // ascending
    Mat vectors;                 // columns match values
};

// Cyclic Jacobi rotations; fine for the symmetric d <= 64 matrices here.
inline EigenSym jacobi_eigen(Mat a, int max_sweeps = 100) {
    const int n = a.rows();
    if (n != a.cols()) throw ShapeError("jacobi_eigen: matrix must be square");
    Mat v = Mat::identity(n);
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
        if (off < 1e-24) break;
        for (int p = 0; p < n; ++p) {
            for (int q = p + 1; q < n; ++q) {
                if (std::abs(a(p, q)) < 1e-300) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (int k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                for (int k = 0; k < n; ++k) {
                    const double vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }
    EigenSym out;
    out.values.resize(n);
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> diag(n);
    for (int i = 0; i < n; ++i) diag[i] = a(i, i);
    std::sort(order.begin(), order.end(), [&](int x, int y) { return diag[x] < diag[y]; });
    out.vectors = Mat(n, n);
    for (int i = 0; i < n; ++i) {
        out.values[i] = diag[order[i]];
        for (int r = 0; r < n; ++r) out.vectors(r, i) = v(r, order[i]);
    }
    return out;
}

// Projects rows of `data` (n x d) onto the top two principal axes.
inline Mat pca2(const Mat& data) {
    const int n = data.rows(), d = data.cols();
    if (n == 0 || d == 0) throw ShapeError("pca2: empty input");
    std::vector<double> mean(d, 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) mean[j] += data(i, j);
    for (int j = 0; j < d; ++j) mean[j] /= n;
    Mat cov(d, d);
    for (int i = 0; i < n; ++i)
        for (int a = 0; a < d; ++a) {
            const double xa = data(i, a) - mean[a];
            for (int b = a; b < d; ++b) cov(a, b) += xa * (data(i, b) - mean[b]);
        }
    const double denom = std::max(1, n - 1);
    for (int a = 0; a < d; ++a)
        for (int b = a; b < d; ++b) {
            cov(a, b) /= denom;
            cov(b, a) = cov(a, b);
        }
    EigenSym es = jacobi_eigen(cov);
    Mat proj(n, 2);
    for (int axis = 0; axis < 2; ++axis) {
        const int col = d - 1 - axis;  // largest eigenvalues last
        for (int i = 0; i < n; ++i) {
            double s = 0.0;
            if (col >= 0)
                for (int j = 0; j < d; ++j) s += (data(i, j) - mean[j]) * es.vectors(j, col);
            proj(i, axis) = s;
        }
    }
    return proj;
}

// KD-tree over the rows of a point matrix, for 1-nearest-neighbor queries.
class KdTree {
public:
    explicit KdTree(const Mat& pts) : pts_(&pts), dim_(pts.cols()) {
        idx_.resize(pts.rows());
        std::iota(idx_.begin(), idx_.end(), 0);
        nodes_.reserve(2 * pts.rows() / kLeafSize + 4);
        root_ = build(0, pts.rows(), 0);
    }

    // Distance from point i to its nearest neighbor other than itself.
    double nn_distance(int i) const {
        double best = std::numeric_limits<double>::infinity();
        query(root_, i, best);
        return std::sqrt(best);
    }

private:
    static constexpr int kLeafSize = 16;
    struct Node {
        int begin, end;       // leaf range into idx_
        int axis = -1;
        double split = 0.0;
        int left = -1, right = -1;
    };

    int build(int begin, int end, int depth) {
        Node node;
        node.begin = begin;
        node.end = end;
        if (end - begin <= kLeafSize) {
            nodes_.push_back(node);
            return static_cast<int>(nodes_.size()) - 1;
        }
        const int axis = depth % dim_;
        const int mid = (begin + end) / 2;
        std::nth_element(idx_.begin() + begin, idx_.begin() + mid, idx_.begin() + end,
                         [&](int a, int b) { return (*pts_)(a, axis) < (*pts_)(b, axis); });
        node.axis = axis;
        node.split = (*pts_)(idx_[mid], axis);
        const int self = static_cast<int>(nodes_.size());
        nodes_.push_back(node);
        const int left = build(begin, mid, depth + 1);
        const int right = build(mid, end, depth + 1);
        nodes_[self].left = left;
        nodes_[self].right = right;
        return self;
    }

    double dist2(int a, int b) const {
        double s = 0.0;
        for (int j = 0; j < dim_; ++j) {
            const double d = (*pts_)(a, j) - (*pts_)(b, j);
            s += d * d;
        }
        return s;
    }

    void query(int node_id, int i, double& best) const {
        const Node& node = nodes_[node_id];
        if (node.axis < 0) {
            for (int k = node.begin; k < node.end; ++k) {
                const int j = idx_[k];
                if (j == i) continue;
                best = std::min(best, dist2(i, j));
            }
            return;
        }
        const double delta = (*pts_)(i, node.axis) - node.split;
        const int near = delta < 0 ? node.left : node.right;
        const int far = delta < 0 ? node.right : node.left;
        query(near, i, best);
        if (delta * delta < best) query(far, i, best);
    }

    const Mat* pts_;
    int dim_;
    std::vector<int> idx_;
    std::vector<Node> nodes_;
    int root_;
};

inline double unit_ball_log_volume(int d) {
    return 0.5 * d * std::log(M_PI) - std::lgamma(0.5 * d + 1.0);
}

// Kozachenko-Leonenko differential entropy estimate (nats) from samples.
inline double nn_entropy(const Mat& samples) {
    const int n = samples.rows(), d = samples.cols();
    if (n < 2) throw ShapeError("nn_entropy: need at least two samples");
    KdTree tree(samples);
    double log_sum = 0.0;
    for (int i = 0; i < n; ++i) {
        const double rho = tree.nn_distance(i);
        if (!(rho > 0.0)) throw NumericError("nn_entropy: duplicate sample points");
        log_sum += std::log(rho);
    }
    constexpr double kEulerGamma = 0.57721566490153286;
    return d * log_sum / n + unit_ball_log_volume(d) + kEulerGamma + std::log(double(n - 1));
}

// Draws n samples from N(0, cov); cov must be symmetric positive definite.
inline Mat sample_gaussian(const Mat& cov, int n, std::uint64_t seed) {
    auto chol = cholesky(cov);
    if (!chol) throw NumericError("sample_gaussian: covariance not positive definite");
    const int d = cov.rows();
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Mat out(n, d);
    std::vector<double> z(d);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < d; ++j) z[j] = normal(rng);
        for (int j = 0; j < d; ++j) {
            double s = 0.0;
            for (int k = 0; k <= j; ++k) s += (*chol)(j, k) * z[k];
            out(i, j) = s;
        }
    }
    return out;
}

}  // namespace evqa::la
