#pragma once

// The invertible affine event map e -> M e + b_M, plus numerical oracles for
// its two distribution-level properties: the entropy shift ln|det M| and the
// invariance of Gaussian mutual information under the map.

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "evqa/errors.hpp"
#include "evqa/linalg.hpp"
#include "evqa/optimizer.hpp"
#include "evqa/tensor.hpp"

namespace evqa {

template <class T>
class TransformLayer {
public:
    // M = I + eps * G with Gaussian G, b = 0: starts near the identity so the
    // map is safely invertible and early training keeps the encoder geometry.
    static TransformLayer near_identity(int dim, std::uint64_t seed, double eps = 0.02) {
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> normal(0.0, 1.0);
        std::vector<T> m(size_t(dim) * dim, T(0));
        for (int i = 0; i < dim; ++i)
            for (int j = 0; j < dim; ++j)
                m[size_t(i) * dim + j] = T((i == j ? 1.0 : 0.0) + eps * normal(rng));
        TransformLayer layer;
        layer.dim_ = dim;
        layer.m_ = Tensor<T>::from(dim, dim, std::move(m), true);
        layer.b_ = Tensor<T>::zeros(1, dim, true);
        return layer;
    }

    // Frozen pass-through used by the -TransM ablation: no parameters, no map.
    static TransformLayer identity(int dim) {
        TransformLayer layer;
        layer.dim_ = dim;
        layer.identity_ = true;
        return layer;
    }

    bool is_identity() const { return identity_; }
    int dim() const { return dim_; }
    Tensor<T>& matrix() { return m_; }
    const Tensor<T>& matrix() const { return m_; }
    Tensor<T>& bias() { return b_; }
    const Tensor<T>& bias() const { return b_; }

    // rows (k x d) -> rows * M^T + b, differentiable in M, b and the input.
    Tensor<T> apply(const Tensor<T>& rows) const {
        if (rows.cols() != dim_)
            throw ShapeError("transform: row width " + std::to_string(rows.cols()) +
                             " does not match dimension " + std::to_string(dim_));
        if (identity_) return rows;
        return add_rowvec(matmul_nt(rows, m_), b_);
    }

    void register_params(ParamSet<T>& params) const {
        if (identity_) return;
        params.add("transform.M", m_, true);
        params.add("transform.b", b_, false);
    }

    la::Mat matrix_as_mat() const {
        la::Mat m(dim_, dim_);
        if (identity_) return la::Mat::identity(dim_);
        for (int i = 0; i < dim_; ++i)
            for (int j = 0; j < dim_; ++j) m(i, j) = double(m_.values()[size_t(i) * dim_ + j]);
        return m;
    }

    double determinant() const { return la::determinant(matrix_as_mat()); }
    double condition() const { return identity_ ? 1.0 : la::condition_estimate(matrix_as_mat()); }

    // e = M^{-1}(e' - b) per row; refuses numerically singular maps.
    la::Mat invert_rows(const la::Mat& rows, double cond_threshold = 1e12) const {
        if (rows.cols() != dim_) throw ShapeError("invert: row width mismatch");
        if (identity_) return rows;
        const la::Mat m = matrix_as_mat();
        const double cond = la::condition_estimate(m);
        if (!(cond < cond_threshold))
            throw SingularMatrixError("invert: transformation matrix is numerically singular"
                                      " (condition estimate " + std::to_string(cond) + ")");
        const la::Mat inv = la::inverse(m);
        la::Mat out(rows.rows(), dim_);
        for (int i = 0; i < rows.rows(); ++i)
            for (int j = 0; j < dim_; ++j) {
                double s = 0.0;
                for (int k = 0; k < dim_; ++k)
                    s += (rows(i, k) - double(b_.values()[k])) * inv(j, k);
                out(i, j) = s;
            }
        return out;
    }

private:
    int dim_ = 0;
    bool identity_ = false;
    Tensor<T> m_, b_;
};

// ---------------------------------------------------------------------------
// Gaussian oracles
// ---------------------------------------------------------------------------

struct PropertyRecord {
    std::string name;
    double expected = 0.0;
    double observed = 0.0;
    double tolerance = 0.0;
    bool pass = false;

    std::string to_line() const {
        std::ostringstream os;
        os.precision(12);
        os << name << " expected=" << expected << " observed=" << observed
           << " tolerance=" << tolerance << " " << (pass ? "PASS" : "FAIL");
        return os.str();
    }
};

struct PropertyReport {
    std::vector<PropertyRecord> records;
    bool pass() const {
        for (const auto& r : records)
            if (!r.pass) return false;
        return true;
    }
};

// Differential entropy of N(mu, sigma) in nats: 0.5 * ln((2*pi*e)^d |sigma|).
inline double gaussian_entropy(const la::Mat& sigma) {
    auto chol = la::cholesky(sigma);
    if (!chol)
        throw NumericError("gaussian_entropy: covariance must be symmetric positive definite");
    double log_det = 0.0;
    for (int i = 0; i < sigma.rows(); ++i) log_det += 2.0 * std::log((*chol)(i, i));
    const int d = sigma.rows();
    return 0.5 * (d * (1.0 + std::log(2.0 * M_PI)) + log_det);
}

// I(e1, e2) = 0.5 * ln(|S1| |S2| / |S|) for a joint Gaussian covariance whose
// leading d1 rows cover e1.
inline double gaussian_mutual_information(const la::Mat& joint, int d1) {
    const int d = joint.rows();
    const int d2 = d - d1;
    if (d1 <= 0 || d2 <= 0) throw ShapeError("gaussian_mutual_information: bad block split");
    auto block = [&](int r0, int c0, int rows, int cols) {
        la::Mat b(rows, cols);
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < cols; ++j) b(i, j) = joint(r0 + i, c0 + j);
        return b;
    };
    if (!la::cholesky(joint))
        throw NumericError("gaussian_mutual_information: joint covariance must be PD");
    const la::Mat s1 = block(0, 0, d1, d1);
    const la::Mat s2 = block(d1, d1, d2, d2);
    const auto [l1, sign1] = la::log_abs_determinant(s1);
    const auto [l2, sign2] = la::log_abs_determinant(s2);
    const auto [lj, signj] = la::log_abs_determinant(joint);
    (void)sign1; (void)sign2; (void)signj;
    return 0.5 * (l1 + l2 - lj);
}

inline la::Mat congruence(const la::Mat& m, const la::Mat& sigma) {
    return m * sigma * m.transposed();
}

// Closed-form check of the entropy shift S(M Sigma M^T) - S(Sigma) against
// ln|det M|; optionally cross-checked with a nearest-neighbor Monte-Carlo
// entropy estimate on samples pushed through the affine map.
inline PropertyReport check_property1(const la::Mat& m, const std::vector<double>& bias,
                                      const la::Mat& sigma, double tol = 1e-9,
                                      long mc_samples = 0, double mc_tol = 0.05,
                                      std::uint64_t mc_seed = 7) {
    if (m.rows() != m.cols() || m.rows() != sigma.rows())
        throw ShapeError("check_property1: dimension mismatch");
    const auto [log_abs_det, sign] = la::log_abs_determinant(m);
    if (sign == 0) throw SingularMatrixError("check_property1: M is singular");
    PropertyReport report;
    const la::Mat mapped = congruence(m, sigma);
    const double shift = gaussian_entropy(mapped) - gaussian_entropy(sigma);
    PropertyRecord closed;
    closed.name = "property1.entropy_shift";
    closed.expected = log_abs_det;
    closed.observed = shift;
    closed.tolerance = tol;
    closed.pass = std::abs(shift - log_abs_det) <= tol;
    report.records.push_back(closed);

    if (mc_samples > 0) {
        la::Mat base = la::sample_gaussian(sigma, int(mc_samples), mc_seed);
        const int d = m.rows();
        la::Mat mapped_samples(base.rows(), d);
        for (int i = 0; i < base.rows(); ++i)
            for (int r = 0; r < d; ++r) {
                double s = bias.empty() ? 0.0 : bias[r];
                for (int c = 0; c < d; ++c) s += m(r, c) * base(i, c);
                mapped_samples(i, r) = s;
            }
        PropertyRecord mc;
        mc.name = "property1.monte_carlo";
        mc.expected = gaussian_entropy(mapped);
        mc.observed = la::nn_entropy(mapped_samples);
        mc.tolerance = mc_tol;
        mc.pass = std::abs(mc.observed - mc.expected) <= mc_tol;
        report.records.push_back(mc);
    }
    return report;
}

// Mutual-information invariance: applying the same invertible affine map to
// each member of a jointly Gaussian pair leaves I(e1, e2) unchanged.
inline PropertyReport check_property2(const la::Mat& m, const std::vector<double>& bias,
                                      const la::Mat& joint, double tol = 1e-9) {
    (void)bias;  // a mean shift never enters the covariance
    const int d = m.rows();
    if (joint.rows() != 2 * d || joint.cols() != 2 * d)
        throw ShapeError("check_property2: joint covariance must be 2d x 2d");
    const auto [log_abs_det, sign] = la::log_abs_determinant(m);
    (void)log_abs_det;
    if (sign == 0) throw SingularMatrixError("check_property2: M is singular");
    // (I2 (x) M) Sigma (I2 (x) M)^T applies M to each block.
    la::Mat big(2 * d, 2 * d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) {
            big(i, j) = m(i, j);
            big(d + i, d + j) = m(i, j);
        }
    const la::Mat mapped = congruence(big, joint);
    PropertyRecord rec;
    rec.name = "property2.mi_invariance";
    rec.expected = gaussian_mutual_information(joint, d);
    rec.observed = gaussian_mutual_information(mapped, d);
    rec.tolerance = tol;
    rec.pass = std::abs(rec.observed - rec.expected) <= tol;
    PropertyReport report;
    report.records.push_back(rec);
    return report;
}

}  // namespace evqa
