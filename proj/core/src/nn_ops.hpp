#pragma once

// Hand-written forward/backward kernels shared by the bundled models.

#include <cmath>
#include <numbers>
#include <vector>

#include "perturbench/rng.hpp"
#include "perturbench/tensor.hpp"

namespace perturbench::nn {

inline constexpr double kLayerNormEps = 1e-6;

inline Matrix linear(const Matrix& x, const Matrix& w, const Matrix& b) {
    Matrix y = x * w;
    y.rowwise() += b.row(0);
    return y;
}

/// Accumulates parameter gradients (if non-null) and returns dL/dx.
inline Matrix linear_backward(const Matrix& x, const Matrix& w, const Matrix& dy, Matrix* dw,
                              Matrix* db) {
    if (dw != nullptr) dw->noalias() += x.transpose() * dy;
    if (db != nullptr) db->row(0) += dy.colwise().sum();
    return dy * w.transpose();
}

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * (1.0 / std::numbers::sqrt2))); }

inline double gelu_derivative(double x) {
    const double cdf = 0.5 * (1.0 + std::erf(x * (1.0 / std::numbers::sqrt2)));
    const double pdf = std::exp(-0.5 * x * x) * 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
    return cdf + x * pdf;
}

inline Matrix gelu(const Matrix& x) { return x.unaryExpr([](double v) { return gelu(v); }); }

inline Matrix gelu_backward(const Matrix& pre, const Matrix& dy) {
    return dy.cwiseProduct(pre.unaryExpr([](double v) { return gelu_derivative(v); }));
}

struct LayerNormCache {
    Matrix normalized;  // (x - mean) / std
    Eigen::VectorXd inv_std;
};

inline Matrix layer_norm(const Matrix& x, const Matrix& gain, const Matrix& bias,
                         LayerNormCache* cache) {
    const Eigen::Index rows = x.rows();
    const double width = static_cast<double>(x.cols());
    Matrix normalized(rows, x.cols());
    Eigen::VectorXd inv_std(rows);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const double mean = x.row(r).sum() / width;
        const auto centered = (x.row(r).array() - mean).matrix();
        const double var = centered.squaredNorm() / width;
        inv_std(r) = 1.0 / std::sqrt(var + kLayerNormEps);
        normalized.row(r) = centered * inv_std(r);
    }
    Matrix y = normalized.array().rowwise() * gain.row(0).array();
    y.rowwise() += bias.row(0);
    if (cache != nullptr) {
        cache->normalized = std::move(normalized);
        cache->inv_std = std::move(inv_std);
    }
    return y;
}

inline Matrix layer_norm_backward(const LayerNormCache& cache, const Matrix& gain, const Matrix& dy,
                                  Matrix* dgain, Matrix* dbias) {
    const Matrix& xhat = cache.normalized;
    if (dgain != nullptr) dgain->row(0) += dy.cwiseProduct(xhat).colwise().sum();
    if (dbias != nullptr) dbias->row(0) += dy.colwise().sum();
    const Matrix dxhat = dy.array().rowwise() * gain.row(0).array();
    const double width = static_cast<double>(dy.cols());
    Matrix dx(dy.rows(), dy.cols());
    for (Eigen::Index r = 0; r < dy.rows(); ++r) {
        const double mean_d = dxhat.row(r).sum() / width;
        const double mean_dx = dxhat.row(r).dot(xhat.row(r)) / width;
        dx.row(r) = ((dxhat.row(r).array() - mean_d - xhat.row(r).array() * mean_dx) *
                     cache.inv_std(r))
                        .matrix();
    }
    return dx;
}

inline Matrix softmax_rows(const Matrix& s) {
    Matrix p(s.rows(), s.cols());
    for (Eigen::Index r = 0; r < s.rows(); ++r) {
        const double peak = s.row(r).maxCoeff();
        p.row(r) = (s.row(r).array() - peak).exp().matrix();
        p.row(r) /= p.row(r).sum();
    }
    return p;
}

inline Matrix softmax_rows_backward(const Matrix& p, const Matrix& dp) {
    Matrix ds(p.rows(), p.cols());
    for (Eigen::Index r = 0; r < p.rows(); ++r) {
        const double inner = p.row(r).dot(dp.row(r));
        ds.row(r) = p.row(r).cwiseProduct((dp.row(r).array() - inner).matrix());
    }
    return ds;
}

/// Parameters are kept at float precision so checkpoints round-trip exactly.
inline void round_to_float(Matrix& m) {
    m = m.unaryExpr([](double v) { return static_cast<double>(static_cast<float>(v)); });
}

inline Matrix uniform_init(Eigen::Index rows, Eigen::Index cols, double bound, Rng& rng) {
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-bound, bound);
    round_to_float(m);
    return m;
}

inline Matrix fan_in_init(Eigen::Index fan_in, Eigen::Index fan_out, Rng& rng) {
    return uniform_init(fan_in, fan_out, 1.0 / std::sqrt(static_cast<double>(fan_in)), rng);
}

}  // namespace perturbench::nn
