#include "perturbench/attention.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "nn_ops.hpp"

namespace perturbench {

Matrix scaled_dot_product_attention(const Matrix& q, const Matrix& k, const Matrix& v,
                                    Matrix* probabilities) {
    if (q.cols() != k.cols() || k.rows() != v.rows() || q.cols() == 0) {
        throw std::invalid_argument("attention: shape mismatch Q " + std::to_string(q.rows()) + "x" +
                                    std::to_string(q.cols()) + ", K " + std::to_string(k.rows()) +
                                    "x" + std::to_string(k.cols()) + ", V " +
                                    std::to_string(v.rows()) + "x" + std::to_string(v.cols()));
    }
    const double scale = 1.0 / std::sqrt(static_cast<double>(k.cols()));
    Matrix p = nn::softmax_rows((q * k.transpose()) * scale);
    Matrix z = p * v;
    if (probabilities != nullptr) *probabilities = std::move(p);
    return z;
}

MhsaWeights MhsaWeights::zeros(int dim, int heads) {
    MhsaWeights w;
    w.heads = heads;
    for (Matrix* m : {&w.w_q, &w.w_k, &w.w_v, &w.w_o}) *m = Matrix::Zero(dim, dim);
    for (Matrix* m : {&w.b_q, &w.b_k, &w.b_v, &w.b_o}) *m = Matrix::Zero(1, dim);
    return w;
}

MhsaWeights MhsaWeights::random(int dim, int heads, Rng& rng) {
    MhsaWeights w = zeros(dim, heads);
    for (Matrix* m : {&w.w_q, &w.w_k, &w.w_v, &w.w_o}) *m = nn::fan_in_init(dim, dim, rng);
    return w;
}

namespace {

void check_heads(const MhsaWeights& w, Eigen::Index cols) {
    if (w.heads <= 0 || w.dim() % w.heads != 0) {
        throw std::invalid_argument("multi_head_attention: embedding dim " + std::to_string(w.dim()) +
                                    " not divisible by " + std::to_string(w.heads) + " heads");
    }
    if (cols != w.dim()) {
        throw std::invalid_argument("multi_head_attention: token width does not match weights");
    }
}

}  // namespace

Matrix multi_head_attention(const Matrix& x, const MhsaWeights& weights, MhsaTrace* trace) {
    check_heads(weights, x.cols());
    const int head_dim = weights.dim() / weights.heads;
    const Matrix q = nn::linear(x, weights.w_q, weights.b_q);
    const Matrix k = nn::linear(x, weights.w_k, weights.b_k);
    const Matrix v = nn::linear(x, weights.w_v, weights.b_v);

    Matrix concatenated(x.rows(), weights.dim());
    std::vector<Matrix> probabilities(static_cast<std::size_t>(weights.heads));
    for (int h = 0; h < weights.heads; ++h) {
        const Eigen::Index c0 = static_cast<Eigen::Index>(h) * head_dim;
        concatenated.middleCols(c0, head_dim) = scaled_dot_product_attention(
            q.middleCols(c0, head_dim), k.middleCols(c0, head_dim), v.middleCols(c0, head_dim),
            &probabilities[static_cast<std::size_t>(h)]);
    }
    Matrix out = nn::linear(concatenated, weights.w_o, weights.b_o);
    if (trace != nullptr) {
        trace->input = x;
        trace->q = q;
        trace->k = k;
        trace->v = v;
        trace->probabilities = std::move(probabilities);
        trace->concatenated = std::move(concatenated);
    }
    return out;
}

Matrix multi_head_attention_backward(const MhsaTrace& trace, const MhsaWeights& weights,
                                     const Matrix& dout, MhsaWeights* grads) {
    const int head_dim = weights.dim() / weights.heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
    const Matrix dconcat = nn::linear_backward(trace.concatenated, weights.w_o, dout,
                                               grads ? &grads->w_o : nullptr,
                                               grads ? &grads->b_o : nullptr);
    Matrix dq(trace.q.rows(), trace.q.cols());
    Matrix dk(trace.k.rows(), trace.k.cols());
    Matrix dv(trace.v.rows(), trace.v.cols());
    for (int h = 0; h < weights.heads; ++h) {
        const Eigen::Index c0 = static_cast<Eigen::Index>(h) * head_dim;
        const Matrix& p = trace.probabilities[static_cast<std::size_t>(h)];
        const Matrix dz = dconcat.middleCols(c0, head_dim);
        dv.middleCols(c0, head_dim).noalias() = p.transpose() * dz;
        const Matrix dp = dz * trace.v.middleCols(c0, head_dim).transpose();
        const Matrix ds = nn::softmax_rows_backward(p, dp) * scale;
        dq.middleCols(c0, head_dim).noalias() = ds * trace.k.middleCols(c0, head_dim);
        dk.middleCols(c0, head_dim).noalias() = ds.transpose() * trace.q.middleCols(c0, head_dim);
    }
    Matrix dx = nn::linear_backward(trace.input, weights.w_q, dq, grads ? &grads->w_q : nullptr,
                                    grads ? &grads->b_q : nullptr);
    dx += nn::linear_backward(trace.input, weights.w_k, dk, grads ? &grads->w_k : nullptr,
                              grads ? &grads->b_k : nullptr);
    dx += nn::linear_backward(trace.input, weights.w_v, dv, grads ? &grads->w_v : nullptr,
                              grads ? &grads->b_v : nullptr);
    return dx;
}

}  // namespace perturbench
