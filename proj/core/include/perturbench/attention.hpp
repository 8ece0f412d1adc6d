#pragma once

#include <vector>

#include "perturbench/rng.hpp"
#include "perturbench/tensor.hpp"

namespace perturbench {

/// softmax(Q K^T / sqrt(d_k)) V. Q and K are n x d_k, V is n x d_v.
/// When `probabilities` is given it receives the n x n softmax matrix.
Matrix scaled_dot_product_attention(const Matrix& q, const Matrix& k, const Matrix& v,
                                    Matrix* probabilities = nullptr);

/// Projection weights for multi-head self-attention over d-dimensional tokens.
/// Head i uses columns [i*d/h, (i+1)*d/h) of the Q/K/V projections.
struct MhsaWeights {
    int heads = 1;
    Matrix w_q, w_k, w_v, w_o;  // d x d
    Matrix b_q, b_k, b_v, b_o;  // 1 x d

    int dim() const { return static_cast<int>(w_q.rows()); }

    static MhsaWeights zeros(int dim, int heads);
    static MhsaWeights random(int dim, int heads, Rng& rng);
};

/// Intermediate values of one MHSA evaluation, enough to run the backward pass.
struct MhsaTrace {
    Matrix input;
    Matrix q, k, v;
    std::vector<Matrix> probabilities;  // per head, n x n
    Matrix concatenated;                // n x d, heads side by side
};

/// (head_1 ++ ... ++ head_h) W_o + b_o with head_i = Attention(X W_q^i, X W_k^i, X W_v^i).
Matrix multi_head_attention(const Matrix& x, const MhsaWeights& weights, MhsaTrace* trace = nullptr);

/// Returns dL/dx; accumulates weight gradients into `grads` (same layout as
/// the weights) when non-null.
Matrix multi_head_attention_backward(const MhsaTrace& trace, const MhsaWeights& weights,
                                     const Matrix& dout, MhsaWeights* grads);

}  // namespace perturbench
