#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "perturbench/attention.hpp"
#include "perturbench/classifier.hpp"

namespace perturbench {

enum class ModelKind : std::uint32_t { TinyCnn = 1, TinyVit = 2, LinearSoftmax = 3 };

std::string to_string(ModelKind kind);
ModelKind parse_model_kind(const std::string& text);

using NamedTensor = std::pair<std::string, Matrix*>;
using ConstNamedTensor = std::pair<std::string, const Matrix*>;

struct SampleLoss {
    double loss = 0.0;
    int predicted = -1;
};

/// A classifier whose weights can be trained, checkpointed, and inspected.
class TrainableClassifier : public Classifier {
public:
    virtual ModelKind kind() const = 0;
    /// Weights in a fixed order; names are stable across versions.
    virtual std::vector<NamedTensor> parameters() = 0;
    std::vector<ConstNamedTensor> parameters() const;
    /// Adds d CE / d weights into `grads` (aligned with parameters()) and
    /// returns the loss and the forward pass's prediction.
    virtual SampleLoss accumulate_gradients(const Image& x, int label,
                                        std::vector<Matrix>& grads) const = 0;
    virtual std::unique_ptr<TrainableClassifier> clone() const = 0;
    /// Architecture words written to checkpoint headers.
    virtual std::vector<std::uint32_t> config_words() const = 0;

    std::vector<Matrix> zero_gradients() const;
    void set_all_weights(double value);
};

struct TinyCnnConfig {
    int image_size = 32;
    int in_channels = 3;
    int stage_channels[3] = {16, 32, 64};
    int classes = 10;
};

/// Three 3x3 stride-2 convolutions with GELU, global average pooling, linear head.
class TinyCnn final : public TrainableClassifier {
public:
    explicit TinyCnn(const TinyCnnConfig& config = {}, std::uint64_t seed = 0);

    std::string name() const override { return "tiny_cnn"; }
    Shape input_shape() const override;
    int num_classes() const override { return config_.classes; }
    Logits forward(const Image& x) const override;
    GradientResult differentiate(const Image& x, const UpstreamFn& upstream) const override;
    FeatureTap first_block_features(const Image& x) const override;
    CamTap cam_tap(const Image& x, int class_id) const override;

    ModelKind kind() const override { return ModelKind::TinyCnn; }
    std::vector<NamedTensor> parameters() override;
    SampleLoss accumulate_gradients(const Image& x, int label, std::vector<Matrix>& grads) const override;
    std::unique_ptr<TrainableClassifier> clone() const override;
    std::vector<std::uint32_t> config_words() const override;
    static TinyCnn from_config_words(const std::vector<std::uint32_t>& words);

    const TinyCnnConfig& config() const { return config_; }

    struct Stage {
        Matrix weight;  // (9 * in_channels) x out_channels
        Matrix bias;    // 1 x out_channels
    };
    struct Weights {
        Stage stages[3];
        Matrix head_weight;  // channels x classes
        Matrix head_bias;
    };

private:
    struct Trace;
    Trace run(const Image& x) const;
    Perturbation backward(const Trace& trace, const Matrix& dlogits, Weights* grads,
                          Matrix* dlast_activation) const;

    TinyCnnConfig config_;
    Weights weights_;
};

struct TinyVitConfig {
    int image_size = 32;
    int in_channels = 3;
    int patch_size = 4;
    int dim = 64;
    int heads = 2;
    int blocks = 2;
    int mlp_dim = 128;
    int classes = 10;

    int grid() const { return image_size / patch_size; }
    int tokens() const { return grid() * grid() + 1; }
    void validate() const;
};

/// Pre-norm vision transformer: patch embedding, [CLS] token, learned
/// positional embeddings, N x (LN -> MHSA -> residual, LN -> MLP(GELU) -> residual),
/// final LN, linear head on [CLS].
class TinyVit final : public TrainableClassifier {
public:
    explicit TinyVit(const TinyVitConfig& config = {}, std::uint64_t seed = 0);

    std::string name() const override { return "tiny_vit"; }
    Shape input_shape() const override;
    int num_classes() const override { return config_.classes; }
    Logits forward(const Image& x) const override;
    GradientResult differentiate(const Image& x, const UpstreamFn& upstream) const override;
    bool has_attention() const override { return true; }
    AttentionMaps attention_maps(const Image& x) const override;
    FeatureTap first_block_features(const Image& x) const override;
    CamTap cam_tap(const Image& x, int class_id) const override;

    ModelKind kind() const override { return ModelKind::TinyVit; }
    std::vector<NamedTensor> parameters() override;
    SampleLoss accumulate_gradients(const Image& x, int label, std::vector<Matrix>& grads) const override;
    std::unique_ptr<TrainableClassifier> clone() const override;
    std::vector<std::uint32_t> config_words() const override;
    static TinyVit from_config_words(const std::vector<std::uint32_t>& words);

    const TinyVitConfig& config() const { return config_; }

    struct Block {
        Matrix ln1_gain, ln1_bias;
        MhsaWeights attention;
        Matrix ln2_gain, ln2_bias;
        Matrix fc1_weight, fc1_bias;  // dim x mlp_dim
        Matrix fc2_weight, fc2_bias;  // mlp_dim x dim
    };
    struct Weights {
        Matrix patch_weight;  // (patch^2 * channels) x dim
        Matrix patch_bias;
        Matrix cls_token;      // 1 x dim
        Matrix pos_embedding;  // tokens x dim
        std::vector<Block> blocks;
        Matrix norm_gain, norm_bias;
        Matrix head_weight;  // dim x classes
        Matrix head_bias;
    };

    /// Patch-major flattening: row p holds patch p's pixels in (row, col, channel) order.
    Matrix patchify(const Image& x) const;

private:
    struct Trace;
    Trace run(const Image& x) const;
    Perturbation backward(const Trace& trace, const Matrix& dlogits, Weights* grads,
                          Matrix* dlast_ln1) const;
    FeatureTap tokens_to_grid(const Matrix& tokens) const;

    TinyVitConfig config_;
    Weights weights_;
};

/// logits = W x + b over the flattened image: the closed-form oracle model.
class LinearSoftmax final : public TrainableClassifier {
public:
    /// weight is classes x inputs.
    LinearSoftmax(Shape input, Matrix weight, std::vector<double> bias);
    LinearSoftmax(Shape input, int classes, std::uint64_t seed);

    std::string name() const override { return "linear_softmax"; }
    Shape input_shape() const override { return input_; }
    int num_classes() const override { return static_cast<int>(weight_.rows()); }
    Logits forward(const Image& x) const override;
    GradientResult differentiate(const Image& x, const UpstreamFn& upstream) const override;

    ModelKind kind() const override { return ModelKind::LinearSoftmax; }
    std::vector<NamedTensor> parameters() override;
    SampleLoss accumulate_gradients(const Image& x, int label, std::vector<Matrix>& grads) const override;
    std::unique_ptr<TrainableClassifier> clone() const override;
    std::vector<std::uint32_t> config_words() const override;

    const Matrix& weight() const { return weight_; }

private:
    Shape input_;
    Matrix weight_;  // classes x inputs
    Matrix bias_;    // 1 x classes
};

std::unique_ptr<TrainableClassifier> make_model(ModelKind kind, std::uint64_t seed);

}  // namespace perturbench
