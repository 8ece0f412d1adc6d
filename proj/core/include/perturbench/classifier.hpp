#pragma once

#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "perturbench/image.hpp"
#include "perturbench/tensor.hpp"

namespace perturbench {

using Logits = std::vector<double>;

/// Activations on a spatial grid: rows x cols x channels, channels interleaved.
struct FeatureTap {
    int rows = 0;
    int cols = 0;
    int channels = 0;
    std::vector<double> values;

    double at(int r, int c, int k) const {
        return values[(static_cast<std::size_t>(r) * cols + c) * channels + k];
    }
};

/// Activations of the layer Grad-CAM reads, plus d(class logit)/d(activations).
struct CamTap {
    FeatureTap activation;
    FeatureTap gradient;
};

/// Attention probabilities indexed [layer][head], each tokens x tokens with
/// token 0 the [CLS] token.
using AttentionMaps = std::vector<std::vector<Matrix>>;

class TapUnavailable : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

class InvalidLabel : public std::out_of_range {
public:
    using std::out_of_range::out_of_range;
};

using UpstreamFn = std::function<std::vector<double>(const Logits&)>;

struct GradientResult {
    Logits logits;
    Perturbation gradient;
};

/// Uniform interface every attack and analysis tool consumes.
class Classifier {
public:
    virtual ~Classifier() = default;

    virtual std::string name() const = 0;
    virtual Shape input_shape() const = 0;
    virtual int num_classes() const = 0;

    virtual Logits forward(const Image& x) const = 0;

    /// One forward and one backward pass: the upstream vector is computed from
    /// the logits, then d <upstream, forward(x)> / dx is returned with them.
    /// Every gradient query goes through here.
    virtual GradientResult differentiate(const Image& x, const UpstreamFn& upstream) const = 0;

    /// Vector-Jacobian product: d <dlogits, forward(x)> / dx.
    Perturbation logit_vjp(const Image& x, std::span<const double> dlogits) const;

    virtual bool has_attention() const { return false; }
    virtual AttentionMaps attention_maps(const Image& x) const;
    /// Output of the first convolution (CNN) or first attention block (ViT).
    virtual FeatureTap first_block_features(const Image& x) const;
    /// Last convolution stage (CNN) or LN output of the last attention block (ViT).
    virtual CamTap cam_tap(const Image& x, int class_id) const;

protected:
    void require_input_shape(const Image& x) const;
};

std::vector<double> softmax(std::span<const double> logits);
/// Numerically stable -log softmax(logits)[label].
double cross_entropy(std::span<const double> logits, int label);
/// softmax(logits) - onehot(label): d CE / d logits.
std::vector<double> cross_entropy_grad(std::span<const double> logits, int label);
int argmax(std::span<const double> values);

int predict(const Classifier& model, const Image& x);
double loss(const Classifier& model, const Image& x, int label);
/// d CE(forward(x), label) / dx.
Perturbation input_gradient(const Classifier& model, const Image& x, int label);

void require_valid_label(const Classifier& model, int label);

}  // namespace perturbench
