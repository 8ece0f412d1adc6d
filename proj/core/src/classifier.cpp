#include "perturbench/classifier.hpp"

#include <algorithm>
#include <cmath>

namespace perturbench {

AttentionMaps Classifier::attention_maps(const Image&) const {
    throw TapUnavailable(name() + " has no attention layers");
}

FeatureTap Classifier::first_block_features(const Image&) const {
    throw TapUnavailable(name() + " exposes no feature tap");
}

CamTap Classifier::cam_tap(const Image&, int) const {
    throw TapUnavailable(name() + " exposes no Grad-CAM tap");
}

Perturbation Classifier::logit_vjp(const Image& x, std::span<const double> dlogits) const {
    if (dlogits.size() != static_cast<std::size_t>(num_classes())) {
        throw ShapeError(name() + ": upstream gradient has wrong length");
    }
    std::vector<double> upstream(dlogits.begin(), dlogits.end());
    return differentiate(x, [&](const Logits&) { return upstream; }).gradient;
}

void Classifier::require_input_shape(const Image& x) const {
    if (x.shape() != input_shape()) {
        throw ShapeError(name() + ": expected input " + input_shape().to_string() + ", got " +
                         x.shape().to_string());
    }
}

std::vector<double> softmax(std::span<const double> logits) {
    const double peak = *std::max_element(logits.begin(), logits.end());
    std::vector<double> out(logits.size());
    double total = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - peak);
        total += out[i];
    }
    for (double& v : out) v /= total;
    return out;
}

double cross_entropy(std::span<const double> logits, int label) {
    const double peak = *std::max_element(logits.begin(), logits.end());
    double total = 0.0;
    for (double z : logits) total += std::exp(z - peak);
    return peak + std::log(total) - logits[static_cast<std::size_t>(label)];
}

std::vector<double> cross_entropy_grad(std::span<const double> logits, int label) {
    std::vector<double> g = softmax(logits);
    g[static_cast<std::size_t>(label)] -= 1.0;
    return g;
}

int argmax(std::span<const double> values) {
    return static_cast<int>(std::max_element(values.begin(), values.end()) - values.begin());
}

void require_valid_label(const Classifier& model, int label) {
    if (label < 0 || label >= model.num_classes()) {
        throw InvalidLabel(model.name() + ": label " + std::to_string(label) + " outside [0, " +
                           std::to_string(model.num_classes()) + ")");
    }
}

int predict(const Classifier& model, const Image& x) { return argmax(model.forward(x)); }

double loss(const Classifier& model, const Image& x, int label) {
    require_valid_label(model, label);
    return cross_entropy(model.forward(x), label);
}

Perturbation input_gradient(const Classifier& model, const Image& x, int label) {
    require_valid_label(model, label);
    return model
        .differentiate(x, [label](const Logits& logits) { return cross_entropy_grad(logits, label); })
        .gradient;
}

}  // namespace perturbench
