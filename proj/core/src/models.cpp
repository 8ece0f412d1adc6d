#include <stdexcept>

#include "nn_ops.hpp"
#include "perturbench/models.hpp"

namespace perturbench {

std::string to_string(ModelKind kind) {
    switch (kind) {
        case ModelKind::TinyCnn: return "tiny_cnn";
        case ModelKind::TinyVit: return "tiny_vit";
        case ModelKind::LinearSoftmax: return "linear_softmax";
    }
    return "unknown";
}

ModelKind parse_model_kind(const std::string& text) {
    if (text == "tiny_cnn" || text == "cnn") return ModelKind::TinyCnn;
    if (text == "tiny_vit" || text == "vit") return ModelKind::TinyVit;
    if (text == "linear_softmax" || text == "linear") return ModelKind::LinearSoftmax;
    throw std::invalid_argument("unknown model kind '" + text + "'");
}

std::vector<ConstNamedTensor> TrainableClassifier::parameters() const {
    std::vector<ConstNamedTensor> out;
    for (auto& [name, m] : const_cast<TrainableClassifier*>(this)->parameters()) {
        out.emplace_back(name, m);
    }
    return out;
}

std::vector<Matrix> TrainableClassifier::zero_gradients() const {
    std::vector<Matrix> out;
    for (const auto& [name, m] : parameters()) out.push_back(Matrix::Zero(m->rows(), m->cols()));
    return out;
}

void TrainableClassifier::set_all_weights(double value) {
    for (auto& [name, m] : parameters()) m->setConstant(value);
}

LinearSoftmax::LinearSoftmax(Shape input, Matrix weight, std::vector<double> bias)
    : input_(input), weight_(std::move(weight)), bias_(1, static_cast<Eigen::Index>(bias.size())) {
    if (weight_.cols() != static_cast<Eigen::Index>(input_.size()) || weight_.rows() < 2 ||
        bias_.cols() != weight_.rows()) {
        throw std::invalid_argument("LinearSoftmax: weight must be classes x inputs, classes >= 2");
    }
    for (std::size_t k = 0; k < bias.size(); ++k) bias_(0, static_cast<Eigen::Index>(k)) = bias[k];
}

LinearSoftmax::LinearSoftmax(Shape input, int classes, std::uint64_t seed)
    : input_(input), bias_(Matrix::Zero(1, classes)) {
    Rng rng(seed, 0x11);
    weight_ = nn::uniform_init(classes, static_cast<Eigen::Index>(input.size()), 1.0, rng);
}

Logits LinearSoftmax::forward(const Image& x) const {
    require_input_shape(x);
    const Eigen::Map<const Eigen::VectorXd> v(x.values().data(), static_cast<Eigen::Index>(x.size()));
    const Eigen::VectorXd z = weight_ * v + bias_.row(0).transpose();
    return Logits(z.data(), z.data() + z.size());
}

GradientResult LinearSoftmax::differentiate(const Image& x, const UpstreamFn& upstream) const {
    Logits logits = forward(x);
    const std::vector<double> up = upstream(logits);
    const Eigen::Map<const Eigen::VectorXd> u(up.data(), static_cast<Eigen::Index>(up.size()));
    Perturbation g(input_);
    Eigen::Map<Eigen::VectorXd>(g.values().data(), static_cast<Eigen::Index>(g.size())) =
        weight_.transpose() * u;
    return {std::move(logits), std::move(g)};
}

std::vector<NamedTensor> LinearSoftmax::parameters() {
    return {{"weight", &weight_}, {"bias", &bias_}};
}

SampleLoss LinearSoftmax::accumulate_gradients(const Image& x, int label, std::vector<Matrix>& grads) const {
    require_valid_label(*this, label);
    const Logits logits = forward(x);
    const std::vector<double> up = cross_entropy_grad(logits, label);
    const Eigen::Map<const Eigen::VectorXd> u(up.data(), static_cast<Eigen::Index>(up.size()));
    const Eigen::Map<const Eigen::VectorXd> v(x.values().data(), static_cast<Eigen::Index>(x.size()));
    grads[0] += u * v.transpose();
    grads[1].row(0) += u.transpose();
    return {cross_entropy(logits, label), argmax(logits)};
}

std::unique_ptr<TrainableClassifier> LinearSoftmax::clone() const {
    return std::make_unique<LinearSoftmax>(*this);
}

std::vector<std::uint32_t> LinearSoftmax::config_words() const {
    return {static_cast<std::uint32_t>(input_.height), static_cast<std::uint32_t>(input_.width),
            static_cast<std::uint32_t>(input_.channels), static_cast<std::uint32_t>(weight_.rows())};
}

std::unique_ptr<TrainableClassifier> make_model(ModelKind kind, std::uint64_t seed) {
    switch (kind) {
        case ModelKind::TinyCnn: return std::make_unique<TinyCnn>(TinyCnnConfig{}, seed);
        case ModelKind::TinyVit: return std::make_unique<TinyVit>(TinyVitConfig{}, seed);
        case ModelKind::LinearSoftmax:
            return std::make_unique<LinearSoftmax>(Shape{32, 32, 3}, 10, seed);
    }
    throw std::invalid_argument("make_model: unknown kind");
}

}  // namespace perturbench
