#include <stdexcept>

#include "nn_ops.hpp"
#include "perturbench/models.hpp"

namespace perturbench {

namespace {

constexpr int kKernel = 3;
constexpr int kStride = 2;
constexpr int kPad = 1;

int conv_out(int in) { return (in + 2 * kPad - kKernel) / kStride + 1; }

// Input rows are spatial positions (h * width + w), columns channels.
Matrix im2col(const Matrix& input, int height, int width) {
    const Eigen::Index channels = input.cols();
    const int out_h = conv_out(height);
    const int out_w = conv_out(width);
    Matrix col = Matrix::Zero(static_cast<Eigen::Index>(out_h) * out_w, kKernel * kKernel * channels);
    for (int oy = 0; oy < out_h; ++oy) {
        for (int ox = 0; ox < out_w; ++ox) {
            const Eigen::Index row = static_cast<Eigen::Index>(oy) * out_w + ox;
            for (int ky = 0; ky < kKernel; ++ky) {
                const int iy = oy * kStride + ky - kPad;
                if (iy < 0 || iy >= height) continue;
                for (int kx = 0; kx < kKernel; ++kx) {
                    const int ix = ox * kStride + kx - kPad;
                    if (ix < 0 || ix >= width) continue;
                    col.row(row).segment((ky * kKernel + kx) * channels, channels) =
                        input.row(static_cast<Eigen::Index>(iy) * width + ix);
                }
            }
        }
    }
    return col;
}

Matrix col2im(const Matrix& dcol, int height, int width, Eigen::Index channels) {
    const int out_h = conv_out(height);
    const int out_w = conv_out(width);
    Matrix dinput = Matrix::Zero(static_cast<Eigen::Index>(height) * width, channels);
    for (int oy = 0; oy < out_h; ++oy) {
        for (int ox = 0; ox < out_w; ++ox) {
            const Eigen::Index row = static_cast<Eigen::Index>(oy) * out_w + ox;
            for (int ky = 0; ky < kKernel; ++ky) {
                const int iy = oy * kStride + ky - kPad;
                if (iy < 0 || iy >= height) continue;
                for (int kx = 0; kx < kKernel; ++kx) {
                    const int ix = ox * kStride + kx - kPad;
                    if (ix < 0 || ix >= width) continue;
                    dinput.row(static_cast<Eigen::Index>(iy) * width + ix) +=
                        dcol.row(row).segment((ky * kKernel + kx) * channels, channels);
                }
            }
        }
    }
    return dinput;
}

Matrix image_matrix(const Image& x) {
    return Eigen::Map<const Matrix>(x.values().data(),
                                    static_cast<Eigen::Index>(x.height()) * x.width(), x.channels());
}

}  // namespace

struct TinyCnn::Trace {
    int heights[4];
    int widths[4];
    Matrix inputs[3];  // stage inputs (positions x channels)
    Matrix cols[3];
    Matrix pre[3];
    Matrix act[3];
    Matrix pooled;
    Matrix logits;
};

TinyCnn::TinyCnn(const TinyCnnConfig& config, std::uint64_t seed) : config_(config) {
    if (config_.image_size < 8 || config_.classes < 2) {
        throw std::invalid_argument("TinyCnn: invalid configuration");
    }
    Rng rng(seed, 0xC44);
    int in = config_.in_channels;
    for (int s = 0; s < 3; ++s) {
        const int out = config_.stage_channels[s];
        // He-uniform so activations keep their scale through the GELU stack.
        const double fan_in = kKernel * kKernel * in;
        weights_.stages[s].weight = nn::uniform_init(kKernel * kKernel * in, out, std::sqrt(6.0 / fan_in), rng);
        weights_.stages[s].bias = Matrix::Zero(1, out);
        in = out;
    }
    weights_.head_weight = nn::fan_in_init(in, config_.classes, rng);
    weights_.head_bias = Matrix::Zero(1, config_.classes);
}

Shape TinyCnn::input_shape() const {
    return Shape{config_.image_size, config_.image_size, config_.in_channels};
}

TinyCnn::Trace TinyCnn::run(const Image& x) const {
    require_input_shape(x);
    Trace t;
    t.heights[0] = x.height();
    t.widths[0] = x.width();
    Matrix current = image_matrix(x);
    for (int s = 0; s < 3; ++s) {
        t.inputs[s] = std::move(current);
        t.cols[s] = im2col(t.inputs[s], t.heights[s], t.widths[s]);
        t.pre[s] = nn::linear(t.cols[s], weights_.stages[s].weight, weights_.stages[s].bias);
        t.act[s] = nn::gelu(t.pre[s]);
        t.heights[s + 1] = conv_out(t.heights[s]);
        t.widths[s + 1] = conv_out(t.widths[s]);
        current = t.act[s];
    }
    t.pooled = t.act[2].colwise().mean();
    t.logits = nn::linear(t.pooled, weights_.head_weight, weights_.head_bias);
    return t;
}

Perturbation TinyCnn::backward(const Trace& t, const Matrix& dlogits, Weights* grads,
                               Matrix* dlast_activation) const {
    const Matrix dpooled = nn::linear_backward(t.pooled, weights_.head_weight, dlogits,
                                               grads ? &grads->head_weight : nullptr,
                                               grads ? &grads->head_bias : nullptr);
    const double positions = static_cast<double>(t.act[2].rows());
    Matrix dact = (Matrix::Ones(t.act[2].rows(), 1) * dpooled) / positions;
    if (dlast_activation != nullptr) *dlast_activation = dact;
    Matrix dinput;
    for (int s = 2; s >= 0; --s) {
        const Matrix dpre = nn::gelu_backward(t.pre[s], dact);
        const Matrix dcol = nn::linear_backward(t.cols[s], weights_.stages[s].weight, dpre,
                                                grads ? &grads->stages[s].weight : nullptr,
                                                grads ? &grads->stages[s].bias : nullptr);
        dinput = col2im(dcol, t.heights[s], t.widths[s], t.inputs[s].cols());
        dact = dinput;
    }
    Perturbation g(input_shape());
    Eigen::Map<Matrix>(g.values().data(), dinput.rows(), dinput.cols()) = dinput;
    return g;
}

Logits TinyCnn::forward(const Image& x) const {
    const Trace t = run(x);
    return Logits(t.logits.data(), t.logits.data() + t.logits.size());
}

GradientResult TinyCnn::differentiate(const Image& x, const UpstreamFn& upstream) const {
    const Trace t = run(x);
    Logits logits(t.logits.data(), t.logits.data() + t.logits.size());
    const std::vector<double> up = upstream(logits);
    const Matrix dlogits = Eigen::Map<const Matrix>(up.data(), 1, static_cast<Eigen::Index>(up.size()));
    return {std::move(logits), backward(t, dlogits, nullptr, nullptr)};
}

FeatureTap TinyCnn::first_block_features(const Image& x) const {
    const Trace t = run(x);
    FeatureTap tap{t.heights[1], t.widths[1], static_cast<int>(t.pre[0].cols()), {}};
    tap.values.assign(t.pre[0].data(), t.pre[0].data() + t.pre[0].size());
    return tap;
}

CamTap TinyCnn::cam_tap(const Image& x, int class_id) const {
    require_valid_label(*this, class_id);
    const Trace t = run(x);
    Matrix dlogits = Matrix::Zero(1, config_.classes);
    dlogits(0, class_id) = 1.0;
    Matrix dact;
    backward(t, dlogits, nullptr, &dact);
    CamTap tap;
    tap.activation = {t.heights[3], t.widths[3], static_cast<int>(t.act[2].cols()),
                      std::vector<double>(t.act[2].data(), t.act[2].data() + t.act[2].size())};
    tap.gradient = {t.heights[3], t.widths[3], static_cast<int>(dact.cols()),
                    std::vector<double>(dact.data(), dact.data() + dact.size())};
    return tap;
}

std::vector<NamedTensor> TinyCnn::parameters() {
    std::vector<NamedTensor> out;
    for (int s = 0; s < 3; ++s) {
        out.emplace_back("conv" + std::to_string(s + 1) + ".weight", &weights_.stages[s].weight);
        out.emplace_back("conv" + std::to_string(s + 1) + ".bias", &weights_.stages[s].bias);
    }
    out.emplace_back("head.weight", &weights_.head_weight);
    out.emplace_back("head.bias", &weights_.head_bias);
    return out;
}

SampleLoss TinyCnn::accumulate_gradients(const Image& x, int label, std::vector<Matrix>& grads) const {
    require_valid_label(*this, label);
    const Trace t = run(x);
    const std::span<const double> logits(t.logits.data(), static_cast<std::size_t>(t.logits.size()));
    const std::vector<double> up = cross_entropy_grad(logits, label);
    Weights g;
    for (int s = 0; s < 3; ++s) {
        g.stages[s].weight = Matrix::Zero(weights_.stages[s].weight.rows(), weights_.stages[s].weight.cols());
        g.stages[s].bias = Matrix::Zero(1, weights_.stages[s].bias.cols());
    }
    g.head_weight = Matrix::Zero(weights_.head_weight.rows(), weights_.head_weight.cols());
    g.head_bias = Matrix::Zero(1, weights_.head_bias.cols());
    backward(t, Eigen::Map<const Matrix>(up.data(), 1, static_cast<Eigen::Index>(up.size())), &g,
             nullptr);
    std::size_t i = 0;
    for (int s = 0; s < 3; ++s) {
        grads[i++] += g.stages[s].weight;
        grads[i++] += g.stages[s].bias;
    }
    grads[i++] += g.head_weight;
    grads[i++] += g.head_bias;
    return {cross_entropy(logits, label), argmax(logits)};
}

std::unique_ptr<TrainableClassifier> TinyCnn::clone() const { return std::make_unique<TinyCnn>(*this); }

std::vector<std::uint32_t> TinyCnn::config_words() const {
    return {static_cast<std::uint32_t>(config_.image_size), static_cast<std::uint32_t>(config_.in_channels),
            static_cast<std::uint32_t>(config_.stage_channels[0]),
            static_cast<std::uint32_t>(config_.stage_channels[1]),
            static_cast<std::uint32_t>(config_.stage_channels[2]),
            static_cast<std::uint32_t>(config_.classes)};
}

TinyCnn TinyCnn::from_config_words(const std::vector<std::uint32_t>& words) {
    if (words.size() != 6) throw std::invalid_argument("TinyCnn: bad config header");
    TinyCnnConfig c;
    c.image_size = static_cast<int>(words[0]);
    c.in_channels = static_cast<int>(words[1]);
    c.stage_channels[0] = static_cast<int>(words[2]);
    c.stage_channels[1] = static_cast<int>(words[3]);
    c.stage_channels[2] = static_cast<int>(words[4]);
    c.classes = static_cast<int>(words[5]);
    return TinyCnn(c, 0);
}

}  // namespace perturbench
