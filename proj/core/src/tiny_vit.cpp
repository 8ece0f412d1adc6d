#include <stdexcept>

#include "nn_ops.hpp"
#include "perturbench/models.hpp"

namespace perturbench {

void TinyVitConfig::validate() const {
    if (patch_size <= 0 || image_size % patch_size != 0) {
        throw std::invalid_argument("TinyVitConfig: image_size must be divisible by patch_size");
    }
    if (heads <= 0 || dim % heads != 0) {
        throw std::invalid_argument("TinyVitConfig: dim must be divisible by heads");
    }
    if (blocks <= 0 || mlp_dim <= 0 || classes < 2 || in_channels <= 0) {
        throw std::invalid_argument("TinyVitConfig: counts must be positive");
    }
}

struct TinyVit::Trace {
    struct BlockTrace {
        Matrix input;
        nn::LayerNormCache ln1;
        Matrix ln1_out;
        MhsaTrace attention;
        Matrix mid;
        nn::LayerNormCache ln2;
        Matrix ln2_out;
        Matrix fc1_pre;
        Matrix fc1_act;
        Matrix output;
    };
    Matrix patches;
    std::vector<BlockTrace> blocks;
    Matrix cls_final;  // row 0 of the last block output
    nn::LayerNormCache norm;
    Matrix cls_normed;
    Matrix logits;
};

TinyVit::TinyVit(const TinyVitConfig& config, std::uint64_t seed) : config_(config) {
    config_.validate();
    Rng rng(seed, 0x717);
    const int d = config_.dim;
    const int patch_len = config_.patch_size * config_.patch_size * config_.in_channels;
    weights_.patch_weight = nn::fan_in_init(patch_len, d, rng);
    weights_.patch_bias = Matrix::Zero(1, d);
    weights_.cls_token = nn::uniform_init(1, d, 0.02, rng);
    weights_.pos_embedding = nn::uniform_init(config_.tokens(), d, 0.02, rng);
    for (int b = 0; b < config_.blocks; ++b) {
        Block block;
        block.ln1_gain = Matrix::Ones(1, d);
        block.ln1_bias = Matrix::Zero(1, d);
        block.attention = MhsaWeights::random(d, config_.heads, rng);
        block.ln2_gain = Matrix::Ones(1, d);
        block.ln2_bias = Matrix::Zero(1, d);
        block.fc1_weight = nn::fan_in_init(d, config_.mlp_dim, rng);
        block.fc1_bias = Matrix::Zero(1, config_.mlp_dim);
        block.fc2_weight = nn::fan_in_init(config_.mlp_dim, d, rng);
        block.fc2_bias = Matrix::Zero(1, d);
        weights_.blocks.push_back(std::move(block));
    }
    weights_.norm_gain = Matrix::Ones(1, d);
    weights_.norm_bias = Matrix::Zero(1, d);
    weights_.head_weight = nn::fan_in_init(d, config_.classes, rng);
    weights_.head_bias = Matrix::Zero(1, config_.classes);
}

Shape TinyVit::input_shape() const {
    return Shape{config_.image_size, config_.image_size, config_.in_channels};
}

Matrix TinyVit::patchify(const Image& x) const {
    const int g = config_.grid();
    const int ps = config_.patch_size;
    const int c = config_.in_channels;
    Matrix patches(static_cast<Eigen::Index>(g) * g, ps * ps * c);
    for (int py = 0; py < g; ++py) {
        for (int px = 0; px < g; ++px) {
            const Eigen::Index row = static_cast<Eigen::Index>(py) * g + px;
            Eigen::Index col = 0;
            for (int dy = 0; dy < ps; ++dy) {
                for (int dx = 0; dx < ps; ++dx) {
                    for (int ch = 0; ch < c; ++ch) {
                        patches(row, col++) = x.at(py * ps + dy, px * ps + dx, ch);
                    }
                }
            }
        }
    }
    return patches;
}

TinyVit::Trace TinyVit::run(const Image& x) const {
    require_input_shape(x);
    Trace t;
    t.patches = patchify(x);
    const Matrix embedded = nn::linear(t.patches, weights_.patch_weight, weights_.patch_bias);
    Matrix tokens(embedded.rows() + 1, config_.dim);
    tokens.row(0) = weights_.cls_token.row(0);
    tokens.bottomRows(embedded.rows()) = embedded;
    tokens += weights_.pos_embedding;

    t.blocks.resize(weights_.blocks.size());
    for (std::size_t b = 0; b < weights_.blocks.size(); ++b) {
        const Block& w = weights_.blocks[b];
        Trace::BlockTrace& bt = t.blocks[b];
        bt.input = std::move(tokens);
        bt.ln1_out = nn::layer_norm(bt.input, w.ln1_gain, w.ln1_bias, &bt.ln1);
        bt.mid = bt.input + multi_head_attention(bt.ln1_out, w.attention, &bt.attention);
        bt.ln2_out = nn::layer_norm(bt.mid, w.ln2_gain, w.ln2_bias, &bt.ln2);
        bt.fc1_pre = nn::linear(bt.ln2_out, w.fc1_weight, w.fc1_bias);
        bt.fc1_act = nn::gelu(bt.fc1_pre);
        bt.output = bt.mid + nn::linear(bt.fc1_act, w.fc2_weight, w.fc2_bias);
        tokens = bt.output;
    }
    t.cls_final = tokens.topRows(1);
    t.cls_normed = nn::layer_norm(t.cls_final, weights_.norm_gain, weights_.norm_bias, &t.norm);
    t.logits = nn::linear(t.cls_normed, weights_.head_weight, weights_.head_bias);
    return t;
}

Perturbation TinyVit::backward(const Trace& t, const Matrix& dlogits, Weights* grads,
                               Matrix* dlast_ln1) const {
    const Matrix dcls_normed = nn::linear_backward(t.cls_normed, weights_.head_weight, dlogits,
                                                   grads ? &grads->head_weight : nullptr,
                                                   grads ? &grads->head_bias : nullptr);
    const Matrix dcls = nn::layer_norm_backward(t.norm, weights_.norm_gain, dcls_normed,
                                                grads ? &grads->norm_gain : nullptr,
                                                grads ? &grads->norm_bias : nullptr);
    Matrix dtokens = Matrix::Zero(config_.tokens(), config_.dim);
    dtokens.row(0) = dcls.row(0);

    for (std::size_t bi = weights_.blocks.size(); bi-- > 0;) {
        const Block& w = weights_.blocks[bi];
        const Trace::BlockTrace& bt = t.blocks[bi];
        Block* g = grads ? &grads->blocks[bi] : nullptr;

        const Matrix dfc1_act = nn::linear_backward(bt.fc1_act, w.fc2_weight, dtokens,
                                                    g ? &g->fc2_weight : nullptr,
                                                    g ? &g->fc2_bias : nullptr);
        const Matrix dfc1_pre = nn::gelu_backward(bt.fc1_pre, dfc1_act);
        const Matrix dln2_out = nn::linear_backward(bt.ln2_out, w.fc1_weight, dfc1_pre,
                                                    g ? &g->fc1_weight : nullptr,
                                                    g ? &g->fc1_bias : nullptr);
        Matrix dmid = dtokens + nn::layer_norm_backward(bt.ln2, w.ln2_gain, dln2_out,
                                                        g ? &g->ln2_gain : nullptr,
                                                        g ? &g->ln2_bias : nullptr);
        const Matrix dln1_out = multi_head_attention_backward(bt.attention, w.attention, dmid,
                                                              g ? &g->attention : nullptr);
        if (dlast_ln1 != nullptr && bi + 1 == weights_.blocks.size()) *dlast_ln1 = dln1_out;
        dtokens = dmid + nn::layer_norm_backward(bt.ln1, w.ln1_gain, dln1_out,
                                                 g ? &g->ln1_gain : nullptr,
                                                 g ? &g->ln1_bias : nullptr);
    }

    if (grads != nullptr) {
        grads->pos_embedding += dtokens;
        grads->cls_token.row(0) += dtokens.row(0);
    }
    const Matrix dembedded = dtokens.bottomRows(dtokens.rows() - 1);
    const Matrix dpatches = nn::linear_backward(t.patches, weights_.patch_weight, dembedded,
                                                grads ? &grads->patch_weight : nullptr,
                                                grads ? &grads->patch_bias : nullptr);

    Perturbation dx(input_shape());
    const int g = config_.grid();
    const int ps = config_.patch_size;
    const int c = config_.in_channels;
    for (int py = 0; py < g; ++py) {
        for (int px = 0; px < g; ++px) {
            const Eigen::Index row = static_cast<Eigen::Index>(py) * g + px;
            Eigen::Index col = 0;
            for (int dy = 0; dy < ps; ++dy) {
                for (int dxp = 0; dxp < ps; ++dxp) {
                    for (int ch = 0; ch < c; ++ch) {
                        dx.at(py * ps + dy, px * ps + dxp, ch) = dpatches(row, col++);
                    }
                }
            }
        }
    }
    return dx;
}

Logits TinyVit::forward(const Image& x) const {
    const Trace t = run(x);
    return Logits(t.logits.data(), t.logits.data() + t.logits.size());
}

GradientResult TinyVit::differentiate(const Image& x, const UpstreamFn& upstream) const {
    const Trace t = run(x);
    Logits logits(t.logits.data(), t.logits.data() + t.logits.size());
    const std::vector<double> up = upstream(logits);
    const Matrix dlogits = Eigen::Map<const Matrix>(up.data(), 1, static_cast<Eigen::Index>(up.size()));
    return {std::move(logits), backward(t, dlogits, nullptr, nullptr)};
}

AttentionMaps TinyVit::attention_maps(const Image& x) const {
    const Trace t = run(x);
    AttentionMaps maps;
    for (const auto& bt : t.blocks) maps.push_back(bt.attention.probabilities);
    return maps;
}

FeatureTap TinyVit::tokens_to_grid(const Matrix& tokens) const {
    const int g = config_.grid();
    FeatureTap tap{g, g, config_.dim, {}};
    tap.values.reserve(static_cast<std::size_t>(g) * g * config_.dim);
    for (Eigen::Index r = 1; r < tokens.rows(); ++r) {
        for (Eigen::Index k = 0; k < tokens.cols(); ++k) tap.values.push_back(tokens(r, k));
    }
    return tap;
}

FeatureTap TinyVit::first_block_features(const Image& x) const {
    const Trace t = run(x);
    return tokens_to_grid(t.blocks.front().output);
}

CamTap TinyVit::cam_tap(const Image& x, int class_id) const {
    require_valid_label(*this, class_id);
    const Trace t = run(x);
    Matrix dlogits = Matrix::Zero(1, config_.classes);
    dlogits(0, class_id) = 1.0;
    Matrix dln1;
    backward(t, dlogits, nullptr, &dln1);
    return {tokens_to_grid(t.blocks.back().ln1_out), tokens_to_grid(dln1)};
}

std::vector<NamedTensor> TinyVit::parameters() {
    std::vector<NamedTensor> out;
    out.emplace_back("patch.weight", &weights_.patch_weight);
    out.emplace_back("patch.bias", &weights_.patch_bias);
    out.emplace_back("cls_token", &weights_.cls_token);
    out.emplace_back("pos_embedding", &weights_.pos_embedding);
    for (std::size_t b = 0; b < weights_.blocks.size(); ++b) {
        Block& w = weights_.blocks[b];
        const std::string p = "block" + std::to_string(b) + ".";
        out.emplace_back(p + "ln1.gain", &w.ln1_gain);
        out.emplace_back(p + "ln1.bias", &w.ln1_bias);
        out.emplace_back(p + "attn.w_q", &w.attention.w_q);
        out.emplace_back(p + "attn.b_q", &w.attention.b_q);
        out.emplace_back(p + "attn.w_k", &w.attention.w_k);
        out.emplace_back(p + "attn.b_k", &w.attention.b_k);
        out.emplace_back(p + "attn.w_v", &w.attention.w_v);
        out.emplace_back(p + "attn.b_v", &w.attention.b_v);
        out.emplace_back(p + "attn.w_o", &w.attention.w_o);
        out.emplace_back(p + "attn.b_o", &w.attention.b_o);
        out.emplace_back(p + "ln2.gain", &w.ln2_gain);
        out.emplace_back(p + "ln2.bias", &w.ln2_bias);
        out.emplace_back(p + "fc1.weight", &w.fc1_weight);
        out.emplace_back(p + "fc1.bias", &w.fc1_bias);
        out.emplace_back(p + "fc2.weight", &w.fc2_weight);
        out.emplace_back(p + "fc2.bias", &w.fc2_bias);
    }
    out.emplace_back("norm.gain", &weights_.norm_gain);
    out.emplace_back("norm.bias", &weights_.norm_bias);
    out.emplace_back("head.weight", &weights_.head_weight);
    out.emplace_back("head.bias", &weights_.head_bias);
    return out;
}

SampleLoss TinyVit::accumulate_gradients(const Image& x, int label, std::vector<Matrix>& grads) const {
    require_valid_label(*this, label);
    const Trace t = run(x);
    const std::span<const double> logits(t.logits.data(), static_cast<std::size_t>(t.logits.size()));
    const std::vector<double> up = cross_entropy_grad(logits, label);

    TinyVit shadow(*this);
    for (auto& [name, m] : shadow.parameters()) m->setZero();
    backward(t, Eigen::Map<const Matrix>(up.data(), 1, static_cast<Eigen::Index>(up.size())),
             &shadow.weights_, nullptr);
    const auto g = shadow.parameters();
    for (std::size_t i = 0; i < g.size(); ++i) grads[i] += *g[i].second;
    return {cross_entropy(logits, label), argmax(logits)};
}

std::unique_ptr<TrainableClassifier> TinyVit::clone() const { return std::make_unique<TinyVit>(*this); }

std::vector<std::uint32_t> TinyVit::config_words() const {
    return {static_cast<std::uint32_t>(config_.image_size), static_cast<std::uint32_t>(config_.in_channels),
            static_cast<std::uint32_t>(config_.patch_size), static_cast<std::uint32_t>(config_.dim),
            static_cast<std::uint32_t>(config_.heads),      static_cast<std::uint32_t>(config_.blocks),
            static_cast<std::uint32_t>(config_.mlp_dim),    static_cast<std::uint32_t>(config_.classes)};
}

TinyVit TinyVit::from_config_words(const std::vector<std::uint32_t>& words) {
    if (words.size() != 8) throw std::invalid_argument("TinyVit: bad config header");
    TinyVitConfig c;
    c.image_size = static_cast<int>(words[0]);
    c.in_channels = static_cast<int>(words[1]);
    c.patch_size = static_cast<int>(words[2]);
    c.dim = static_cast<int>(words[3]);
    c.heads = static_cast<int>(words[4]);
    c.blocks = static_cast<int>(words[5]);
    c.mlp_dim = static_cast<int>(words[6]);
    c.classes = static_cast<int>(words[7]);
    return TinyVit(c, 0);
}

}  // namespace perturbench
