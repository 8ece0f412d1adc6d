#include "perturbench/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace perturbench {

namespace {

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
    for (int b = 0; b < 4; ++b) out.push_back(static_cast<unsigned char>((v >> (8 * b)) & 0xFFu));
}

class Reader {
public:
    explicit Reader(const std::vector<unsigned char>& bytes) : bytes_(bytes) {}

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(bytes_[pos_++]) << (8 * b);
        return v;
    }
    float f32() { return std::bit_cast<float>(u32()); }
    std::string text(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    bool done() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n) const {
        if (pos_ + n > bytes_.size()) throw CheckpointError("checkpoint truncated");
    }
    const std::vector<unsigned char>& bytes_;
    std::size_t pos_ = 0;
};

std::unique_ptr<TrainableClassifier> blank_model(ModelKind kind, const std::vector<std::uint32_t>& words) {
    switch (kind) {
        case ModelKind::TinyCnn: return std::make_unique<TinyCnn>(TinyCnn::from_config_words(words));
        case ModelKind::TinyVit: return std::make_unique<TinyVit>(TinyVit::from_config_words(words));
        case ModelKind::LinearSoftmax: {
            if (words.size() != 4) throw CheckpointError("bad linear model header");
            const Shape shape{static_cast<int>(words[0]), static_cast<int>(words[1]), static_cast<int>(words[2])};
            const auto classes = static_cast<Eigen::Index>(words[3]);
            return std::make_unique<LinearSoftmax>(
                shape, Matrix::Zero(classes, static_cast<Eigen::Index>(shape.size())),
                std::vector<double>(static_cast<std::size_t>(classes), 0.0));
        }
    }
    throw CheckpointError("unknown model kind in checkpoint");
}

}  // namespace

std::vector<unsigned char> serialize_checkpoint(const TrainableClassifier& model) {
    std::vector<unsigned char> out(std::begin(kCheckpointMagic), std::end(kCheckpointMagic));
    put_u32(out, kCheckpointVersion);
    put_u32(out, static_cast<std::uint32_t>(model.kind()));
    const auto words = model.config_words();
    put_u32(out, static_cast<std::uint32_t>(words.size()));
    for (std::uint32_t w : words) put_u32(out, w);
    const auto params = model.parameters();
    put_u32(out, static_cast<std::uint32_t>(params.size()));
    for (const auto& [name, m] : params) {
        put_u32(out, static_cast<std::uint32_t>(name.size()));
        out.insert(out.end(), name.begin(), name.end());
        put_u32(out, static_cast<std::uint32_t>(m->rows()));
        put_u32(out, static_cast<std::uint32_t>(m->cols()));
        for (Eigen::Index i = 0; i < m->size(); ++i) {
            put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(m->data()[i])));
        }
    }
    return out;
}

std::unique_ptr<TrainableClassifier> deserialize_checkpoint(const std::vector<unsigned char>& bytes) {
    if (bytes.size() < sizeof(kCheckpointMagic) ||
        std::memcmp(bytes.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0) {
        throw CheckpointError("not a perturbench checkpoint (bad magic)");
    }
    Reader in(bytes);
    in.text(sizeof(kCheckpointMagic));
    const std::uint32_t version = in.u32();
    if (version != kCheckpointVersion) {
        throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
    }
    const auto kind = static_cast<ModelKind>(in.u32());
    std::vector<std::uint32_t> words(in.u32());
    for (auto& w : words) w = in.u32();
    auto model = blank_model(kind, words);

    auto params = model->parameters();
    const std::uint32_t count = in.u32();
    if (count != params.size()) throw CheckpointError("checkpoint tensor count mismatch");
    for (auto& [name, m] : params) {
        const std::string stored = in.text(in.u32());
        const std::uint32_t rows = in.u32();
        const std::uint32_t cols = in.u32();
        if (stored != name || rows != m->rows() || cols != m->cols()) {
            throw CheckpointError("checkpoint tensor '" + stored + "' does not match '" + name + "'");
        }
        for (Eigen::Index i = 0; i < m->size(); ++i) m->data()[i] = static_cast<double>(in.f32());
    }
    if (!in.done()) throw CheckpointError("trailing bytes after checkpoint");
    return model;
}

void save_checkpoint(const TrainableClassifier& model, const std::filesystem::path& path) {
    const auto bytes = serialize_checkpoint(model);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw CheckpointError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError("failed writing " + path.string());
}

std::unique_ptr<TrainableClassifier> load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open " + path.string());
    const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize_checkpoint(bytes);
}

}  // namespace perturbench
