#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "perturbench/attention.hpp"
#include "perturbench/checkpoint.hpp"
#include "perturbench/dataset.hpp"
#include "perturbench/models.hpp"
#include "perturbench/training.hpp"

using namespace perturbench;

namespace {

Matrix random_matrix(Rng& rng, int rows, int cols) {
    Matrix m(rows, cols);
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) m(r, c) = rng.normal();
    }
    return m;
}

// Scalar loops straight from softmax(Q K^T / sqrt(d_k)) V.
Matrix attention_oracle(const Matrix& q, const Matrix& k, const Matrix& v) {
    const int n = static_cast<int>(q.rows());
    const int dk = static_cast<int>(q.cols());
    Matrix out = Matrix::Zero(n, v.cols());
    for (int i = 0; i < n; ++i) {
        std::vector<double> s(static_cast<std::size_t>(n));
        double mx = -1e300;
        for (int j = 0; j < n; ++j) {
            double dot = 0.0;
            for (int t = 0; t < dk; ++t) dot += q(i, t) * k(j, t);
            s[static_cast<std::size_t>(j)] = dot / std::sqrt(static_cast<double>(dk));
            mx = std::max(mx, s[static_cast<std::size_t>(j)]);
        }
        double z = 0.0;
        for (double& x : s) z += (x = std::exp(x - mx));
        for (int j = 0; j < n; ++j) {
            for (int c = 0; c < v.cols(); ++c) out(i, c) += s[static_cast<std::size_t>(j)] / z * v(j, c);
        }
    }
    return out;
}

Image random_image(Rng& rng, Shape shape) {
    Image x(shape);
    for (double& v : x.values()) v = rng.uniform();
    return x;
}

}  // namespace

TEST_SUITE("models") {
    TEST_CASE("attention examples") {
        Rng rng(1);
        SUBCASE("single token returns its value row") {
            const Matrix q = random_matrix(rng, 1, 4), k = random_matrix(rng, 1, 4), v = random_matrix(rng, 1, 3);
            CHECK((scaled_dot_product_attention(q, k, v) - v).cwiseAbs().maxCoeff() < 1e-15);
        }
        SUBCASE("equal scores average the values") {
            const Matrix q = Matrix::Zero(3, 4), k = random_matrix(rng, 3, 4), v = random_matrix(rng, 3, 2);
            Matrix probs;
            const Matrix out = scaled_dot_product_attention(q, k, v, &probs);
            for (int i = 0; i < 3; ++i) {
                for (int c = 0; c < 2; ++c) CHECK(out(i, c) == doctest::Approx(v.col(c).mean()).epsilon(1e-14));
                CHECK(probs.row(i).sum() == doctest::Approx(1.0).epsilon(1e-14));
            }
        }
        SUBCASE("random 3x4 matches the scalar oracle") {
            const Matrix q = random_matrix(rng, 3, 4), k = random_matrix(rng, 3, 4), v = random_matrix(rng, 3, 4);
            CHECK((scaled_dot_product_attention(q, k, v) - attention_oracle(q, k, v)).cwiseAbs().maxCoeff() < 1e-12);
        }
        SUBCASE("shape mismatch") {
            CHECK_THROWS(scaled_dot_product_attention(Matrix::Zero(3, 4), Matrix::Zero(3, 5), Matrix::Zero(3, 2)));
            CHECK_THROWS(scaled_dot_product_attention(Matrix::Zero(3, 4), Matrix::Zero(2, 4), Matrix::Zero(3, 2)));
        }
    }

    TEST_CASE("multi-head attention") {
        Rng rng(2);
        const Matrix x = random_matrix(rng, 5, 8);
        SUBCASE("one head with identity output projection is plain attention") {
            MhsaWeights w = MhsaWeights::random(8, 1, rng);
            w.w_o = Matrix::Identity(8, 8);
            const Matrix want = scaled_dot_product_attention(x * w.w_q, x * w.w_k, x * w.w_v);
            CHECK((multi_head_attention(x, w) - want).cwiseAbs().maxCoeff() < 1e-12);
        }
        SUBCASE("zero weights give zero output") {
            CHECK(multi_head_attention(x, MhsaWeights::zeros(8, 2)).cwiseAbs().maxCoeff() == 0.0);
        }
        SUBCASE("two heads match a per-head oracle") {
            MhsaWeights w = MhsaWeights::random(8, 2, rng);
            for (Matrix* b : {&w.b_q, &w.b_k, &w.b_v, &w.b_o}) *b = random_matrix(rng, 1, 8);
            const Matrix q = (x * w.w_q).rowwise() + w.b_q.row(0);
            const Matrix k = (x * w.w_k).rowwise() + w.b_k.row(0);
            const Matrix v = (x * w.w_v).rowwise() + w.b_v.row(0);
            Matrix concat(5, 8);
            for (int h = 0; h < 2; ++h) {
                concat.middleCols(4 * h, 4) =
                    attention_oracle(q.middleCols(4 * h, 4), k.middleCols(4 * h, 4), v.middleCols(4 * h, 4));
            }
            const Matrix want = (concat * w.w_o).rowwise() + w.b_o.row(0);
            CHECK((multi_head_attention(x, w) - want).cwiseAbs().maxCoeff() < 1e-12);
        }
        SUBCASE("indivisible head count") {
            MhsaWeights w = MhsaWeights::zeros(8, 3);
            CHECK_THROWS(multi_head_attention(x, w));
        }
    }

    TEST_CASE("forward shapes and determinism") {
        Rng rng(3);
        const Image x = random_image(rng, Shape{32, 32, 3});
        for (ModelKind kind : {ModelKind::TinyCnn, ModelKind::TinyVit}) {
            const auto m = make_model(kind, 4);
            const Logits a = m->forward(x);
            CHECK(a.size() == 10);
            CHECK(a == m->forward(x));
            for (double v : a) CHECK(std::isfinite(v));
            CHECK_THROWS(m->forward(Image(Shape{16, 16, 3})));
        }
    }

    TEST_CASE("input gradients agree with finite differences") {
        const TinyVit vit({}, 5);
        const TinyCnn cnn({}, 5);
        const LinearSoftmax lin(Shape{8, 8, 3}, 4, 6);
        CHECK(grad_check(cnn, 3, 1).max_relative_error <= 1e-3);
        CHECK(grad_check(vit, 3, 1).max_relative_error <= 1e-3);
        CHECK(grad_check(lin, 3, 1).max_relative_error <= 1e-6);
    }

    TEST_CASE("weight gradients agree with finite differences") {
        Rng rng(7);
        const Image x = random_image(rng, Shape{32, 32, 3});
        for (ModelKind kind : {ModelKind::TinyCnn, ModelKind::TinyVit}) {
            auto m = make_model(kind, 8);
            auto grads = m->zero_gradients();
            m->accumulate_gradients(x, 3, grads);
            auto params = m->parameters();
            for (std::size_t t = 0; t < params.size(); t += 3) {
                Matrix& w = *params[t].second;
                const Eigen::Index idx = static_cast<Eigen::Index>(rng.uniform_int(static_cast<std::uint64_t>(w.size())));
                const double orig = w.data()[idx];
                const double h = 1e-5;
                w.data()[idx] = orig + h;
                const double up = loss(*m, x, 3);
                w.data()[idx] = orig - h;
                const double down = loss(*m, x, 3);
                w.data()[idx] = orig;
                const double fd = (up - down) / (2 * h);
                const double g = grads[t].data()[idx];
                INFO(params[t].first);
                CHECK(g == doctest::Approx(fd).epsilon(1e-4).scale(1e-6));
            }
        }
    }

    TEST_CASE("taps") {
        Rng rng(9);
        const Image x = random_image(rng, Shape{32, 32, 3});
        const TinyVit vit({}, 1);
        const auto maps = vit.attention_maps(x);
        REQUIRE(maps.size() == 2);
        REQUIRE(maps[0].size() == 2);
        CHECK(maps[0][0].rows() == 65);
        for (int r = 0; r < 65; ++r) CHECK(maps[1][1].row(r).sum() == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(vit.cam_tap(x, 2).activation.rows == 8);
        const TinyCnn cnn({}, 1);
        CHECK_FALSE(cnn.has_attention());
        CHECK_THROWS_AS(cnn.attention_maps(x), TapUnavailable);
        CHECK(cnn.first_block_features(x).channels == 16);
        const LinearSoftmax lin(Shape{32, 32, 3}, 10, 1);
        CHECK_THROWS_AS(lin.cam_tap(x, 0), TapUnavailable);
    }

    TEST_CASE("checkpoint round trip") {
        for (ModelKind kind : {ModelKind::TinyCnn, ModelKind::TinyVit}) {
            const auto m = make_model(kind, 12);
            const auto bytes = serialize_checkpoint(*m);
            const auto back = deserialize_checkpoint(bytes);
            CHECK(back->kind() == kind);
            CHECK(serialize_checkpoint(*back) == bytes);
            Rng rng(1);
            const Image x = random_image(rng, Shape{32, 32, 3});
            CHECK(back->forward(x) == m->forward(x));
        }
        std::vector<unsigned char> junk(20, 'x');
        CHECK_THROWS_AS(deserialize_checkpoint(junk), CheckpointError);
        auto bytes = serialize_checkpoint(*make_model(ModelKind::TinyCnn, 1));
        bytes.resize(bytes.size() - 4);
        CHECK_THROWS_AS(deserialize_checkpoint(bytes), CheckpointError);
        const auto path = std::filesystem::temp_directory_path() / "perturbench_ckpt_test.pbck";
        save_checkpoint(*make_model(ModelKind::TinyVit, 2), path);
        CHECK(load_checkpoint(path)->kind() == ModelKind::TinyVit);
        std::filesystem::remove(path);
    }

    TEST_CASE("training lowers the loss and is deterministic") {
        const ToyDataset data = generate_toy_dataset(3, 200, 50);
        TrainConfig cfg;
        cfg.epochs = 3;
        cfg.batch_size = 20;
        cfg.learning_rate = 0.1;
        cfg.seed = 4;
        TinyCnn a({}, 1), b({}, 1);
        const auto ha = train(a, data.train, &data.test, cfg);
        const auto hb = train(b, data.train, &data.test, cfg);
        CHECK(ha.train_loss.back() < ha.train_loss.front());
        CHECK(ha.train_loss == hb.train_loss);
        CHECK(serialize_checkpoint(a) == serialize_checkpoint(b));
        CHECK(ha.test_accuracy.size() == 3);

        cfg.optimizer = Optimizer::Adam;
        cfg.learning_rate = 1e-3;
        TinyVit v({}, 1);
        const auto hv = train(v, data.train, nullptr, cfg);
        CHECK(hv.train_loss.back() < hv.train_loss.front());
        CHECK(hv.test_accuracy.empty());

        cfg.batch_size = 0;
        CHECK_THROWS(cfg.validate());
    }

    TEST_CASE("model and optimizer names") {
        for (ModelKind k : {ModelKind::TinyCnn, ModelKind::TinyVit, ModelKind::LinearSoftmax}) {
            CHECK(parse_model_kind(to_string(k)) == k);
        }
        CHECK(parse_optimizer("adam") == Optimizer::Adam);
        CHECK_THROWS(parse_model_kind("resnet50"));
        TinyVitConfig bad;
        bad.heads = 3;
        CHECK_THROWS(bad.validate());
    }
}
