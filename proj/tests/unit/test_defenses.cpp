#include <cmath>

#include "doctest.h"
#include "perturbench/defenses.hpp"
#include "perturbench/metrics.hpp"
#include "test_support.hpp"

using namespace perturbench;
using namespace perturbench::testing;

namespace {

Image constant(Shape s, double v) { return Image(s, v); }

Image noisy_constant(std::uint64_t seed, Shape s, double level, double sigma) {
    Rng rng(seed);
    Image x(s);
    for (double& v : x.values()) v = level + sigma * rng.normal();
    return x;
}

double mse_to(const Image& x, double level) {
    double s = 0.0;
    for (double v : x.values()) s += (v - level) * (v - level);
    return s / static_cast<double>(x.size());
}

double tv(const Image& u) { return rof_objective(u, u, 1.0); }

// Half-pixel bilinear interpolation of a 1-D signal, written independently.
std::vector<double> resample_1d(const std::vector<double>& in, int out_len) {
    const int n = static_cast<int>(in.size());
    std::vector<double> out(static_cast<std::size_t>(out_len));
    for (int i = 0; i < out_len; ++i) {
        double s = (i + 0.5) * n / out_len - 0.5;
        s = std::min(std::max(s, 0.0), n - 1.0);
        const int a = static_cast<int>(s);
        const int b = std::min(a + 1, n - 1);
        const double t = s - a;
        out[static_cast<std::size_t>(i)] = in[static_cast<std::size_t>(a)] * (1 - t) + in[static_cast<std::size_t>(b)] * t;
    }
    return out;
}

}  // namespace

TEST_SUITE("defenses") {
    TEST_CASE("median smoothing examples") {
        const Image c = constant(Shape{8, 8, 3}, 0.42);
        CHECK(median_smooth(c) == c);

        Image salt = constant(Shape{5, 5, 1}, 0.0);
        salt.at(2, 2, 0) = 1.0;
        CHECK(median_smooth(salt).at(2, 2, 0) == 0.0);

        const Image patch(Shape{3, 3, 1}, std::vector<double>{0.1, 0.2, 0.3, 0.4, 0.9, 0.5, 0.6, 0.7, 0.8});
        CHECK(median_smooth(patch).at(1, 1, 0) == 0.5);
        CHECK_THROWS(median_smooth(patch, 4));
    }

    TEST_CASE("noise estimate") {
        CHECK(estimate_sigma(constant(Shape{16, 16, 3}, 0.3)) == 0.0);
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            const double s = estimate_sigma(noisy_constant(seed, Shape{64, 64, 1}, 0.5, 0.1));
            CHECK(s >= 0.08);
            CHECK(s <= 0.12);
        }
        Image board(Shape{8, 8, 1});
        for (int h = 0; h < 8; ++h) {
            for (int w = 0; w < 8; ++w) board.at(h, w, 0) = (h + w) % 2 == 0 ? 0.6 : 0.0;
        }
        // Each 2x2 Haar block has HH = (0.6 + 0.6) / 2.
        CHECK(estimate_sigma(board) == doctest::Approx(0.6 / 0.6745).epsilon(1e-12));
    }

    TEST_CASE("non-local means") {
        const Image c = constant(Shape{32, 32, 3}, 0.7);
        CHECK(max_abs_diff(nlm_denoise(c), c) < 1e-6);
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            const Image x = noisy_constant(100 + seed, Shape{32, 32, 1}, 0.5, 0.05);
            CHECK(mse_to(nlm_denoise(x), 0.5) < mse_to(x, 0.5));
        }
        // A clean ramp has no diagonal detail, so the estimate is zero and the guard returns the input.
        Image ramp(Shape{32, 32, 1});
        for (int h = 0; h < 32; ++h) {
            for (int w = 0; w < 32; ++w) ramp.at(h, w, 0) = 0.01 * w;
        }
        REQUIRE(estimate_sigma(ramp) == 0.0);
        CHECK(nlm_denoise(ramp) == ramp);
        CHECK_THROWS(nlm_denoise(constant(Shape{16, 16, 3}, 0.5)));
    }

    TEST_CASE("total variation minimization") {
        const Image c = constant(Shape{16, 16, 3}, 0.25);
        CHECK(max_abs_diff(tv_minimize(c), c) < 1e-6);

        Rng rng(4);
        const Image x = random_image(rng, Shape{16, 16, 3});
        CHECK(max_abs_diff(tv_minimize(x, 1e-6), x) < 1e-3);

        Image edge = noisy_constant(9, Shape{32, 32, 1}, 0.0, 0.05);
        for (int h = 0; h < 32; ++h) {
            for (int w = 16; w < 32; ++w) edge.at(h, w, 0) += 0.8;
        }
        edge = clip_to_domain(edge);
        std::vector<double> trace;
        const Image out = tv_minimize(edge, 0.1, 2e-4, 200, &trace);
        CHECK(tv(out) <= tv(edge));
        REQUIRE(trace.size() >= 2);
        for (std::size_t i = 1; i < trace.size(); ++i) CHECK(trace[i] <= trace[i - 1] + 1e-12);
        CHECK(in_unit_range(out));
    }

    TEST_CASE("jpeg round trip") {
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            Rng rng(seed);
            const Image x = random_image(rng, Shape{32, 32, 3});
            CHECK(psnr(x, jpeg_roundtrip(x, 100)) >= 40.0);
        }
        for (double level : {0.0, 0.3, 0.5, 0.81, 1.0}) {
            const Image gray = constant(Shape{16, 16, 3}, level);
            CHECK(max_abs_diff(jpeg_roundtrip(gray, 65), gray) <= 1.0 / 255.0);
        }
        Rng rng(3);
        const Image x = random_image(rng, Shape{32, 32, 3});
        const Image once = jpeg_roundtrip(x, 65);
        const Image twice = jpeg_roundtrip(once, 65);
        CHECK(in_unit_range(once));
        CHECK(in_unit_range(twice));
        CHECK(psnr(x, twice) > 0.0);

        // Changing one block leaves every other block untouched.
        Image y = x;
        y.at(3, 3, 0) = 1.0 - y.at(3, 3, 0);
        const Image out_y = jpeg_roundtrip(y, 65);
        for (int h = 0; h < 32; ++h) {
            for (int w = 0; w < 32; ++w) {
                if (h < 8 && w < 8) continue;
                for (int c = 0; c < 3; ++c) REQUIRE(out_y.at(h, w, c) == once.at(h, w, c));
            }
        }
    }

    TEST_CASE("jpeg quantization tables") {
        const auto luma50 = jpeg_quant_table(false, 50);
        CHECK(luma50[0] == 16);
        CHECK(luma50[63] == 99);
        CHECK(jpeg_quant_table(true, 50)[0] == 17);
        // q = 65: scale 200 - 130 = 70 percent.
        CHECK(jpeg_quant_table(false, 65)[0] == (16 * 70 + 50) / 100);
        // q = 10: scale 5000 / 10 = 500 percent.
        CHECK(jpeg_quant_table(false, 10)[0] == (16 * 500 + 50) / 100);
        for (int v : jpeg_quant_table(false, 100)) CHECK(v == 1);
        CHECK_THROWS(jpeg_roundtrip(constant(Shape{8, 8, 3}, 0.5), 0));
    }

    TEST_CASE("crop and rescale") {
        const Image c = constant(Shape{32, 32, 3}, 0.6);
        CHECK(max_abs_diff(crop_rescale(c), c) < 1e-12);
        CHECK(crop_rescale(c).shape() == c.shape());
        CHECK_THROWS(crop_rescale(constant(Shape{4, 4, 1}, 0.5), 2));

        Image ramp(Shape{32, 32, 1});
        for (int h = 0; h < 32; ++h) {
            for (int w = 0; w < 32; ++w) ramp.at(h, w, 0) = (0.7 * h + 0.3 * w + 0.01 * h * w) / 50.0;
        }
        // Two-pass oracle: rows first, then columns, on the 28x28 centre.
        std::vector<std::vector<double>> rows(28);
        for (int h = 0; h < 28; ++h) {
            std::vector<double> line(28);
            for (int w = 0; w < 28; ++w) line[static_cast<std::size_t>(w)] = ramp.at(h + 2, w + 2, 0);
            rows[static_cast<std::size_t>(h)] = resample_1d(line, 32);
        }
        const Image out = crop_rescale(ramp);
        for (int w = 0; w < 32; ++w) {
            std::vector<double> col(28);
            for (int h = 0; h < 28; ++h) col[static_cast<std::size_t>(h)] = rows[static_cast<std::size_t>(h)][static_cast<std::size_t>(w)];
            const auto want = resample_1d(col, 32);
            for (int h = 0; h < 32; ++h) CHECK(out.at(h, w, 0) == doctest::Approx(want[static_cast<std::size_t>(h)]).epsilon(1e-6).scale(1.0));
        }
    }

    TEST_CASE("crop adjoint satisfies the dot-product identity") {
        Rng rng(8);
        Image x = random_image(rng, Shape{12, 10, 3});
        for (double& v : x.values()) v = 0.25 + 0.5 * v;  // keeps the clamp inactive
        Perturbation g(x.shape());
        for (double& v : g.values()) v = rng.normal();
        const Image ax = crop_rescale(x, 2);
        const Perturbation atg = crop_rescale_adjoint(g, 2);
        double lhs = 0.0, rhs = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            lhs += ax[i] * g[i];
            rhs += x[i] * atg[i];
        }
        CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
    }

    TEST_CASE("every defense preserves shape and range") {
        Rng rng(5);
        const Image x = random_image(rng, Shape{32, 32, 3});
        for (DefenseKind k : all_defenses()) {
            const Image y = apply_defense(k, x);
            CHECK(y.shape() == x.shape());
            CHECK(in_unit_range(y));
            CHECK(apply_defense(k, x) == y);
        }
        CHECK(apply_defense(DefenseKind::Identity, x) == x);
        CHECK(all_defenses().size() == 6);
        for (DefenseKind k : all_defenses()) CHECK(parse_defense_kind(to_string(k)) == k);
        CHECK_THROWS(parse_defense_kind("bpda"));
        DefenseSpec bad = DefenseSpec::defaults(DefenseKind::Jpeg);
        bad.quality = 101;
        CHECK_THROWS(bad.validate());
    }
}
