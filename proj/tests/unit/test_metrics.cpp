#include <cmath>

#include "doctest.h"
#include "perturbench/metrics.hpp"
#include "test_support.hpp"

using namespace perturbench;
using namespace perturbench::testing;

namespace {

// Direct two-pass SSIM: weighted means first, then centred moments.
double ssim_oracle(const Image& x, const Image& y, int n, double sigma) {
    std::vector<double> g1(static_cast<std::size_t>(n));
    double z = 0.0;
    for (int i = 0; i < n; ++i) z += (g1[static_cast<std::size_t>(i)] = std::exp(-0.5 * (i - n / 2) * (i - n / 2) / (sigma * sigma)));
    for (double& v : g1) v /= z;
    const double c1 = 1e-4, c2 = 9e-4;
    double total = 0.0;
    for (int c = 0; c < x.channels(); ++c) {
        double sum = 0.0;
        int count = 0;
        for (int r0 = 0; r0 + n <= x.height(); ++r0) {
            for (int q0 = 0; q0 + n <= x.width(); ++q0) {
                double mx = 0.0, my = 0.0;
                for (int a = 0; a < n; ++a) {
                    for (int b = 0; b < n; ++b) {
                        const double k = g1[static_cast<std::size_t>(a)] * g1[static_cast<std::size_t>(b)];
                        mx += k * x.at(r0 + a, q0 + b, c);
                        my += k * y.at(r0 + a, q0 + b, c);
                    }
                }
                double vx = 0.0, vy = 0.0, cov = 0.0;
                for (int a = 0; a < n; ++a) {
                    for (int b = 0; b < n; ++b) {
                        const double k = g1[static_cast<std::size_t>(a)] * g1[static_cast<std::size_t>(b)];
                        const double dx = x.at(r0 + a, q0 + b, c) - mx, dy = y.at(r0 + a, q0 + b, c) - my;
                        vx += k * dx * dx;
                        vy += k * dy * dy;
                        cov += k * dx * dy;
                    }
                }
                sum += (2 * mx * my + c1) * (2 * cov + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
                ++count;
            }
        }
        total += sum / count;
    }
    return total / x.channels();
}

}  // namespace

TEST_SUITE("metrics") {
    TEST_CASE("psnr examples") {
        const Image a(Shape{4, 4, 3}, 0.0), b(Shape{4, 4, 3}, 0.1);
        CHECK(psnr(a, b) == doctest::Approx(20.0).epsilon(1e-12));
        CHECK(psnr(a, a) == kPsnrIdentical);
        CHECK(std::isinf(psnr(b, b)));
        CHECK(psnr(Image(Shape{1, 2, 1}, std::vector<double>{0.0, 1.0}), Image(Shape{1, 2, 1}, 0.0)) ==
              doctest::Approx(10.0 * std::log10(2.0)));
        CHECK_THROWS(psnr(a, Image(Shape{4, 4, 1})));
    }

    TEST_CASE("psnr matches the definition on random pairs") {
        Rng rng(1);
        for (int t = 0; t < 20; ++t) {
            const Image x = random_image(rng, Shape{8, 8, 3}), y = random_image(rng, Shape{8, 8, 3});
            double mse = 0.0;
            for (std::size_t i = 0; i < x.size(); ++i) mse += (x[i] - y[i]) * (x[i] - y[i]);
            mse /= static_cast<double>(x.size());
            CHECK(psnr(x, y) == doctest::Approx(-10.0 * std::log10(mse)).epsilon(1e-12));
        }
    }

    TEST_CASE("ssim") {
        Rng rng(2);
        const Image x = random_image(rng, Shape{16, 14, 3});
        Image y = x;
        for (double& v : y.values()) v = std::min(1.0, std::max(0.0, v + 0.1 * rng.normal()));
        CHECK(ssim(x, x) == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(ssim(x, y) == ssim(y, x));
        CHECK(ssim(x, y) == doctest::Approx(ssim_oracle(x, y, 11, 1.5)).epsilon(1e-9));
        CHECK(ssim(x, y) < 1.0);

        // Constant images have zero variance, leaving only the luminance term.
        const double a = 0.2, b = 0.6, c1 = 1e-4;
        CHECK(ssim(Image(Shape{11, 11, 1}, a), Image(Shape{11, 11, 1}, b)) ==
              doctest::Approx((2 * a * b + c1) / (a * a + b * b + c1)).epsilon(1e-12));
        CHECK_THROWS(ssim(Image(Shape{8, 8, 1}), Image(Shape{8, 8, 1})));

        const auto w = gaussian_window({});
        double total = 0.0;
        for (double v : w) total += v;
        CHECK(total == doctest::Approx(1.0).epsilon(1e-14));
    }

    TEST_CASE("quality, asr and top-1 error") {
        const Image clean(Shape{12, 12, 1}, 0.5);
        Image adv = clean;
        adv.at(0, 0, 0) = 0.6;
        adv.at(1, 1, 0) = 0.3;
        const QualityReport q = quality(clean, adv);
        CHECK(q.l0_fraction == doctest::Approx(2.0 / 144.0));
        CHECK(q.l1 == doctest::Approx(0.3));
        CHECK(q.l2 == doctest::Approx(std::sqrt(0.05)));
        CHECK(q.linf == doctest::Approx(0.2));

        std::vector<AttackResult> rs(4);
        rs[1].success = rs[3].success = true;
        CHECK(asr(rs) == 0.5);
        CHECK_THROWS(asr(std::vector<AttackResult>{}));

        const LinearSoftmax model(Shape{4, 4, 1}, 3, 5);
        Rng rng(3);
        LabeledSet set;
        int right = 0;
        for (int i = 0; i < 10; ++i) {
            const Image x = random_image(rng, model.input_shape());
            const int p = predict(model, x);
            const int label = i % 2 == 0 ? p : (p + 1) % 3;
            right += label == p;
            set.push_back(x, label);
        }
        CHECK(top1_error(model, set) == doctest::Approx(1.0 - right / 10.0));
        CHECK(top1_error(model, set, DefenseSpec::defaults(DefenseKind::Identity)) == top1_error(model, set));
    }
}
