#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "doctest.h"
#include "perturbench/image.hpp"
#include "perturbench/rng.hpp"

using namespace perturbench;

namespace {

Perturbation vec(std::vector<double> v) {
    const int n = static_cast<int>(v.size());
    return Perturbation(Shape{1, n, 1}, std::move(v));
}

std::vector<double> random_vector(Rng& rng, std::size_t n, double scale) {
    std::vector<double> v(n);
    for (double& x : v) x = scale * rng.normal();
    return v;
}

// Euclidean projection onto the L1 ball by bisection on the soft threshold,
// independent of the sort-based routine under test.
std::vector<double> l1_projection_by_bisection(const std::vector<double>& v, double eps) {
    double l1 = 0.0;
    for (double x : v) l1 += std::abs(x);
    if (l1 <= eps) return v;
    double lo = 0.0;
    double hi = *std::max_element(v.begin(), v.end(), [](double a, double b) { return std::abs(a) < std::abs(b); });
    hi = std::abs(hi);
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        double s = 0.0;
        for (double x : v) s += std::max(std::abs(x) - mid, 0.0);
        (s > eps ? lo : hi) = mid;
    }
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        out[i] = std::copysign(std::max(std::abs(v[i]) - hi, 0.0), v[i]);
    }
    return out;
}

double dist2(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return s;
}

}  // namespace

TEST_SUITE("image_core") {
    TEST_CASE("lp_norm examples") {
        CHECK(lp_norm(vec({0.0, 0.0, 0.0}), Norm::L0) == 0.0);
        CHECK(lp_norm(vec({0.0, 0.0, 0.0}), Norm::L1) == 0.0);
        CHECK(lp_norm(vec({0.0, 0.0, 0.0}), Norm::L2) == 0.0);
        CHECK(lp_norm(vec({0.0, 0.0, 0.0}), Norm::Linf) == 0.0);
        CHECK(lp_norm(vec({0.3, -0.4}), Norm::L2) == doctest::Approx(0.5).epsilon(1e-15));
        CHECK(lp_norm(vec({0.3, -0.4}), Norm::Linf) == 0.4);
        CHECK(lp_norm(vec({0.3, -0.4}), Norm::L1) == doctest::Approx(0.7));
        CHECK(lp_norm(vec({0.3, 1e-13, 0.0, -2.0}), Norm::L0) == 2.0);
    }

    TEST_CASE("lp_norm rejects non-finite input") {
        CHECK_THROWS(lp_norm(vec({0.1, std::numeric_limits<double>::quiet_NaN()}), Norm::L2));
        CHECK_THROWS(lp_norm(vec({std::numeric_limits<double>::infinity()}), Norm::Linf));
    }

    TEST_CASE("projection examples") {
        const auto l1 = project_onto_ball(vec({0.5, 0.5}), LpBall{Norm::L1, 0.6});
        CHECK(l1[0] == doctest::Approx(0.3).epsilon(1e-12));
        CHECK(l1[1] == doctest::Approx(0.3).epsilon(1e-12));

        const auto l2 = project_onto_ball(vec({3.0, 4.0}), LpBall{Norm::L2, 1.0});
        CHECK(l2[0] == doctest::Approx(0.6).epsilon(1e-12));
        CHECK(l2[1] == doctest::Approx(0.8).epsilon(1e-12));

        const auto inf = project_onto_ball(vec({0.7, -0.2, -0.9}), LpBall{Norm::Linf, 0.5});
        CHECK(inf.storage() == std::vector<double>{0.5, -0.2, -0.5});

        const Perturbation inside = vec({0.01, -0.02, 0.005});
        for (Norm p : {Norm::L1, Norm::L2, Norm::Linf}) CHECK(project_onto_ball(inside, LpBall{p, 0.5}) == inside);

        CHECK_THROWS(project_onto_ball(inside, LpBall{Norm::L0, 3.0}));
    }

    TEST_CASE("projection properties on random vectors") {
        Rng rng(11);
        for (Norm p : {Norm::L1, Norm::L2, Norm::Linf}) {
            for (int trial = 0; trial < 500; ++trial) {
                const std::size_t n = 1 + rng.uniform_int(40);
                const double eps = rng.uniform(0.01, 2.0);
                const LpBall ball{p, eps};
                const auto v = random_vector(rng, n, rng.uniform(0.01, 3.0));
                const auto once = project_onto_ball(v, ball);
                const auto twice = project_onto_ball(once, ball);
                CHECK(once == twice);
                CHECK(lp_norm(once, p) <= eps * (1.0 + 1e-6));
                if (lp_norm(v, p) <= eps) CHECK(once == v);
            }
        }
    }

    TEST_CASE("L1 projection matches an independent oracle in small dimensions") {
        Rng rng(5);
        for (int trial = 0; trial < 300; ++trial) {
            const std::size_t n = 1 + rng.uniform_int(5);
            const double eps = rng.uniform(0.05, 1.5);
            const auto v = random_vector(rng, n, 1.0);
            const auto got = project_onto_ball(v, LpBall{Norm::L1, eps});
            const auto want = l1_projection_by_bisection(v, eps);
            for (std::size_t i = 0; i < n; ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-6).scale(1.0));
            // No sampled feasible point is closer to v than the projection.
            const double best = dist2(got, v);
            for (int k = 0; k < 200; ++k) {
                auto cand = random_vector(rng, n, 1.0);
                const double l1 = lp_norm(cand, Norm::L1);
                for (double& c : cand) c *= eps / l1 * rng.uniform();
                CHECK(dist2(cand, v) >= best - 1e-9);
            }
        }
    }

    TEST_CASE("clip_to_domain") {
        Image x(Shape{1, 3, 1}, std::vector<double>{0.2, 1.3, -0.2});
        const Image y = clip_to_domain(x);
        CHECK(y.storage() == std::vector<double>{0.2, 1.0, 0.0});
        CHECK(clip_to_domain(y) == y);
        const Image valid(Shape{2, 2, 1}, std::vector<double>{0.0, 0.5, 1.0, 0.25});
        CHECK(clip_to_domain(valid) == valid);
    }

    TEST_CASE("image layout and shape checks") {
        Image x(Shape{2, 3, 3});
        x.at(1, 2, 1) = 0.5;
        CHECK(x[(1 * 3 + 2) * 3 + 1] == 0.5);
        CHECK_THROWS_AS(Image(Shape{2, 2, 1}, std::vector<double>(3)), ShapeError);
        CHECK_THROWS_AS(difference(Image(Shape{2, 2, 1}), Image(Shape{2, 2, 3})), ShapeError);
    }

    TEST_CASE("Rng reproducibility and substreams") {
        Rng a(42), b(42), c(43);
        bool differs = false;
        for (int i = 0; i < 100000; ++i) {
            const auto va = a.next_u64();
            REQUIRE(va == b.next_u64());
            differs = differs || va != c.next_u64();
        }
        CHECK(differs);
        Rng s1 = Rng(42).substream(1), s2 = Rng(42).substream(2);
        CHECK(s1.next_u64() != s2.next_u64());
        Rng u(9);
        for (int i = 0; i < 10000; ++i) {
            const double x = u.uniform();
            REQUIRE(x >= 0.0);
            REQUIRE(x < 1.0);
            REQUIRE(u.uniform_int(7) < 7);
        }
    }

    TEST_CASE("norm names round-trip") {
        for (Norm p : {Norm::L0, Norm::L1, Norm::L2, Norm::Linf}) CHECK(parse_norm(to_string(p)) == p);
        CHECK_THROWS(parse_norm("l3"));
        CHECK(from_8bit(255.0) == 1.0);
    }
}
