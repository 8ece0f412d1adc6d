#include "perturbench/image.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>

namespace perturbench {

std::string Shape::to_string() const {
    return std::to_string(height) + "x" + std::to_string(width) + "x" + std::to_string(channels);
}

void require_same_shape(const Shape& a, const Shape& b, const char* what) {
    if (a != b) {
        throw ShapeError(std::string(what) + ": shape mismatch " + a.to_string() + " vs " +
                         b.to_string());
    }
}

Perturbation difference(const Image& adversarial, const Image& clean) {
    require_same_shape(adversarial.shape(), clean.shape(), "difference");
    Perturbation out(clean.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = adversarial[i] - clean[i];
    return out;
}

Image add(const Image& x, const Perturbation& delta) {
    require_same_shape(x.shape(), delta.shape(), "add");
    Image out(x.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + delta[i];
    return out;
}

std::string to_string(Norm p) {
    switch (p) {
        case Norm::L0: return "0";
        case Norm::L1: return "1";
        case Norm::L2: return "2";
        case Norm::Linf: return "inf";
    }
    return "?";
}

Norm parse_norm(const std::string& text) {
    if (text == "0" || text == "l0" || text == "L0") return Norm::L0;
    if (text == "1" || text == "l1" || text == "L1") return Norm::L1;
    if (text == "2" || text == "l2" || text == "L2") return Norm::L2;
    if (text == "inf" || text == "linf" || text == "Linf" || text == "Inf") return Norm::Linf;
    throw std::invalid_argument("unknown norm '" + text + "'");
}

double lp_norm(std::span<const double> delta, Norm p) {
    double acc = 0.0;
    for (double v : delta) {
        if (!std::isfinite(v)) throw std::domain_error("lp_norm: non-finite entry");
        const double a = std::abs(v);
        switch (p) {
            case Norm::L0: acc += a > kL0Tolerance ? 1.0 : 0.0; break;
            case Norm::L1: acc += a; break;
            case Norm::L2: acc += a * a; break;
            case Norm::Linf: acc = std::max(acc, a); break;
        }
    }
    return p == Norm::L2 ? std::sqrt(acc) : acc;
}

namespace {

std::vector<double> project_l2(std::span<const double> delta, double eps) {
    const double norm = lp_norm(delta, Norm::L2);
    double scale = eps / norm;
    std::vector<double> out(delta.size());
    // Rounding can leave the rescaled vector a few ulps outside; shrink until
    // feasible so that a second projection is a no-op.
    for (;;) {
        for (std::size_t i = 0; i < delta.size(); ++i) out[i] = delta[i] * scale;
        if (lp_norm(out, Norm::L2) <= eps) break;
        scale = std::nextafter(scale, 0.0);
    }
    return out;
}

// Sort-and-threshold projection onto the L1 ball (Duchi et al. 2008).
std::vector<double> project_l1(std::span<const double> delta, double eps) {
    std::vector<double> mags(delta.size());
    std::transform(delta.begin(), delta.end(), mags.begin(), [](double v) { return std::abs(v); });
    std::vector<double> sorted = mags;
    std::sort(sorted.begin(), sorted.end(), std::greater<>());

    double cumulative = 0.0;
    double theta = 0.0;
    for (std::size_t j = 0; j < sorted.size(); ++j) {
        cumulative += sorted[j];
        const double candidate = (cumulative - eps) / static_cast<double>(j + 1);
        if (sorted[j] - candidate > 0.0) theta = candidate;
    }
    theta = std::max(theta, 0.0);

    std::vector<double> out(delta.size());
    for (;;) {
        for (std::size_t i = 0; i < delta.size(); ++i) {
            const double shrunk = std::max(mags[i] - theta, 0.0);
            out[i] = std::copysign(shrunk, delta[i]);
            if (shrunk == 0.0) out[i] = 0.0;
        }
        if (lp_norm(out, Norm::L1) <= eps) break;
        theta = std::nextafter(theta, std::numeric_limits<double>::infinity());
    }
    return out;
}

}  // namespace

std::vector<double> project_onto_ball(std::span<const double> delta, const LpBall& ball) {
    if (ball.epsilon < 0.0) throw std::invalid_argument("project_onto_ball: negative epsilon");
    if (ball.p == Norm::L0) {
        throw std::invalid_argument("project_onto_ball: L0 projection is unsupported");
    }
    if (lp_norm(delta, ball.p) <= ball.epsilon) return {delta.begin(), delta.end()};
    if (ball.epsilon == 0.0) return std::vector<double>(delta.size(), 0.0);

    switch (ball.p) {
        case Norm::Linf: {
            std::vector<double> out(delta.size());
            for (std::size_t i = 0; i < delta.size(); ++i) {
                out[i] = std::clamp(delta[i], -ball.epsilon, ball.epsilon);
            }
            return out;
        }
        case Norm::L2: return project_l2(delta, ball.epsilon);
        case Norm::L1: return project_l1(delta, ball.epsilon);
        case Norm::L0: break;
    }
    return {};
}

Perturbation project_onto_ball(const Perturbation& delta, const LpBall& ball) {
    return Perturbation(delta.shape(), project_onto_ball(delta.values(), ball));
}

void clip_in_place(Image& x) {
    for (double& v : x.values()) v = std::clamp(v, 0.0, 1.0);
}

Image clip_to_domain(Image x) {
    clip_in_place(x);
    return x;
}

}  // namespace perturbench
