#include "perturbench/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace perturbench {

double psnr(const Image& x, const Image& y) {
    require_same_shape(x.shape(), y.shape(), "psnr");
    if (x.size() == 0) throw ShapeError("psnr: empty image");
    double sse = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) sse += (x[i] - y[i]) * (x[i] - y[i]);
    if (sse == 0.0) return kPsnrIdentical;
    return 10.0 * std::log10(static_cast<double>(x.size()) / sse);
}

std::vector<double> gaussian_window(const SsimParams& params) {
    if (params.window <= 0 || params.window % 2 == 0 || !(params.sigma > 0.0)) {
        throw std::invalid_argument("ssim: window must be odd and sigma positive");
    }
    const int r = params.window / 2;
    std::vector<double> g(static_cast<std::size_t>(params.window));
    double total = 0.0;
    for (int i = -r; i <= r; ++i) {
        g[static_cast<std::size_t>(i + r)] = std::exp(-0.5 * i * i / (params.sigma * params.sigma));
        total += g[static_cast<std::size_t>(i + r)];
    }
    for (double& v : g) v /= total;
    std::vector<double> w(static_cast<std::size_t>(params.window * params.window));
    for (int a = 0; a < params.window; ++a) {
        for (int b = 0; b < params.window; ++b) {
            w[static_cast<std::size_t>(a * params.window + b)] = g[static_cast<std::size_t>(a)] * g[static_cast<std::size_t>(b)];
        }
    }
    return w;
}

double ssim(const Image& x, const Image& y, const SsimParams& params) {
    require_same_shape(x.shape(), y.shape(), "ssim");
    const int n = params.window;
    if (x.height() < n || x.width() < n) {
        throw ShapeError("ssim: image " + x.shape().to_string() + " smaller than the " + std::to_string(n) +
                         "-pixel window");
    }
    const std::vector<double> w = gaussian_window(params);
    const double c1 = params.c1();
    const double c2 = params.c2();
    const int rows = x.height() - n + 1;
    const int cols = x.width() - n + 1;

    double total = 0.0;
    for (int c = 0; c < x.channels(); ++c) {
        double channel_sum = 0.0;
        for (int r0 = 0; r0 < rows; ++r0) {
            for (int c0 = 0; c0 < cols; ++c0) {
                double mx = 0.0, my = 0.0, sxx = 0.0, syy = 0.0, sxy = 0.0;
                for (int a = 0; a < n; ++a) {
                    for (int b = 0; b < n; ++b) {
                        const double k = w[static_cast<std::size_t>(a * n + b)];
                        const double u = x.at(r0 + a, c0 + b, c);
                        const double v = y.at(r0 + a, c0 + b, c);
                        mx += k * u;
                        my += k * v;
                        sxx += k * (u * u);
                        syy += k * (v * v);
                        sxy += k * (u * v);
                    }
                }
                const double vx = sxx - mx * mx;
                const double vy = syy - my * my;
                const double cov = sxy - mx * my;
                channel_sum += ((2.0 * (mx * my) + c1) * (2.0 * cov + c2)) /
                               ((mx * mx + my * my + c1) * (vx + vy + c2));
            }
        }
        total += channel_sum / (static_cast<double>(rows) * cols);
    }
    return total / x.channels();
}

QualityReport quality(const Image& clean, const Image& adversarial) {
    const Perturbation delta = difference(adversarial, clean);
    QualityReport q;
    q.psnr = psnr(clean, adversarial);
    q.ssim = ssim(clean, adversarial);
    q.l0_fraction = lp_norm(delta, Norm::L0) / static_cast<double>(delta.size());
    q.l1 = lp_norm(delta, Norm::L1);
    q.l2 = lp_norm(delta, Norm::L2);
    q.linf = lp_norm(delta, Norm::Linf);
    return q;
}

double asr(std::span<const AttackResult> results) {
    if (results.empty()) throw std::invalid_argument("asr: no attack results");
    std::size_t wins = 0;
    for (const auto& r : results) wins += r.success ? 1 : 0;
    return static_cast<double>(wins) / static_cast<double>(results.size());
}

double top1_error(const Classifier& model, const LabeledSet& set, const std::optional<DefenseSpec>& defense) {
    if (set.empty()) throw std::invalid_argument("top1_error: empty set");
    std::size_t wrong = 0;
    for (std::size_t i = 0; i < set.size(); ++i) {
        const Image& x = set.images[i];
        const int pred = defense ? predict(model, apply_defense(*defense, x)) : predict(model, x);
        if (pred != set.labels[i]) ++wrong;
    }
    return static_cast<double>(wrong) / static_cast<double>(set.size());
}

}  // namespace perturbench
