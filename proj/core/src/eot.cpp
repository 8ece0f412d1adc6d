#include "perturbench/eot.hpp"

#include <stdexcept>

#include "perturbench/rng.hpp"

namespace perturbench {

TransformDistribution TransformDistribution::of(const std::vector<DefenseKind>& kinds, int mc_samples) {
    TransformDistribution dist;
    for (DefenseKind k : kinds) dist.members.push_back(DefenseSpec::defaults(k));
    dist.mc_samples = mc_samples;
    return dist;
}

void TransformDistribution::validate() const {
    if (members.empty()) throw std::invalid_argument("eot: transform distribution is empty");
    if (mc_samples < 1) throw std::invalid_argument("eot: mc_samples must be >= 1");
    for (const auto& m : members) m.validate();
}

Perturbation transform_gradient(const DefenseSpec& transform, const Image& x, const Perturbation& upstream) {
    require_same_shape(x.shape(), upstream.shape(), "transform_gradient");
    switch (transform.kind) {
        case DefenseKind::Cr: return crop_rescale_adjoint(upstream, transform.margin);
        case DefenseKind::Ccp: {
            if (x.channels() != 3) throw ShapeError("ccp gradient needs 3 channels");
            const CcpParams p = transform.ccp_params();
            const std::array<const std::array<double, 3>*, 3> rows{&p.alpha, &p.beta, &p.gamma};
            Perturbation g(upstream.shape());
            for (int h = 0; h < x.height(); ++h) {
                for (int w = 0; w < x.width(); ++w) {
                    for (int k = 0; k < 3; ++k) {
                        double s = 0.0;
                        for (int c = 0; c < 3; ++c) s += (*rows[static_cast<std::size_t>(c)])[static_cast<std::size_t>(k)] * upstream.at(h, w, c);
                        g.at(h, w, k) = p.s / 3.0 * s;
                    }
                }
            }
            return g;
        }
        case DefenseKind::Identity:
        case DefenseKind::Ss:
        case DefenseKind::Nlm:
        case DefenseKind::Tvm:
        case DefenseKind::Jpeg: return upstream;
    }
    throw std::invalid_argument("unknown defense kind");
}

AttackResult eot_pgd(const Classifier& model, const Image& x, int label, const LpBall& ball, int steps,
                     double eps_step, const TransformDistribution& dist, std::uint64_t seed) {
    dist.validate();
    require_valid_label(model, label);
    if (ball.p != Norm::Linf) throw std::invalid_argument("eot_pgd: only the linf norm is supported");
    Rng rng(seed, 0xE07);
    std::size_t queries = 0;
    Image adv = pgd_iterate(x, ball, steps, eps_step, [&](const Image& cur, int) {
        Perturbation mean(cur.shape());
        for (int m = 0; m < dist.mc_samples; ++m) {
            const DefenseSpec& t = dist.members[rng.uniform_int(dist.members.size())];
            const Image transformed = apply_defense(t, cur);
            const Perturbation g = transform_gradient(t, cur, input_gradient(model, transformed, label));
            ++queries;
            for (std::size_t i = 0; i < g.size(); ++i) mean[i] += g[i];
        }
        for (double& v : mean.values()) v /= dist.mc_samples;
        return mean;
    });
    AttackResult r;
    r.success = predict(model, adv) != label;
    r.final_lp = lp_norm(difference(adv, x), Norm::Linf);
    r.adversarial = std::move(adv);
    r.queries_used = queries + 1;
    r.iterations_used = static_cast<std::size_t>(steps);
    return r;
}

}  // namespace perturbench
