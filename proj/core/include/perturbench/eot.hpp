#pragma once

#include <cstdint>
#include <vector>

#include "perturbench/attacks.hpp"
#include "perturbench/defenses.hpp"

namespace perturbench {

/// Uniform distribution over preprocessing transforms.
struct TransformDistribution {
    std::vector<DefenseSpec> members;
    /// Transforms sampled (with replacement) per gradient step.
    int mc_samples = 8;

    static TransformDistribution of(const std::vector<DefenseKind>& kinds, int mc_samples = 8);
    void validate() const;
};

/// d loss(f(t(x))) / dx given upstream = d loss / d t(x). Exact adjoint for
/// crop/rescale and the CCP channel mix (clamp treated as identity);
/// straight-through for median, NLM, TV and JPEG.
Perturbation transform_gradient(const DefenseSpec& transform, const Image& x, const Perturbation& upstream);

/// PGD on the Monte-Carlo mean of the loss gradient over transforms drawn from `dist`.
AttackResult eot_pgd(const Classifier& model, const Image& x, int label, const LpBall& ball, int steps,
                     double eps_step, const TransformDistribution& dist, std::uint64_t seed);

}  // namespace perturbench
