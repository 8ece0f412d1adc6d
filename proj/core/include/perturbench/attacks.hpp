#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>

#include "perturbench/classifier.hpp"
#include "perturbench/dataset.hpp"
#include "perturbench/image.hpp"

namespace perturbench {

enum class AttackKind { Fgsm, Pgd, CwL2, CwLinf, Jsma, Uap, Square, Rays, Ccp };

std::string to_string(AttackKind kind);
AttackKind parse_attack_kind(const std::string& text);

struct AttackSpec {
    AttackKind kind = AttackKind::Fgsm;
    /// Absent for CW-L2, JSMA (budgeted by gamma instead) and CCP.
    std::optional<LpBall> ball;
    int max_iterations = 10;
    /// 0 selects epsilon / 10.
    double eps_step = 0.0;
    double confidence = 0.0;
    double learning_rate = 5e-3;
    double initial_const = 2.0 / 255.0;
    int binary_search_steps = 10;
    double theta = 0.1;
    double gamma = 1.0;
    double p_init = 0.05;
    int restarts = 1;
    int query_budget = 2000;
    std::uint64_t seed = 0;
    double s = 2.0;
    double b = 30.0 / 255.0;

    /// Default parameters for `kind` with the given radius (ignored by CW-L2 and CCP).
    static AttackSpec defaults(AttackKind kind, double epsilon = 8.0 / 255.0, Norm norm = Norm::Linf);

    double step_size() const;
    void validate() const;
    /// Short identifier used in reports, e.g. "pgd_linf" or "cw_l2".
    std::string label() const;
};

struct AttackResult {
    Image adversarial;
    bool success = false;
    std::size_t queries_used = 0;
    std::size_t iterations_used = 0;
    /// Norm of adversarial - x in the attack's own norm (L2 for CW-L2, L0 count for JSMA,
    /// Linf otherwise).
    double final_lp = 0.0;
};

struct CcpParams {
    std::array<double, 3> alpha{1.0, 0.0, 0.0};
    std::array<double, 3> beta{0.0, 1.0, 0.0};
    std::array<double, 3> gamma{0.0, 0.0, 1.0};
    double s = 3.0;
    double b = 0.0;

    /// Weights drawn from U[0,1] in the order alpha, beta, gamma.
    static CcpParams random(std::uint64_t seed, double s, double b);
};

Image ccp_transform(const Image& x, const CcpParams& params);

AttackResult fgsm(const Classifier& model, const Image& x, int label, double epsilon);

/// Gradient of the attack objective at the current iterate; `step` counts from 0.
using GradientOracle = std::function<Perturbation(const Image& current, int step)>;

/// The PGD iteration x <- clip(x0 + proj(delta + eps_step * dir(g))) shared by
/// pgd and eot_pgd. dir is sign(g) for Linf, g/||g||_2 for L2, g/||g||_1 for L1.
Image pgd_iterate(const Image& x, const LpBall& ball, int steps, double eps_step, const GradientOracle& gradient);

AttackResult pgd(const Classifier& model, const Image& x, int label, const LpBall& ball, int steps,
                 double eps_step);
AttackResult cw_l2(const Classifier& model, const Image& x, int label, const AttackSpec& spec);
AttackResult cw_linf(const Classifier& model, const Image& x, int label, const AttackSpec& spec);
AttackResult jsma(const Classifier& model, const Image& x, int label, double theta, double gamma);
/// `max_iterations` bounds the total number of forward passes, the clean one included.
AttackResult square_attack(const Classifier& model, const Image& x, int label, const LpBall& ball, double p_init,
                           int max_iterations, std::uint64_t seed);
AttackResult rays(const Classifier& model, const Image& x, int label, double epsilon, int query_budget);
AttackResult ccp_attack(const Classifier& model, const Image& x, int label, const CcpParams& params);

struct UapResult {
    Perturbation delta;
    double fooling_rate = 0.0;
    int passes = 0;
};

inline constexpr double kUapTargetFoolingRate = 0.8;
inline constexpr int kUapMaxPasses = 5;

/// Universal perturbation crafted over `set` with an inner BIM of `steps`
/// iterations at `eps_step`.
UapResult uap(const Classifier& model, const LabeledSet& set, const LpBall& ball, int steps, double eps_step);

AttackResult apply_universal(const Classifier& model, const Image& x, int label, const Perturbation& delta);

/// Per-image dispatch for every kind except UAP, which needs a crafting set.
/// `seed` drives any randomness (Square Attack); CCP weights come from spec.seed.
AttackResult run_attack(const Classifier& model, const Image& x, int label, const AttackSpec& spec,
                        std::uint64_t seed);

/// Z_y - max_{j != y} Z_j; negative means misclassified.
double margin(std::span<const double> logits, int label);

}  // namespace perturbench
