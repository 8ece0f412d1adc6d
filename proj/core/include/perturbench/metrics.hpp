#pragma once

#include <limits>
#include <optional>
#include <span>

#include "perturbench/attacks.hpp"
#include "perturbench/classifier.hpp"
#include "perturbench/dataset.hpp"
#include "perturbench/defenses.hpp"
#include "perturbench/image.hpp"

namespace perturbench {

inline constexpr double kPsnrIdentical = std::numeric_limits<double>::infinity();

/// 10 log10(1 / MSE) on the [0,1] domain; identical inputs give kPsnrIdentical.
double psnr(const Image& x, const Image& y);

struct SsimParams {
    int window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    double dynamic_range = 1.0;

    double c1() const { return (k1 * dynamic_range) * (k1 * dynamic_range); }
    double c2() const { return (k2 * dynamic_range) * (k2 * dynamic_range); }
};

/// Normalized Gaussian window, row-major window x window.
std::vector<double> gaussian_window(const SsimParams& params);

/// Mean local SSIM over all window positions fully inside the image, then
/// over channels. Symmetric in its arguments bit for bit.
double ssim(const Image& x, const Image& y, const SsimParams& params = {});

struct QualityReport {
    double psnr = 0.0;
    double ssim = 0.0;
    double l0_fraction = 0.0;
    double l1 = 0.0;
    double l2 = 0.0;
    double linf = 0.0;
};

QualityReport quality(const Image& clean, const Image& adversarial);

double asr(std::span<const AttackResult> results);

/// Fraction of images whose prediction after `defense` (if any) differs from the label.
double top1_error(const Classifier& model, const LabeledSet& set, const std::optional<DefenseSpec>& defense = {});

}  // namespace perturbench
