#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "perturbench/classifier.hpp"
#include "perturbench/image.hpp"

namespace perturbench {

struct SpectrumHeatmap {
    int rows = 0;
    int cols = 0;
    /// Squared orthonormal DCT-II coefficients summed over channels, row-major.
    std::vector<double> coefficients;
    double total_energy = 0.0;
    /// Energy-weighted mean of sqrt(u^2 + v^2), divided by the largest radius.
    double spread_radius = 0.0;

    double at(int u, int v) const { return coefficients[static_cast<std::size_t>(u * cols + v)]; }
};

/// Orthonormal 2-D DCT-II of one rows x cols plane (row-major).
std::vector<double> dct2(std::span<const double> plane, int rows, int cols);

SpectrumHeatmap dct_spectrum(const Perturbation& delta);

/// rows x cols map, row-major.
struct SaliencyMap {
    int rows = 0;
    int cols = 0;
    std::vector<double> values;

    double at(int r, int c) const { return values[static_cast<std::size_t>(r * cols + c)]; }
};

/// (v - min) / (max - min). A constant map becomes all ones if positive and
/// all zeros otherwise.
void min_max_normalize(std::vector<double>& values);

/// Bilinear resize with half-pixel centres and clamped edges.
SaliencyMap resize_bilinear(const SaliencyMap& map, int rows, int cols);

/// ReLU(sum_k w_k A_k) with w_k the spatial mean of d logit[class] / d A_k,
/// upsampled to the input size, then min-max normalized.
SaliencyMap grad_cam(const Classifier& model, const Image& x, int class_id);
/// The same computation from an explicit tap.
SaliencyMap grad_cam_from_tap(const CamTap& tap, int out_rows, int out_cols);

/// prod_l normalize_rows(0.5 * mean_heads(A_l) + 0.5 * I), last layer leftmost.
Matrix attention_rollout_matrix(const AttentionMaps& maps);
/// [CLS] row of the rollout over patch tokens on the patch grid, min-max normalized.
SaliencyMap attention_rollout(const Classifier& model, const Image& x);

/// Channel used for feature differencing, derived from a seed.
int feature_channel_for_seed(std::uint64_t seed, int channels);

/// |A(x) - A(x')| of one channel of the first-block features, min-max normalized,
/// at the tap's native resolution.
SaliencyMap feature_map_diff(const Classifier& model, const Image& x, const Image& x_adv, int channel);

/// 8-bit grayscale PGM of a [0,1] map.
void write_pgm(const std::filesystem::path& path, const SaliencyMap& map);
/// Spectrum rendered as log-energy PGM (min-max scaled).
void write_spectrum_pgm(const std::filesystem::path& path, const SpectrumHeatmap& spectrum);
/// One CSV row per coefficient row.
void write_spectrum_csv(const std::filesystem::path& path, const SpectrumHeatmap& spectrum);

}  // namespace perturbench
