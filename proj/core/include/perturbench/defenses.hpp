#pragma once

#include <string>
#include <vector>

#include "perturbench/attacks.hpp"
#include "perturbench/image.hpp"

namespace perturbench {

enum class DefenseKind { Identity, Ss, Nlm, Tvm, Jpeg, Cr, Ccp };

/// Config names: "identity", "ss", "nlm", "tvm", "jpeg", "cr", "ccp".
std::string to_string(DefenseKind kind);
DefenseKind parse_defense_kind(const std::string& text);

/// The six preprocessing defenses in report order.
const std::vector<DefenseKind>& all_defenses();

struct DefenseSpec {
    DefenseKind kind = DefenseKind::Identity;
    int window = 3;
    int patch = 7;
    int search = 23;
    double strength = 0.07;
    double tv_weight = 0.1;
    double tv_tol = 2e-4;
    int tv_max_iter = 200;
    int quality = 65;
    int margin = 2;
    std::uint64_t ccp_seed = 0;
    double ccp_s = 2.0;
    double ccp_b = 30.0 / 255.0;

    static DefenseSpec defaults(DefenseKind kind);
    void validate() const;
    CcpParams ccp_params() const { return CcpParams::random(ccp_seed, ccp_s, ccp_b); }
};

Image apply_defense(const DefenseSpec& spec, const Image& x);
inline Image apply_defense(DefenseKind kind, const Image& x) { return apply_defense(DefenseSpec::defaults(kind), x); }

/// Per-channel sliding median with replicated edges.
Image median_smooth(const Image& x, int window = 3);

/// Single-level Haar: median(|HH|) / 0.6745, averaged over channels.
double estimate_sigma(const Image& x);

/// Patch-distance weighted average over the search window using
/// w = exp(-max(d^2 - 2 sigma^2, 0) / h^2), d^2 the mean squared patch
/// difference over pixels and channels, sigma from estimate_sigma, h = strength.
/// Returns the input unchanged when sigma is 0.
Image nlm_denoise(const Image& x, int patch = 7, int search = 23, double strength = 0.07);

/// ROF objective 0.5 * ||u - f||^2 + weight * TV(u), summed over channels, with
/// isotropic TV on forward differences.
double rof_objective(const Image& u, const Image& f, double weight);

/// Chambolle's dual projection iteration, channels handled independently with
/// Neumann boundaries. Stops when the objective changes by less than
/// tol * (initial objective). `objective_trace`, when given, receives the
/// objective after every iteration.
Image tv_minimize(const Image& x, double weight = 0.1, double tol = 2e-4, int max_iter = 200,
                  std::vector<double>* objective_trace = nullptr);

/// Baseline-JPEG lossy core: YCbCr, 8x8 DCT, table quantization at `quality`,
/// and the inverse, without chroma subsampling or entropy coding. Output is
/// clamped to [0,1] but not rounded to 8 bits.
Image jpeg_roundtrip(const Image& x, int quality = 65);

/// Standard quantization table (luma or chroma) scaled for `quality`, row-major 8x8.
std::array<int, 64> jpeg_quant_table(bool chroma, int quality);

/// Center crop with `margin` pixels removed per side, bilinear resize back
/// (half-pixel centers, edge clamped).
Image crop_rescale(const Image& x, int margin = 2);
/// Exact adjoint of the linear map inside crop_rescale.
Perturbation crop_rescale_adjoint(const Perturbation& g, int margin = 2);

}  // namespace perturbench
