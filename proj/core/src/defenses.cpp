#include "perturbench/defenses.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace perturbench {

std::string to_string(DefenseKind kind) {
    switch (kind) {
        case DefenseKind::Identity: return "identity";
        case DefenseKind::Ss: return "ss";
        case DefenseKind::Nlm: return "nlm";
        case DefenseKind::Tvm: return "tvm";
        case DefenseKind::Jpeg: return "jpeg";
        case DefenseKind::Cr: return "cr";
        case DefenseKind::Ccp: return "ccp";
    }
    return "unknown";
}

DefenseKind parse_defense_kind(const std::string& text) {
    for (DefenseKind k : {DefenseKind::Identity, DefenseKind::Ss, DefenseKind::Nlm, DefenseKind::Tvm,
                          DefenseKind::Jpeg, DefenseKind::Cr, DefenseKind::Ccp}) {
        if (to_string(k) == text) return k;
    }
    throw std::invalid_argument("unknown defense '" + text + "' (expected ss, nlm, tvm, jpeg, cr, ccp or identity)");
}

const std::vector<DefenseKind>& all_defenses() {
    static const std::vector<DefenseKind> kinds{DefenseKind::Ss,   DefenseKind::Nlm, DefenseKind::Tvm,
                                                DefenseKind::Jpeg, DefenseKind::Cr,  DefenseKind::Ccp};
    return kinds;
}

DefenseSpec DefenseSpec::defaults(DefenseKind kind) {
    DefenseSpec spec;
    spec.kind = kind;
    return spec;
}

void DefenseSpec::validate() const {
    if (window <= 0 || window % 2 == 0) throw std::invalid_argument("ss: window must be odd and positive");
    if (patch <= 0 || patch % 2 == 0 || search <= 0 || search % 2 == 0) {
        throw std::invalid_argument("nlm: patch and search sizes must be odd and positive");
    }
    if (!(strength > 0.0)) throw std::invalid_argument("nlm: strength must be positive");
    if (!(tv_weight > 0.0) || !(tv_tol > 0.0) || tv_max_iter <= 0) {
        throw std::invalid_argument("tvm: weight, tol and max_iter must be positive");
    }
    if (quality < 1 || quality > 100) throw std::invalid_argument("jpeg: quality must lie in [1, 100]");
    if (margin < 0) throw std::invalid_argument("cr: margin must be >= 0");
}

Image apply_defense(const DefenseSpec& spec, const Image& x) {
    spec.validate();
    switch (spec.kind) {
        case DefenseKind::Identity: return x;
        case DefenseKind::Ss: return median_smooth(x, spec.window);
        case DefenseKind::Nlm: return nlm_denoise(x, spec.patch, spec.search, spec.strength);
        case DefenseKind::Tvm: return tv_minimize(x, spec.tv_weight, spec.tv_tol, spec.tv_max_iter);
        case DefenseKind::Jpeg: return jpeg_roundtrip(x, spec.quality);
        case DefenseKind::Cr: return crop_rescale(x, spec.margin);
        case DefenseKind::Ccp: return ccp_transform(x, spec.ccp_params());
    }
    throw std::invalid_argument("unknown defense kind");
}

// ---------------------------------------------------------------- median

Image median_smooth(const Image& x, int window) {
    if (window <= 0 || window % 2 == 0) throw std::invalid_argument("median_smooth: window must be odd");
    const int r = window / 2;
    const int H = x.height();
    const int W = x.width();
    Image out(x.shape());
    std::vector<double> buf(static_cast<std::size_t>(window * window));
    const std::size_t mid = buf.size() / 2;
    for (int c = 0; c < x.channels(); ++c) {
        for (int h = 0; h < H; ++h) {
            for (int w = 0; w < W; ++w) {
                std::size_t k = 0;
                for (int dy = -r; dy <= r; ++dy) {
                    for (int dx = -r; dx <= r; ++dx) {
                        buf[k++] = x.at(std::clamp(h + dy, 0, H - 1), std::clamp(w + dx, 0, W - 1), c);
                    }
                }
                std::nth_element(buf.begin(), buf.begin() + static_cast<std::ptrdiff_t>(mid), buf.end());
                out.at(h, w, c) = buf[mid];
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------- NLM

double estimate_sigma(const Image& x) {
    if (x.height() < 2 || x.width() < 2) throw ShapeError("estimate_sigma needs at least 2x2 pixels");
    const int H = x.height() / 2 * 2;
    const int W = x.width() / 2 * 2;
    double total = 0.0;
    std::vector<double> hh;
    for (int c = 0; c < x.channels(); ++c) {
        hh.clear();
        for (int h = 0; h < H; h += 2) {
            for (int w = 0; w < W; w += 2) {
                const double v = (x.at(h, w, c) - x.at(h, w + 1, c) - x.at(h + 1, w, c) + x.at(h + 1, w + 1, c)) / 2.0;
                hh.push_back(std::abs(v));
            }
        }
        const std::size_t n = hh.size();
        std::nth_element(hh.begin(), hh.begin() + static_cast<std::ptrdiff_t>(n / 2), hh.end());
        double med = hh[n / 2];
        if (n % 2 == 0) {
            const double lower = *std::max_element(hh.begin(), hh.begin() + static_cast<std::ptrdiff_t>(n / 2));
            med = 0.5 * (med + lower);
        }
        total += med / 0.6745;
    }
    return total / x.channels();
}

Image nlm_denoise(const Image& x, int patch, int search, double strength) {
    if (patch <= 0 || patch % 2 == 0 || search <= 0 || search % 2 == 0) {
        throw std::invalid_argument("nlm_denoise: patch and search sizes must be odd and positive");
    }
    if (!(strength > 0.0)) throw std::invalid_argument("nlm_denoise: strength must be positive");
    const int H = x.height();
    const int W = x.width();
    const int C = x.channels();
    if (H <= search || W <= search) {
        throw ShapeError("nlm_denoise: image " + x.shape().to_string() + " is not larger than the " +
                         std::to_string(search) + "-pixel search window");
    }
    const double sigma = estimate_sigma(x);
    if (sigma == 0.0) return x;

    const int pr = patch / 2;
    const int sr = search / 2;
    const double var2 = 2.0 * sigma * sigma;
    const double h2 = strength * strength;
    const double norm = 1.0 / (static_cast<double>(patch * patch) * C);

    // Squared differences live on the patch-padded grid [-pr, H+pr) x [-pr, W+pr).
    const int GH = H + 2 * pr;
    const int GW = W + 2 * pr;
    std::vector<double> integral(static_cast<std::size_t>((GH + 1) * (GW + 1)), 0.0);
    auto I = [&](int r, int c) -> double& { return integral[static_cast<std::size_t>(r * (GW + 1) + c)]; };
    auto px = [&](int h, int w, int c) { return x.at(std::clamp(h, 0, H - 1), std::clamp(w, 0, W - 1), c); };

    std::vector<double> weight_sum(static_cast<std::size_t>(H * W), 0.0);
    std::vector<double> acc(x.size(), 0.0);

    for (int dy = -sr; dy <= sr; ++dy) {
        for (int dx = -sr; dx <= sr; ++dx) {
            for (int r = 0; r < GH; ++r) {
                double row = 0.0;
                for (int col = 0; col < GW; ++col) {
                    const int h = r - pr;
                    const int w = col - pr;
                    double d = 0.0;
                    for (int c = 0; c < C; ++c) {
                        const double diff = px(h, w, c) - px(h + dy, w + dx, c);
                        d += diff * diff;
                    }
                    row += d;
                    I(r + 1, col + 1) = I(r, col + 1) + row;
                }
            }
            for (int h = 0; h < H; ++h) {
                for (int w = 0; w < W; ++w) {
                    // Patch centred at (h, w) covers grid rows h .. h + 2 pr.
                    const double box = I(h + patch, w + patch) - I(h, w + patch) - I(h + patch, w) + I(h, w);
                    const double d2 = box * norm;
                    const double wgt = std::exp(-std::max(d2 - var2, 0.0) / h2);
                    weight_sum[static_cast<std::size_t>(h * W + w)] += wgt;
                    for (int c = 0; c < C; ++c) acc[x.index(h, w, c)] += wgt * px(h + dy, w + dx, c);
                }
            }
        }
    }
    Image out(x.shape());
    for (int h = 0; h < H; ++h) {
        for (int w = 0; w < W; ++w) {
            const double s = weight_sum[static_cast<std::size_t>(h * W + w)];
            for (int c = 0; c < C; ++c) out.at(h, w, c) = std::clamp(acc[x.index(h, w, c)] / s, 0.0, 1.0);
        }
    }
    return out;
}

// ---------------------------------------------------------------- TV

namespace {

// Forward differences with a zero last difference (Neumann boundary).
void gradient(const std::vector<double>& u, int H, int W, std::vector<double>& gy, std::vector<double>& gx) {
    for (int h = 0; h < H; ++h) {
        for (int w = 0; w < W; ++w) {
            const std::size_t i = static_cast<std::size_t>(h * W + w);
            gy[i] = h + 1 < H ? u[i + static_cast<std::size_t>(W)] - u[i] : 0.0;
            gx[i] = w + 1 < W ? u[i + 1] - u[i] : 0.0;
        }
    }
}

double total_variation(const std::vector<double>& u, int H, int W) {
    std::vector<double> gy(u.size());
    std::vector<double> gx(u.size());
    gradient(u, H, W, gy, gx);
    double tv = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) tv += std::sqrt(gy[i] * gy[i] + gx[i] * gx[i]);
    return tv;
}

std::vector<double> channel(const Image& x, int c) {
    std::vector<double> v(static_cast<std::size_t>(x.height() * x.width()));
    for (int h = 0; h < x.height(); ++h) {
        for (int w = 0; w < x.width(); ++w) v[static_cast<std::size_t>(h * x.width() + w)] = x.at(h, w, c);
    }
    return v;
}

}  // namespace

double rof_objective(const Image& u, const Image& f, double weight) {
    require_same_shape(u.shape(), f.shape(), "rof_objective");
    double fidelity = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) fidelity += (u[i] - f[i]) * (u[i] - f[i]);
    double tv = 0.0;
    for (int c = 0; c < u.channels(); ++c) tv += total_variation(channel(u, c), u.height(), u.width());
    return 0.5 * fidelity + weight * tv;
}

Image tv_minimize(const Image& x, double weight, double tol, int max_iter, std::vector<double>* objective_trace) {
    if (!(weight > 0.0) || !(tol > 0.0) || max_iter <= 0) {
        throw std::invalid_argument("tv_minimize: weight, tol and max_iter must be positive");
    }
    const int H = x.height();
    const int W = x.width();
    const int C = x.channels();
    const std::size_t n = static_cast<std::size_t>(H * W);
    constexpr double kTau = 0.25;

    std::vector<std::vector<double>> f(static_cast<std::size_t>(C));
    std::vector<std::vector<double>> u(static_cast<std::size_t>(C));
    std::vector<std::vector<double>> py(static_cast<std::size_t>(C), std::vector<double>(n, 0.0));
    std::vector<std::vector<double>> px(static_cast<std::size_t>(C), std::vector<double>(n, 0.0));
    for (int c = 0; c < C; ++c) {
        f[static_cast<std::size_t>(c)] = channel(x, c);
        u[static_cast<std::size_t>(c)] = f[static_cast<std::size_t>(c)];
    }
    std::vector<double> gy(n);
    std::vector<double> gx(n);

    auto objective = [&]() {
        double e = 0.0;
        for (int c = 0; c < C; ++c) {
            const auto& uc = u[static_cast<std::size_t>(c)];
            const auto& fc = f[static_cast<std::size_t>(c)];
            for (std::size_t i = 0; i < n; ++i) e += 0.5 * (uc[i] - fc[i]) * (uc[i] - fc[i]);
            e += weight * total_variation(uc, H, W);
        }
        return e;
    };

    const double initial = objective();
    double previous = initial;
    if (objective_trace != nullptr) objective_trace->assign(1, initial);

    for (int it = 0; it < max_iter; ++it) {
        for (int c = 0; c < C; ++c) {
            auto& uc = u[static_cast<std::size_t>(c)];
            auto& pyc = py[static_cast<std::size_t>(c)];
            auto& pxc = px[static_cast<std::size_t>(c)];
            const auto& fc = f[static_cast<std::size_t>(c)];
            // Dual step on p = -weight * (dual variable), then u = f + div p.
            gradient(uc, H, W, gy, gx);
            for (std::size_t i = 0; i < n; ++i) {
                const double mag = std::sqrt(gy[i] * gy[i] + gx[i] * gx[i]);
                const double denom = 1.0 + kTau / weight * mag;
                pyc[i] = (pyc[i] - kTau * gy[i]) / denom;
                pxc[i] = (pxc[i] - kTau * gx[i]) / denom;
            }
            for (int h = 0; h < H; ++h) {
                for (int w = 0; w < W; ++w) {
                    const std::size_t i = static_cast<std::size_t>(h * W + w);
                    double div = -pyc[i] - pxc[i];  // p vanishes on the last row/column
                    if (h > 0) div += pyc[i - static_cast<std::size_t>(W)];
                    if (w > 0) div += pxc[i - 1];
                    uc[i] = fc[i] + div;
                }
            }
        }
        const double e = objective();
        if (objective_trace != nullptr) objective_trace->push_back(e);
        if (std::abs(previous - e) < tol * initial) break;
        previous = e;
    }

    Image out(x.shape());
    for (int c = 0; c < C; ++c) {
        for (int h = 0; h < H; ++h) {
            for (int w = 0; w < W; ++w) {
                out.at(h, w, c) = std::clamp(u[static_cast<std::size_t>(c)][static_cast<std::size_t>(h * W + w)], 0.0, 1.0);
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------- JPEG

namespace {

constexpr std::array<int, 64> kLumaTable = {
    16, 11, 10, 16, 24,  40,  51,  61,  12, 12, 14, 19, 26,  58,  60,  55,  14, 13, 16, 24, 40,  57,
    69, 56, 14, 17, 22,  29,  51,  87,  80, 62, 18, 22, 37,  56,  68,  109, 103, 77, 24, 35, 55, 64,
    81, 104, 113, 92, 49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99};

constexpr std::array<int, 64> kChromaTable = {
    17, 18, 24, 47, 99, 99, 99, 99, 18, 21, 26, 66, 99, 99, 99, 99, 24, 26, 56, 99, 99, 99,
    99, 99, 47, 66, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99};

struct DctBasis {
    // basis[u][x] = c(u) cos((2x+1) u pi / 16)
    std::array<std::array<double, 8>, 8> m{};
    DctBasis() {
        for (int u = 0; u < 8; ++u) {
            const double cu = u == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0);
            for (int x = 0; x < 8; ++x) m[u][x] = cu * std::cos((2 * x + 1) * u * std::numbers::pi / 16.0);
        }
    }
};

const DctBasis& dct_basis() {
    static const DctBasis basis;
    return basis;
}

// Orthonormal 8x8 DCT-II (inverse when `inverse`).
void dct8x8(const double in[64], double out[64], bool inverse) {
    const auto& m = dct_basis().m;
    double tmp[64];
    for (int r = 0; r < 8; ++r) {
        for (int k = 0; k < 8; ++k) {
            double s = 0.0;
            for (int j = 0; j < 8; ++j) s += (inverse ? m[j][k] : m[k][j]) * in[r * 8 + j];
            tmp[r * 8 + k] = s;
        }
    }
    for (int k = 0; k < 8; ++k) {
        for (int c = 0; c < 8; ++c) {
            double s = 0.0;
            for (int j = 0; j < 8; ++j) s += (inverse ? m[j][k] : m[k][j]) * tmp[j * 8 + c];
            out[k * 8 + c] = s;
        }
    }
}

}  // namespace

std::array<int, 64> jpeg_quant_table(bool chroma, int quality) {
    if (quality < 1 || quality > 100) throw std::invalid_argument("jpeg: quality must lie in [1, 100]");
    const int scale = quality < 50 ? 5000 / quality : 200 - 2 * quality;
    const auto& base = chroma ? kChromaTable : kLumaTable;
    std::array<int, 64> q{};
    for (std::size_t i = 0; i < 64; ++i) q[i] = std::clamp((base[i] * scale + 50) / 100, 1, 255);
    return q;
}

Image jpeg_roundtrip(const Image& x, int quality) {
    if (x.channels() != 3 && x.channels() != 1) {
        throw ShapeError("jpeg_roundtrip needs 1 or 3 channels, got " + x.shape().to_string());
    }
    const auto luma = jpeg_quant_table(false, quality);
    const auto chroma = jpeg_quant_table(true, quality);
    const int H = x.height();
    const int W = x.width();
    const int C = x.channels();

    // Planes in the 0..255 scale, level shifted by -128.
    std::vector<std::vector<double>> planes(static_cast<std::size_t>(C),
                                            std::vector<double>(static_cast<std::size_t>(H * W)));
    for (int h = 0; h < H; ++h) {
        for (int w = 0; w < W; ++w) {
            const std::size_t i = static_cast<std::size_t>(h * W + w);
            if (C == 1) {
                planes[0][i] = 255.0 * x.at(h, w, 0) - 128.0;
                continue;
            }
            const double r = 255.0 * x.at(h, w, 0);
            const double g = 255.0 * x.at(h, w, 1);
            const double b = 255.0 * x.at(h, w, 2);
            planes[0][i] = 0.299 * r + 0.587 * g + 0.114 * b - 128.0;
            planes[1][i] = -0.168736 * r - 0.331264 * g + 0.5 * b;
            planes[2][i] = 0.5 * r - 0.418688 * g - 0.081312 * b;
        }
    }

    double block[64];
    double coef[64];
    for (int p = 0; p < C; ++p) {
        const auto& table = p == 0 ? luma : chroma;
        auto& plane = planes[static_cast<std::size_t>(p)];
        for (int by = 0; by < H; by += 8) {
            for (int bx = 0; bx < W; bx += 8) {
                // Partial edge blocks are filled by replicating the last row/column.
                for (int r = 0; r < 8; ++r) {
                    for (int c = 0; c < 8; ++c) {
                        const int h = std::min(by + r, H - 1);
                        const int w = std::min(bx + c, W - 1);
                        block[r * 8 + c] = plane[static_cast<std::size_t>(h * W + w)];
                    }
                }
                dct8x8(block, coef, false);
                for (std::size_t k = 0; k < 64; ++k) coef[k] = std::nearbyint(coef[k] / table[k]) * table[k];
                dct8x8(coef, block, true);
                for (int r = 0; r < 8 && by + r < H; ++r) {
                    for (int c = 0; c < 8 && bx + c < W; ++c) {
                        plane[static_cast<std::size_t>((by + r) * W + bx + c)] = block[r * 8 + c];
                    }
                }
            }
        }
    }

    Image out(x.shape());
    for (int h = 0; h < H; ++h) {
        for (int w = 0; w < W; ++w) {
            const std::size_t i = static_cast<std::size_t>(h * W + w);
            const double y = planes[0][i] + 128.0;
            if (C == 1) {
                out.at(h, w, 0) = std::clamp(y / 255.0, 0.0, 1.0);
                continue;
            }
            const double cb = planes[1][i];
            const double cr = planes[2][i];
            const double rgb[3] = {y + 1.402 * cr, y - 0.344136 * cb - 0.714136 * cr, y + 1.772 * cb};
            for (int c = 0; c < 3; ++c) out.at(h, w, c) = std::clamp(rgb[c] / 255.0, 0.0, 1.0);
        }
    }
    return out;
}

// ---------------------------------------------------------------- crop / rescale

namespace {

struct Tap {
    int lo = 0;
    int hi = 0;
    double frac = 0.0;  // weight on hi
};

// Output coordinate i of `out_len` samples drawn from a source span of `in_len`
// samples starting at `offset`.
std::vector<Tap> bilinear_taps(int out_len, int in_len, int offset) {
    std::vector<Tap> taps(static_cast<std::size_t>(out_len));
    const double scale = static_cast<double>(in_len) / out_len;
    for (int i = 0; i < out_len; ++i) {
        const double src = std::clamp((i + 0.5) * scale - 0.5, 0.0, static_cast<double>(in_len - 1));
        const int lo = static_cast<int>(std::floor(src));
        const int hi = std::min(lo + 1, in_len - 1);
        taps[static_cast<std::size_t>(i)] = Tap{lo + offset, hi + offset, src - lo};
    }
    return taps;
}

void require_croppable(const Shape& s, int margin) {
    if (margin < 0) throw std::invalid_argument("crop_rescale: margin must be >= 0");
    if (s.height <= 2 * margin || s.width <= 2 * margin) {
        throw ShapeError("crop_rescale: image " + s.to_string() + " too small for margin " + std::to_string(margin));
    }
}

}  // namespace

Image crop_rescale(const Image& x, int margin) {
    require_croppable(x.shape(), margin);
    const int H = x.height();
    const int W = x.width();
    const auto ty = bilinear_taps(H, H - 2 * margin, margin);
    const auto tx = bilinear_taps(W, W - 2 * margin, margin);
    Image out(x.shape());
    for (int h = 0; h < H; ++h) {
        const Tap& a = ty[static_cast<std::size_t>(h)];
        for (int w = 0; w < W; ++w) {
            const Tap& b = tx[static_cast<std::size_t>(w)];
            for (int c = 0; c < x.channels(); ++c) {
                const double top = (1.0 - b.frac) * x.at(a.lo, b.lo, c) + b.frac * x.at(a.lo, b.hi, c);
                const double bottom = (1.0 - b.frac) * x.at(a.hi, b.lo, c) + b.frac * x.at(a.hi, b.hi, c);
                out.at(h, w, c) = std::clamp((1.0 - a.frac) * top + a.frac * bottom, 0.0, 1.0);
            }
        }
    }
    return out;
}

Perturbation crop_rescale_adjoint(const Perturbation& g, int margin) {
    require_croppable(g.shape(), margin);
    const int H = g.height();
    const int W = g.width();
    const auto ty = bilinear_taps(H, H - 2 * margin, margin);
    const auto tx = bilinear_taps(W, W - 2 * margin, margin);
    Perturbation out(g.shape());
    for (int h = 0; h < H; ++h) {
        const Tap& a = ty[static_cast<std::size_t>(h)];
        for (int w = 0; w < W; ++w) {
            const Tap& b = tx[static_cast<std::size_t>(w)];
            for (int c = 0; c < g.channels(); ++c) {
                const double v = g.at(h, w, c);
                out.at(a.lo, b.lo, c) += (1.0 - a.frac) * (1.0 - b.frac) * v;
                out.at(a.lo, b.hi, c) += (1.0 - a.frac) * b.frac * v;
                out.at(a.hi, b.lo, c) += a.frac * (1.0 - b.frac) * v;
                out.at(a.hi, b.hi, c) += a.frac * b.frac * v;
            }
        }
    }
    return out;
}

}  // namespace perturbench
