#include "perturbench/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <stdexcept>

#include "perturbench/image_io.hpp"
#include "perturbench/rng.hpp"

namespace perturbench {

namespace {

Matrix dct_matrix(int n) {
    Matrix m(n, n);
    for (int k = 0; k < n; ++k) {
        const double ck = k == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n);
        for (int i = 0; i < n; ++i) m(k, i) = ck * std::cos(std::numbers::pi * (2 * i + 1) * k / (2.0 * n));
    }
    return m;
}

}  // namespace

std::vector<double> dct2(std::span<const double> plane, int rows, int cols) {
    if (rows <= 0 || cols <= 0 || plane.size() != static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols)) {
        throw ShapeError("dct2: plane size does not match " + std::to_string(rows) + "x" + std::to_string(cols));
    }
    const Eigen::Map<const Matrix> x(plane.data(), rows, cols);
    const Matrix out = dct_matrix(rows) * x * dct_matrix(cols).transpose();
    return std::vector<double>(out.data(), out.data() + out.size());
}

SpectrumHeatmap dct_spectrum(const Perturbation& delta) {
    const int H = delta.height();
    const int W = delta.width();
    SpectrumHeatmap s;
    s.rows = H;
    s.cols = W;
    s.coefficients.assign(static_cast<std::size_t>(H * W), 0.0);
    std::vector<double> plane(static_cast<std::size_t>(H * W));
    for (int c = 0; c < delta.channels(); ++c) {
        for (int h = 0; h < H; ++h) {
            for (int w = 0; w < W; ++w) plane[static_cast<std::size_t>(h * W + w)] = delta.at(h, w, c);
        }
        const std::vector<double> coef = dct2(plane, H, W);
        for (std::size_t i = 0; i < coef.size(); ++i) s.coefficients[i] += coef[i] * coef[i];
    }
    const double max_radius = std::hypot(H - 1, W - 1);
    double weighted = 0.0;
    for (int u = 0; u < H; ++u) {
        for (int v = 0; v < W; ++v) {
            const double e = s.at(u, v);
            s.total_energy += e;
            weighted += e * std::hypot(u, v);
        }
    }
    s.spread_radius = s.total_energy > 0.0 && max_radius > 0.0 ? weighted / s.total_energy / max_radius : 0.0;
    return s;
}

void min_max_normalize(std::vector<double>& values) {
    if (values.empty()) return;
    const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
    const double lo = *lo_it;
    const double hi = *hi_it;
    if (hi > lo) {
        for (double& v : values) v = (v - lo) / (hi - lo);
    } else {
        std::fill(values.begin(), values.end(), hi > 0.0 ? 1.0 : 0.0);
    }
}

SaliencyMap resize_bilinear(const SaliencyMap& map, int rows, int cols) {
    if (map.rows <= 0 || map.cols <= 0 || rows <= 0 || cols <= 0) throw ShapeError("resize_bilinear: empty map");
    SaliencyMap out{rows, cols, std::vector<double>(static_cast<std::size_t>(rows * cols))};
    auto coord = [](int i, int out_len, int in_len) {
        const double src = std::clamp((i + 0.5) * in_len / out_len - 0.5, 0.0, static_cast<double>(in_len - 1));
        const int lo = static_cast<int>(std::floor(src));
        return std::tuple<int, int, double>{lo, std::min(lo + 1, in_len - 1), src - lo};
    };
    for (int r = 0; r < rows; ++r) {
        const auto [r0, r1, fr] = coord(r, rows, map.rows);
        for (int c = 0; c < cols; ++c) {
            const auto [c0, c1, fc] = coord(c, cols, map.cols);
            const double top = (1.0 - fc) * map.at(r0, c0) + fc * map.at(r0, c1);
            const double bottom = (1.0 - fc) * map.at(r1, c0) + fc * map.at(r1, c1);
            out.values[static_cast<std::size_t>(r * cols + c)] = (1.0 - fr) * top + fr * bottom;
        }
    }
    return out;
}

SaliencyMap grad_cam_from_tap(const CamTap& tap, int out_rows, int out_cols) {
    const FeatureTap& a = tap.activation;
    const FeatureTap& g = tap.gradient;
    if (a.rows != g.rows || a.cols != g.cols || a.channels != g.channels) {
        throw ShapeError("grad_cam: activation and gradient taps differ in shape");
    }
    const int positions = a.rows * a.cols;
    std::vector<double> weights(static_cast<std::size_t>(a.channels), 0.0);
    for (int r = 0; r < a.rows; ++r) {
        for (int c = 0; c < a.cols; ++c) {
            for (int k = 0; k < a.channels; ++k) weights[static_cast<std::size_t>(k)] += g.at(r, c, k);
        }
    }
    for (double& w : weights) w /= positions;

    SaliencyMap cam{a.rows, a.cols, std::vector<double>(static_cast<std::size_t>(positions), 0.0)};
    for (int r = 0; r < a.rows; ++r) {
        for (int c = 0; c < a.cols; ++c) {
            double s = 0.0;
            for (int k = 0; k < a.channels; ++k) s += weights[static_cast<std::size_t>(k)] * a.at(r, c, k);
            cam.values[static_cast<std::size_t>(r * a.cols + c)] = std::max(s, 0.0);
        }
    }
    SaliencyMap up = resize_bilinear(cam, out_rows, out_cols);
    min_max_normalize(up.values);
    return up;
}

SaliencyMap grad_cam(const Classifier& model, const Image& x, int class_id) {
    require_valid_label(model, class_id);
    return grad_cam_from_tap(model.cam_tap(x, class_id), x.height(), x.width());
}

Matrix attention_rollout_matrix(const AttentionMaps& maps) {
    if (maps.empty() || maps.front().empty()) throw std::invalid_argument("attention_rollout: no attention maps");
    const Eigen::Index n = maps.front().front().rows();
    Matrix rollout = Matrix::Identity(n, n);
    for (const auto& layer : maps) {
        Matrix mean = Matrix::Zero(n, n);
        for (const Matrix& head : layer) {
            if (head.rows() != n || head.cols() != n) throw ShapeError("attention_rollout: inconsistent map sizes");
            mean += head;
        }
        mean /= static_cast<double>(layer.size());
        Matrix mixed = 0.5 * mean + 0.5 * Matrix::Identity(n, n);
        for (Eigen::Index r = 0; r < n; ++r) mixed.row(r) /= mixed.row(r).sum();
        rollout = mixed * rollout;
    }
    return rollout;
}

SaliencyMap attention_rollout(const Classifier& model, const Image& x) {
    if (!model.has_attention()) throw TapUnavailable(model.name() + " has no attention maps");
    const Matrix rollout = attention_rollout_matrix(model.attention_maps(x));
    const Eigen::Index patches = rollout.cols() - 1;
    const int grid = static_cast<int>(std::lround(std::sqrt(static_cast<double>(patches))));
    if (static_cast<Eigen::Index>(grid) * grid != patches) throw ShapeError("attention_rollout: patch count is not square");
    SaliencyMap map{grid, grid, std::vector<double>(static_cast<std::size_t>(patches))};
    for (Eigen::Index p = 0; p < patches; ++p) map.values[static_cast<std::size_t>(p)] = rollout(0, p + 1);
    min_max_normalize(map.values);
    return map;
}

int feature_channel_for_seed(std::uint64_t seed, int channels) {
    if (channels <= 0) throw std::invalid_argument("feature_channel_for_seed: no channels");
    Rng rng(seed, 0xFEA7);
    return static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(channels)));
}

SaliencyMap feature_map_diff(const Classifier& model, const Image& x, const Image& x_adv, int channel) {
    const FeatureTap a = model.first_block_features(x);
    const FeatureTap b = model.first_block_features(x_adv);
    if (channel < 0 || channel >= a.channels) {
        throw std::out_of_range("feature_map_diff: channel " + std::to_string(channel) + " out of range");
    }
    SaliencyMap map{a.rows, a.cols, std::vector<double>(static_cast<std::size_t>(a.rows * a.cols))};
    for (int r = 0; r < a.rows; ++r) {
        for (int c = 0; c < a.cols; ++c) {
            map.values[static_cast<std::size_t>(r * a.cols + c)] = std::abs(a.at(r, c, channel) - b.at(r, c, channel));
        }
    }
    min_max_normalize(map.values);
    return map;
}

void write_pgm(const std::filesystem::path& path, const SaliencyMap& map) {
    Image img(Shape{map.rows, map.cols, 1}, map.values);
    save_image(img, path);
}

void write_spectrum_pgm(const std::filesystem::path& path, const SpectrumHeatmap& spectrum) {
    SaliencyMap map{spectrum.rows, spectrum.cols, spectrum.coefficients};
    for (double& v : map.values) v = std::log10(v + 1e-12);
    min_max_normalize(map.values);
    write_pgm(path, map);
}

void write_spectrum_csv(const std::filesystem::path& path, const SpectrumHeatmap& spectrum) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << std::setprecision(17);
    for (int u = 0; u < spectrum.rows; ++u) {
        for (int v = 0; v < spectrum.cols; ++v) out << (v ? "," : "") << spectrum.at(u, v);
        out << '\n';
    }
    if (!out) throw std::runtime_error("failed writing " + path.string());
}

}  // namespace perturbench
