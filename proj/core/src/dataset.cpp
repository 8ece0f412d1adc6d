#include "perturbench/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "perturbench/image_io.hpp"
#include "perturbench/rng.hpp"

namespace perturbench {

namespace {

constexpr int kShapes = 5;
constexpr int kSupersample = 3;
constexpr const char* kShapeNames[kShapes] = {"disk", "square", "triangle", "cross", "ring"};
constexpr const char* kColorNames[2] = {"warm", "cool"};

// Membership test in shape-local coordinates, scaled so the shape fits
// the unit disk.
bool inside(int shape, double u, double v) {
    switch (shape) {
        case 0: return u * u + v * v <= 0.8;
        case 1: return std::abs(u) <= 0.72 && std::abs(v) <= 0.72;
        case 2: return v <= 0.65 && v >= -0.85 + 1.5 * std::abs(u) * 1.35;
        case 3: return (std::abs(u) <= 0.28 && std::abs(v) <= 0.95) || (std::abs(v) <= 0.28 && std::abs(u) <= 0.95);
        case 4: {
            const double r2 = u * u + v * v;
            return r2 <= 0.9 && r2 >= 0.3;
        }
        default: return false;
    }
}

// Colors sit at a moderate distance from mid-gray. Saturated colors make
// the trained models nearly immune to small L-inf budgets.
constexpr double kColorScale = 0.4;

std::array<double, 3> shape_color(int family, Rng& rng) {
    const double j1 = rng.uniform(-0.08, 0.08);
    const double j2 = rng.uniform(-0.12, 0.12);
    const double j3 = rng.uniform(-0.06, 0.06);
    std::array<double, 3> d = family == 0 ? std::array<double, 3>{0.38 + j1, -0.08 + j2, -0.38 + j3}
                                          : std::array<double, 3>{-0.38 + j3, -0.05 + j2, 0.38 + j1};
    for (double& c : d) c = 0.5 + kColorScale * c;
    return d;
}

}  // namespace

std::string toy_class_name(int label) {
    if (label < 0 || label >= kToyClasses) throw std::out_of_range("toy label out of range");
    return std::string(kColorNames[label / kShapes]) + "_" + kShapeNames[label % kShapes];
}

Image render_toy_image(int label, std::uint64_t seed) {
    if (label < 0 || label >= kToyClasses) throw std::out_of_range("toy label out of range");
    const int shape = label % kShapes;
    const int family = label / kShapes;
    Rng rng(seed, 0x70E);
    const int n = kToyImageSize;

    // Muted background: base tone plus a linear gradient in a random direction.
    std::array<double, 3> base{};
    const double gray = rng.uniform(0.35, 0.65);
    for (double& b : base) b = gray + rng.uniform(-0.05, 0.05);
    const double angle = rng.uniform(0.0, 2.0 * 3.141592653589793);
    const double slope = rng.uniform(0.0, 0.15);

    const double radius = rng.uniform(8.5, 11.5);
    const double cx = n / 2.0 + rng.uniform(-3.0, 3.0);
    const double cy = n / 2.0 + rng.uniform(-3.0, 3.0);
    const double rotation = rng.uniform(-0.2, 0.2);
    const double cr = std::cos(rotation);
    const double sr = std::sin(rotation);
    const auto color = shape_color(family, rng);

    Image img(Shape{n, n, 3});
    for (int y = 0; y < n; ++y) {
        for (int x = 0; x < n; ++x) {
            int hits = 0;
            for (int sy = 0; sy < kSupersample; ++sy) {
                for (int sx = 0; sx < kSupersample; ++sx) {
                    const double px = x + (sx + 0.5) / kSupersample - cx;
                    const double py = y + (sy + 0.5) / kSupersample - cy;
                    const double u = (cr * px + sr * py) / radius;
                    const double v = (-sr * px + cr * py) / radius;
                    hits += inside(shape, u, v) ? 1 : 0;
                }
            }
            const double coverage = static_cast<double>(hits) / (kSupersample * kSupersample);
            const double ramp = slope * ((x - n / 2.0) * std::cos(angle) + (y - n / 2.0) * std::sin(angle)) / n;
            for (int c = 0; c < 3; ++c) {
                const double bg = base[static_cast<std::size_t>(c)] + ramp;
                const double value = coverage * color[static_cast<std::size_t>(c)] + (1.0 - coverage) * bg +
                                     0.02 * rng.normal();
                img.at(y, x, c) = std::clamp(value, 0.0, 1.0);
            }
        }
    }
    return img;
}

ToyDataset generate_toy_dataset(std::uint64_t seed, int n_train, int n_test) {
    if (n_train <= 0 || n_test <= 0) throw std::invalid_argument("generate_toy_dataset: counts must be positive");
    ToyDataset ds;
    ds.seed = seed;
    for (int i = 0; i < n_train; ++i) {
        const int label = i % kToyClasses;
        ds.train.push_back(render_toy_image(label, hash_combine(hash_combine(seed, 1), static_cast<std::uint64_t>(i))), label);
    }
    for (int i = 0; i < n_test; ++i) {
        const int label = i % kToyClasses;
        ds.test.push_back(render_toy_image(label, hash_combine(hash_combine(seed, 2), static_cast<std::uint64_t>(i))), label);
    }
    return ds;
}

LabeledSet load_labeled_directory(const std::filesystem::path& labels_csv) {
    std::ifstream in(labels_csv);
    if (!in) throw std::runtime_error("cannot open labels file " + labels_csv.string());
    const std::filesystem::path root = labels_csv.parent_path();
    LabeledSet set;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) {
            throw std::runtime_error(labels_csv.string() + ":" + std::to_string(line_no) + ": expected filename,label");
        }
        const std::string file = line.substr(0, comma);
        const std::string label_text = line.substr(comma + 1);
        int label = 0;
        std::istringstream parse(label_text);
        if (!(parse >> label)) {
            if (line_no == 1) continue;  // header
            throw std::runtime_error(labels_csv.string() + ":" + std::to_string(line_no) + ": bad label '" +
                                     label_text + "'");
        }
        set.push_back(load_image(root / file), label);
    }
    if (set.empty()) throw std::runtime_error(labels_csv.string() + ": no samples");
    return set;
}

}  // namespace perturbench
