#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace perturbench {

struct Shape {
    int height = 0;
    int width = 0;
    int channels = 0;

    std::size_t size() const {
        return static_cast<std::size_t>(height) * static_cast<std::size_t>(width) *
               static_cast<std::size_t>(channels);
    }
    bool operator==(const Shape&) const = default;
    std::string to_string() const;
};

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Dense H x W x C buffer stored row-major with interleaved channels:
// element (h, w, c) lives at (h * W + w) * C + c.
template <class Tag>
class PixelGrid {
public:
    PixelGrid() = default;
    explicit PixelGrid(Shape shape, double fill = 0.0) : shape_(shape), data_(shape.size(), fill) {}
    PixelGrid(Shape shape, std::vector<double> data) : shape_(shape), data_(std::move(data)) {
        if (data_.size() != shape_.size()) {
            throw ShapeError("buffer length " + std::to_string(data_.size()) +
                             " does not match shape " + shape_.to_string());
        }
    }

    const Shape& shape() const { return shape_; }
    int height() const { return shape_.height; }
    int width() const { return shape_.width; }
    int channels() const { return shape_.channels; }
    std::size_t size() const { return data_.size(); }

    double& at(int h, int w, int c) { return data_[index(h, w, c)]; }
    double at(int h, int w, int c) const { return data_[index(h, w, c)]; }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    std::span<double> values() { return data_; }
    std::span<const double> values() const { return data_; }
    std::vector<double>& storage() { return data_; }
    const std::vector<double>& storage() const { return data_; }

    std::size_t index(int h, int w, int c) const {
        return (static_cast<std::size_t>(h) * static_cast<std::size_t>(shape_.width) +
                static_cast<std::size_t>(w)) *
                   static_cast<std::size_t>(shape_.channels) +
               static_cast<std::size_t>(c);
    }

    bool operator==(const PixelGrid&) const = default;

private:
    Shape shape_;
    std::vector<double> data_;
};

struct ImageTag {};
struct PerturbationTag {};

/// Sample in the canonical [0,1] pixel domain. Intermediate attack iterates may
/// leave the domain; clip_to_domain restores it.
using Image = PixelGrid<ImageTag>;
/// Signed tensor with an image's shape: perturbations and input gradients.
using Perturbation = PixelGrid<PerturbationTag>;

Perturbation difference(const Image& adversarial, const Image& clean);
/// x + delta without clipping.
Image add(const Image& x, const Perturbation& delta);

void require_same_shape(const Shape& a, const Shape& b, const char* what);

enum class Norm { L0, L1, L2, Linf };

std::string to_string(Norm p);
Norm parse_norm(const std::string& text);

struct LpBall {
    Norm p = Norm::Linf;
    double epsilon = 0.0;
};

/// Entries with magnitude at or below this count as zero for the L0 norm.
inline constexpr double kL0Tolerance = 1e-12;

double lp_norm(std::span<const double> delta, Norm p);
inline double lp_norm(const Perturbation& delta, Norm p) { return lp_norm(delta.values(), p); }

/// Euclidean projection onto the ball. Inputs already inside are returned unchanged.
std::vector<double> project_onto_ball(std::span<const double> delta, const LpBall& ball);
Perturbation project_onto_ball(const Perturbation& delta, const LpBall& ball);

Image clip_to_domain(Image x);
void clip_in_place(Image& x);

/// 8-bit ingestion helper: value / 255.
inline constexpr double from_8bit(double v) { return v / 255.0; }

}  // namespace perturbench
