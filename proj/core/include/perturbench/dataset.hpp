#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "perturbench/image.hpp"

namespace perturbench {

struct LabeledSet {
    std::vector<Image> images;
    std::vector<int> labels;

    std::size_t size() const { return images.size(); }
    bool empty() const { return images.empty(); }
    void push_back(Image image, int label) {
        images.push_back(std::move(image));
        labels.push_back(label);
    }
    bool operator==(const LabeledSet&) const = default;
};

inline constexpr int kToyClasses = 10;
inline constexpr int kToyImageSize = 32;
/// Bumped whenever the renderer changes; part of the model cache key.
inline constexpr int kToyRenderVersion = 2;

/// Procedural colored-shape data: class = shape (5 kinds) x color family (2).
struct ToyDataset {
    LabeledSet train;
    LabeledSet test;
    std::uint64_t seed = 0;
};

ToyDataset generate_toy_dataset(std::uint64_t seed, int n_train, int n_test);

/// Renders one sample of class `label`; randomness (position, size, hue jitter,
/// background) comes from `seed`.
Image render_toy_image(int label, std::uint64_t seed);

std::string toy_class_name(int label);

/// Loads images listed in a CSV of `filename,label` rows (optional header),
/// resolving filenames relative to the CSV's directory.
LabeledSet load_labeled_directory(const std::filesystem::path& labels_csv);

}  // namespace perturbench
