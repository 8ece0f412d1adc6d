#pragma once

#include <filesystem>
#include <memory>
#include <stdexcept>

#include "perturbench/models.hpp"

namespace perturbench {

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr char kCheckpointMagic[8] = {'P', 'B', 'C', 'K', 'P', 'T', '\r', '\n'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Layout, all integers u32 little-endian:
///   magic[8] version kind n_config config[n_config] n_tensors
///   { name_len name[name_len] rows cols float32_le[rows*cols] } * n_tensors
void save_checkpoint(const TrainableClassifier& model, const std::filesystem::path& path);
std::unique_ptr<TrainableClassifier> load_checkpoint(const std::filesystem::path& path);

std::vector<unsigned char> serialize_checkpoint(const TrainableClassifier& model);
std::unique_ptr<TrainableClassifier> deserialize_checkpoint(const std::vector<unsigned char>& bytes);

}  // namespace perturbench
