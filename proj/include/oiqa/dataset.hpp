#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "oiqa/tensor.hpp"

namespace oiqa {

enum class DistortionKind { none, gaussian_blur, additive_noise, contrast_crush };

std::string_view to_string(DistortionKind kind);
DistortionKind distortion_from_string(std::string_view name);

struct QualitySample {
    std::string id;
    Tensor image;   // C×H×W in [0, 1]
    double label = 1.0;
    DistortionKind kind = DistortionKind::none;
    double severity = 0.0;
};

inline constexpr std::size_t kMaxImageSize = 64;

/// Procedural three-channel base image: seeded gradient, sinusoids and sharp
/// rectangular patches, stretched to [0.05, 0.95].
Tensor make_base_image(std::size_t size, std::uint64_t seed);

/// Applies one distortion at severity in [0, 1]; severity 0 returns the input
/// unchanged. Noise draws from `seed`.
Tensor apply_distortion(const Tensor& image, DistortionKind kind, double severity, std::uint64_t seed);

/// n samples of image_size×image_size, label = 1 - severity. Deterministic in seed.
std::vector<QualitySample> generate_dataset(std::size_t n, std::size_t image_size, std::uint64_t seed);

struct DatasetSplit {
    std::vector<std::size_t> train, val, test;
};

/// Seeded shuffle cut 70/10/20 (train/val/test); disjoint and exhaustive.
DatasetSplit split_dataset(std::size_t n, std::uint64_t seed);

std::vector<QualitySample> select(const std::vector<QualitySample>& samples, const std::vector<std::size_t>& indices);

/// Binary PGM (P5, one channel) or PPM (P6, three channels), maxval 255.
Tensor load_ppm(const std::filesystem::path& path);
void save_ppm(const std::filesystem::path& path, const Tensor& image);
Tensor decode_ppm(std::string_view bytes);
std::string encode_ppm(const Tensor& image);

/// Dataset directory: images/<id>.ppm plus labels.csv with
/// id,label,kind,severity,split rows. `split_seed` drives the split column.
void save_dataset(const std::filesystem::path& dir, const std::vector<QualitySample>& samples, std::uint64_t split_seed);

struct LoadedDataset {
    std::vector<QualitySample> samples;
    DatasetSplit split;
};
LoadedDataset load_dataset(const std::filesystem::path& dir);

}  // namespace oiqa
