#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "oiqa/model.hpp"
#include "oiqa/tensor.hpp"

namespace oiqa {

inline constexpr std::string_view kCheckpointMagic = "OIQA1";
inline constexpr std::string_view kTensorMagic = "QTEN1";
inline constexpr int kCheckpointVersion = 1;

/// Checkpoint layout: magic, u64 header length, JSON header, then every
/// parameter tensor as little-endian real64 in header-directory order. The
/// header carries the payload's SHA-256, verified on decode.
std::string encode_checkpoint(const ModelGraph& model);
/// Throws FormatError on bad magic, version, lengths, hash or layer kinds.
ModelGraph decode_checkpoint(std::string_view bytes);

void save_checkpoint(const ModelGraph& model, const std::filesystem::path& path);
ModelGraph load_checkpoint(const std::filesystem::path& path);

/// Raw tensor: magic, u32 rank, rank × u64 dims, little-endian real64 payload.
std::string encode_tensor(const Tensor& t);
Tensor decode_tensor(std::string_view bytes);

void save_tensor(const Tensor& t, const std::filesystem::path& path);
Tensor load_tensor(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
/// Writes via a temporary sibling and renames into place.
void write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace oiqa
