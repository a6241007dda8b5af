#pragma once

/// \file checkpoint.hpp
/// \brief Parameter blob files.
///
/// Layout, all integers little-endian:
///   "DRNP" | u32 array count | per array:
///   u16 name length | name bytes | u8 ndim | u32 dims[ndim] | float32 payload
/// Tensors are always written with ndim = 4 (N, C, H, W).

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "drn/tensor.hpp"

namespace drn {

using NamedTensors = std::vector<std::pair<std::string, Tensor<float>>>;

std::string encode_blob(const NamedTensors& arrays);
NamedTensors decode_blob(const std::string& bytes);

void write_blob(const std::filesystem::path& path, const NamedTensors& arrays);
NamedTensors read_blob(const std::filesystem::path& path);

template <typename T>
NamedTensors to_float_arrays(const std::vector<std::pair<std::string, Tensor<T>>>& arrays)
{
    NamedTensors out;
    out.reserve(arrays.size());
    for (const auto& [name, t] : arrays) out.emplace_back(name, t.template cast<float>());
    return out;
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>>> from_float_arrays(const NamedTensors& arrays)
{
    std::vector<std::pair<std::string, Tensor<T>>> out;
    out.reserve(arrays.size());
    for (const auto& [name, t] : arrays) out.emplace_back(name, t.template cast<T>());
    return out;
}

/// Reads a whole file; throws IoError naming the path.
std::string read_file(const std::filesystem::path& path);
/// Writes through a temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);

}  // namespace drn
