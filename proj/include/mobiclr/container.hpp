#pragma once

// Binary container shared by series, embeddings and checkpoints.
//
// Layout (all integers little-endian):
//   bytes 0..7   magic "MOBICLR\0"
//   u32          format version (currently 1)
//   u32          payload dtype: 0 = int64, 1 = float64
//   u64          header length H in bytes
//   H bytes      UTF-8 JSON header (free-form metadata, always has "kind")
//   u64          payload element count
//   payload      row-major values of the declared dtype

#include "mobiclr/common.hpp"

#include "json.hpp"

#include <filesystem>
#include <variant>

namespace mobiclr::container {

inline constexpr std::uint32_t kFormatVersion = 1;

enum class DType : std::uint32_t { Int64 = 0, Float64 = 1 };

struct Blob {
    nlohmann::json header;
    std::variant<std::vector<std::int64_t>, std::vector<double>> payload;
};

void write(const std::filesystem::path& path, const Blob& blob);
Blob read(const std::filesystem::path& path);

/// Reads a container and checks that header["kind"] matches.
Blob read_kind(const std::filesystem::path& path, const std::string& kind);

}  // namespace mobiclr::container
