#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "tabtune/tensor.hpp"

namespace tabtune {

// Layout: "TTPL" | u16 version | u32 header length | header (canonical JSON
// with a "tensors" manifest) | little-endian f64 blobs | u32 CRC32C of all
// preceding bytes. Integers are little-endian.
inline constexpr std::uint16_t kContainerVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor value;
};

struct ContainerContents {
  /// Canonical JSON header, including the "tensors" manifest.
  std::string header_json;
  std::vector<NamedTensor> tensors;
};

std::uint32_t crc32c(std::span<const std::uint8_t> bytes);

/// `header_json` must be a JSON object; its "tensors" key is replaced by the
/// manifest (name, shape, byte offset within the blob section).
std::vector<std::uint8_t> encode_container(const std::string& header_json, const std::vector<NamedTensor>& tensors);

/// Checks magic, version, header length, then checksum. Raises BadMagic,
/// VersionUnsupported, TruncatedFile or ChecksumMismatch.
ContainerContents decode_container(std::span<const std::uint8_t> bytes);

void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);

}  // namespace tabtune
