#include "tabtune/container.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <optional>
#include <string_view>

#include <boost/crc.hpp>
#include <nlohmann/json.hpp>

#include "tabtune/error.hpp"

namespace tabtune {

namespace {

using json = nlohmann::json;
using Crc32c = boost::crc_optimal<32, 0x1EDC6F41, 0xFFFFFFFF, 0xFFFFFFFF, true, true>;

constexpr std::uint8_t kMagic[4] = {'T', 'T', 'P', 'L'};
constexpr std::size_t kPrefix = 4 + 2 + 4;
constexpr std::size_t kTrailer = 4;

template <class T>
void put_le(std::vector<std::uint8_t>& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

template <class T>
T get_le(std::span<const std::uint8_t> in, std::size_t at) {
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(in[at + i]) << (8 * i));
  return v;
}

}  // namespace

std::uint32_t crc32c(std::span<const std::uint8_t> bytes) {
  Crc32c crc;
  crc.process_bytes(bytes.data(), bytes.size());
  return crc.checksum();
}

std::vector<std::uint8_t> encode_container(const std::string& header_json, const std::vector<NamedTensor>& tensors) {
  json header = json::parse(header_json);
  if (!header.is_object()) raise(ErrorCode::InvalidArgument, "container header must be a JSON object");
  json manifest = json::array();
  std::uint64_t offset = 0;
  for (const auto& t : tensors) {
    manifest.push_back({{"name", t.name}, {"shape", t.value.shape()}, {"offset", offset}});
    offset += t.value.size() * sizeof(double);
  }
  header["tensors"] = std::move(manifest);
  const std::string text = header.dump();  // object keys are sorted

  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_le<std::uint16_t>(out, kContainerVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& t : tensors)
    for (double v : t.value.values()) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  put_le<std::uint32_t>(out, crc32c(out));
  return out;
}

namespace {

// Blob bytes the manifest claims, read before the checksum so a short file
// reports truncation. Unreadable manifests yield nullopt and are left to the
// checksum.
std::optional<std::size_t> declared_blob_bytes(std::string_view header_json) {
  const json header = json::parse(header_json, nullptr, false);
  if (header.is_discarded() || !header.is_object() || !header.contains("tensors") || !header["tensors"].is_array())
    return std::nullopt;
  std::size_t end = 0;
  for (const auto& entry : header["tensors"]) {
    if (!entry.is_object() || !entry.contains("shape") || !entry.contains("offset")) return std::nullopt;
    const json& shape = entry["shape"];
    const json& offset = entry["offset"];
    if (!shape.is_array() || !offset.is_number_unsigned()) return std::nullopt;
    std::size_t count = 1;
    for (const auto& d : shape) {
      if (!d.is_number_unsigned()) return std::nullopt;
      count *= d.get<std::size_t>();
    }
    end = std::max(end, offset.get<std::size_t>() + count * sizeof(double));
  }
  return end;
}

}  // namespace

ContainerContents decode_container(std::span<const std::uint8_t> bytes) {
  // A file that stops partway through a correct magic is truncated, not foreign.
  const std::size_t magic_seen = std::min<std::size_t>(bytes.size(), 4);
  if (magic_seen > 0 && std::memcmp(bytes.data(), kMagic, magic_seen) != 0) raise(ErrorCode::BadMagic, "not a tabtune pipeline file");
  if (bytes.size() < 4) raise(ErrorCode::TruncatedFile, "file ends inside the magic");
  if (bytes.size() < 6) raise(ErrorCode::TruncatedFile, "file ends inside the version field");
  const auto version = get_le<std::uint16_t>(bytes, 4);
  if (version != kContainerVersion)
    raise(ErrorCode::VersionUnsupported, "container version " + std::to_string(version) + " (supported: 1)");
  if (bytes.size() < kPrefix + kTrailer) raise(ErrorCode::TruncatedFile, "file ends inside the preamble");
  const std::size_t header_len = get_le<std::uint32_t>(bytes, 6);
  if (kPrefix + header_len + kTrailer > bytes.size())
    raise(ErrorCode::TruncatedFile, "header length exceeds the file size");
  const auto declared = declared_blob_bytes(
      std::string_view(reinterpret_cast<const char*>(bytes.data() + kPrefix), header_len));
  if (declared && kPrefix + header_len + *declared + kTrailer > bytes.size())
    raise(ErrorCode::TruncatedFile, "file is shorter than its manifest declares");
  const std::size_t body = bytes.size() - kTrailer;
  if (crc32c(bytes.first(body)) != get_le<std::uint32_t>(bytes, body))
    raise(ErrorCode::ChecksumMismatch, "stored CRC32C does not match the contents");

  ContainerContents out;
  out.header_json.assign(reinterpret_cast<const char*>(bytes.data() + kPrefix), header_len);
  json header = json::parse(out.header_json, nullptr, false);
  if (header.is_discarded() || !header.is_object() || !header.contains("tensors"))
    raise(ErrorCode::ChecksumMismatch, "header is not a valid manifest");
  const std::size_t blob_start = kPrefix + header_len;
  const std::size_t blob_len = body - blob_start;
  std::size_t expected_end = 0;
  for (const auto& entry : header["tensors"]) {
    NamedTensor t;
    t.name = entry.at("name").get<std::string>();
    auto shape = entry.at("shape").get<std::vector<std::size_t>>();
    const auto offset = entry.at("offset").get<std::size_t>();
    std::size_t count = 1;
    for (std::size_t d : shape) count *= d;
    if (offset + count * sizeof(double) > blob_len) raise(ErrorCode::TruncatedFile, "tensor '" + t.name + "' is cut off");
    std::vector<double> data(count);
    for (std::size_t i = 0; i < count; ++i)
      data[i] = std::bit_cast<double>(get_le<std::uint64_t>(bytes, blob_start + offset + i * sizeof(double)));
    t.value = Tensor(std::move(shape), std::move(data));
    expected_end = std::max(expected_end, offset + count * sizeof(double));
    out.tensors.push_back(std::move(t));
  }
  if (expected_end != blob_len) raise(ErrorCode::TruncatedFile, "blob section size disagrees with the manifest");
  return out;
}

void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) raise(ErrorCode::IoError, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) raise(ErrorCode::IoError, "short write to " + path.string());
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorCode::IoError, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace tabtune
