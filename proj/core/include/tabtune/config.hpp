#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>

namespace tabtune {

/// Flat dotted-key configuration:
///
///   # comment
///   model_name = MiniICL
///   [tuning_params]
///   epochs = 5            # becomes tuning_params.epochs
///
/// Later assignments of the same key replace earlier ones.
class ConfigFile {
 public:
  static ConfigFile parse(std::string_view text);
  static ConfigFile load(const std::filesystem::path& path);

  void set(std::string key, std::string value) { values_[std::move(key)] = std::move(value); }
  bool contains(const std::string& key) const { return values_.contains(key); }
  const std::string& at(const std::string& key) const;
  const std::map<std::string, std::string>& values() const noexcept { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

// Value parsers for configuration entries; failures raise InvalidConfig
// naming the key.
double parse_real(std::string_view key, std::string_view value);
std::size_t parse_count(std::string_view key, std::string_view value);
std::uint64_t parse_u64(std::string_view key, std::string_view value);
bool parse_flag(std::string_view key, std::string_view value);

}  // namespace tabtune
