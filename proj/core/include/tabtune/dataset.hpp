#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace tabtune {

enum class ColumnKind { Numeric, Categorical };

struct ColumnSchema {
  std::string name;
  ColumnKind kind = ColumnKind::Numeric;
  /// Distinct raw values in first-appearance order; empty for Numeric columns.
  std::vector<std::string> categories;

  bool operator==(const ColumnSchema&) const = default;
};

struct Missing {
  bool operator==(const Missing&) const = default;
};

/// Index into the owning column's category list.
struct CategoryCode {
  std::uint32_t index = 0;
  bool operator==(const CategoryCode&) const = default;
};

using Cell = std::variant<Missing, double, CategoryCode>;

/// Rows of typed cells plus an integer-coded target. Immutable once built;
/// construct through load_csv, make_synthetic, or Dataset::create.
class Dataset {
 public:
  Dataset() = default;

  /// Validates the cell grid against the schema. `target` may be empty for
  /// unlabeled data, in which case `class_names` must be empty too.
  static Dataset create(std::vector<ColumnSchema> schema, std::vector<Cell> cells,
                        std::vector<int> target, std::vector<std::string> class_names);

  std::size_t n_rows() const noexcept { return n_rows_; }
  std::size_t n_cols() const noexcept { return schema_.size(); }
  std::size_t n_classes() const noexcept { return class_names_.size(); }
  bool has_target() const noexcept { return !class_names_.empty(); }

  const std::vector<ColumnSchema>& schema() const noexcept { return schema_; }
  const std::vector<Cell>& cells() const noexcept { return cells_; }
  const std::vector<int>& target() const noexcept { return target_; }
  const std::vector<std::string>& class_names() const noexcept { return class_names_; }

  const Cell& cell(std::size_t row, std::size_t col) const { return cells_[row * schema_.size() + col]; }
  std::optional<std::size_t> column_index(const std::string& name) const;

  /// Raw text of a cell: the category string, the formatted real, or "".
  std::string raw_value(std::size_t row, std::size_t col) const;

  Dataset select_rows(const std::vector<std::size_t>& indices) const;
  Dataset drop_columns(const std::vector<std::string>& names) const;

  /// Re-express the target against another class list (matched by name).
  /// Throws UnknownClassLabel for labels not present in `class_names`.
  Dataset with_class_names(const std::vector<std::string>& class_names) const;

  std::vector<std::size_t> class_counts() const;

  bool operator==(const Dataset&) const = default;

 private:
  std::vector<ColumnSchema> schema_;
  std::vector<Cell> cells_;
  std::vector<int> target_;
  std::vector<std::string> class_names_;
  std::size_t n_rows_ = 0;
};

struct CsvOptions {
  std::string target_column;
  /// Per-column kind overrides keyed by header name.
  std::map<std::string, ColumnKind> schema_hints;
  /// When false a file lacking the target column loads as unlabeled data.
  bool require_target = true;
  /// Held-out files may legitimately contain a single class.
  bool allow_single_class = false;
};

Dataset load_csv(const std::filesystem::path& path, const CsvOptions& options);
Dataset parse_csv(const std::string& text, const CsvOptions& options);

struct SplitSpec {
  double test_fraction = 0.25;
  bool stratified = true;
  std::uint64_t seed = 0;
};

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Both index lists are ascending.
SplitIndices split_indices(const Dataset& d, const SplitSpec& spec);
std::pair<Dataset, Dataset> train_test_split(const Dataset& d, const SplitSpec& spec);

Dataset make_synthetic(std::size_t n_per_class, std::size_t n_classes, std::size_t n_features,
                       double cluster_spread, std::uint64_t seed);

}  // namespace tabtune
