#include "tabtune/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "tabtune/error.hpp"
#include "tabtune/rng.hpp"

namespace tabtune {

namespace {

std::string format_real(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

std::optional<double> parse_real(std::string_view text) {
  text = trim(text);
  if (text.empty()) return std::nullopt;
  if (text.front() == '+') text.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

// RFC-4180 records. A field is `nullopt`-free; quoting only affects content.
std::vector<std::vector<std::string>> parse_records(const std::string& text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false;
  bool row_has_content = false;
  std::size_t i = 0;
  const std::size_t n = text.size();
  // Skip a UTF-8 byte-order mark.
  if (n >= 3 && text.compare(0, 3, "\xEF\xBB\xBF") == 0) i = 3;

  auto end_record = [&] {
    record.push_back(std::move(field));
    field.clear();
    if (row_has_content || record.size() > 1 || !record.front().empty()) records.push_back(std::move(record));
    record.clear();
    row_has_content = false;
  };

  for (; i < n; ++i) {
    char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < n && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        in_quotes = true;
        row_has_content = true;
        break;
      case ',':
        record.push_back(std::move(field));
        field.clear();
        row_has_content = true;
        break;
      case '\r':
        if (i + 1 < n && text[i + 1] == '\n') ++i;
        end_record();
        break;
      case '\n':
        end_record();
        break;
      default:
        field.push_back(c);
        row_has_content = true;
    }
  }
  if (in_quotes) raise(ErrorCode::RaggedRow, "unterminated quoted field at end of file");
  if (row_has_content || !field.empty() || !record.empty()) end_record();
  return records;
}

}  // namespace

Dataset Dataset::create(std::vector<ColumnSchema> schema, std::vector<Cell> cells, std::vector<int> target,
                        std::vector<std::string> class_names) {
  const std::size_t n_cols = schema.size();
  for (const auto& col : schema) {
    if (col.kind == ColumnKind::Numeric && !col.categories.empty())
      raise(ErrorCode::InvalidArgument, "numeric column '" + col.name + "' carries categories");
    if (col.kind == ColumnKind::Categorical) {
      std::vector<std::string> sorted = col.categories;
      std::sort(sorted.begin(), sorted.end());
      if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
        raise(ErrorCode::InvalidArgument, "duplicate categories in column '" + col.name + "'");
    }
  }
  std::size_t n_rows = 0;
  if (n_cols > 0) {
    if (cells.size() % n_cols != 0) raise(ErrorCode::RaggedRow, "cell count not a multiple of column count");
    n_rows = cells.size() / n_cols;
  } else {
    n_rows = target.size();
  }
  if (!class_names.empty() && target.size() != n_rows)
    raise(ErrorCode::LengthMismatch, "target length differs from row count");
  if (class_names.empty() && !target.empty()) raise(ErrorCode::InvalidArgument, "target without class names");
  for (std::size_t r = 0; r < n_rows; ++r) {
    for (std::size_t c = 0; c < n_cols; ++c) {
      const Cell& cell = cells[r * n_cols + c];
      if (const auto* code = std::get_if<CategoryCode>(&cell)) {
        if (schema[c].kind != ColumnKind::Categorical || code->index >= schema[c].categories.size())
          raise(ErrorCode::InvalidArgument, "category code out of range in column '" + schema[c].name + "'");
      } else if (std::holds_alternative<double>(cell) && schema[c].kind != ColumnKind::Numeric) {
        raise(ErrorCode::InvalidArgument, "real value in categorical column '" + schema[c].name + "'");
      }
    }
  }
  for (int t : target) {
    if (t < 0 || static_cast<std::size_t>(t) >= class_names.size())
      raise(ErrorCode::InvalidArgument, "target index out of range");
  }
  Dataset d;
  d.schema_ = std::move(schema);
  d.cells_ = std::move(cells);
  d.target_ = std::move(target);
  d.class_names_ = std::move(class_names);
  d.n_rows_ = n_rows;
  return d;
}

std::optional<std::size_t> Dataset::column_index(const std::string& name) const {
  for (std::size_t c = 0; c < schema_.size(); ++c)
    if (schema_[c].name == name) return c;
  return std::nullopt;
}

std::string Dataset::raw_value(std::size_t row, std::size_t col) const {
  const Cell& c = cell(row, col);
  if (const auto* v = std::get_if<double>(&c)) return format_real(*v);
  if (const auto* code = std::get_if<CategoryCode>(&c)) return schema_[col].categories[code->index];
  return {};
}

Dataset Dataset::select_rows(const std::vector<std::size_t>& indices) const {
  std::vector<Cell> cells;
  cells.reserve(indices.size() * n_cols());
  std::vector<int> target;
  for (std::size_t r : indices) {
    if (r >= n_rows_) raise(ErrorCode::InvalidArgument, "row index out of range");
    for (std::size_t c = 0; c < n_cols(); ++c) cells.push_back(cell(r, c));
    if (has_target()) target.push_back(target_[r]);
  }
  Dataset d;
  d.schema_ = schema_;
  d.cells_ = std::move(cells);
  d.target_ = std::move(target);
  d.class_names_ = class_names_;
  d.n_rows_ = indices.size();
  return d;
}

Dataset Dataset::drop_columns(const std::vector<std::string>& names) const {
  std::vector<std::size_t> keep;
  for (std::size_t c = 0; c < schema_.size(); ++c)
    if (std::find(names.begin(), names.end(), schema_[c].name) == names.end()) keep.push_back(c);
  std::vector<ColumnSchema> schema;
  for (std::size_t c : keep) schema.push_back(schema_[c]);
  std::vector<Cell> cells;
  cells.reserve(n_rows_ * keep.size());
  for (std::size_t r = 0; r < n_rows_; ++r)
    for (std::size_t c : keep) cells.push_back(cell(r, c));
  Dataset d;
  d.schema_ = std::move(schema);
  d.cells_ = std::move(cells);
  d.target_ = target_;
  d.class_names_ = class_names_;
  d.n_rows_ = n_rows_;
  return d;
}

Dataset Dataset::with_class_names(const std::vector<std::string>& class_names) const {
  std::unordered_map<std::string, int> lookup;
  for (std::size_t k = 0; k < class_names.size(); ++k) lookup.emplace(class_names[k], static_cast<int>(k));
  std::vector<int> remapped(target_.size());
  for (std::size_t r = 0; r < target_.size(); ++r) {
    const std::string& label = class_names_[target_[r]];
    auto it = lookup.find(label);
    if (it == lookup.end()) raise(ErrorCode::UnknownClassLabel, "label '" + label + "' not seen in training");
    remapped[r] = it->second;
  }
  Dataset d = *this;
  d.target_ = std::move(remapped);
  d.class_names_ = class_names;
  return d;
}

std::vector<std::size_t> Dataset::class_counts() const {
  std::vector<std::size_t> counts(n_classes(), 0);
  for (int t : target_) ++counts[t];
  return counts;
}

Dataset parse_csv(const std::string& text, const CsvOptions& options) {
  auto records = parse_records(text);
  if (records.empty()) raise(ErrorCode::EmptyFile, "no header row");
  const std::vector<std::string>& header = records.front();
  const std::size_t width = header.size();

  std::optional<std::size_t> target_col;
  for (std::size_t c = 0; c < width; ++c)
    if (header[c] == options.target_column) target_col = c;
  if (!target_col && options.require_target)
    raise(ErrorCode::MissingTargetColumn, "no column named '" + options.target_column + "'");

  const std::size_t n_rows = records.size() - 1;
  if (n_rows == 0) raise(ErrorCode::EmptyFile, "header only");
  for (std::size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() != width)
      raise(ErrorCode::RaggedRow, "row " + std::to_string(r - 1) + " has " + std::to_string(records[r].size()) +
                                      " fields, expected " + std::to_string(width));
  }

  std::vector<std::size_t> feature_cols;
  for (std::size_t c = 0; c < width; ++c)
    if (!target_col || c != *target_col) feature_cols.push_back(c);

  std::vector<ColumnSchema> schema;
  for (std::size_t c : feature_cols) {
    ColumnSchema col;
    col.name = header[c];
    if (auto hint = options.schema_hints.find(col.name); hint != options.schema_hints.end()) {
      col.kind = hint->second;
    } else {
      bool numeric = true;
      for (std::size_t r = 1; r < records.size() && numeric; ++r) {
        const std::string& raw = records[r][c];
        if (!raw.empty() && !parse_real(raw)) numeric = false;
      }
      col.kind = numeric ? ColumnKind::Numeric : ColumnKind::Categorical;
    }
    schema.push_back(std::move(col));
  }

  std::vector<Cell> cells;
  cells.reserve(n_rows * feature_cols.size());
  std::vector<std::unordered_map<std::string, std::uint32_t>> codebooks(feature_cols.size());
  for (std::size_t r = 1; r < records.size(); ++r) {
    for (std::size_t j = 0; j < feature_cols.size(); ++j) {
      const std::string& raw = records[r][feature_cols[j]];
      if (raw.empty()) {
        cells.emplace_back(Missing{});
      } else if (schema[j].kind == ColumnKind::Numeric) {
        auto v = parse_real(raw);
        if (!v) raise(ErrorCode::BadNumericCell, "row " + std::to_string(r - 1) + ", column '" + schema[j].name + "': '" + raw + "'");
        cells.emplace_back(*v);
      } else {
        auto [it, inserted] = codebooks[j].emplace(raw, static_cast<std::uint32_t>(schema[j].categories.size()));
        if (inserted) schema[j].categories.push_back(raw);
        cells.emplace_back(CategoryCode{it->second});
      }
    }
  }

  std::vector<int> target;
  std::vector<std::string> class_names;
  if (target_col) {
    std::unordered_map<std::string, int> classes;
    target.reserve(n_rows);
    for (std::size_t r = 1; r < records.size(); ++r) {
      const std::string& raw = records[r][*target_col];
      if (raw.empty()) raise(ErrorCode::MissingTargetValue, "row " + std::to_string(r - 1));
      auto [it, inserted] = classes.emplace(raw, static_cast<int>(class_names.size()));
      if (inserted) class_names.push_back(raw);
      target.push_back(it->second);
    }
    if (class_names.size() < 2 && !options.allow_single_class)
      raise(ErrorCode::SingleClassTarget, "target column '" + options.target_column + "' has one distinct value");
  }
  return Dataset::create(std::move(schema), std::move(cells), std::move(target), std::move(class_names));
}

Dataset load_csv(const std::filesystem::path& path, const CsvOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorCode::IoError, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_csv(buf.str(), options);
}

SplitIndices split_indices(const Dataset& d, const SplitSpec& spec) {
  if (!(spec.test_fraction > 0.0 && spec.test_fraction < 1.0))
    raise(ErrorCode::InvalidArgument, "test_fraction must lie in (0,1)");
  const std::size_t n = d.n_rows();
  const auto n_test = static_cast<std::size_t>(std::floor(spec.test_fraction * static_cast<double>(n)));
  if (n_test < 1 || n_test >= n) raise(ErrorCode::DegenerateSplit, "split leaves one side empty");

  Rng rng(derive_seed(spec.seed, "split"));
  std::vector<bool> in_test(n, false);

  if (spec.stratified && d.has_target()) {
    const std::size_t k = d.n_classes();
    std::vector<std::vector<std::size_t>> members(k);
    for (std::size_t r = 0; r < n; ++r) members[d.target()[r]].push_back(r);

    // Largest-remainder apportionment: each class gets floor or ceil of its
    // proportional share, and the shares sum to n_test.
    std::vector<std::size_t> quota(k);
    std::vector<std::pair<double, std::size_t>> remainders;
    std::size_t assigned = 0;
    for (std::size_t c = 0; c < k; ++c) {
      double exact = spec.test_fraction * static_cast<double>(members[c].size());
      quota[c] = static_cast<std::size_t>(std::floor(exact));
      assigned += quota[c];
      remainders.emplace_back(exact - static_cast<double>(quota[c]), c);
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t i = 0; assigned < n_test && i < remainders.size(); ++i) {
      std::size_t c = remainders[i].second;
      if (quota[c] < members[c].size()) {
        ++quota[c];
        ++assigned;
      }
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (!members[c].empty() && quota[c] >= members[c].size())
        raise(ErrorCode::DegenerateSplit, "class '" + d.class_names()[c] + "' would be absent from train");
      std::shuffle(members[c].begin(), members[c].end(), rng);
      for (std::size_t i = 0; i < quota[c]; ++i) in_test[members[c][i]] = true;
    }
  } else {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i = 0; i < n_test; ++i) in_test[order[i]] = true;
  }

  SplitIndices out;
  for (std::size_t r = 0; r < n; ++r) (in_test[r] ? out.test : out.train).push_back(r);
  if (out.train.empty() || out.test.empty()) raise(ErrorCode::DegenerateSplit, "split leaves one side empty");
  return out;
}

std::pair<Dataset, Dataset> train_test_split(const Dataset& d, const SplitSpec& spec) {
  auto idx = split_indices(d, spec);
  return {d.select_rows(idx.train), d.select_rows(idx.test)};
}

Dataset make_synthetic(std::size_t n_per_class, std::size_t n_classes, std::size_t n_features,
                       double cluster_spread, std::uint64_t seed) {
  if (n_per_class < 1 || n_features < 1 || n_classes < 2)
    raise(ErrorCode::InvalidArgument, "make_synthetic needs n_per_class>=1, n_features>=1, n_classes>=2");
  if (!(cluster_spread > 0.0)) raise(ErrorCode::InvalidArgument, "cluster_spread must be positive");

  const double radius = 4.0 * cluster_spread;
  constexpr double kPi = 3.14159265358979323846;
  std::vector<std::vector<double>> means(n_classes, std::vector<double>(n_features, 0.0));
  for (std::size_t k = 0; k < n_classes; ++k) {
    if (n_features >= n_classes) {
      means[k][k] = radius;  // scaled standard-simplex vertex
    } else if (n_features >= 2) {
      double angle = 2.0 * kPi * static_cast<double>(k) / static_cast<double>(n_classes);
      means[k][0] = radius * std::cos(angle);
      means[k][1] = radius * std::sin(angle);
    } else {
      means[k][0] = radius * (2.0 * static_cast<double>(k) / static_cast<double>(n_classes - 1) - 1.0);
    }
  }

  Rng rng(derive_seed(seed, "synthetic"));
  std::normal_distribution<double> noise(0.0, cluster_spread);
  std::vector<ColumnSchema> schema;
  for (std::size_t f = 0; f < n_features; ++f) schema.push_back({"x" + std::to_string(f), ColumnKind::Numeric, {}});
  std::vector<Cell> cells;
  cells.reserve(n_per_class * n_classes * n_features);
  std::vector<int> target;
  for (std::size_t i = 0; i < n_per_class; ++i) {
    for (std::size_t k = 0; k < n_classes; ++k) {
      for (std::size_t f = 0; f < n_features; ++f) cells.emplace_back(means[k][f] + noise(rng));
      target.push_back(static_cast<int>(k));
    }
  }
  std::vector<std::string> class_names;
  for (std::size_t k = 0; k < n_classes; ++k) class_names.push_back("c" + std::to_string(k));
  return Dataset::create(std::move(schema), std::move(cells), std::move(target), std::move(class_names));
}

}  // namespace tabtune
