#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "tabtune/dataset.hpp"
#include "tabtune/matrix.hpp"

namespace tabtune {

enum class NumericScaling { Standardize, None };
enum class CategoricalEncoding { IntegerCodes, OneHot };
enum class NumericImpute { Mean, Median };
enum class CategoricalImpute { Mode };

struct PreprocessProfile {
  std::string name;
  NumericScaling numeric_scaling = NumericScaling::Standardize;
  CategoricalEncoding categorical_encoding = CategoricalEncoding::IntegerCodes;
  NumericImpute impute_numeric = NumericImpute::Mean;
  CategoricalImpute impute_categorical = CategoricalImpute::Mode;

  bool operator==(const PreprocessProfile&) const = default;
};

/// Standardize + integer codes + mean/mode imputation.
PreprocessProfile icl_numeric_profile();
/// Standardize + one-hot + mean/mode imputation.
PreprocessProfile linear_onehot_profile();
/// Throws InvalidConfig for unknown names.
PreprocessProfile profile_by_name(std::string_view name);

inline constexpr double kStdFloor = 1e-12;
inline constexpr std::string_view kMissingCategory = "<MISSING>";

struct NumericColumnState {
  double impute_value = 0.0;
  double mean = 0.0;
  double std = 1.0;  // already floored at kStdFloor

  bool operator==(const NumericColumnState&) const = default;
};

struct CategoricalColumnState {
  std::uint32_t mode_code = 0;
  std::vector<std::string> codebook;
  std::uint32_t unseen_code() const { return static_cast<std::uint32_t>(codebook.size()); }

  bool operator==(const CategoricalColumnState&) const = default;
};

struct ColumnState {
  std::string name;
  ColumnKind kind = ColumnKind::Numeric;
  std::variant<NumericColumnState, CategoricalColumnState> stats;

  bool operator==(const ColumnState&) const = default;
};

/// Train-split statistics. Never modified after fit.
struct PreprocessorState {
  PreprocessProfile profile;
  std::vector<ColumnState> columns;
  std::size_t fitted_on_rows = 0;

  /// Width of the matrix transform() produces.
  std::size_t output_width() const;

  bool operator==(const PreprocessorState&) const = default;
};

PreprocessorState fit_preprocessor(const Dataset& train, const PreprocessProfile& profile);

/// Columns are matched by name (order may differ); any missing, extra, or
/// re-typed column raises SchemaMismatch.
FeatureMatrix transform(const PreprocessorState& state, const Dataset& d);

std::uint64_t fingerprint(const PreprocessorState& state);

}  // namespace tabtune
