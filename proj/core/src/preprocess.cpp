#include "tabtune/preprocess.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <unordered_map>

#include "tabtune/error.hpp"

namespace tabtune {

PreprocessProfile icl_numeric_profile() {
  return {"icl-numeric", NumericScaling::Standardize, CategoricalEncoding::IntegerCodes, NumericImpute::Mean,
          CategoricalImpute::Mode};
}

PreprocessProfile linear_onehot_profile() {
  return {"linear-onehot", NumericScaling::Standardize, CategoricalEncoding::OneHot, NumericImpute::Mean,
          CategoricalImpute::Mode};
}

PreprocessProfile profile_by_name(std::string_view name) {
  if (name == "icl-numeric") return icl_numeric_profile();
  if (name == "linear-onehot") return linear_onehot_profile();
  raise(ErrorCode::InvalidConfig, "unknown preprocessing profile '" + std::string(name) + "'");
}

std::size_t PreprocessorState::output_width() const {
  std::size_t width = 0;
  for (const auto& col : columns) {
    if (const auto* cat = std::get_if<CategoricalColumnState>(&col.stats);
        cat && profile.categorical_encoding == CategoricalEncoding::OneHot) {
      width += cat->codebook.size() + 1;
    } else {
      width += 1;
    }
  }
  return width;
}

namespace {

NumericColumnState fit_numeric(const Dataset& train, std::size_t c, NumericImpute impute) {
  std::vector<double> values;
  values.reserve(train.n_rows());
  for (std::size_t r = 0; r < train.n_rows(); ++r)
    if (const auto* v = std::get_if<double>(&train.cell(r, c))) values.push_back(*v);

  NumericColumnState s;
  if (values.empty()) {
    s.impute_value = 0.0;
    s.mean = 0.0;
    s.std = kStdFloor;
    return s;
  }
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  s.std = std::max(std::sqrt(ss / static_cast<double>(values.size())), kStdFloor);
  if (impute == NumericImpute::Mean) {
    s.impute_value = s.mean;
  } else {
    std::sort(values.begin(), values.end());
    std::size_t m = values.size() / 2;
    s.impute_value = values.size() % 2 == 1 ? values[m] : 0.5 * (values[m - 1] + values[m]);
  }
  return s;
}

CategoricalColumnState fit_categorical(const Dataset& train, std::size_t c) {
  const auto& categories = train.schema()[c].categories;
  CategoricalColumnState s;
  std::unordered_map<std::uint32_t, std::uint32_t> local;  // dataset code -> codebook code
  std::vector<std::size_t> counts;
  for (std::size_t r = 0; r < train.n_rows(); ++r) {
    const auto* code = std::get_if<CategoryCode>(&train.cell(r, c));
    if (!code) continue;
    auto [it, inserted] = local.emplace(code->index, static_cast<std::uint32_t>(s.codebook.size()));
    if (inserted) {
      s.codebook.push_back(categories[code->index]);
      counts.push_back(0);
    }
    ++counts[it->second];
  }
  if (s.codebook.empty()) {
    s.codebook.emplace_back(kMissingCategory);
    s.mode_code = 0;
    return s;
  }
  // max_element returns the first maximum, i.e. the lowest code on ties.
  s.mode_code = static_cast<std::uint32_t>(std::max_element(counts.begin(), counts.end()) - counts.begin());
  return s;
}

}  // namespace

PreprocessorState fit_preprocessor(const Dataset& train, const PreprocessProfile& profile) {
  if (train.n_rows() == 0) raise(ErrorCode::EmptyTrainingSet, "cannot fit preprocessing on zero rows");
  PreprocessorState state;
  state.profile = profile;
  state.fitted_on_rows = train.n_rows();
  for (std::size_t c = 0; c < train.n_cols(); ++c) {
    const auto& col = train.schema()[c];
    ColumnState cs;
    cs.name = col.name;
    cs.kind = col.kind;
    if (col.kind == ColumnKind::Numeric)
      cs.stats = fit_numeric(train, c, profile.impute_numeric);
    else
      cs.stats = fit_categorical(train, c);
    state.columns.push_back(std::move(cs));
  }
  return state;
}

FeatureMatrix transform(const PreprocessorState& state, const Dataset& d) {
  if (d.n_cols() != state.columns.size())
    raise(ErrorCode::SchemaMismatch, "expected " + std::to_string(state.columns.size()) + " feature columns, got " +
                                         std::to_string(d.n_cols()));
  std::vector<std::size_t> source(state.columns.size());
  for (std::size_t j = 0; j < state.columns.size(); ++j) {
    const auto& col = state.columns[j];
    auto idx = d.column_index(col.name);
    if (!idx) raise(ErrorCode::SchemaMismatch, "column '" + col.name + "' missing");
    if (d.schema()[*idx].kind != col.kind) raise(ErrorCode::SchemaMismatch, "column '" + col.name + "' changed kind");
    source[j] = *idx;
  }

  const bool standardize = state.profile.numeric_scaling == NumericScaling::Standardize;
  const bool one_hot = state.profile.categorical_encoding == CategoricalEncoding::OneHot;
  FeatureMatrix out(d.n_rows(), state.output_width());

  std::size_t offset = 0;
  for (std::size_t j = 0; j < state.columns.size(); ++j) {
    const std::size_t c = source[j];
    if (const auto* num = std::get_if<NumericColumnState>(&state.columns[j].stats)) {
      for (std::size_t r = 0; r < d.n_rows(); ++r) {
        const auto* v = std::get_if<double>(&d.cell(r, c));
        double x = v ? *v : num->impute_value;
        out(r, offset) = standardize ? (x - num->mean) / num->std : x;
      }
      offset += 1;
      continue;
    }
    const auto& cat = std::get<CategoricalColumnState>(state.columns[j].stats);
    std::unordered_map<std::string_view, std::uint32_t> lookup;
    for (std::uint32_t k = 0; k < cat.codebook.size(); ++k) lookup.emplace(cat.codebook[k], k);
    const auto& raw_categories = d.schema()[c].categories;
    std::vector<std::uint32_t> translate(raw_categories.size());
    for (std::size_t k = 0; k < raw_categories.size(); ++k) {
      auto it = lookup.find(raw_categories[k]);
      translate[k] = it == lookup.end() ? cat.unseen_code() : it->second;
    }
    for (std::size_t r = 0; r < d.n_rows(); ++r) {
      const auto* code = std::get_if<CategoryCode>(&d.cell(r, c));
      std::uint32_t k = code ? translate[code->index] : cat.mode_code;
      if (one_hot)
        out(r, offset + k) = 1.0;
      else
        out(r, offset) = static_cast<double>(k);
    }
    offset += one_hot ? cat.codebook.size() + 1 : 1;
  }
  return out;
}

std::uint64_t fingerprint(const PreprocessorState& state) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed_bytes = [&h](std::string_view bytes) {
    for (unsigned char b : bytes) {
      h ^= b;
      h *= 0x100000001b3ULL;
    }
    h ^= 0xff;
    h *= 0x100000001b3ULL;
  };
  auto feed_u64 = [&](std::uint64_t v) {
    feed_bytes(std::string_view(reinterpret_cast<const char*>(&v), sizeof(v)));
  };
  auto feed_real = [&](double v) { feed_u64(std::bit_cast<std::uint64_t>(v)); };

  feed_bytes(state.profile.name);
  feed_u64(static_cast<std::uint64_t>(state.profile.numeric_scaling));
  feed_u64(static_cast<std::uint64_t>(state.profile.categorical_encoding));
  feed_u64(static_cast<std::uint64_t>(state.profile.impute_numeric));
  feed_u64(state.fitted_on_rows);
  for (const auto& col : state.columns) {
    feed_bytes(col.name);
    if (const auto* num = std::get_if<NumericColumnState>(&col.stats)) {
      feed_real(num->impute_value);
      feed_real(num->mean);
      feed_real(num->std);
    } else {
      const auto& cat = std::get<CategoricalColumnState>(col.stats);
      feed_u64(cat.mode_code);
      for (const auto& v : cat.codebook) feed_bytes(v);
    }
  }
  return h;
}

}  // namespace tabtune
