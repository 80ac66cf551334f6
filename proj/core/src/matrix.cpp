#include "tabtune/matrix.hpp"

#include <cstring>

#include "tabtune/error.hpp"

namespace tabtune {

void FeatureMatrix::append_row(std::span<const double> values) {
  if (rows == 0 && cols == 0) cols = values.size();
  if (values.size() != cols) raise(ErrorCode::ShapeMismatch, "appended row width differs from matrix width");
  data.insert(data.end(), values.begin(), values.end());
  ++rows;
}

FeatureMatrix FeatureMatrix::select_rows(std::span<const std::size_t> indices) const {
  FeatureMatrix out(indices.size(), cols);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    auto src = row(indices[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

std::uint64_t fingerprint(const FeatureMatrix& m) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](const void* p, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  };
  std::uint64_t shape[2] = {m.rows, m.cols};
  feed(shape, sizeof(shape));
  feed(m.data.data(), m.data.size() * sizeof(double));
  return h;
}

}  // namespace tabtune
