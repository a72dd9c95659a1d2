#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "proxdist/error.hpp"

namespace proxdist {

// Dense row-major feature matrix with a named column schema.
struct Matrix {
  std::vector<std::string> schema;
  std::size_t rows = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::vector<std::string> names, std::size_t n_rows)
      : schema(std::move(names)), rows(n_rows), data(rows * schema.size(), 0.0) {}

  std::size_t cols() const { return schema.size(); }

  double& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

  std::span<double> row(std::size_t r) { return {data.data() + r * cols(), cols()}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols(), cols()}; }

  void append_row(std::span<const double> values) {
    if (values.size() != cols()) fail(ErrorCode::ShapeMismatch, "row width differs from schema");
    data.insert(data.end(), values.begin(), values.end());
    ++rows;
  }

  // Columns whose names satisfy keep(name), in original order.
  template <typename Pred>
  Matrix select_columns(Pred&& keep) const {
    std::vector<std::size_t> idx;
    Matrix out;
    for (std::size_t c = 0; c < cols(); ++c) {
      if (keep(schema[c])) {
        idx.push_back(c);
        out.schema.push_back(schema[c]);
      }
    }
    out.rows = rows;
    out.data.reserve(rows * idx.size());
    for (std::size_t r = 0; r < rows; ++r) {
      for (auto c : idx) out.data.push_back(at(r, c));
    }
    return out;
  }

  // Stacks `other` under this matrix; schemas must match.
  void append(const Matrix& other) {
    if (rows == 0 && schema.empty()) schema = other.schema;
    if (other.schema != schema) fail(ErrorCode::SchemaMismatch, "cannot stack matrices with different schemas");
    data.insert(data.end(), other.data.begin(), other.data.end());
    rows += other.rows;
  }
};

}  // namespace proxdist
