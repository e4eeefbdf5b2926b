#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "gnnvault/error.hpp"

namespace gnnvault {

/// Row-major dense matrix.
template <typename T>
class BasicMatrix {
 public:
  using value_type = T;

  BasicMatrix() = default;
  BasicMatrix(std::size_t rows, std::size_t cols, T fill = T{0})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  BasicMatrix(std::size_t rows, std::size_t cols, std::vector<T> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      fail(ErrorCode::kDimensionMismatch,
           "matrix data length " + std::to_string(data_.size()) + " != " +
               std::to_string(rows_) + "x" + std::to_string(cols_));
    }
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }
  std::size_t bytes() const noexcept { return data_.size() * sizeof(T); }

  T& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const noexcept {
    return data_[r * cols_ + c];
  }

  std::span<T> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }
  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  friend bool operator==(const BasicMatrix&, const BasicMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

using DenseMatrix = BasicMatrix<float>;
using DenseMatrix64 = BasicMatrix<double>;

template <typename To, typename From>
BasicMatrix<To> matrix_cast(const BasicMatrix<From>& m) {
  std::vector<To> out(m.size());
  auto in = m.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<To>(in[i]);
  return BasicMatrix<To>(m.rows(), m.cols(), std::move(out));
}

/// Throws kNonFinite if any entry is NaN or infinite.
template <typename T>
void check_finite(const BasicMatrix<T>& m, const char* where) {
  for (T v : m.values()) {
    if (!std::isfinite(v)) {
      fail(ErrorCode::kNonFinite, std::string("non-finite value in ") + where);
    }
  }
}

/// Column-wise concatenation of equally tall blocks.
template <typename T>
BasicMatrix<T> concat_columns(std::span<const BasicMatrix<T>* const> blocks) {
  if (blocks.empty()) return {};
  std::size_t rows = blocks.front()->rows();
  std::size_t cols = 0;
  for (const auto* b : blocks) {
    if (b->rows() != rows) fail(ErrorCode::kDimensionMismatch, "concat_columns: row mismatch");
    cols += b->cols();
  }
  BasicMatrix<T> out(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    T* dst = out.row(r).data();
    for (const auto* b : blocks) {
      auto src = b->row(r);
      std::copy(src.begin(), src.end(), dst);
      dst += src.size();
    }
  }
  return out;
}

}  // namespace gnnvault
