#pragma once

#include <algorithm>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fairac/error.hpp"

namespace fairac {

struct Shape {
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::size_t size() const noexcept { return rows * cols; }
  friend bool operator==(const Shape&, const Shape&) = default;
};

inline std::string to_string(Shape s) {
  return "(" + std::to_string(s.rows) + "x" + std::to_string(s.cols) + ")";
}

// Dense row-major matrix of doubles. Vectors are 1xN or Nx1, scalars 1x1.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : shape_{rows, cols}, data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : shape_{rows, cols}, data_(std::move(data)) {
    if (data_.size() != shape_.size()) {
      throw ShapeError("matrix data length " + std::to_string(data_.size()) +
                       " does not match shape " + to_string(shape_));
    }
  }
  Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    shape_.rows = rows.size();
    shape_.cols = rows.size() == 0 ? 0 : rows.begin()->size();
    data_.reserve(shape_.size());
    for (const auto& r : rows) {
      if (r.size() != shape_.cols) throw ShapeError("ragged matrix literal");
      data_.insert(data_.end(), r.begin(), r.end());
    }
  }

  static Matrix scalar(double v) { return Matrix(1, 1, v); }
  static Matrix row_vector(std::span<const double> v) {
    return Matrix(1, v.size(), std::vector<double>(v.begin(), v.end()));
  }
  static Matrix column_vector(std::span<const double> v) {
    return Matrix(v.size(), 1, std::vector<double>(v.begin(), v.end()));
  }
  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  Shape shape() const noexcept { return shape_; }
  std::size_t rows() const noexcept { return shape_.rows; }
  std::size_t cols() const noexcept { return shape_.cols; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) {
    return data_[r * shape_.cols + c];
  }
  double operator()(std::size_t r, std::size_t c) const {
    return data_[r * shape_.cols + c];
  }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> row(std::size_t r) {
    return {data_.data() + r * shape_.cols, shape_.cols};
  }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * shape_.cols, shape_.cols};
  }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

inline Matrix gather_rows(const Matrix& m, std::span<const std::size_t> ids) {
  Matrix out(ids.size(), m.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    std::copy_n(m.row(ids[i]).begin(), m.cols(), out.row(i).begin());
  }
  return out;
}

inline Matrix transpose(const Matrix& m) {
  Matrix out(m.cols(), m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) out(c, r) = m(r, c);
  return out;
}

// C = A * B, fixed i-k-j loop order.
inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul " + to_string(a.shape()) + " * " +
                     to_string(b.shape()));
  }
  Matrix out(a.rows(), b.cols());
  const std::size_t n = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* o = out.data().data() + i * n;
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      const double* brow = b.data().data() + k * n;
      for (std::size_t j = 0; j < n; ++j) o[j] += aik * brow[j];
    }
  }
  return out;
}

// Compressed sparse row matrix; used for the normalized adjacency.
class SparseMatrix {
 public:
  struct Entry {
    std::size_t row;
    std::size_t col;
    double value;
  };

  SparseMatrix() = default;
  // Entries may arrive in any order; duplicates are summed.
  SparseMatrix(std::size_t rows, std::size_t cols, std::vector<Entry> entries)
      : rows_(rows), cols_(cols), row_ptr_(rows + 1, 0) {
    std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
      return a.row != b.row ? a.row < b.row : a.col < b.col;
    });
    for (const auto& e : entries) {
      if (e.row >= rows || e.col >= cols) throw ShapeError("sparse entry out of range");
      if (!col_idx_.empty() && row_of_last_ == e.row && col_idx_.back() == e.col) {
        values_.back() += e.value;
        continue;
      }
      col_idx_.push_back(e.col);
      values_.push_back(e.value);
      row_of_last_ = e.row;
      ++row_ptr_[e.row + 1];
    }
    for (std::size_t r = 0; r < rows; ++r) row_ptr_[r + 1] += row_ptr_[r];
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t nnz() const noexcept { return values_.size(); }

  std::span<const std::size_t> row_cols(std::size_t r) const {
    return {col_idx_.data() + row_ptr_[r], row_ptr_[r + 1] - row_ptr_[r]};
  }
  std::span<const double> row_values(std::size_t r) const {
    return {values_.data() + row_ptr_[r], row_ptr_[r + 1] - row_ptr_[r]};
  }

  double at(std::size_t r, std::size_t c) const {
    const auto cs = row_cols(r);
    const auto it = std::lower_bound(cs.begin(), cs.end(), c);
    if (it == cs.end() || *it != c) return 0.0;
    return row_values(r)[static_cast<std::size_t>(it - cs.begin())];
  }

  Matrix to_dense() const {
    Matrix out(rows_, cols_);
    for (std::size_t r = 0; r < rows_; ++r) {
      const auto cs = row_cols(r);
      const auto vs = row_values(r);
      for (std::size_t k = 0; k < cs.size(); ++k) out(r, cs[k]) = vs[k];
    }
    return out;
  }

  SparseMatrix transposed() const {
    std::vector<Entry> entries;
    entries.reserve(nnz());
    for (std::size_t r = 0; r < rows_; ++r) {
      const auto cs = row_cols(r);
      const auto vs = row_values(r);
      for (std::size_t k = 0; k < cs.size(); ++k) entries.push_back({cs[k], r, vs[k]});
    }
    return SparseMatrix(cols_, rows_, std::move(entries));
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::size_t row_of_last_ = 0;
  std::vector<std::size_t> row_ptr_{0};
  std::vector<std::size_t> col_idx_;
  std::vector<double> values_;
};

inline Matrix spmm(const SparseMatrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("spmm (" + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + ") * " + to_string(b.shape()));
  }
  Matrix out(a.rows(), b.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const auto cs = a.row_cols(r);
    const auto vs = a.row_values(r);
    auto o = out.row(r);
    for (std::size_t k = 0; k < cs.size(); ++k) {
      const auto brow = b.row(cs[k]);
      for (std::size_t j = 0; j < o.size(); ++j) o[j] += vs[k] * brow[j];
    }
  }
  return out;
}

}  // namespace fairac
