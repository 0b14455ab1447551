/*
 * Copyright 2026 The FedOA Simulator Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef FEDOA_MATRIX_H_
#define FEDOA_MATRIX_H_

#include <cstddef>
#include <span>
#include <vector>

namespace fedoa {

using Vector = std::vector<double>;

// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  // Throws ShapeError unless data.size() == rows * cols.
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) {
    return data_[r * cols_ + c];
  }
  double operator()(std::size_t r, std::size_t c) const {
    return data_[r * cols_ + c];
  }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  bool same_shape(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }
  bool all_finite() const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// this += coeff * other. Shapes must match.
void add_scaled(Matrix& self, const Matrix& other, double coeff);

// a * b.
Matrix matmul(const Matrix& a, const Matrix& b);

// a^T * b.
Matrix matmul_tn(const Matrix& a, const Matrix& b);

// a * b^T.
Matrix matmul_nt(const Matrix& a, const Matrix& b);

// m * v.
Vector matvec(const Matrix& m, std::span<const double> v);

double dot(std::span<const double> a, std::span<const double> b);
double squared_norm(std::span<const double> a);
double frobenius_squared(const Matrix& m);

}  // namespace fedoa

#endif  // FEDOA_MATRIX_H_
