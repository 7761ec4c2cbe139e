#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "sleb/error.hpp"

namespace sleb {

enum class NormKind { kLayerNorm, kRmsNorm };

// Row-major dense f32 matrix; the only tensor type in the toolkit.
struct Matrix {
  size_t rows = 0;
  size_t cols = 0;
  std::vector<float> data;

  Matrix() = default;
  Matrix(size_t r, size_t c) : rows(r), cols(c), data(r * c, 0.0f) {}

  float& at(size_t r, size_t c) { return data[r * cols + c]; }
  float at(size_t r, size_t c) const { return data[r * cols + c]; }
  float* row(size_t r) { return data.data() + r * cols; }
  const float* row(size_t r) const { return data.data() + r * cols; }
  std::span<const float> row_span(size_t r) const { return {row(r), cols}; }

  // Reshape without clearing; callers overwrite the region they use.
  void ensure(size_t r, size_t c) {
    if (rows != r || cols != c) {
      rows = r;
      cols = c;
      data.resize(r * c);
    }
  }

  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
};

bool all_finite(const Matrix& m);

// c = a * b. f32 accumulation in a fixed order (ascending k), so repeated
// calls with identical inputs are bit-identical.
Matrix matmul(const Matrix& a, const Matrix& b);
void matmul_into(const Matrix& a, const Matrix& b, Matrix& out);
// Writes the product into rows [row_offset, row_offset + a.rows) of out.
void matmul_rows_into(const Matrix& a, const Matrix& b, Matrix& out, size_t row_offset);

// Max-subtracted softmax applied to every row.
Matrix row_softmax(const Matrix& logits);

std::vector<float> normalize(std::span<const float> x, NormKind kind,
                             std::span<const float> gain,
                             const std::vector<float>* bias, float eps);
// Unchecked hot-path variant; bias may be null for rmsnorm.
void normalize_row(const float* x, float* out, size_t n, NormKind kind,
                   const float* gain, const float* bias, float eps);

// -log softmax(logit_row)[target]; nonnegative for every finite row.
float token_nll(std::span<const float> logit_row, uint32_t target);

float gelu(float x);

}  // namespace sleb
