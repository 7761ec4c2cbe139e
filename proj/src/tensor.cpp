#include "sleb/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace sleb {

bool all_finite(const Matrix& m) {
  for (float v : m.data) {
    if (!std::isfinite(v)) {
      return false;
    }
  }
  return true;
}

static void check_inner(const Matrix& a, const Matrix& b) {
  if (a.cols != b.rows) {
    throw ShapeError("matmul: inner dimensions differ (" + std::to_string(a.cols) +
                     " vs " + std::to_string(b.rows) + ")");
  }
}

void matmul_rows_into(const Matrix& a, const Matrix& b, Matrix& out, size_t row_offset) {
  check_inner(a, b);
  if (out.cols != b.cols || out.rows < row_offset + a.rows) {
    throw ShapeError("matmul: output region out of range");
  }
  const size_t m = a.rows;
  const size_t k = a.cols;
  const size_t n = b.cols;
  for (size_t i = 0; i < m; ++i) {
    float* orow = out.row(row_offset + i);
    std::fill(orow, orow + n, 0.0f);
    const float* arow = a.row(i);
    for (size_t p = 0; p < k; ++p) {
      const float av = arow[p];
      const float* brow = b.row(p);
      for (size_t j = 0; j < n; ++j) {
        orow[j] += av * brow[j];
      }
    }
  }
}

void matmul_into(const Matrix& a, const Matrix& b, Matrix& out) {
  check_inner(a, b);
  out.ensure(a.rows, b.cols);
  matmul_rows_into(a, b, out, 0);
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  Matrix out;
  matmul_into(a, b, out);
  return out;
}

Matrix row_softmax(const Matrix& logits) {
  Matrix out(logits.rows, logits.cols);
  for (size_t r = 0; r < logits.rows; ++r) {
    const float* x = logits.row(r);
    float* y = out.row(r);
    float max_v = -std::numeric_limits<float>::infinity();
    for (size_t c = 0; c < logits.cols; ++c) {
      if (!std::isfinite(x[c])) {
        throw NumericError("row_softmax: non-finite input at row " + std::to_string(r));
      }
      max_v = std::max(max_v, x[c]);
    }
    float sum = 0.0f;
    for (size_t c = 0; c < logits.cols; ++c) {
      const float e = std::exp(x[c] - max_v);
      y[c] = e;
      sum += e;
    }
    const float inv = 1.0f / sum;
    for (size_t c = 0; c < logits.cols; ++c) {
      y[c] *= inv;
    }
  }
  return out;
}

void normalize_row(const float* x, float* out, size_t n, NormKind kind,
                   const float* gain, const float* bias, float eps) {
  if (kind == NormKind::kLayerNorm) {
    float sum = 0.0f;
    for (size_t i = 0; i < n; ++i) {
      sum += x[i];
    }
    const float mean = sum / static_cast<float>(n);
    float var = 0.0f;
    for (size_t i = 0; i < n; ++i) {
      const float d = x[i] - mean;
      var += d * d;
    }
    var /= static_cast<float>(n);
    const float inv = 1.0f / std::sqrt(var + eps);
    for (size_t i = 0; i < n; ++i) {
      out[i] = (x[i] - mean) * inv * gain[i] + bias[i];
    }
  } else {
    float ms = 0.0f;
    for (size_t i = 0; i < n; ++i) {
      ms += x[i] * x[i];
    }
    ms /= static_cast<float>(n);
    const float inv = 1.0f / std::sqrt(ms + eps);
    for (size_t i = 0; i < n; ++i) {
      out[i] = x[i] * inv * gain[i];
    }
  }
}

std::vector<float> normalize(std::span<const float> x, NormKind kind,
                             std::span<const float> gain,
                             const std::vector<float>* bias, float eps) {
  if (gain.size() != x.size()) {
    throw ShapeError("normalize: gain length " + std::to_string(gain.size()) +
                     " does not match input length " + std::to_string(x.size()));
  }
  if (kind == NormKind::kLayerNorm) {
    if (bias == nullptr || bias->size() != x.size()) {
      throw ShapeError("normalize: layernorm requires a bias of the input length");
    }
  } else if (bias != nullptr && !bias->empty()) {
    throw ShapeError("normalize: rmsnorm takes no bias");
  }
  std::vector<float> out(x.size());
  normalize_row(x.data(), out.data(), x.size(), kind, gain.data(),
                bias != nullptr ? bias->data() : nullptr, eps);
  return out;
}

float token_nll(std::span<const float> logit_row, uint32_t target) {
  if (target >= logit_row.size()) {
    throw IndexError("token_nll: target " + std::to_string(target) +
                     " out of range for vocab " + std::to_string(logit_row.size()));
  }
  float max_v = -std::numeric_limits<float>::infinity();
  for (float v : logit_row) {
    max_v = std::max(max_v, v);
  }
  float sum = 0.0f;
  for (float v : logit_row) {
    sum += std::exp(v - max_v);
  }
  return std::log(sum) - (logit_row[target] - max_v);
}

float gelu(float x) {
  constexpr float k = 0.7978845608028654f;  // sqrt(2/pi)
  const float x3 = x * x * x;
  return 0.5f * x * (1.0f + std::tanh(k * (x + 0.044715f * x3)));
}

}  // namespace sleb
