#include "sleb/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace sleb {

double cosine_similarity(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) {
    throw ShapeError("cosine_similarity: vector lengths differ (" +
                     std::to_string(a.size()) + " vs " + std::to_string(b.size()) + ")");
  }
  if (a.empty()) {
    throw ValueError("cosine_similarity: empty vectors");
  }
  double dab = 0.0;
  double da = 0.0;
  double db = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double x = a[i];
    const double y = b[i];
    dab += x * y;
    da += x * x;
    db += y * y;
  }
  if (da == 0.0 || db == 0.0) {
    throw ValueError("cosine_similarity: zero vector");
  }
  if (dab == da && dab == db) {
    return 1.0;  // identical direction and magnitude; skip sqrt rounding
  }
  const double s = dab / (std::sqrt(da) * std::sqrt(db));
  return std::clamp(s, -1.0, 1.0);
}

double io_distance_score(const Matrix& block_input, const Matrix& block_output) {
  if (!block_input.same_shape(block_output)) {
    throw ShapeError("io_distance_score: input/output shapes differ");
  }
  if (block_input.rows == 0) {
    throw ValueError("io_distance_score: empty activation matrices");
  }
  double sum = 0.0;
  for (size_t r = 0; r < block_input.rows; ++r) {
    sum += cosine_similarity(block_input.row_span(r), block_output.row_span(r));
  }
  return 1.0 - sum / static_cast<double>(block_input.rows);
}

std::vector<MetricScore> block_io_distance(const TransformerModel& model,
                                           std::span<const uint32_t> tokens) {
  const BlockMask mask = BlockMask::all_active(model.config.n_blocks);
  const BlockIOCapture cap = block_io_capture(model, mask, tokens);
  std::vector<MetricScore> scores;
  scores.reserve(model.config.n_blocks);
  for (size_t j = 0; j < model.config.n_blocks; ++j) {
    scores.push_back({j, io_distance_score(cap.input_of(j), cap.output_of(j)),
                      MetricKind::kIoDistance});
  }
  return scores;
}

double model_nll(const TransformerModel& model, const BlockMask& mask,
                 const std::vector<std::vector<uint32_t>>& sequences) {
  if (sequences.empty()) {
    throw CapacityError("model_nll: no sequences to score");
  }
  double total = 0.0;
  size_t count = 0;
  for (const auto& seq : sequences) {
    if (seq.size() < 2) {
      continue;  // no conditioned positions
    }
    const Matrix logits = forward_logits(model, mask, seq);
    for (size_t k = 1; k < seq.size(); ++k) {
      total += token_nll(logits.row_span(k - 1), seq[k]);
      ++count;
    }
  }
  if (count == 0) {
    throw CapacityError("model_nll: sequences too short to score any position");
  }
  return total / static_cast<double>(count);
}

double model_nll(const TransformerModel& model, const BlockMask& mask,
                 const CalibrationSet& calib) {
  return model_nll(model, mask, calib.sequences);
}

MetricScore removal_nll(const TransformerModel& model, size_t block,
                        const CalibrationSet& calib) {
  MetricScore s = iterative_removal_nll(model, BlockMask::all_active(model.config.n_blocks),
                                        block, calib);
  s.kind = MetricKind::kRemovalNll;
  return s;
}

MetricScore iterative_removal_nll(const TransformerModel& model, const BlockMask& current,
                                  size_t block, const CalibrationSet& calib) {
  if (block >= current.size()) {
    throw IndexError("iterative_removal_nll: block " + std::to_string(block) +
                     " out of range");
  }
  if (!current.is_active(block)) {
    throw IndexError("iterative_removal_nll: block " + std::to_string(block) +
                     " already removed");
  }
  BlockMask trial = current;
  trial.deactivate(block);
  return {block, model_nll(model, trial, calib), MetricKind::kIterativeRemovalNll};
}

}  // namespace sleb
