#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sleb/data.hpp"
#include "sleb/model.hpp"

namespace sleb {

enum class MetricKind { kIoDistance, kRemovalNll, kIterativeRemovalNll };

struct MetricScore {
  size_t block_index = 0;
  double value = 0.0;
  MetricKind kind = MetricKind::kIoDistance;
};

// (a . b) / (||a|| ||b||), accumulated in f64; throws on a zero vector
// rather than silently returning 0.
double cosine_similarity(std::span<const float> a, std::span<const float> b);

// 1 - mean over rows of cosine_similarity(input row, output row).
double io_distance_score(const Matrix& block_input, const Matrix& block_output);

// Input-output distance of every block on one token sequence (all blocks
// active). Cheap but blind to how small residual changes amplify downstream.
std::vector<MetricScore> block_io_distance(const TransformerModel& model,
                                           std::span<const uint32_t> tokens);

// Mean causal NLL (natural log) over the sequences; the first token of each
// sequence is unscored. Fixed accumulation order, so results are
// deterministic and safe to compute concurrently for different masks.
double model_nll(const TransformerModel& model, const BlockMask& mask,
                 const std::vector<std::vector<uint32_t>>& sequences);
double model_nll(const TransformerModel& model, const BlockMask& mask,
                 const CalibrationSet& calib);

// Calibration NLL with exactly block j hidden from the full model.
MetricScore removal_nll(const TransformerModel& model, size_t block,
                        const CalibrationSet& calib);

// Calibration NLL with block j hidden on top of the current mask; the
// iterative-removal variant. Equals removal_nll when the mask is all-active.
MetricScore iterative_removal_nll(const TransformerModel& model, const BlockMask& current,
                                  size_t block, const CalibrationSet& calib);

}  // namespace sleb
