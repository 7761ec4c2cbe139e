#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sleb/data.hpp"
#include "sleb/metrics.hpp"
#include "sleb/model.hpp"

namespace sleb {

// ceil(n_blocks * sparsity); sparsity in [0, 1).
size_t blocks_to_remove(size_t n_blocks, double sparsity);

struct PruneConfig {
  std::optional<double> sparsity;  // exactly one of sparsity / n_remove
  std::optional<size_t> n_remove;
  uint64_t seed = 0;  // echoed into the trace

  size_t resolve_n(size_t n_blocks) const;
};

struct PruneStep {
  size_t chosen = 0;  // original block index
  std::vector<std::pair<size_t, double>> scores;  // (original index, NLL), ascending index
};

struct WindowScore {
  size_t start = 0;
  double nll = 0.0;
};

// Ordered removal log. Block indices always refer to the ORIGINAL model
// indexing; labels stay stable across removals.
struct PruneTrace {
  std::string method;  // "sleb" | "early-exit" | "chunk-best"
  size_t n_blocks = 0;
  std::vector<PruneStep> steps;
  std::vector<WindowScore> window_scores;  // chunk-best only
  BlockMask final_mask;
  nlohmann::json config_echo;

  std::vector<size_t> removed_order() const;
  nlohmann::json to_json() const;
};

// Greedy iterative elimination: each step scores every still-active block
// with the iterative-removal NLL under the cumulative mask and drops the
// argmin (ties: lowest original index). Masks only; no physical removal.
PruneTrace sleb_prune(const TransformerModel& model, const CalibrationSet& calib,
                      const PruneConfig& config);

// Drops the last n blocks in one shot; no scoring.
PruneTrace early_exit_baseline(const TransformerModel& model, size_t n);

// Scores every consecutive window of length n and drops the one with the
// lowest calibration NLL (ties: lowest start).
PruneTrace chunk_best_baseline(const TransformerModel& model, size_t n,
                               const CalibrationSet& calib);

struct OracleEntry {
  std::vector<size_t> removed;  // ascending
  double nll = 0.0;
};

// Every C(N, n) removal subset scored and sorted ascending by NLL
// (ties: lexicographic subset order).
struct OracleRanking {
  size_t n_blocks = 0;
  size_t subset_size = 0;
  std::vector<OracleEntry> entries;

  // 1-based position of the subset in the ranking.
  size_t rank_of(std::vector<size_t> subset) const;
  nlohmann::json to_json() const;
};

OracleRanking exhaustive_oracle(const TransformerModel& model, size_t n,
                                const CalibrationSet& calib, size_t cap = 5000);

}  // namespace sleb
