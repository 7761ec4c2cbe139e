#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "sleb/model.hpp"

namespace sleb {

struct BenchReport {
  std::string scenario;  // "prompt" | "generate"
  std::string model_tag;
  size_t active_blocks = 0;
  size_t total_blocks = 0;
  size_t batch = 0;
  size_t length = 0;  // prompt_len or gen_len
  size_t reps = 0;
  size_t warmup = 0;
  std::vector<double> times_ms;
  double mean_ms = 0.0;
  double median_ms = 0.0;
  double tokens_per_s = 0.0;  // from the median time

  nlohmann::json to_json() const;
  // scenario,sparsity,metric,value rows
  std::string to_csv_rows() const;
};

// Full forward passes over seeded random token batches; the timed region is
// single-threaded by default and excludes model construction. With
// parallel_rows the batch fans out across workers (SLEB_THREADS cap);
// acceptance measurements keep the default for timing stability.
BenchReport bench_prompt(const TransformerModel& model, const BlockMask& mask,
                         size_t prompt_len, size_t batch, size_t reps, size_t warmup,
                         uint64_t seed, const std::string& model_tag = "",
                         bool parallel_rows = false);

// Batched greedy KV-cached generation from 1-token seeded prompts; cache
// allocation is part of each timed repetition.
BenchReport bench_generate(const TransformerModel& model, const BlockMask& mask,
                           size_t batch, size_t gen_len, size_t reps, size_t warmup,
                           uint64_t seed, const std::string& model_tag = "");

}  // namespace sleb
