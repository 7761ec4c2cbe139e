#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sleb/data.hpp"
#include "sleb/model.hpp"

namespace sleb {

// Pairwise cosine similarity between block outputs for one random probe
// token. Symmetric with a unit diagonal.
struct SimilarityMatrix {
  size_t n_blocks = 0;
  std::vector<double> values;  // row-major n_blocks x n_blocks
  uint64_t seed = 0;
  uint32_t probe_token = 0;

  double at(size_t i, size_t j) const { return values[i * n_blocks + j]; }
};

SimilarityMatrix similarity_matrix(const TransformerModel& model, uint64_t seed);

// Fraction of evaluated positions whose logit-lens prediction after block i
// equals the model's final prediction. The last entry is exactly 1.
struct AlignmentProfile {
  std::vector<double> fraction;
  size_t token_count = 0;
};

AlignmentProfile alignment_profile(const TransformerModel& model, const TokenCorpus& corpus,
                                   size_t seq_len);

struct ExitSpeedupRow {
  size_t batch = 0;
  double skip_ratio = 0.0;
  double improvement = 0.0;
};

// Static early-exit model: each token's exit point is the earliest block
// whose logit-lens prediction matches the final one; a batch pays for its
// deepest member. Tokens are grouped in corpus order.
struct ExitSpeedupReport {
  double skip_ratio = 0.0;
  size_t token_count = 0;
  size_t n_blocks = 0;
  std::vector<ExitSpeedupRow> rows;
};

ExitSpeedupReport ideal_exit_speedup(const TransformerModel& model, const TokenCorpus& corpus,
                                     size_t seq_len, std::span<const size_t> batch_sizes);

std::string to_csv(const SimilarityMatrix& m);
std::string to_csv(const AlignmentProfile& p);
std::string to_csv(const ExitSpeedupReport& r);

}  // namespace sleb
