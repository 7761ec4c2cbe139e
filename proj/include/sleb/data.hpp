#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sleb/error.hpp"

namespace sleb {

enum class CorpusFormat { kJsonLines, kBinary };

// Pre-tokenized integer sequences. Immutable after load.
struct TokenCorpus {
  std::string name;
  std::vector<std::vector<uint32_t>> sequences;

  size_t total_tokens() const;
};

// Seeded fixed-length sample used to score block redundancy.
struct CalibrationSet {
  std::string source;
  uint64_t seed = 0;
  size_t seq_len = 0;
  std::vector<std::vector<uint32_t>> sequences;
};

TokenCorpus load_corpus(const std::string& path, CorpusFormat format,
                        const std::string& name = "");
void save_corpus(const TokenCorpus& corpus, const std::string& path, CorpusFormat format);

// Picks `count` sequences of length >= seq_len uniformly without replacement
// and a uniform slice within each; falls back to sampling offsets from the
// concatenated token stream when the corpus has too few long sequences.
CalibrationSet sample_calibration(const TokenCorpus& corpus, size_t count, size_t seq_len,
                                  uint64_t seed);

// Concatenates all sequences in order and cuts non-overlapping windows,
// dropping the trailing remainder.
std::vector<std::vector<uint32_t>> eval_windows(const TokenCorpus& corpus, size_t seq_len);

// Seeded Markov-chain token stream for self-contained experiments.
TokenCorpus synthetic_corpus(size_t vocab, size_t n_sequences, size_t min_len,
                             size_t max_len, uint64_t seed,
                             const std::string& name = "toy-synth");

}  // namespace sleb
