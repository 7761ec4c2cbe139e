#pragma once

#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "sleb/data.hpp"
#include "sleb/model.hpp"

namespace sleb {

struct PerplexityReport {
  std::string model_tag;
  std::string corpus_tag;
  std::string calibration_tag;  // for calibration/evaluation crossings
  std::vector<size_t> removed;  // inactive original block indices
  size_t seq_len = 0;
  size_t window_count = 0;
  size_t token_count = 0;  // scored positions
  double mean_nll = 0.0;
  double perplexity = 0.0;

  nlohmann::json to_json() const;
};

// Window-local conditioning: non-overlapping length-L windows, first token
// of each window unscored, perplexity = exp(mean NLL).
PerplexityReport perplexity(const TransformerModel& model, const BlockMask& mask,
                            const TokenCorpus& corpus, size_t seq_len,
                            const std::string& model_tag = "",
                            const std::string& calibration_tag = "");

struct SweepRow {
  double sparsity = 0.0;
  size_t n_removed = 0;
  std::vector<size_t> removed;  // removal order
  double perplexity = 0.0;
};

// One greedy run at the deepest target serves every row: a shallower
// sparsity's removal set is the prefix of the deeper trace.
std::vector<SweepRow> sparsity_sweep(const TransformerModel& model,
                                     const TokenCorpus& eval_corpus,
                                     const CalibrationSet& calib,
                                     std::span<const double> sparsities, size_t eval_seq_len);

std::string sweep_to_csv(const std::vector<SweepRow>& rows);

}  // namespace sleb
