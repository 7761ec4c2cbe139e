#include "sleb/eval.hpp"

#include <algorithm>
#include <cmath>

#include "sleb/io_util.hpp"
#include "sleb/metrics.hpp"
#include "sleb/pruner.hpp"
#include "sleb/threading.hpp"
#include "sleb/version.hpp"

namespace sleb {

using json = nlohmann::json;

namespace {

// Window scoring fans out across workers; the reduction runs in window
// order, so the result is independent of the schedule and thread count.
double windows_mean_nll(const TransformerModel& model, const BlockMask& mask,
                        const std::vector<std::vector<uint32_t>>& windows) {
  std::vector<double> sums(windows.size(), 0.0);
  std::vector<size_t> counts(windows.size(), 0);
  parallel_for(windows.size(), [&](size_t w) {
    const auto& window = windows[w];
    if (window.size() < 2) {
      return;
    }
    const Matrix logits = forward_logits(model, mask, window);
    double sum = 0.0;
    for (size_t k = 1; k < window.size(); ++k) {
      sum += token_nll(logits.row_span(k - 1), window[k]);
    }
    sums[w] = sum;
    counts[w] = window.size() - 1;
  });
  double total = 0.0;
  size_t count = 0;
  for (size_t w = 0; w < windows.size(); ++w) {
    total += sums[w];
    count += counts[w];
  }
  if (count == 0) {
    throw CapacityError("perplexity: windows too short to score any position");
  }
  return total / static_cast<double>(count);
}

}  // namespace

json PerplexityReport::to_json() const {
  json j;
  j["tool_version"] = kToolVersion;
  j["model_tag"] = model_tag;
  j["corpus_tag"] = corpus_tag;
  j["calibration_tag"] = calibration_tag;
  j["removed"] = removed;
  j["seq_len"] = seq_len;
  j["window_count"] = window_count;
  j["token_count"] = token_count;
  j["mean_nll"] = mean_nll;
  j["perplexity"] = perplexity;
  return j;
}

PerplexityReport perplexity(const TransformerModel& model, const BlockMask& mask,
                            const TokenCorpus& corpus, size_t seq_len,
                            const std::string& model_tag,
                            const std::string& calibration_tag) {
  const auto windows = eval_windows(corpus, seq_len);

  PerplexityReport report;
  report.model_tag = model_tag;
  report.corpus_tag = corpus.name;
  report.calibration_tag = calibration_tag;
  report.removed = mask.inactive_indices();
  report.seq_len = seq_len;
  report.window_count = windows.size();
  report.token_count = seq_len >= 2 ? windows.size() * (seq_len - 1) : 0;
  report.mean_nll = windows_mean_nll(model, mask, windows);
  report.perplexity = std::exp(report.mean_nll);
  return report;
}

std::vector<SweepRow> sparsity_sweep(const TransformerModel& model,
                                     const TokenCorpus& eval_corpus,
                                     const CalibrationSet& calib,
                                     std::span<const double> sparsities,
                                     size_t eval_seq_len) {
  const size_t n_blocks = model.config.n_blocks;
  size_t n_max = 0;
  for (double s : sparsities) {
    n_max = std::max(n_max, blocks_to_remove(n_blocks, s));
  }

  std::vector<size_t> order;
  if (n_max > 0) {
    PruneConfig config;
    config.n_remove = n_max;
    config.seed = calib.seed;
    order = sleb_prune(model, calib, config).removed_order();
  }

  std::vector<SweepRow> rows;
  rows.reserve(sparsities.size());
  for (double s : sparsities) {
    const size_t n = blocks_to_remove(n_blocks, s);
    SweepRow row;
    row.sparsity = s;
    row.n_removed = n;
    row.removed.assign(order.begin(), order.begin() + n);
    BlockMask mask = BlockMask::all_active(n_blocks);
    for (size_t j : row.removed) {
      mask.deactivate(j);
    }
    row.perplexity = perplexity(model, mask, eval_corpus, eval_seq_len).perplexity;
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string sweep_to_csv(const std::vector<SweepRow>& rows) {
  std::string out = "sparsity,n,removed_order,perplexity\n";
  for (const SweepRow& row : rows) {
    std::string order;
    for (size_t i = 0; i < row.removed.size(); ++i) {
      order += (i ? ";" : "") + std::to_string(row.removed[i]);
    }
    out += format_double(row.sparsity) + "," + std::to_string(row.n_removed) + "," + order +
           "," + format_double(row.perplexity) + "\n";
  }
  return out;
}

}  // namespace sleb
