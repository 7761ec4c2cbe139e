#include "sleb/analysis.hpp"

#include <algorithm>

#include "sleb/io_util.hpp"
#include "sleb/metrics.hpp"
#include "sleb/rng.hpp"

namespace sleb {

SimilarityMatrix similarity_matrix(const TransformerModel& model, uint64_t seed) {
  const size_t n = model.config.n_blocks;
  Rng rng(seed);
  const uint32_t token = static_cast<uint32_t>(rng.index(model.config.vocab));

  const uint32_t probe[1] = {token};
  const BlockIOCapture cap =
      block_io_capture(model, BlockMask::all_active(n), probe);

  SimilarityMatrix sim;
  sim.n_blocks = n;
  sim.seed = seed;
  sim.probe_token = token;
  sim.values.assign(n * n, 0.0);
  for (size_t i = 0; i < n; ++i) {
    sim.values[i * n + i] = 1.0;
    for (size_t j = i + 1; j < n; ++j) {
      const double s =
          cosine_similarity(cap.output_of(i).row_span(0), cap.output_of(j).row_span(0));
      sim.values[i * n + j] = s;
      sim.values[j * n + i] = s;
    }
  }
  return sim;
}

namespace {

// Per-position exit depths (blocks processed until the logit-lens prediction
// first matches the final one), in corpus order. match_counts[i] accumulates
// how many positions align after block i.
std::vector<size_t> exit_depths(const TransformerModel& model, const TokenCorpus& corpus,
                                size_t seq_len, std::vector<size_t>* match_counts) {
  const size_t n = model.config.n_blocks;
  const BlockMask mask = BlockMask::all_active(n);
  const auto windows = eval_windows(corpus, seq_len);

  std::vector<size_t> depths;
  depths.reserve(windows.size() * seq_len);
  if (match_counts != nullptr) {
    match_counts->assign(n, 0);
  }

  for (const auto& window : windows) {
    const BlockIOCapture cap = block_io_capture(model, mask, window);
    const Matrix final_logits = logits_from_stream(model, cap.output_of(n - 1));
    std::vector<uint32_t> final_pred(window.size());
    for (size_t p = 0; p < window.size(); ++p) {
      final_pred[p] = argmax_row(final_logits.row_span(p));
    }
    std::vector<size_t> exit_of(window.size(), n);
    for (size_t i = 0; i < n; ++i) {
      // Block n-1 reuses final_logits, so its alignment is exact by construction.
      const Matrix logits = (i + 1 == n) ? final_logits
                                         : logits_from_stream(model, cap.output_of(i));
      for (size_t p = 0; p < window.size(); ++p) {
        if (argmax_row(logits.row_span(p)) != final_pred[p]) {
          continue;
        }
        if (match_counts != nullptr) {
          (*match_counts)[i] += 1;
        }
        if (exit_of[p] == n && i + 1 < n) {
          exit_of[p] = i + 1;  // earliest alignment wins
        }
      }
    }
    depths.insert(depths.end(), exit_of.begin(), exit_of.end());
  }
  return depths;
}

}  // namespace

AlignmentProfile alignment_profile(const TransformerModel& model, const TokenCorpus& corpus,
                                   size_t seq_len) {
  std::vector<size_t> match_counts;
  const std::vector<size_t> depths = exit_depths(model, corpus, seq_len, &match_counts);

  AlignmentProfile profile;
  profile.token_count = depths.size();
  profile.fraction.resize(model.config.n_blocks);
  for (size_t i = 0; i < model.config.n_blocks; ++i) {
    profile.fraction[i] =
        static_cast<double>(match_counts[i]) / static_cast<double>(depths.size());
  }
  return profile;
}

ExitSpeedupReport ideal_exit_speedup(const TransformerModel& model, const TokenCorpus& corpus,
                                     size_t seq_len, std::span<const size_t> batch_sizes) {
  for (size_t b : batch_sizes) {
    if (b == 0) {
      throw ValueError("ideal_exit_speedup: batch sizes must be >= 1");
    }
  }
  const std::vector<size_t> depths = exit_depths(model, corpus, seq_len, nullptr);
  const size_t n = model.config.n_blocks;
  const size_t tokens = depths.size();

  size_t depth_sum = 0;
  for (size_t d : depths) {
    depth_sum += d;
  }

  ExitSpeedupReport report;
  report.n_blocks = n;
  report.token_count = tokens;
  report.skip_ratio =
      1.0 - static_cast<double>(depth_sum) / static_cast<double>(tokens * n);

  for (size_t b : batch_sizes) {
    // A batch runs as deep as its deepest token; cost is token-weighted so
    // a partial tail batch counts its actual occupancy.
    size_t batched_cost = 0;
    for (size_t start = 0; start < tokens; start += b) {
      const size_t end = std::min(start + b, tokens);
      size_t deepest = 0;
      for (size_t i = start; i < end; ++i) {
        deepest = std::max(deepest, depths[i]);
      }
      batched_cost += deepest * (end - start);
    }
    ExitSpeedupRow row;
    row.batch = b;
    row.skip_ratio = report.skip_ratio;
    row.improvement =
        static_cast<double>(tokens * n) / static_cast<double>(batched_cost);
    report.rows.push_back(row);
  }
  return report;
}

std::string to_csv(const SimilarityMatrix& m) {
  std::string out = "block";
  for (size_t j = 0; j < m.n_blocks; ++j) {
    out += "," + std::to_string(j);
  }
  out += "\n";
  for (size_t i = 0; i < m.n_blocks; ++i) {
    out += std::to_string(i);
    for (size_t j = 0; j < m.n_blocks; ++j) {
      out += "," + format_double(m.at(i, j));
    }
    out += "\n";
  }
  return out;
}

std::string to_csv(const AlignmentProfile& p) {
  std::string out = "block,fraction\n";
  for (size_t i = 0; i < p.fraction.size(); ++i) {
    out += std::to_string(i) + "," + format_double(p.fraction[i]) + "\n";
  }
  return out;
}

std::string to_csv(const ExitSpeedupReport& r) {
  std::string out = "batch,skip_ratio,improvement\n";
  for (const ExitSpeedupRow& row : r.rows) {
    out += std::to_string(row.batch) + "," + format_double(row.skip_ratio) + "," +
           format_double(row.improvement) + "\n";
  }
  return out;
}

}  // namespace sleb
