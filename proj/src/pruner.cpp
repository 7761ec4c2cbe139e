#include "sleb/pruner.hpp"

#include <algorithm>
#include <cmath>

#include "sleb/threading.hpp"
#include "sleb/version.hpp"

namespace sleb {

using json = nlohmann::json;

size_t blocks_to_remove(size_t n_blocks, double sparsity) {
  if (!(sparsity >= 0.0) || sparsity >= 1.0) {
    throw ValueError("blocks_to_remove: sparsity must lie in [0, 1)");
  }
  // The small backoff keeps exact-integer products (e.g. 80 * 0.20) from
  // rounding up through float dust.
  const double raw = static_cast<double>(n_blocks) * sparsity;
  return static_cast<size_t>(std::ceil(raw - 1e-9));
}

size_t PruneConfig::resolve_n(size_t n_blocks) const {
  if (sparsity.has_value() == n_remove.has_value()) {
    throw ValueError("prune config: set exactly one of sparsity / n_remove");
  }
  const size_t n = sparsity.has_value() ? blocks_to_remove(n_blocks, *sparsity) : *n_remove;
  if (n >= n_blocks) {
    throw ValueError("prune config: cannot remove " + std::to_string(n) + " of " +
                     std::to_string(n_blocks) + " blocks");
  }
  return n;
}

std::vector<size_t> PruneTrace::removed_order() const {
  std::vector<size_t> order;
  order.reserve(steps.size());
  for (const PruneStep& s : steps) {
    order.push_back(s.chosen);
  }
  return order;
}

json PruneTrace::to_json() const {
  json j;
  j["tool_version"] = kToolVersion;
  j["method"] = method;
  j["n_blocks"] = n_blocks;
  j["config"] = config_echo;
  json steps_j = json::array();
  for (const PruneStep& s : steps) {
    json scores = json::array();
    for (const auto& [block, nll] : s.scores) {
      scores.push_back({{"block", block}, {"nll", nll}});
    }
    steps_j.push_back({{"chosen", s.chosen}, {"scores", scores}});
  }
  j["steps"] = steps_j;
  if (!window_scores.empty()) {
    json wins = json::array();
    for (const WindowScore& w : window_scores) {
      wins.push_back({{"start", w.start}, {"nll", w.nll}});
    }
    j["window_scores"] = wins;
  }
  j["removed_order"] = removed_order();
  j["final_active"] = final_mask.active_indices();
  return j;
}

namespace {

json calibration_echo(const CalibrationSet& calib) {
  json j;
  j["source"] = calib.source;
  j["seed"] = calib.seed;
  j["count"] = calib.sequences.size();
  j["seq_len"] = calib.seq_len;
  return j;
}

}  // namespace

PruneTrace sleb_prune(const TransformerModel& model, const CalibrationSet& calib,
                      const PruneConfig& config) {
  const size_t n_blocks = model.config.n_blocks;
  const size_t n = config.resolve_n(n_blocks);

  PruneTrace trace;
  trace.method = "sleb";
  trace.n_blocks = n_blocks;
  trace.final_mask = BlockMask::all_active(n_blocks);
  trace.config_echo = json{{"target_n", n},
                           {"seed", config.seed},
                           {"calibration", calibration_echo(calib)}};
  if (config.sparsity.has_value()) {
    trace.config_echo["sparsity"] = *config.sparsity;
  }
  if (n == 0) {
    return trace;
  }
  if (calib.sequences.empty()) {
    throw CapacityError("sleb_prune: empty calibration set");
  }

  for (size_t step = 0; step < n; ++step) {
    const std::vector<size_t> candidates = trace.final_mask.active_indices();
    std::vector<double> values(candidates.size());
    parallel_for(candidates.size(), [&](size_t c) {
      values[c] = iterative_removal_nll(model, trace.final_mask, candidates[c], calib).value;
    });
    size_t best = 0;
    for (size_t c = 1; c < candidates.size(); ++c) {
      if (values[c] < values[best]) {
        best = c;  // strict <: ties keep the lowest original index
      }
    }
    PruneStep ps;
    ps.chosen = candidates[best];
    ps.scores.reserve(candidates.size());
    for (size_t c = 0; c < candidates.size(); ++c) {
      ps.scores.emplace_back(candidates[c], values[c]);
    }
    trace.steps.push_back(std::move(ps));
    trace.final_mask.deactivate(candidates[best]);
  }
  return trace;
}

PruneTrace early_exit_baseline(const TransformerModel& model, size_t n) {
  const size_t n_blocks = model.config.n_blocks;
  if (n >= n_blocks) {
    throw ValueError("early_exit_baseline: cannot remove " + std::to_string(n) + " of " +
                     std::to_string(n_blocks) + " blocks");
  }
  PruneTrace trace;
  trace.method = "early-exit";
  trace.n_blocks = n_blocks;
  trace.final_mask = BlockMask::all_active(n_blocks);
  trace.config_echo = json{{"target_n", n}};
  for (size_t j = n_blocks - n; j < n_blocks; ++j) {
    trace.steps.push_back({j, {}});
    trace.final_mask.deactivate(j);
  }
  return trace;
}

PruneTrace chunk_best_baseline(const TransformerModel& model, size_t n,
                               const CalibrationSet& calib) {
  const size_t n_blocks = model.config.n_blocks;
  if (n >= n_blocks) {
    throw ValueError("chunk_best_baseline: cannot remove " + std::to_string(n) + " of " +
                     std::to_string(n_blocks) + " blocks");
  }
  PruneTrace trace;
  trace.method = "chunk-best";
  trace.n_blocks = n_blocks;
  trace.final_mask = BlockMask::all_active(n_blocks);
  trace.config_echo = json{{"target_n", n}, {"calibration", calibration_echo(calib)}};
  if (n == 0) {
    return trace;
  }
  if (calib.sequences.empty()) {
    throw CapacityError("chunk_best_baseline: empty calibration set");
  }

  const size_t n_windows = n_blocks - n + 1;
  std::vector<double> values(n_windows);
  parallel_for(n_windows, [&](size_t w) {
    BlockMask mask = BlockMask::all_active(n_blocks);
    for (size_t j = w; j < w + n; ++j) {
      mask.deactivate(j);
    }
    values[w] = model_nll(model, mask, calib);
  });
  size_t best = 0;
  trace.window_scores.reserve(n_windows);
  for (size_t w = 0; w < n_windows; ++w) {
    trace.window_scores.push_back({w, values[w]});
    if (values[w] < values[best]) {
      best = w;
    }
  }
  for (size_t j = best; j < best + n; ++j) {
    trace.steps.push_back({j, {}});
    trace.final_mask.deactivate(j);
  }
  return trace;
}

namespace {

// C(n, k) saturated well above any usable cap.
unsigned long long binomial_saturating(size_t n, size_t k) {
  if (k > n) {
    return 0;
  }
  k = std::min(k, n - k);
  unsigned long long result = 1;
  for (size_t i = 1; i <= k; ++i) {
    if (result > (1ULL << 50)) {
      return 1ULL << 62;
    }
    result = result * (n - k + i) / i;
  }
  return result;
}

}  // namespace

size_t OracleRanking::rank_of(std::vector<size_t> subset) const {
  std::sort(subset.begin(), subset.end());
  for (size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].removed == subset) {
      return i + 1;
    }
  }
  throw ValueError("rank_of: subset not present in the ranking");
}

json OracleRanking::to_json() const {
  json j;
  j["tool_version"] = kToolVersion;
  j["n_blocks"] = n_blocks;
  j["subset_size"] = subset_size;
  json e = json::array();
  for (const OracleEntry& entry : entries) {
    e.push_back({{"removed", entry.removed}, {"nll", entry.nll}});
  }
  j["ranking"] = e;
  return j;
}

OracleRanking exhaustive_oracle(const TransformerModel& model, size_t n,
                                const CalibrationSet& calib, size_t cap) {
  const size_t n_blocks = model.config.n_blocks;
  if (n > n_blocks) {
    throw ValueError("exhaustive_oracle: subset size exceeds block count");
  }
  const unsigned long long count = binomial_saturating(n_blocks, n);
  if (count > cap) {
    throw CapacityError("exhaustive_oracle: C(" + std::to_string(n_blocks) + "," +
                        std::to_string(n) + ") = " + std::to_string(count) +
                        " subsets exceeds cap " + std::to_string(cap));
  }
  if (n > 0 && calib.sequences.empty()) {
    throw CapacityError("exhaustive_oracle: empty calibration set");
  }

  // Enumerate subsets in lexicographic order.
  std::vector<std::vector<size_t>> subsets;
  subsets.reserve(static_cast<size_t>(count));
  std::vector<size_t> pick(n);
  for (size_t i = 0; i < n; ++i) {
    pick[i] = i;
  }
  for (;;) {
    subsets.push_back(pick);
    if (n == 0) {
      break;
    }
    size_t i = n;
    while (i > 0 && pick[i - 1] == n_blocks - n + (i - 1)) {
      --i;
    }
    if (i == 0) {
      break;
    }
    ++pick[i - 1];
    for (size_t j = i; j < n; ++j) {
      pick[j] = pick[j - 1] + 1;
    }
  }

  std::vector<double> values(subsets.size());
  parallel_for(subsets.size(), [&](size_t s) {
    BlockMask mask = BlockMask::all_active(n_blocks);
    for (size_t j : subsets[s]) {
      mask.deactivate(j);
    }
    values[s] = model_nll(model, mask, calib);
  });

  OracleRanking ranking;
  ranking.n_blocks = n_blocks;
  ranking.subset_size = n;
  ranking.entries.reserve(subsets.size());
  for (size_t s = 0; s < subsets.size(); ++s) {
    ranking.entries.push_back({std::move(subsets[s]), values[s]});
  }
  // Lexicographic enumeration + stable sort keeps ties deterministic.
  std::stable_sort(ranking.entries.begin(), ranking.entries.end(),
                   [](const OracleEntry& a, const OracleEntry& b) { return a.nll < b.nll; });
  return ranking;
}

}  // namespace sleb
