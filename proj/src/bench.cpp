#include "sleb/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "sleb/io_util.hpp"
#include "sleb/rng.hpp"
#include "sleb/threading.hpp"
#include "sleb/version.hpp"

namespace sleb {

using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

json BenchReport::to_json() const {
  json j;
  j["tool_version"] = kToolVersion;
  j["scenario"] = scenario;
  j["model_tag"] = model_tag;
  j["active_blocks"] = active_blocks;
  j["total_blocks"] = total_blocks;
  j["batch"] = batch;
  j["length"] = length;
  j["reps"] = reps;
  j["warmup"] = warmup;
  j["times_ms"] = times_ms;
  j["mean_ms"] = mean_ms;
  j["median_ms"] = median_ms;
  j["tokens_per_s"] = tokens_per_s;
  return j;
}

std::string BenchReport::to_csv_rows() const {
  const double sparsity =
      total_blocks == 0
          ? 0.0
          : 1.0 - static_cast<double>(active_blocks) / static_cast<double>(total_blocks);
  std::string out;
  const std::string prefix = scenario + "," + format_double(sparsity) + ",";
  out += prefix + "median_ms," + format_double(median_ms) + "\n";
  out += prefix + "mean_ms," + format_double(mean_ms) + "\n";
  out += prefix + "tokens_per_s," + format_double(tokens_per_s) + "\n";
  return out;
}

namespace {

void finalize_stats(BenchReport& r) {
  double sum = 0.0;
  for (double t : r.times_ms) {
    sum += t;
  }
  r.mean_ms = sum / static_cast<double>(r.times_ms.size());
  std::vector<double> sorted = r.times_ms;
  std::sort(sorted.begin(), sorted.end());
  const size_t n = sorted.size();
  r.median_ms = (n % 2 == 1) ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  r.tokens_per_s =
      static_cast<double>(r.batch * r.length) / (r.median_ms * 1e-3);
}

std::vector<uint32_t> random_tokens(size_t count, size_t vocab, uint64_t seed) {
  Rng rng(seed);
  std::vector<uint32_t> tokens(count);
  for (uint32_t& t : tokens) {
    t = static_cast<uint32_t>(rng.index(vocab));
  }
  return tokens;
}

}  // namespace

BenchReport bench_prompt(const TransformerModel& model, const BlockMask& mask,
                         size_t prompt_len, size_t batch, size_t reps, size_t warmup,
                         uint64_t seed, const std::string& model_tag, bool parallel_rows) {
  if (reps < 1) {
    throw ValueError("bench_prompt: reps must be >= 1");
  }
  if (batch < 1) {
    throw ValueError("bench_prompt: batch must be >= 1");
  }
  if (prompt_len < 1 || prompt_len > model.config.max_seq) {
    throw LengthError("bench_prompt: prompt_len out of range");
  }

  BenchReport report;
  report.scenario = "prompt";
  report.model_tag = model_tag;
  report.active_blocks = mask.active_count();
  report.total_blocks = model.config.n_blocks;
  report.batch = batch;
  report.length = prompt_len;
  report.reps = reps;
  report.warmup = warmup;

  const std::vector<uint32_t> tokens =
      random_tokens(batch * prompt_len, model.config.vocab, seed);
  double sink = 0.0;
  std::vector<double> row_sinks(batch, 0.0);
  auto forward_row = [&](size_t b) {
    const std::span<const uint32_t> row(tokens.data() + b * prompt_len, prompt_len);
    const Matrix logits = forward_logits(model, mask, row);
    row_sinks[b] = logits.at(logits.rows - 1, 0);
  };
  auto run_once = [&] {
    if (parallel_rows) {
      parallel_for(batch, forward_row);
    } else {
      for (size_t b = 0; b < batch; ++b) {
        forward_row(b);
      }
    }
    for (double s : row_sinks) {
      sink += s;
    }
  };

  for (size_t i = 0; i < warmup; ++i) {
    run_once();
  }
  for (size_t i = 0; i < reps; ++i) {
    const auto t0 = Clock::now();
    run_once();
    const auto t1 = Clock::now();
    report.times_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  if (!std::isfinite(sink)) {
    throw NumericError("bench_prompt: non-finite forward output");
  }
  finalize_stats(report);
  return report;
}

BenchReport bench_generate(const TransformerModel& model, const BlockMask& mask,
                           size_t batch, size_t gen_len, size_t reps, size_t warmup,
                           uint64_t seed, const std::string& model_tag) {
  if (reps < 1) {
    throw ValueError("bench_generate: reps must be >= 1");
  }
  if (batch < 1) {
    throw ValueError("bench_generate: batch must be >= 1");
  }
  if (gen_len < 1) {
    throw ValueError("bench_generate: gen_len must be >= 1");
  }
  if (gen_len + 1 > model.config.max_seq) {
    throw LengthError("bench_generate: gen_len exceeds max_seq");
  }

  BenchReport report;
  report.scenario = "generate";
  report.model_tag = model_tag;
  report.active_blocks = mask.active_count();
  report.total_blocks = model.config.n_blocks;
  report.batch = batch;
  report.length = gen_len;
  report.reps = reps;
  report.warmup = warmup;

  const std::vector<uint32_t> prompts = random_tokens(batch, model.config.vocab, seed);
  auto run_once = [&] {
    // Cache allocation is part of the measured cost; it scales with the
    // number of active blocks.
    std::vector<KVCache> caches;
    caches.reserve(batch);
    for (size_t b = 0; b < batch; ++b) {
      caches.emplace_back(model, mask, gen_len);
    }
    std::vector<uint32_t> current = prompts;
    for (size_t step = 0; step < gen_len; ++step) {
      current = decode_step_batch(model, mask, current, caches);
    }
  };

  for (size_t i = 0; i < warmup; ++i) {
    run_once();
  }
  for (size_t i = 0; i < reps; ++i) {
    const auto t0 = Clock::now();
    run_once();
    const auto t1 = Clock::now();
    report.times_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  finalize_stats(report);
  return report;
}

}  // namespace sleb
