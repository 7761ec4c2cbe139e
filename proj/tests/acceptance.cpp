// Acceptance suite: one pass/fail line per criterion, nonzero exit if any
// criterion fails. Tolerances and thresholds are pinned in the checks.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>
#include <unistd.h>

#include "sleb/analysis.hpp"
#include "sleb/bench.hpp"
#include "sleb/data.hpp"
#include "sleb/eval.hpp"
#include "sleb/io_util.hpp"
#include "sleb/metrics.hpp"
#include "sleb/model.hpp"
#include "sleb/pruner.hpp"
#include "sleb/rng.hpp"

using namespace sleb;

namespace {

struct CheckFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void expect(bool ok, const std::string& what) {
  if (!ok) {
    throw CheckFailure(what);
  }
}

std::string fmt(double v) { return format_double(v); }

TransformerModel toy_model(size_t n_blocks, uint64_t seed, const std::string& preset = "opt-style",
                           size_t vocab = 32) {
  return random_model(preset_config(preset, n_blocks, 16, 2, 32, vocab, 16), seed);
}

CalibrationSet toy_calib(uint64_t seed, size_t count = 4, size_t len = 10) {
  const TokenCorpus corpus = synthetic_corpus(32, 64, len, 2 * len, seed);
  return sample_calibration(corpus, count, len, seed + 1);
}

std::vector<uint32_t> toy_tokens(size_t len, size_t vocab, uint64_t seed) {
  Rng rng(seed);
  std::vector<uint32_t> t(len);
  for (auto& v : t) {
    v = static_cast<uint32_t>(rng.index(vocab));
  }
  return t;
}

// --- 1. skip-removal equivalence ------------------------------------------

std::string check_skip_removal() {
  const size_t shapes[3] = {4, 6, 8};
  float worst = 0.0f;
  for (uint64_t seed = 1; seed <= 20; ++seed) {
    const size_t n_blocks = shapes[seed % 3];
    const TransformerModel m =
        toy_model(n_blocks, seed, seed % 2 == 0 ? "opt-style" : "llama-style");
    for (size_t j = 0; j < n_blocks; ++j) {
      BlockMask mask = BlockMask::all_active(n_blocks);
      mask.deactivate(j);
      const size_t drop[1] = {j};
      const TransformerModel reduced = remove_blocks(m, drop);
      const BlockMask all = BlockMask::all_active(n_blocks - 1);
      for (uint64_t input = 0; input < 10; ++input) {
        const auto tokens = toy_tokens(8, m.config.vocab, seed * 100 + input);
        const Matrix a = forward_logits(m, mask, tokens);
        const Matrix b = forward_logits(reduced, all, tokens);
        for (size_t i = 0; i < a.data.size(); ++i) {
          worst = std::max(worst, std::abs(a.data[i] - b.data[i]));
        }
      }
    }
  }
  expect(worst < 1e-6f, "masked vs removed logits diverge by " + fmt(worst));
  return "20 models, every block, 10 inputs each; max |diff| = " + fmt(worst);
}

// --- 2. metric identities ---------------------------------------------------

std::string check_metric_identities() {
  for (uint64_t seed = 1; seed <= 10; ++seed) {
    const TransformerModel m = toy_model(6, seed);
    const CalibrationSet calib = toy_calib(seed + 200);
    const BlockMask all = BlockMask::all_active(6);
    for (size_t j = 0; j < 6; ++j) {
      const double iterative = iterative_removal_nll(m, all, j, calib).value;
      const double single = removal_nll(m, j, calib).value;
      expect(iterative == single,
             "iterative(all-active) != single removal at seed " + std::to_string(seed) +
                 " block " + std::to_string(j));
    }
  }

  TransformerModel zero_delta = toy_model(5, 77);
  std::fill(zero_delta.blocks[2].wo.data.begin(), zero_delta.blocks[2].wo.data.end(), 0.0f);
  std::fill(zero_delta.blocks[2].w_out.data.begin(), zero_delta.blocks[2].w_out.data.end(),
            0.0f);
  const auto io_scores = block_io_distance(zero_delta, toy_tokens(8, 32, 3));
  expect(io_scores[2].value == 0.0,
         "zero-delta block io distance = " + fmt(io_scores[2].value) + ", want exactly 0");

  TransformerModel uniform = toy_model(4, 78);
  std::fill(uniform.lm_head.data.begin(), uniform.lm_head.data.end(), 0.0f);
  const CalibrationSet calib = toy_calib(300);
  const double ln_v = std::log(32.0);
  double worst = 0.0;
  for (size_t j = 0; j < 4; ++j) {
    worst = std::max(worst, std::abs(removal_nll(uniform, j, calib).value - ln_v));
  }
  expect(worst < 1e-5, "uniform-logit removal NLL off ln V by " + fmt(worst));
  return "iterative==single on 10 models; zero-delta distance 0; |nll - ln V| <= " + fmt(worst);
}

// --- 3. greedy step-1 optimality -------------------------------------------

std::string check_step1_optimality() {
  for (uint64_t seed = 1; seed <= 20; ++seed) {
    const TransformerModel m = toy_model(6, seed * 3 + 1);
    const CalibrationSet calib = toy_calib(seed + 400);
    PruneConfig config;
    config.n_remove = 1;
    const PruneTrace trace = sleb_prune(m, calib, config);
    const OracleRanking ranking = exhaustive_oracle(m, 1, calib);
    expect(trace.steps[0].chosen == ranking.entries.front().removed[0],
           "greedy step 1 != oracle top-1 at seed " + std::to_string(seed));
  }
  return "greedy first removal = oracle best single removal on 20/20 seeds";
}

// --- 4. chunk-best correctness ----------------------------------------------

std::string check_chunk_best() {
  for (uint64_t seed = 1; seed <= 10; ++seed) {
    const TransformerModel m = toy_model(8, seed * 5 + 2);
    const CalibrationSet calib = toy_calib(seed + 500);
    for (size_t n : {size_t{2}, size_t{3}}) {
      const PruneTrace trace = chunk_best_baseline(m, n, calib);

      size_t best_start = 0;
      double best_v = 1e300;
      for (size_t w = 0; w + n <= 8; ++w) {
        BlockMask mask = BlockMask::all_active(8);
        for (size_t j = w; j < w + n; ++j) {
          mask.deactivate(j);
        }
        const double v = model_nll(m, mask, calib);
        if (v < best_v) {
          best_v = v;
          best_start = w;
        }
      }
      std::vector<size_t> expected;
      for (size_t j = best_start; j < best_start + n; ++j) {
        expected.push_back(j);
      }
      expect(trace.removed_order() == expected,
             "chunk-best window mismatch at seed " + std::to_string(seed) + " n " +
                 std::to_string(n));
    }
  }
  return "window choice matches the brute force on 10 seeds, n in {2,3}";
}

// --- 5. greedy quality vs baselines ----------------------------------------

std::string check_greedy_vs_baselines() {
  size_t rank_wins = 0;
  size_t nll_wins = 0;
  const size_t trials = 20;
  for (uint64_t seed = 1; seed <= trials; ++seed) {
    const TransformerModel m = toy_model(8, seed * 7 + 3);
    // Calibration doubles as the evaluation set for every ranking below.
    const CalibrationSet calib = toy_calib(seed + 600, 6, 12);

    PruneConfig config;
    config.n_remove = 2;
    const PruneTrace greedy = sleb_prune(m, calib, config);
    const PruneTrace chunk = chunk_best_baseline(m, 2, calib);
    const PruneTrace early = early_exit_baseline(m, 2);
    const OracleRanking ranking = exhaustive_oracle(m, 2, calib);
    expect(ranking.entries.size() == 28, "expected C(8,2) = 28 subsets");

    const size_t greedy_rank = ranking.rank_of(greedy.removed_order());
    const size_t chunk_rank = ranking.rank_of(chunk.removed_order());
    rank_wins += greedy_rank <= chunk_rank ? 1 : 0;

    const double greedy_nll = model_nll(m, greedy.final_mask, calib);
    const double early_nll = model_nll(m, early.final_mask, calib);
    nll_wins += greedy_nll <= early_nll ? 1 : 0;
  }
  expect(rank_wins >= 18, "greedy rank <= chunk-best rank on only " +
                              std::to_string(rank_wins) + "/20 seeds");
  expect(nll_wins >= 18, "greedy NLL <= early-exit NLL on only " + std::to_string(nll_wins) +
                             "/20 seeds");
  return "rank <= chunk-best on " + std::to_string(rank_wins) + "/20, NLL <= early-exit on " +
         std::to_string(nll_wins) + "/20 (threshold 18)";
}

// --- 6. greedy nesting -------------------------------------------------------

std::string check_greedy_nesting() {
  for (uint64_t seed = 1; seed <= 10; ++seed) {
    const TransformerModel m = random_model(
        preset_config("opt-style", 10, 16, 2, 32, 32, 16), seed * 11 + 4);
    const CalibrationSet calib = toy_calib(seed + 700);
    PruneConfig c4;
    c4.n_remove = 4;
    PruneConfig c8;
    c8.n_remove = 8;
    const PruneTrace shallow = sleb_prune(m, calib, c4);
    const PruneTrace deep = sleb_prune(m, calib, c8);
    for (size_t step = 0; step < 4; ++step) {
      expect(shallow.steps[step].chosen == deep.steps[step].chosen,
             "nesting broken at seed " + std::to_string(seed) + " step " +
                 std::to_string(step));
      expect(shallow.steps[step].scores == deep.steps[step].scores,
             "step tables differ at seed " + std::to_string(seed) + " step " +
                 std::to_string(step));
    }
  }
  return "n=4 trace is the exact prefix (choices and tables) of n=8 on 10 seeds";
}

// --- 7. ceil rule ------------------------------------------------------------

std::string check_ceil_rule() {
  const struct {
    size_t n;
    double s;
    size_t want;
  } cases[] = {{32, 0.10, 4}, {32, 0.20, 7}, {40, 0.20, 8},
               {48, 0.10, 5}, {64, 0.10, 7}, {80, 0.20, 16}};
  for (const auto& c : cases) {
    const size_t got = blocks_to_remove(c.n, c.s);
    expect(got == c.want, "blocks_to_remove(" + std::to_string(c.n) + ", " + fmt(c.s) +
                              ") = " + std::to_string(got) + ", want " +
                              std::to_string(c.want));
  }
  return "all six reference (N, sparsity) pairs reproduce exactly";
}

// --- 8. perplexity identity --------------------------------------------------

std::string check_perplexity_identity() {
  double worst_rel = 0.0;
  for (size_t vocab : {size_t{7}, size_t{16}, size_t{101}}) {
    TransformerModel m =
        random_model(preset_config("opt-style", 2, 16, 2, 32, vocab, 16), 808);
    std::fill(m.lm_head.data.begin(), m.lm_head.data.end(), 0.0f);
    const TokenCorpus corpus = synthetic_corpus(vocab, 80, 8, 24, 11);
    const PerplexityReport report = perplexity(m, BlockMask::all_active(2), corpus, 8);
    const double rel =
        std::abs(report.perplexity - static_cast<double>(vocab)) / static_cast<double>(vocab);
    worst_rel = std::max(worst_rel, rel);
  }
  expect(worst_rel < 1e-4, "uniform-logit perplexity off by rel " + fmt(worst_rel));
  return "V in {7,16,101}; worst relative error " + fmt(worst_rel);
}

// --- 9. analysis invariants --------------------------------------------------

std::string check_analysis_invariants() {
  const TransformerModel m = toy_model(6, 909);
  const TokenCorpus corpus = synthetic_corpus(32, 60, 8, 24, 13);

  const SimilarityMatrix sim = similarity_matrix(m, 21);
  for (size_t i = 0; i < 6; ++i) {
    expect(std::abs(sim.at(i, i) - 1.0) <= 1e-6, "similarity diagonal off 1");
    for (size_t j = 0; j < 6; ++j) {
      expect(sim.at(i, j) == sim.at(j, i), "similarity matrix not symmetric");
    }
  }

  const AlignmentProfile profile = alignment_profile(m, corpus, 8);
  expect(profile.fraction.back() == 1.0, "alignment at the last block != 1.0");

  const std::vector<size_t> batches = {1, 2, 4, 8, 16, 32, 64};
  const ExitSpeedupReport exits = ideal_exit_speedup(m, corpus, 8, batches);
  const double identity = 1.0 / (1.0 - exits.skip_ratio);
  expect(std::abs(exits.rows[0].improvement - identity) <= 1e-6,
         "batch-1 improvement != (1 - skip_ratio)^-1");
  for (size_t i = 1; i < exits.rows.size(); ++i) {
    expect(exits.rows[i].improvement <= exits.rows[i - 1].improvement + 1e-12,
           "improvement increased with batch size");
  }
  return "symmetry/diagonal, alignment end = 1, batch-1 identity, monotone batches (skip " +
         fmt(exits.skip_ratio) + ")";
}

// --- 10. speedup proportionality ---------------------------------------------

std::string check_speedup_proportionality() {
  const ModelConfig cfg = preset_config("opt-style", 15, 256, 8, 1024, 256, 520);
  const TransformerModel m = random_model(cfg, 42);
  const size_t n_remove = blocks_to_remove(cfg.n_blocks, 0.20);
  BlockMask masked = BlockMask::all_active(cfg.n_blocks);
  for (size_t j = cfg.n_blocks - n_remove; j < cfg.n_blocks; ++j) {
    masked.deactivate(j);
  }
  const BlockMask dense = BlockMask::all_active(cfg.n_blocks);

  const BenchReport prompt_dense = bench_prompt(m, dense, 512, 1, 3, 1, 7);
  const BenchReport prompt_masked = bench_prompt(m, masked, 512, 1, 3, 1, 7);
  const double latency_ratio = prompt_masked.median_ms / prompt_dense.median_ms;
  expect(latency_ratio >= 0.72 && latency_ratio <= 0.88,
         "prompt latency ratio " + fmt(latency_ratio) + " outside [0.72, 0.88]");

  const BenchReport gen_dense = bench_generate(m, dense, 24, 64, 3, 1, 9);
  const BenchReport gen_masked = bench_generate(m, masked, 24, 64, 3, 1, 9);
  const double improvement = gen_masked.tokens_per_s / gen_dense.tokens_per_s;
  expect(improvement >= 1.12 && improvement <= 1.38,
         "generation improvement " + fmt(improvement) + " outside [1.12, 1.38]");

  return "20% removed: prompt ratio " + fmt(latency_ratio) + " in [0.72,0.88], generation " +
         fmt(improvement) + "x in [1.12,1.38]";
}

// --- 11. determinism across process invocations ------------------------------

struct CliWorkspace {
  std::filesystem::path dir;

  CliWorkspace() {
    dir = std::filesystem::temp_directory_path() /
          ("sleb_acceptance_" + std::to_string(::getpid()));
    std::filesystem::create_directories(dir);
  }
  ~CliWorkspace() {
    std::error_code ec;
    std::filesystem::remove_all(dir, ec);
  }
  std::string file(const std::string& name) const { return (dir / name).string(); }

  void run(const std::string& args) const {
    const std::string cmd =
        std::string(SLEB_CLI_PATH) + " " + args + " > /dev/null 2> " + file("_stderr");
    const int status = std::system(cmd.c_str());
    const int code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    if (code != 0) {
      throw CheckFailure("CLI exited with " + std::to_string(code) + ": " + args + " (" +
                         read_text_file(file("_stderr")) + ")");
    }
  }
};

std::string check_process_determinism() {
  CliWorkspace ws;
  ws.run("gen-corpus --out " + ws.file("c.jsonl") +
         " --vocab 48 --sequences 64 --min-len 16 --max-len 32 --seed 4");
  ws.run("gen-model --out " + ws.file("m.model") +
         " --blocks 10 --d-model 16 --heads 2 --vocab 48 --max-seq 16 --seed 9");

  const std::string prune_args = "prune --model " + ws.file("m.model") + " --corpus " +
                                 ws.file("c.jsonl") +
                                 " --sparsity 0.2 --calib-count 4 --calib-seq-len 10 --seed 5"
                                 " --trace-out " +
                                 ws.file("trace.json") + " --model-out " + ws.file("p.model");
  ws.run(prune_args);
  const std::string trace_first = read_text_file(ws.file("trace.json"));
  const std::string model_first = read_text_file(ws.file("p.model"));
  ws.run(prune_args);
  expect(trace_first == read_text_file(ws.file("trace.json")),
         "prune trace bytes differ across invocations");
  expect(model_first == read_text_file(ws.file("p.model")),
         "pruned model bytes differ across invocations");

  const std::string eval_args = "eval --model " + ws.file("p.model") + " --corpus " +
                                ws.file("c.jsonl") + " --seq-len 10 --out " +
                                ws.file("eval.json");
  ws.run(eval_args);
  const std::string eval_first = read_text_file(ws.file("eval.json"));
  ws.run(eval_args);
  expect(eval_first == read_text_file(ws.file("eval.json")),
         "perplexity report bytes differ across invocations");
  return "prune trace, pruned model and perplexity report byte-identical over two runs";
}

}  // namespace

int main() {
  const struct {
    const char* name;
    std::function<std::string()> run;
  } criteria[] = {
      {"skip-removal equivalence", check_skip_removal},
      {"metric identities", check_metric_identities},
      {"greedy step-1 optimality", check_step1_optimality},
      {"chunk-best correctness", check_chunk_best},
      {"greedy quality vs baselines", check_greedy_vs_baselines},
      {"greedy nesting", check_greedy_nesting},
      {"ceil rule", check_ceil_rule},
      {"perplexity identity", check_perplexity_identity},
      {"analysis invariants", check_analysis_invariants},
      {"speedup proportionality", check_speedup_proportionality},
      {"process determinism", check_process_determinism},
  };

  size_t failures = 0;
  size_t id = 0;
  for (const auto& criterion : criteria) {
    ++id;
    const auto t0 = std::chrono::steady_clock::now();
    std::string detail;
    bool ok = true;
    try {
      detail = criterion.run();
    } catch (const std::exception& e) {
      ok = false;
      detail = e.what();
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::ostringstream line;
    line << (ok ? "[PASS] " : "[FAIL] ") << id << ". " << criterion.name << " — " << detail
         << " (" << fmt(secs) << "s)";
    std::cout << line.str() << std::endl;
    failures += ok ? 0 : 1;
  }

  std::cout << (failures == 0 ? "acceptance: all criteria passed"
                              : "acceptance: " + std::to_string(failures) + " criteria FAILED")
            << std::endl;
  return failures == 0 ? 0 : 1;
}
