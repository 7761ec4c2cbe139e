#include <doctest.h>

#include <cmath>
#include <sstream>
#include <vector>

#include "sleb/analysis.hpp"
#include "sleb/data.hpp"
#include "sleb/metrics.hpp"

using namespace sleb;

namespace {

TransformerModel tiny_model(size_t n_blocks, uint64_t seed) {
  return random_model(preset_config("opt-style", n_blocks, 16, 2, 32, 32, 16), seed);
}

TokenCorpus tiny_corpus(uint64_t seed) { return synthetic_corpus(32, 50, 8, 24, seed); }

}  // namespace

TEST_CASE("similarity matrix is symmetric with a unit diagonal") {
  const TransformerModel m = tiny_model(5, 201);
  const SimilarityMatrix sim = similarity_matrix(m, 9);
  REQUIRE(sim.n_blocks == 5);
  for (size_t i = 0; i < 5; ++i) {
    CHECK(sim.at(i, i) == 1.0);
    for (size_t j = 0; j < 5; ++j) {
      CHECK(sim.at(i, j) == sim.at(j, i));
      CHECK(sim.at(i, j) <= 1.0);
      CHECK(sim.at(i, j) >= -1.0);
    }
  }
}

TEST_CASE("similarity matrix of a zero-delta model is all ones") {
  TransformerModel m = tiny_model(4, 203);
  for (BlockWeights& bw : m.blocks) {
    std::fill(bw.wo.data.begin(), bw.wo.data.end(), 0.0f);
    std::fill(bw.w_out.data.begin(), bw.w_out.data.end(), 0.0f);
  }
  const SimilarityMatrix sim = similarity_matrix(m, 5);
  for (double v : sim.values) {
    CHECK(v == 1.0);
  }
}

TEST_CASE("similarity matrix matches recomputation from captured streams") {
  const TransformerModel m = tiny_model(4, 205);
  const SimilarityMatrix sim = similarity_matrix(m, 17);

  const uint32_t probe[1] = {sim.probe_token};
  const BlockIOCapture cap = block_io_capture(m, BlockMask::all_active(4), probe);
  for (size_t i = 0; i < 4; ++i) {
    for (size_t j = 0; j < 4; ++j) {
      const double expected =
          cosine_similarity(cap.output_of(i).row_span(0), cap.output_of(j).row_span(0));
      CHECK(std::abs(sim.at(i, j) - expected) < 1e-12);
    }
  }
}

TEST_CASE("alignment profile ends at exactly one") {
  const TransformerModel m = tiny_model(4, 207);
  const TokenCorpus corpus = tiny_corpus(11);
  const AlignmentProfile profile = alignment_profile(m, corpus, 8);
  REQUIRE(profile.fraction.size() == 4);
  CHECK(profile.fraction.back() == 1.0);
  CHECK(profile.token_count > 0);
  for (double f : profile.fraction) {
    CHECK(f >= 0.0);
    CHECK(f <= 1.0);
  }
}

TEST_CASE("alignment profile of a 1-block model is [1.0]") {
  const TransformerModel m =
      random_model(preset_config("opt-style", 1, 16, 2, 32, 32, 16), 209);
  const AlignmentProfile profile = alignment_profile(m, tiny_corpus(13), 8);
  REQUIRE(profile.fraction.size() == 1);
  CHECK(profile.fraction[0] == 1.0);
}

TEST_CASE("alignment profile matches an independent logit-lens loop") {
  const TransformerModel m = tiny_model(4, 211);
  const TokenCorpus corpus = tiny_corpus(15);
  const size_t seq_len = 8;
  const AlignmentProfile profile = alignment_profile(m, corpus, seq_len);

  const auto windows = eval_windows(corpus, seq_len);
  std::vector<size_t> matches(4, 0);
  size_t total = 0;
  for (const auto& window : windows) {
    const BlockIOCapture cap = block_io_capture(m, BlockMask::all_active(4), window);
    const Matrix final_logits = logits_from_stream(m, cap.output_of(3));
    for (size_t p = 0; p < window.size(); ++p) {
      const uint32_t final_pred = argmax_row(final_logits.row_span(p));
      for (size_t i = 0; i < 4; ++i) {
        const Matrix lens = logits_from_stream(m, cap.output_of(i));
        if (argmax_row(lens.row_span(p)) == final_pred) {
          matches[i] += 1;
        }
      }
      ++total;
    }
  }
  REQUIRE(profile.token_count == total);
  for (size_t i = 0; i < 4; ++i) {
    CHECK(profile.fraction[i] ==
          static_cast<double>(matches[i]) / static_cast<double>(total));
  }
}

TEST_CASE("exit speedup: batch-1 identity and monotone batches") {
  const TransformerModel m = tiny_model(5, 213);
  const TokenCorpus corpus = tiny_corpus(17);
  const std::vector<size_t> batches = {1, 2, 4, 8, 16, 32, 64};
  const ExitSpeedupReport report = ideal_exit_speedup(m, corpus, 8, batches);
  REQUIRE(report.rows.size() == batches.size());

  CHECK(std::abs(report.rows[0].improvement - 1.0 / (1.0 - report.skip_ratio)) < 1e-9);
  for (size_t i = 1; i < report.rows.size(); ++i) {
    CHECK(report.rows[i].improvement <= report.rows[i - 1].improvement);
  }
  for (const ExitSpeedupRow& row : report.rows) {
    CHECK(row.improvement >= 1.0);
    CHECK(row.skip_ratio == report.skip_ratio);
  }
}

TEST_CASE("exit speedup degenerates to 1.0 when every token exits last") {
  // On a 1-block model the earliest exit IS the last block.
  const TransformerModel m =
      random_model(preset_config("opt-style", 1, 16, 2, 32, 32, 16), 215);
  const TokenCorpus corpus = tiny_corpus(19);
  const std::vector<size_t> batches = {1, 2, 4, 8};
  const ExitSpeedupReport report = ideal_exit_speedup(m, corpus, 8, batches);
  CHECK(report.skip_ratio == 0.0);
  for (const ExitSpeedupRow& row : report.rows) {
    CHECK(row.improvement == 1.0);
  }
}

TEST_CASE("exit speedup rejects a zero batch size") {
  const TransformerModel m = tiny_model(3, 217);
  const TokenCorpus corpus = tiny_corpus(21);
  const std::vector<size_t> batches = {1, 0};
  CHECK_THROWS_AS(ideal_exit_speedup(m, corpus, 8, batches), ValueError);
}

TEST_CASE("analysis CSV layouts") {
  const TransformerModel m = tiny_model(4, 219);
  const TokenCorpus corpus = tiny_corpus(23);

  const std::string sim_csv = to_csv(similarity_matrix(m, 3));
  size_t lines = 0;
  for (char c : sim_csv) {
    lines += c == '\n' ? 1 : 0;
  }
  CHECK(lines == 5);  // header + one row per block
  CHECK(sim_csv.substr(0, 12) == "block,0,1,2,");

  const std::string ali_csv = to_csv(alignment_profile(m, corpus, 8));
  CHECK(ali_csv.substr(0, 15) == "block,fraction\n");

  const std::vector<size_t> batches = {1, 2};
  const std::string exit_csv = to_csv(ideal_exit_speedup(m, corpus, 8, batches));
  CHECK(exit_csv.substr(0, 29) == "batch,skip_ratio,improvement\n");
}
