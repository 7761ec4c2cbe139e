#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sleb/tensor.hpp"

namespace sleb {

enum class Positional { kLearnedAbsolute, kNone };

struct ModelConfig {
  size_t n_blocks = 0;
  size_t d_model = 0;
  size_t n_heads = 0;
  size_t d_ff = 0;
  size_t vocab = 0;
  size_t max_seq = 0;
  NormKind norm_kind = NormKind::kLayerNorm;
  Positional positional = Positional::kLearnedAbsolute;
  float norm_eps = 1e-5f;

  void validate() const;
  size_t head_dim() const { return d_model / n_heads; }
};

// "opt-style": layernorm + learned absolute positions.
// "llama-style": rmsnorm, no positional embeddings.
ModelConfig preset_config(const std::string& preset, size_t n_blocks, size_t d_model,
                          size_t n_heads, size_t d_ff, size_t vocab, size_t max_seq);

struct NormParams {
  std::vector<float> gain;
  std::vector<float> bias;  // empty for rmsnorm
};

struct BlockWeights {
  Matrix wq, wk, wv, wo;  // d_model x d_model
  Matrix w_in, w_out;     // d_model x d_ff, d_ff x d_model
  NormParams attn_norm, ffn_norm;
};

// Immutable after construction; any number of readers may run forward
// passes concurrently.
struct TransformerModel {
  ModelConfig config;
  Matrix token_embedding;     // vocab x d_model
  Matrix position_embedding;  // max_seq x d_model; empty when positional == kNone
  std::vector<BlockWeights> blocks;
  NormParams final_norm;
  Matrix lm_head;  // d_model x vocab
};

// Static active/inactive flag per block; an inactive block contributes
// identity to the residual stream.
struct BlockMask {
  std::vector<uint8_t> active;

  static BlockMask all_active(size_t n) { return BlockMask{std::vector<uint8_t>(n, 1)}; }
  size_t size() const { return active.size(); }
  bool is_active(size_t i) const { return active[i] != 0; }
  void deactivate(size_t i) { active[i] = 0; }
  void set_active(size_t i, bool v) { active[i] = v ? 1 : 0; }
  size_t active_count() const;
  std::vector<size_t> active_indices() const;
  std::vector<size_t> inactive_indices() const;
};

// Single-owner autoregressive state; entries are allocated only for
// active blocks.
struct KVCache {
  struct Entry {
    Matrix k, v;  // capacity x d_model, filled up to len rows
  };
  std::vector<Entry> entries;
  size_t len = 0;
  size_t capacity = 0;

  KVCache() = default;
  KVCache(const TransformerModel& model, const BlockMask& mask, size_t capacity);
};

// Residual-stream snapshots: streams[j] enters block j, streams[j + 1]
// leaves it; streams[n_blocks] feeds the final norm.
struct BlockIOCapture {
  std::vector<Matrix> streams;

  const Matrix& input_of(size_t j) const { return streams[j]; }
  const Matrix& output_of(size_t j) const { return streams[j + 1]; }
};

// Residual stream after the last block (len x d_model). When cache is given,
// tokens continue from cache->len and the new K/V rows are appended. When
// capture is given, every block boundary is recorded.
Matrix forward_hidden(const TransformerModel& model, const BlockMask& mask,
                      std::span<const uint32_t> tokens, KVCache* cache,
                      BlockIOCapture* capture);

Matrix forward_logits(const TransformerModel& model, const BlockMask& mask,
                      std::span<const uint32_t> tokens);

BlockIOCapture block_io_capture(const TransformerModel& model, const BlockMask& mask,
                                std::span<const uint32_t> tokens);

// Final norm + lm_head applied to a residual-stream matrix (the logit-lens
// decoding rule when applied to an intermediate stream).
Matrix logits_from_stream(const TransformerModel& model, const Matrix& stream);

// Runs one block on the given residual stream rows (no cache, positions
// starting at 0); returns the stream leaving the block.
Matrix run_single_block(const TransformerModel& model, size_t block_idx, const Matrix& input);

// Physically drops the given blocks; remaining block order is preserved.
TransformerModel remove_blocks(const TransformerModel& model, std::span<const size_t> indices);

// Greedy (argmax) decoding; the cache is reset and filled by the call.
// Returns the gen_len continuation tokens.
std::vector<uint32_t> generate(const TransformerModel& model, const BlockMask& mask,
                               std::span<const uint32_t> prompt, size_t gen_len,
                               KVCache& cache);

// Steps a batch of independent sequences by one token each; caches[r] holds
// row r's history. Returns the greedy next token per row.
std::vector<uint32_t> decode_step_batch(const TransformerModel& model, const BlockMask& mask,
                                        std::span<const uint32_t> tokens,
                                        std::span<KVCache> caches);

uint32_t argmax_row(std::span<const float> row);

// All parameters drawn from a seeded PRNG, uniform in [-s, s] with
// s = 1/sqrt(d_model). Identical (config, seed) gives a bit-identical model.
TransformerModel random_model(const ModelConfig& config, uint64_t seed);

// Container: 8-byte magic "SLEBMDL1", u32-LE length-prefixed UTF-8 JSON
// header (config + ordered tensor manifest with name/shape/offset), then raw
// little-endian f32 payloads in manifest order. Round-trips bit-exactly.
std::string serialize_model(const TransformerModel& model);
TransformerModel parse_model(const std::string& bytes);
void save_model(const TransformerModel& model, const std::string& path);
TransformerModel load_model(const std::string& path);

// Tensor order of the container (and of random_model's draws).
std::vector<std::pair<std::string, std::vector<size_t>>> tensor_manifest(const ModelConfig& config);

}  // namespace sleb
