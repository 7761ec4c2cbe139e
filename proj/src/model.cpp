#include "sleb/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <json.hpp>

#include "sleb/rng.hpp"

namespace sleb {

using json = nlohmann::json;

void ModelConfig::validate() const {
  if (n_blocks < 1) throw ValueError("config: n_blocks must be >= 1");
  if (d_model < 1) throw ValueError("config: d_model must be >= 1");
  if (n_heads < 1) throw ValueError("config: n_heads must be >= 1");
  if (d_model % n_heads != 0) throw ValueError("config: d_model must be divisible by n_heads");
  if (d_ff < 1) throw ValueError("config: d_ff must be >= 1");
  if (vocab < 2) throw ValueError("config: vocab must be >= 2");
  if (max_seq < 1) throw ValueError("config: max_seq must be >= 1");
  if (!(norm_eps > 0.0f)) throw ValueError("config: norm_eps must be positive");
}

ModelConfig preset_config(const std::string& preset, size_t n_blocks, size_t d_model,
                          size_t n_heads, size_t d_ff, size_t vocab, size_t max_seq) {
  ModelConfig cfg;
  cfg.n_blocks = n_blocks;
  cfg.d_model = d_model;
  cfg.n_heads = n_heads;
  cfg.d_ff = d_ff;
  cfg.vocab = vocab;
  cfg.max_seq = max_seq;
  if (preset == "opt-style") {
    cfg.norm_kind = NormKind::kLayerNorm;
    cfg.positional = Positional::kLearnedAbsolute;
  } else if (preset == "llama-style") {
    cfg.norm_kind = NormKind::kRmsNorm;
    cfg.positional = Positional::kNone;
  } else {
    throw ValueError("unknown architecture preset '" + preset +
                     "' (expected opt-style or llama-style)");
  }
  cfg.validate();
  return cfg;
}

size_t BlockMask::active_count() const {
  size_t n = 0;
  for (uint8_t a : active) {
    n += a != 0 ? 1 : 0;
  }
  return n;
}

std::vector<size_t> BlockMask::active_indices() const {
  std::vector<size_t> out;
  for (size_t i = 0; i < active.size(); ++i) {
    if (active[i] != 0) {
      out.push_back(i);
    }
  }
  return out;
}

std::vector<size_t> BlockMask::inactive_indices() const {
  std::vector<size_t> out;
  for (size_t i = 0; i < active.size(); ++i) {
    if (active[i] == 0) {
      out.push_back(i);
    }
  }
  return out;
}

KVCache::KVCache(const TransformerModel& model, const BlockMask& mask, size_t cap) {
  if (mask.size() != model.config.n_blocks) {
    throw ShapeError("cache: mask length does not match model block count");
  }
  if (cap > model.config.max_seq) {
    throw LengthError("cache: capacity " + std::to_string(cap) + " exceeds max_seq " +
                      std::to_string(model.config.max_seq));
  }
  capacity = cap;
  entries.resize(model.config.n_blocks);
  for (size_t j = 0; j < model.config.n_blocks; ++j) {
    if (mask.is_active(j)) {
      entries[j].k.ensure(cap, model.config.d_model);
      entries[j].v.ensure(cap, model.config.d_model);
    }
  }
}

namespace {

struct Scratch {
  Matrix xn, q, attn, proj, ff;
  Matrix k_local, v_local;  // K/V store when no external cache is attached
  std::vector<float> w;     // attention weights
};

void add_inplace(Matrix& x, const Matrix& d) {
  for (size_t i = 0; i < x.data.size(); ++i) {
    x.data[i] += d.data[i];
  }
}

void normalize_rows(const Matrix& x, const NormParams& np, NormKind kind, float eps,
                    Matrix& out) {
  out.ensure(x.rows, x.cols);
  const float* bias = np.bias.empty() ? nullptr : np.bias.data();
  for (size_t r = 0; r < x.rows; ++r) {
    normalize_row(x.row(r), out.row(r), x.cols, kind, np.gain.data(), bias, eps);
  }
}

// Attention for one query over key/value rows [0, span).
void attend_one(size_t n_heads, size_t head_dim, float scale, const float* q,
                const Matrix& k, const Matrix& v, size_t span, float* out,
                std::vector<float>& w) {
  if (w.size() < span) {
    w.resize(span);
  }
  for (size_t h = 0; h < n_heads; ++h) {
    const size_t off = h * head_dim;
    const float* qh = q + off;
    float max_s = -std::numeric_limits<float>::infinity();
    for (size_t j = 0; j < span; ++j) {
      const float* kh = k.row(j) + off;
      float acc = 0.0f;
      for (size_t c = 0; c < head_dim; ++c) {
        acc += qh[c] * kh[c];
      }
      acc *= scale;
      w[j] = acc;
      max_s = std::max(max_s, acc);
    }
    float sum = 0.0f;
    for (size_t j = 0; j < span; ++j) {
      const float e = std::exp(w[j] - max_s);
      w[j] = e;
      sum += e;
    }
    const float inv = 1.0f / sum;
    float* oh = out + off;
    std::fill(oh, oh + head_dim, 0.0f);
    for (size_t j = 0; j < span; ++j) {
      const float p = w[j] * inv;
      const float* vh = v.row(j) + off;
      for (size_t c = 0; c < head_dim; ++c) {
        oh[c] += p * vh[c];
      }
    }
  }
}

// Causal attention for a chunk of queries; position t sees rows [0, past + t].
void attention_rows(const ModelConfig& cfg, const Matrix& q, const Matrix& k,
                    const Matrix& v, size_t past, Matrix& out, std::vector<float>& w) {
  const size_t head_dim = cfg.head_dim();
  const float scale = 1.0f / std::sqrt(static_cast<float>(head_dim));
  out.ensure(q.rows, cfg.d_model);
  for (size_t t = 0; t < q.rows; ++t) {
    attend_one(cfg.n_heads, head_dim, scale, q.row(t), k, v, past + t + 1, out.row(t), w);
  }
}

// Pre-norm block: x += attn(norm1(x)); x += ffn(norm2(x)). New K/V rows are
// written into the store at [past, past + len).
void apply_block(const ModelConfig& cfg, const BlockWeights& bw, Matrix& x,
                 Matrix& k_store, Matrix& v_store, size_t past, Scratch& s) {
  normalize_rows(x, bw.attn_norm, cfg.norm_kind, cfg.norm_eps, s.xn);
  matmul_into(s.xn, bw.wq, s.q);
  matmul_rows_into(s.xn, bw.wk, k_store, past);
  matmul_rows_into(s.xn, bw.wv, v_store, past);
  attention_rows(cfg, s.q, k_store, v_store, past, s.attn, s.w);
  matmul_into(s.attn, bw.wo, s.proj);
  add_inplace(x, s.proj);

  normalize_rows(x, bw.ffn_norm, cfg.norm_kind, cfg.norm_eps, s.xn);
  matmul_into(s.xn, bw.w_in, s.ff);
  for (float& f : s.ff.data) {
    f = gelu(f);
  }
  matmul_into(s.ff, bw.w_out, s.proj);
  add_inplace(x, s.proj);
}

Matrix embed_tokens(const TransformerModel& m, std::span<const uint32_t> tokens,
                    size_t start_pos) {
  const ModelConfig& cfg = m.config;
  Matrix x(tokens.size(), cfg.d_model);
  for (size_t t = 0; t < tokens.size(); ++t) {
    if (tokens[t] >= cfg.vocab) {
      throw IndexError("token id " + std::to_string(tokens[t]) +
                       " out of vocab " + std::to_string(cfg.vocab));
    }
    const float* emb = m.token_embedding.row(tokens[t]);
    float* xr = x.row(t);
    std::copy(emb, emb + cfg.d_model, xr);
    if (cfg.positional == Positional::kLearnedAbsolute) {
      const float* pos = m.position_embedding.row(start_pos + t);
      for (size_t c = 0; c < cfg.d_model; ++c) {
        xr[c] += pos[c];
      }
    }
  }
  return x;
}

}  // namespace

Matrix forward_hidden(const TransformerModel& model, const BlockMask& mask,
                      std::span<const uint32_t> tokens, KVCache* cache,
                      BlockIOCapture* capture) {
  const ModelConfig& cfg = model.config;
  if (mask.size() != cfg.n_blocks) {
    throw ShapeError("forward: mask length " + std::to_string(mask.size()) +
                     " does not match model block count " + std::to_string(cfg.n_blocks));
  }
  if (tokens.empty()) {
    throw ValueError("forward: empty token sequence");
  }
  const size_t past = cache != nullptr ? cache->len : 0;
  if (past + tokens.size() > cfg.max_seq) {
    throw LengthError("forward: sequence length " + std::to_string(past + tokens.size()) +
                      " exceeds max_seq " + std::to_string(cfg.max_seq));
  }
  if (cache != nullptr && past + tokens.size() > cache->capacity) {
    throw LengthError("forward: cache capacity exceeded");
  }

  Matrix x = embed_tokens(model, tokens, past);
  if (capture != nullptr) {
    capture->streams.clear();
    capture->streams.reserve(cfg.n_blocks + 1);
    capture->streams.push_back(x);
  }

  Scratch s;
  for (size_t j = 0; j < cfg.n_blocks; ++j) {
    if (mask.is_active(j)) {
      Matrix* ks;
      Matrix* vs;
      if (cache != nullptr) {
        KVCache::Entry& e = cache->entries[j];
        if (e.k.rows < past + tokens.size()) {
          throw ShapeError("forward: cache entry missing for active block " + std::to_string(j));
        }
        ks = &e.k;
        vs = &e.v;
      } else {
        s.k_local.ensure(tokens.size(), cfg.d_model);
        s.v_local.ensure(tokens.size(), cfg.d_model);
        ks = &s.k_local;
        vs = &s.v_local;
      }
      apply_block(cfg, model.blocks[j], x, *ks, *vs, past, s);
    }
    if (capture != nullptr) {
      capture->streams.push_back(x);
    }
  }
  if (cache != nullptr) {
    cache->len = past + tokens.size();
  }
  return x;
}

Matrix logits_from_stream(const TransformerModel& model, const Matrix& stream) {
  Matrix normed;
  normalize_rows(stream, model.final_norm, model.config.norm_kind, model.config.norm_eps,
                 normed);
  return matmul(normed, model.lm_head);
}

Matrix forward_logits(const TransformerModel& model, const BlockMask& mask,
                      std::span<const uint32_t> tokens) {
  return logits_from_stream(model, forward_hidden(model, mask, tokens, nullptr, nullptr));
}

BlockIOCapture block_io_capture(const TransformerModel& model, const BlockMask& mask,
                                std::span<const uint32_t> tokens) {
  BlockIOCapture cap;
  forward_hidden(model, mask, tokens, nullptr, &cap);
  return cap;
}

Matrix run_single_block(const TransformerModel& model, size_t block_idx, const Matrix& input) {
  if (block_idx >= model.config.n_blocks) {
    throw IndexError("run_single_block: block index out of range");
  }
  if (input.cols != model.config.d_model) {
    throw ShapeError("run_single_block: input width does not match d_model");
  }
  Matrix x = input;
  Scratch s;
  s.k_local.ensure(x.rows, model.config.d_model);
  s.v_local.ensure(x.rows, model.config.d_model);
  apply_block(model.config, model.blocks[block_idx], x, s.k_local, s.v_local, 0, s);
  return x;
}

TransformerModel remove_blocks(const TransformerModel& model, std::span<const size_t> indices) {
  std::set<size_t> drop;
  for (size_t idx : indices) {
    if (idx >= model.config.n_blocks) {
      throw IndexError("remove_blocks: index " + std::to_string(idx) +
                       " out of range for " + std::to_string(model.config.n_blocks) + " blocks");
    }
    if (!drop.insert(idx).second) {
      throw IndexError("remove_blocks: duplicate index " + std::to_string(idx));
    }
  }
  TransformerModel out;
  out.config = model.config;
  out.config.n_blocks = model.config.n_blocks - drop.size();
  out.token_embedding = model.token_embedding;
  out.position_embedding = model.position_embedding;
  out.final_norm = model.final_norm;
  out.lm_head = model.lm_head;
  out.blocks.reserve(out.config.n_blocks);
  for (size_t j = 0; j < model.config.n_blocks; ++j) {
    if (drop.count(j) == 0) {
      out.blocks.push_back(model.blocks[j]);
    }
  }
  return out;
}

uint32_t argmax_row(std::span<const float> row) {
  if (row.empty()) {
    throw ValueError("argmax of empty row");
  }
  size_t best = 0;
  for (size_t i = 1; i < row.size(); ++i) {
    if (row[i] > row[best]) {
      best = i;
    }
  }
  return static_cast<uint32_t>(best);
}

std::vector<uint32_t> generate(const TransformerModel& model, const BlockMask& mask,
                               std::span<const uint32_t> prompt, size_t gen_len,
                               KVCache& cache) {
  const ModelConfig& cfg = model.config;
  if (prompt.size() + gen_len > cfg.max_seq) {
    throw LengthError("generate: prompt + gen_len " +
                      std::to_string(prompt.size() + gen_len) + " exceeds max_seq " +
                      std::to_string(cfg.max_seq));
  }
  std::vector<uint32_t> out;
  if (gen_len == 0) {
    return out;
  }
  if (prompt.empty()) {
    throw ValueError("generate: empty prompt");
  }
  cache = KVCache(model, mask, prompt.size() + gen_len);

  Matrix h = forward_hidden(model, mask, prompt, &cache, nullptr);
  Matrix logits = logits_from_stream(model, h);
  uint32_t next = argmax_row(logits.row_span(logits.rows - 1));
  out.push_back(next);
  for (size_t i = 1; i < gen_len; ++i) {
    const uint32_t tok[1] = {next};
    Matrix h1 = forward_hidden(model, mask, tok, &cache, nullptr);
    Matrix l1 = logits_from_stream(model, h1);
    next = argmax_row(l1.row_span(0));
    out.push_back(next);
  }
  return out;
}

std::vector<uint32_t> decode_step_batch(const TransformerModel& model, const BlockMask& mask,
                                        std::span<const uint32_t> tokens,
                                        std::span<KVCache> caches) {
  const ModelConfig& cfg = model.config;
  const size_t batch = tokens.size();
  if (caches.size() != batch) {
    throw ShapeError("decode_step_batch: one cache per sequence required");
  }
  if (mask.size() != cfg.n_blocks) {
    throw ShapeError("decode_step_batch: mask length does not match model");
  }
  if (batch == 0) {
    return {};
  }

  Matrix x(batch, cfg.d_model);
  for (size_t r = 0; r < batch; ++r) {
    if (tokens[r] >= cfg.vocab) {
      throw IndexError("token id " + std::to_string(tokens[r]) + " out of vocab " +
                       std::to_string(cfg.vocab));
    }
    const size_t pos = caches[r].len;
    if (pos + 1 > caches[r].capacity || pos + 1 > cfg.max_seq) {
      throw LengthError("decode_step_batch: sequence exceeds capacity");
    }
    const float* emb = model.token_embedding.row(tokens[r]);
    float* xr = x.row(r);
    std::copy(emb, emb + cfg.d_model, xr);
    if (cfg.positional == Positional::kLearnedAbsolute) {
      const float* pe = model.position_embedding.row(pos);
      for (size_t c = 0; c < cfg.d_model; ++c) {
        xr[c] += pe[c];
      }
    }
  }

  const size_t head_dim = cfg.head_dim();
  const float scale = 1.0f / std::sqrt(static_cast<float>(head_dim));
  Scratch s;
  Matrix kn, vn;
  for (size_t j = 0; j < cfg.n_blocks; ++j) {
    if (!mask.is_active(j)) {
      continue;
    }
    const BlockWeights& bw = model.blocks[j];
    normalize_rows(x, bw.attn_norm, cfg.norm_kind, cfg.norm_eps, s.xn);
    matmul_into(s.xn, bw.wq, s.q);
    matmul_into(s.xn, bw.wk, kn);
    matmul_into(s.xn, bw.wv, vn);
    s.attn.ensure(batch, cfg.d_model);
    for (size_t r = 0; r < batch; ++r) {
      KVCache::Entry& e = caches[r].entries[j];
      if (e.k.rows < caches[r].len + 1) {
        throw ShapeError("decode_step_batch: cache entry missing for active block " +
                         std::to_string(j));
      }
      const size_t pos = caches[r].len;
      std::copy(kn.row(r), kn.row(r) + cfg.d_model, e.k.row(pos));
      std::copy(vn.row(r), vn.row(r) + cfg.d_model, e.v.row(pos));
      attend_one(cfg.n_heads, head_dim, scale, s.q.row(r), e.k, e.v, pos + 1,
                 s.attn.row(r), s.w);
    }
    matmul_into(s.attn, bw.wo, s.proj);
    add_inplace(x, s.proj);

    normalize_rows(x, bw.ffn_norm, cfg.norm_kind, cfg.norm_eps, s.xn);
    matmul_into(s.xn, bw.w_in, s.ff);
    for (float& f : s.ff.data) {
      f = gelu(f);
    }
    matmul_into(s.ff, bw.w_out, s.proj);
    add_inplace(x, s.proj);
  }
  for (size_t r = 0; r < batch; ++r) {
    caches[r].len += 1;
  }

  Matrix logits = logits_from_stream(model, x);
  std::vector<uint32_t> next(batch);
  for (size_t r = 0; r < batch; ++r) {
    next[r] = argmax_row(logits.row_span(r));
  }
  return next;
}

std::vector<std::pair<std::string, std::vector<size_t>>> tensor_manifest(
    const ModelConfig& cfg) {
  std::vector<std::pair<std::string, std::vector<size_t>>> m;
  const bool has_bias = cfg.norm_kind == NormKind::kLayerNorm;
  m.push_back({"token_embedding", {cfg.vocab, cfg.d_model}});
  if (cfg.positional == Positional::kLearnedAbsolute) {
    m.push_back({"position_embedding", {cfg.max_seq, cfg.d_model}});
  }
  for (size_t i = 0; i < cfg.n_blocks; ++i) {
    const std::string p = "blocks." + std::to_string(i) + ".";
    m.push_back({p + "attn_norm.gain", {cfg.d_model}});
    if (has_bias) {
      m.push_back({p + "attn_norm.bias", {cfg.d_model}});
    }
    m.push_back({p + "wq", {cfg.d_model, cfg.d_model}});
    m.push_back({p + "wk", {cfg.d_model, cfg.d_model}});
    m.push_back({p + "wv", {cfg.d_model, cfg.d_model}});
    m.push_back({p + "wo", {cfg.d_model, cfg.d_model}});
    m.push_back({p + "ffn_norm.gain", {cfg.d_model}});
    if (has_bias) {
      m.push_back({p + "ffn_norm.bias", {cfg.d_model}});
    }
    m.push_back({p + "w_in", {cfg.d_model, cfg.d_ff}});
    m.push_back({p + "w_out", {cfg.d_ff, cfg.d_model}});
  }
  m.push_back({"final_norm.gain", {cfg.d_model}});
  if (has_bias) {
    m.push_back({"final_norm.bias", {cfg.d_model}});
  }
  m.push_back({"lm_head", {cfg.d_model, cfg.vocab}});
  return m;
}

namespace {

struct TensorRef {
  std::string name;
  std::vector<size_t> shape;
  std::vector<float>* data;
};

size_t shape_count(const std::vector<size_t>& shape) {
  size_t n = 1;
  for (size_t d : shape) {
    n *= d;
  }
  return n;
}

TransformerModel alloc_model(const ModelConfig& cfg) {
  TransformerModel m;
  m.config = cfg;
  m.token_embedding = Matrix(cfg.vocab, cfg.d_model);
  if (cfg.positional == Positional::kLearnedAbsolute) {
    m.position_embedding = Matrix(cfg.max_seq, cfg.d_model);
  }
  const bool has_bias = cfg.norm_kind == NormKind::kLayerNorm;
  m.blocks.resize(cfg.n_blocks);
  for (BlockWeights& bw : m.blocks) {
    bw.wq = Matrix(cfg.d_model, cfg.d_model);
    bw.wk = Matrix(cfg.d_model, cfg.d_model);
    bw.wv = Matrix(cfg.d_model, cfg.d_model);
    bw.wo = Matrix(cfg.d_model, cfg.d_model);
    bw.w_in = Matrix(cfg.d_model, cfg.d_ff);
    bw.w_out = Matrix(cfg.d_ff, cfg.d_model);
    bw.attn_norm.gain.resize(cfg.d_model);
    bw.ffn_norm.gain.resize(cfg.d_model);
    if (has_bias) {
      bw.attn_norm.bias.resize(cfg.d_model);
      bw.ffn_norm.bias.resize(cfg.d_model);
    }
  }
  m.final_norm.gain.resize(cfg.d_model);
  if (has_bias) {
    m.final_norm.bias.resize(cfg.d_model);
  }
  m.lm_head = Matrix(cfg.d_model, cfg.vocab);
  return m;
}

// Mutable views over the model's tensors in manifest order.
std::vector<TensorRef> tensor_refs(TransformerModel& m) {
  const ModelConfig& cfg = m.config;
  const bool has_bias = cfg.norm_kind == NormKind::kLayerNorm;
  std::vector<TensorRef> refs;
  refs.push_back({"token_embedding", {cfg.vocab, cfg.d_model}, &m.token_embedding.data});
  if (cfg.positional == Positional::kLearnedAbsolute) {
    refs.push_back({"position_embedding", {cfg.max_seq, cfg.d_model}, &m.position_embedding.data});
  }
  for (size_t i = 0; i < cfg.n_blocks; ++i) {
    const std::string p = "blocks." + std::to_string(i) + ".";
    BlockWeights& bw = m.blocks[i];
    refs.push_back({p + "attn_norm.gain", {cfg.d_model}, &bw.attn_norm.gain});
    if (has_bias) {
      refs.push_back({p + "attn_norm.bias", {cfg.d_model}, &bw.attn_norm.bias});
    }
    refs.push_back({p + "wq", {cfg.d_model, cfg.d_model}, &bw.wq.data});
    refs.push_back({p + "wk", {cfg.d_model, cfg.d_model}, &bw.wk.data});
    refs.push_back({p + "wv", {cfg.d_model, cfg.d_model}, &bw.wv.data});
    refs.push_back({p + "wo", {cfg.d_model, cfg.d_model}, &bw.wo.data});
    refs.push_back({p + "ffn_norm.gain", {cfg.d_model}, &bw.ffn_norm.gain});
    if (has_bias) {
      refs.push_back({p + "ffn_norm.bias", {cfg.d_model}, &bw.ffn_norm.bias});
    }
    refs.push_back({p + "w_in", {cfg.d_model, cfg.d_ff}, &bw.w_in.data});
    refs.push_back({p + "w_out", {cfg.d_ff, cfg.d_model}, &bw.w_out.data});
  }
  refs.push_back({"final_norm.gain", {cfg.d_model}, &m.final_norm.gain});
  if (has_bias) {
    refs.push_back({"final_norm.bias", {cfg.d_model}, &m.final_norm.bias});
  }
  refs.push_back({"lm_head", {cfg.d_model, cfg.vocab}, &m.lm_head.data});
  return refs;
}

constexpr char kModelMagic[8] = {'S', 'L', 'E', 'B', 'M', 'D', 'L', '1'};

const char* norm_kind_name(NormKind k) {
  return k == NormKind::kLayerNorm ? "layernorm" : "rmsnorm";
}

const char* positional_name(Positional p) {
  return p == Positional::kLearnedAbsolute ? "learned-absolute" : "none";
}

json config_to_json(const ModelConfig& cfg) {
  json j;
  j["n_blocks"] = cfg.n_blocks;
  j["d_model"] = cfg.d_model;
  j["n_heads"] = cfg.n_heads;
  j["d_ff"] = cfg.d_ff;
  j["vocab"] = cfg.vocab;
  j["max_seq"] = cfg.max_seq;
  j["norm_kind"] = norm_kind_name(cfg.norm_kind);
  j["positional"] = positional_name(cfg.positional);
  j["norm_eps"] = cfg.norm_eps;
  return j;
}

ModelConfig config_from_json(const json& j) {
  ModelConfig cfg;
  try {
    cfg.n_blocks = j.at("n_blocks").get<size_t>();
    cfg.d_model = j.at("d_model").get<size_t>();
    cfg.n_heads = j.at("n_heads").get<size_t>();
    cfg.d_ff = j.at("d_ff").get<size_t>();
    cfg.vocab = j.at("vocab").get<size_t>();
    cfg.max_seq = j.at("max_seq").get<size_t>();
    const std::string nk = j.at("norm_kind").get<std::string>();
    const std::string pos = j.at("positional").get<std::string>();
    cfg.norm_eps = j.at("norm_eps").get<float>();
    if (nk == "layernorm") {
      cfg.norm_kind = NormKind::kLayerNorm;
    } else if (nk == "rmsnorm") {
      cfg.norm_kind = NormKind::kRmsNorm;
    } else {
      throw FormatError("model header: unknown norm_kind '" + nk + "'");
    }
    if (pos == "learned-absolute") {
      cfg.positional = Positional::kLearnedAbsolute;
    } else if (pos == "none") {
      cfg.positional = Positional::kNone;
    } else {
      throw FormatError("model header: unknown positional '" + pos + "'");
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("model header: bad config: ") + e.what());
  }
  try {
    cfg.validate();
  } catch (const ValueError& e) {
    throw FormatError(std::string("model header: invalid config: ") + e.what());
  }
  return cfg;
}

void append_u32le(std::string& out, uint32_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 24) & 0xff));
}

uint32_t read_u32le(const unsigned char* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

}  // namespace

std::string serialize_model(const TransformerModel& model) {
  auto refs = tensor_refs(const_cast<TransformerModel&>(model));
  json header;
  header["config"] = config_to_json(model.config);
  json tensors = json::array();
  uint64_t offset = 0;
  for (const TensorRef& r : refs) {
    const size_t count = shape_count(r.shape);
    if (r.data->size() != count) {
      throw ShapeError("serialize: tensor '" + r.name + "' has unexpected element count");
    }
    json t;
    t["name"] = r.name;
    t["shape"] = r.shape;
    t["offset"] = offset;
    tensors.push_back(t);
    offset += count * sizeof(float);
  }
  header["tensors"] = tensors;
  const std::string hs = header.dump();

  std::string out;
  out.reserve(sizeof(kModelMagic) + 4 + hs.size() + offset);
  out.append(kModelMagic, sizeof(kModelMagic));
  append_u32le(out, static_cast<uint32_t>(hs.size()));
  out.append(hs);
  for (const TensorRef& r : refs) {
    const char* bytes = reinterpret_cast<const char*>(r.data->data());
    out.append(bytes, r.data->size() * sizeof(float));
  }
  return out;
}

TransformerModel parse_model(const std::string& bytes) {
  const size_t prefix = sizeof(kModelMagic) + 4;
  if (bytes.size() < prefix) {
    throw FormatError("model file too small for magic and header length");
  }
  if (std::memcmp(bytes.data(), kModelMagic, sizeof(kModelMagic)) != 0) {
    throw FormatError("model file: bad magic (expected SLEBMDL1)");
  }
  const uint32_t header_len =
      read_u32le(reinterpret_cast<const unsigned char*>(bytes.data()) + sizeof(kModelMagic));
  if (bytes.size() < prefix + header_len) {
    throw FormatError("model file: truncated header");
  }
  json header;
  try {
    header = json::parse(bytes.substr(prefix, header_len));
  } catch (const json::exception& e) {
    throw FormatError(std::string("model file: malformed header JSON: ") + e.what());
  }
  if (!header.contains("config") || !header.contains("tensors")) {
    throw FormatError("model file: header missing config or tensors");
  }
  const ModelConfig cfg = config_from_json(header["config"]);
  TransformerModel model = alloc_model(cfg);
  auto refs = tensor_refs(model);
  const json& tensors = header["tensors"];
  if (!tensors.is_array() || tensors.size() != refs.size()) {
    throw FormatError("model file: tensor manifest has " +
                      std::to_string(tensors.is_array() ? tensors.size() : 0) +
                      " entries, config implies " + std::to_string(refs.size()));
  }
  const size_t payload_off = prefix + header_len;
  const size_t payload_size = bytes.size() - payload_off;
  uint64_t expect_offset = 0;
  for (size_t i = 0; i < refs.size(); ++i) {
    const json& t = tensors[i];
    std::string name;
    std::vector<size_t> shape;
    uint64_t offset = 0;
    try {
      name = t.at("name").get<std::string>();
      shape = t.at("shape").get<std::vector<size_t>>();
      offset = t.at("offset").get<uint64_t>();
    } catch (const json::exception& e) {
      throw FormatError(std::string("model file: malformed tensor entry: ") + e.what());
    }
    if (name != refs[i].name) {
      throw FormatError("model file: unexpected tensor '" + name + "' (expected '" +
                        refs[i].name + "')");
    }
    if (shape != refs[i].shape) {
      std::ostringstream oss;
      oss << "model file: shape mismatch for tensor '" << name << "': header says [";
      for (size_t k = 0; k < shape.size(); ++k) {
        oss << (k ? "," : "") << shape[k];
      }
      oss << "], config implies [";
      for (size_t k = 0; k < refs[i].shape.size(); ++k) {
        oss << (k ? "," : "") << refs[i].shape[k];
      }
      oss << "]";
      throw FormatError(oss.str());
    }
    if (offset != expect_offset) {
      throw FormatError("model file: bad payload offset for tensor '" + name + "'");
    }
    const size_t nbytes = shape_count(shape) * sizeof(float);
    if (offset + nbytes > payload_size) {
      throw FormatError("model file: truncated payload for tensor '" + name + "'");
    }
    std::memcpy(refs[i].data->data(), bytes.data() + payload_off + offset, nbytes);
    expect_offset += nbytes;
  }
  if (expect_offset != payload_size) {
    throw FormatError("model file: trailing bytes after tensor payloads");
  }
  return model;
}

void save_model(const TransformerModel& model, const std::string& path) {
  const std::string bytes = serialize_model(model);
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw FormatError("cannot open '" + path + "' for writing");
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) {
    throw FormatError("failed writing model to '" + path + "'");
  }
}

TransformerModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw FormatError("cannot open model file '" + path + "'");
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_model(buf.str());
}

TransformerModel random_model(const ModelConfig& cfg, uint64_t seed) {
  cfg.validate();
  TransformerModel model = alloc_model(cfg);
  const float s = 1.0f / std::sqrt(static_cast<float>(cfg.d_model));
  Rng rng(seed);
  for (TensorRef& r : tensor_refs(model)) {
    for (float& v : *r.data) {
      v = rng.uniform(-s, s);
    }
  }
  return model;
}

}  // namespace sleb
