// Command-line front end for the SLEB block-pruning toolkit.
//
// One subcommand per workflow stage: gen-model, gen-corpus, prune, eval,
// analyze (sim-matrix | alignment | exit-speedup), bench (prompt | generate),
// oracle, sweep. Every parameter has a flag and a JSON config-file key
// (--config); flags override the file. SLEB_SEED supplies a default seed and
// SLEB_THREADS caps worker threads.
//
// Exit codes: 0 success, 2 usage error, 3 data/format error, 4 capacity error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sleb/analysis.hpp"
#include "sleb/bench.hpp"
#include "sleb/data.hpp"
#include "sleb/eval.hpp"
#include "sleb/io_util.hpp"
#include "sleb/metrics.hpp"
#include "sleb/model.hpp"
#include "sleb/pruner.hpp"
#include "sleb/version.hpp"

using json = nlohmann::json;
using namespace sleb;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

uint64_t fnv1a64(const std::string& bytes) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string path_stem(const std::string& path) {
  return std::filesystem::path(path).stem().string();
}

// Binds subcommand options to a JSON config file: after parsing, values not
// given on the command line are taken from the file, and every resolved
// value is echoed into the run_config embedded in reports.
class ParamSet {
 public:
  explicit ParamSet(CLI::App* cmd) {
    cmd->add_option("--config", config_path_, "JSON config file (flags override file values)");
  }

  template <typename T>
  void bind(CLI::Option* opt, const std::string& key, T* target) {
    merges_.push_back([opt, key, target](const json& cfg) {
      if (opt->count() == 0 && cfg.contains(key)) {
        try {
          *target = cfg.at(key).get<T>();
        } catch (const json::exception& e) {
          throw FormatError("config key '" + key + "': " + e.what());
        }
      }
    });
    echoes_.push_back([key, target](json& out) { out[key] = *target; });
  }

  // Seed resolution order: flag, config file, SLEB_SEED, built-in default.
  void bind_seed(CLI::Option* opt, const std::string& key, uint64_t* target) {
    merges_.push_back([opt, key, target](const json& cfg) {
      if (opt->count() > 0) {
        return;
      }
      if (cfg.contains(key)) {
        *target = cfg.at(key).get<uint64_t>();
        return;
      }
      if (const char* env = std::getenv("SLEB_SEED")) {
        char* end = nullptr;
        const unsigned long long v = std::strtoull(env, &end, 10);
        if (end != env && *end == '\0') {
          *target = v;
        }
      }
    });
    echoes_.push_back([key, target](json& out) { out[key] = *target; });
  }

  // Applies the config file and returns the resolved run_config echo.
  json resolve(const std::string& command) {
    json cfg = json::object();
    if (!config_path_.empty()) {
      try {
        cfg = json::parse(read_text_file(config_path_));
      } catch (const json::exception& e) {
        throw FormatError("config file '" + config_path_ + "': " + e.what());
      }
      if (!cfg.is_object()) {
        throw FormatError("config file '" + config_path_ + "': expected a JSON object");
      }
    }
    for (const auto& merge : merges_) {
      merge(cfg);
    }
    json resolved;
    resolved["command"] = command;
    for (const auto& echo : echoes_) {
      echo(resolved);
    }
    return resolved;
  }

 private:
  std::string config_path_;
  std::vector<std::function<void(const json&)>> merges_;
  std::vector<std::function<void(json&)>> echoes_;
};

void require_value(const std::string& value, const std::string& what) {
  if (value.empty()) {
    throw UsageError("missing required parameter: " + what);
  }
}

CorpusFormat resolve_corpus_format(const std::string& format, const std::string& path) {
  if (format == "jsonl") {
    return CorpusFormat::kJsonLines;
  }
  if (format == "bin") {
    return CorpusFormat::kBinary;
  }
  if (format != "auto") {
    throw UsageError("unknown corpus format '" + format + "' (auto, jsonl, bin)");
  }
  // Sniff the binary magic; anything else is treated as JSON lines.
  std::ifstream in(path, std::ios::binary);
  char magic[8] = {};
  if (in.read(magic, 8) && std::string(magic, 8) == "SLEBTOK1") {
    return CorpusFormat::kBinary;
  }
  return CorpusFormat::kJsonLines;
}

ModelConfig checked_preset(const std::string& preset, size_t blocks, size_t d_model,
                           size_t heads, size_t d_ff, size_t vocab, size_t max_seq) {
  if (preset != "opt-style" && preset != "llama-style") {
    throw UsageError("unknown preset '" + preset + "' (opt-style, llama-style)");
  }
  return preset_config(preset, blocks, d_model, heads, d_ff, vocab, max_seq);
}

BlockMask mask_from_removals(size_t n_blocks, const std::vector<size_t>& removed) {
  BlockMask mask = BlockMask::all_active(n_blocks);
  for (size_t j : removed) {
    if (j >= n_blocks) {
      throw IndexError("--remove: block " + std::to_string(j) + " out of range for " +
                       std::to_string(n_blocks) + " blocks");
    }
    mask.deactivate(j);
  }
  return mask;
}

void write_json_report(const std::string& path, json content, const json& run_config) {
  content["run_config"] = run_config;
  content["tool_version"] = kToolVersion;
  write_text_file(path, content.dump(2) + "\n");
}

// CSV artifacts stay bit-exact and plot-ready; provenance goes to a sidecar.
void write_csv_with_meta(const std::string& path, const std::string& csv,
                         const json& run_config) {
  write_text_file(path, csv);
  json meta;
  meta["artifact"] = std::filesystem::path(path).filename().string();
  write_json_report(path + ".meta.json", meta, run_config);
}

// ---------------------------------------------------------------------------
// gen-model
// ---------------------------------------------------------------------------

void setup_gen_model(CLI::App& app) {
  auto cmd = app.add_subcommand("gen-model", "Create a seeded random model file");
  auto params = std::make_shared<ParamSet>(cmd);
  auto out = std::make_shared<std::string>();
  auto preset = std::make_shared<std::string>("opt-style");
  auto blocks = std::make_shared<size_t>(8);
  auto d_model = std::make_shared<size_t>(32);
  auto heads = std::make_shared<size_t>(4);
  auto d_ff = std::make_shared<size_t>(0);  // 0 = 4 * d_model
  auto vocab = std::make_shared<size_t>(64);
  auto max_seq = std::make_shared<size_t>(64);
  auto seed = std::make_shared<uint64_t>(0);

  params->bind(cmd->add_option("--out", *out, "output model file"), "out", out.get());
  params->bind(cmd->add_option("--preset", *preset, "opt-style | llama-style"), "preset",
               preset.get());
  params->bind(cmd->add_option("--blocks", *blocks, "transformer block count"), "blocks",
               blocks.get());
  params->bind(cmd->add_option("--d-model", *d_model, "model width"), "d-model", d_model.get());
  params->bind(cmd->add_option("--heads", *heads, "attention heads"), "heads", heads.get());
  params->bind(cmd->add_option("--d-ff", *d_ff, "feed-forward width (0 = 4*d_model)"), "d-ff",
               d_ff.get());
  params->bind(cmd->add_option("--vocab", *vocab, "vocabulary size"), "vocab", vocab.get());
  params->bind(cmd->add_option("--max-seq", *max_seq, "maximum sequence length"), "max-seq",
               max_seq.get());
  params->bind_seed(cmd->add_option("--seed", *seed, "PRNG seed"), "seed", seed.get());

  cmd->callback([=]() {
    params->resolve("gen-model");
    require_value(*out, "--out");
    const size_t ff = *d_ff == 0 ? 4 * *d_model : *d_ff;
    const ModelConfig cfg =
        checked_preset(*preset, *blocks, *d_model, *heads, ff, *vocab, *max_seq);
    const TransformerModel model = random_model(cfg, *seed);
    const std::string bytes = serialize_model(model);
    write_text_file(*out, bytes);

    std::cout << "model: " << *out << "\n";
    std::cout << "digest: " << std::hex << fnv1a64(bytes) << std::dec << "\n";
    std::cout << "manifest:\n";
    size_t offset = 0;
    for (const auto& [name, shape] : tensor_manifest(cfg)) {
      size_t count = 1;
      std::string dims;
      for (size_t d : shape) {
        dims += (dims.empty() ? "" : "x") + std::to_string(d);
        count *= d;
      }
      std::cout << "  " << name << "  [" << dims << "]  offset=" << offset << "\n";
      offset += count * sizeof(float);
    }
    std::cout << "payload bytes: " << offset << "\n";
  });
}

// ---------------------------------------------------------------------------
// gen-corpus
// ---------------------------------------------------------------------------

void setup_gen_corpus(CLI::App& app) {
  auto cmd = app.add_subcommand("gen-corpus", "Create a seeded synthetic token corpus");
  auto params = std::make_shared<ParamSet>(cmd);
  auto out = std::make_shared<std::string>();
  auto format = std::make_shared<std::string>("jsonl");
  auto vocab = std::make_shared<size_t>(64);
  auto sequences = std::make_shared<size_t>(256);
  auto min_len = std::make_shared<size_t>(32);
  auto max_len = std::make_shared<size_t>(64);
  auto name = std::make_shared<std::string>("toy-synth");
  auto seed = std::make_shared<uint64_t>(0);

  params->bind(cmd->add_option("--out", *out, "output corpus file"), "out", out.get());
  params->bind(cmd->add_option("--format", *format, "jsonl | bin"), "format", format.get());
  params->bind(cmd->add_option("--vocab", *vocab, "vocabulary size"), "vocab", vocab.get());
  params->bind(cmd->add_option("--sequences", *sequences, "number of sequences"), "sequences",
               sequences.get());
  params->bind(cmd->add_option("--min-len", *min_len, "minimum sequence length"), "min-len",
               min_len.get());
  params->bind(cmd->add_option("--max-len", *max_len, "maximum sequence length"), "max-len",
               max_len.get());
  params->bind(cmd->add_option("--name", *name, "corpus tag"), "name", name.get());
  params->bind_seed(cmd->add_option("--seed", *seed, "PRNG seed"), "seed", seed.get());

  cmd->callback([=]() {
    params->resolve("gen-corpus");
    require_value(*out, "--out");
    if (*format != "jsonl" && *format != "bin") {
      throw UsageError("unknown corpus format '" + *format + "' (jsonl, bin)");
    }
    const TokenCorpus corpus =
        synthetic_corpus(*vocab, *sequences, *min_len, *max_len, *seed, *name);
    save_corpus(corpus, *out,
                *format == "jsonl" ? CorpusFormat::kJsonLines : CorpusFormat::kBinary);
    std::cout << "corpus: " << *out << " (" << corpus.sequences.size() << " sequences, "
              << corpus.total_tokens() << " tokens)\n";
  });
}

// ---------------------------------------------------------------------------
// prune
// ---------------------------------------------------------------------------

void setup_prune(CLI::App& app) {
  auto cmd = app.add_subcommand("prune", "Select and remove redundant blocks");
  auto params = std::make_shared<ParamSet>(cmd);
  auto model_path = std::make_shared<std::string>();
  auto corpus_path = std::make_shared<std::string>();
  auto corpus_format = std::make_shared<std::string>("auto");
  auto method = std::make_shared<std::string>("sleb");
  auto sparsity = std::make_shared<double>(-1.0);  // <0 = unset
  auto remove_n = std::make_shared<long long>(-1);
  auto calib_count = std::make_shared<size_t>(128);
  auto calib_seq_len = std::make_shared<size_t>(32);
  auto seed = std::make_shared<uint64_t>(0);
  auto trace_out = std::make_shared<std::string>();
  auto model_out = std::make_shared<std::string>();

  params->bind(cmd->add_option("--model", *model_path, "input model file"), "model",
               model_path.get());
  params->bind(cmd->add_option("--corpus", *corpus_path, "calibration corpus file"), "corpus",
               corpus_path.get());
  params->bind(cmd->add_option("--corpus-format", *corpus_format, "auto | jsonl | bin"),
               "corpus-format", corpus_format.get());
  params->bind(cmd->add_option("--method", *method, "sleb | early-exit | chunk-best"), "method",
               method.get());
  params->bind(cmd->add_option("--sparsity", *sparsity, "target sparsity fraction in (0,1)"),
               "sparsity", sparsity.get());
  params->bind(cmd->add_option("--remove-n", *remove_n, "explicit number of blocks to remove"),
               "remove-n", remove_n.get());
  params->bind(cmd->add_option("--calib-count", *calib_count, "calibration sample count"),
               "calib-count", calib_count.get());
  params->bind(cmd->add_option("--calib-seq-len", *calib_seq_len, "calibration sample length"),
               "calib-seq-len", calib_seq_len.get());
  params->bind_seed(cmd->add_option("--seed", *seed, "calibration sampling seed"), "seed",
                    seed.get());
  params->bind(cmd->add_option("--trace-out", *trace_out, "output trace JSON"), "trace-out",
               trace_out.get());
  params->bind(cmd->add_option("--model-out", *model_out, "output pruned model file"),
               "model-out", model_out.get());

  cmd->callback([=]() {
    const json run_config = params->resolve("prune");
    require_value(*model_path, "--model");
    require_value(*corpus_path, "--corpus");
    require_value(*trace_out, "--trace-out");
    require_value(*model_out, "--model-out");

    const TransformerModel model = load_model(*model_path);
    const TokenCorpus corpus =
        load_corpus(*corpus_path, resolve_corpus_format(*corpus_format, *corpus_path));
    const CalibrationSet calib =
        sample_calibration(corpus, *calib_count, *calib_seq_len, *seed);

    PruneConfig config;
    if (*sparsity >= 0.0) {
      config.sparsity = *sparsity;
    }
    if (*remove_n >= 0) {
      config.n_remove = static_cast<size_t>(*remove_n);
    }
    config.seed = *seed;

    PruneTrace trace;
    if (*method == "sleb") {
      trace = sleb_prune(model, calib, config);
    } else if (*method == "early-exit") {
      trace = early_exit_baseline(model, config.resolve_n(model.config.n_blocks));
    } else if (*method == "chunk-best") {
      trace = chunk_best_baseline(model, config.resolve_n(model.config.n_blocks), calib);
    } else {
      throw UsageError("unknown method '" + *method + "' (sleb, early-exit, chunk-best)");
    }

    write_json_report(*trace_out, trace.to_json(), run_config);
    const TransformerModel pruned = remove_blocks(model, trace.removed_order());
    save_model(pruned, *model_out);

    std::cout << "removed order:";
    for (size_t j : trace.removed_order()) {
      std::cout << " " << j;
    }
    std::cout << "\npruned model: " << *model_out << " (" << pruned.config.n_blocks
              << " blocks)\ntrace: " << *trace_out << "\n";
  });
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

void setup_eval(CLI::App& app) {
  auto cmd = app.add_subcommand("eval", "Perplexity on an evaluation corpus");
  auto params = std::make_shared<ParamSet>(cmd);
  auto model_path = std::make_shared<std::string>();
  auto corpus_path = std::make_shared<std::string>();
  auto corpus_format = std::make_shared<std::string>("auto");
  auto seq_len = std::make_shared<size_t>(32);
  auto removed = std::make_shared<std::vector<size_t>>();
  auto model_tag = std::make_shared<std::string>();
  auto calib_tag = std::make_shared<std::string>();
  auto out = std::make_shared<std::string>();

  params->bind(cmd->add_option("--model", *model_path, "model file"), "model", model_path.get());
  params->bind(cmd->add_option("--corpus", *corpus_path, "evaluation corpus file"), "corpus",
               corpus_path.get());
  params->bind(cmd->add_option("--corpus-format", *corpus_format, "auto | jsonl | bin"),
               "corpus-format", corpus_format.get());
  params->bind(cmd->add_option("--seq-len", *seq_len, "evaluation window length"), "seq-len",
               seq_len.get());
  params->bind(
      cmd->add_option("--remove", *removed, "blocks to mask, e.g. 1,4,7")->delimiter(','),
      "remove", removed.get());
  params->bind(cmd->add_option("--model-tag", *model_tag, "tag recorded in the report"),
               "model-tag", model_tag.get());
  params->bind(cmd->add_option("--calib-tag", *calib_tag,
                               "calibration tag recorded for dataset crossings"),
               "calib-tag", calib_tag.get());
  params->bind(cmd->add_option("--out", *out, "output report JSON"), "out", out.get());

  cmd->callback([=]() {
    const json run_config = params->resolve("eval");
    require_value(*model_path, "--model");
    require_value(*corpus_path, "--corpus");
    require_value(*out, "--out");

    const TransformerModel model = load_model(*model_path);
    const TokenCorpus corpus =
        load_corpus(*corpus_path, resolve_corpus_format(*corpus_format, *corpus_path));
    const BlockMask mask = mask_from_removals(model.config.n_blocks, *removed);
    const std::string tag = model_tag->empty() ? path_stem(*model_path) : *model_tag;

    const PerplexityReport report = perplexity(model, mask, corpus, *seq_len, tag, *calib_tag);
    write_json_report(*out, report.to_json(), run_config);
    std::cout << "perplexity: " << format_double(report.perplexity) << " (mean nll "
              << format_double(report.mean_nll) << ", " << report.token_count
              << " tokens)\nreport: " << *out << "\n";
  });
}

// ---------------------------------------------------------------------------
// analyze
// ---------------------------------------------------------------------------

void setup_analyze(CLI::App& app) {
  auto cmd = app.add_subcommand("analyze", "Diagnostic studies");
  cmd->require_subcommand(1);

  {
    auto sub = cmd->add_subcommand("sim-matrix", "Block-output cosine similarity matrix");
    auto params = std::make_shared<ParamSet>(sub);
    auto model_path = std::make_shared<std::string>();
    auto seed = std::make_shared<uint64_t>(0);
    auto out = std::make_shared<std::string>();
    params->bind(sub->add_option("--model", *model_path, "model file"), "model",
                 model_path.get());
    params->bind_seed(sub->add_option("--seed", *seed, "probe token seed"), "seed", seed.get());
    params->bind(sub->add_option("--out", *out, "output CSV"), "out", out.get());
    sub->callback([=]() {
      json run_config = params->resolve("analyze sim-matrix");
      require_value(*model_path, "--model");
      require_value(*out, "--out");
      const TransformerModel model = load_model(*model_path);
      const SimilarityMatrix sim = similarity_matrix(model, *seed);
      run_config["probe-token"] = sim.probe_token;
      write_csv_with_meta(*out, to_csv(sim), run_config);
      std::cout << "similarity matrix: " << *out << " (" << sim.n_blocks << "x" << sim.n_blocks
                << ", probe token " << sim.probe_token << ")\n";
    });
  }

  {
    auto sub = cmd->add_subcommand("alignment", "Logit-lens prediction alignment per block");
    auto params = std::make_shared<ParamSet>(sub);
    auto model_path = std::make_shared<std::string>();
    auto corpus_path = std::make_shared<std::string>();
    auto corpus_format = std::make_shared<std::string>("auto");
    auto seq_len = std::make_shared<size_t>(32);
    auto out = std::make_shared<std::string>();
    params->bind(sub->add_option("--model", *model_path, "model file"), "model",
                 model_path.get());
    params->bind(sub->add_option("--corpus", *corpus_path, "corpus file"), "corpus",
                 corpus_path.get());
    params->bind(sub->add_option("--corpus-format", *corpus_format, "auto | jsonl | bin"),
                 "corpus-format", corpus_format.get());
    params->bind(sub->add_option("--seq-len", *seq_len, "window length"), "seq-len",
                 seq_len.get());
    params->bind(sub->add_option("--out", *out, "output CSV"), "out", out.get());
    sub->callback([=]() {
      const json run_config = params->resolve("analyze alignment");
      require_value(*model_path, "--model");
      require_value(*corpus_path, "--corpus");
      require_value(*out, "--out");
      const TransformerModel model = load_model(*model_path);
      const TokenCorpus corpus =
          load_corpus(*corpus_path, resolve_corpus_format(*corpus_format, *corpus_path));
      const AlignmentProfile profile = alignment_profile(model, corpus, *seq_len);
      write_csv_with_meta(*out, to_csv(profile), run_config);
      std::cout << "alignment profile: " << *out << " (" << profile.token_count << " tokens)\n";
    });
  }

  {
    auto sub = cmd->add_subcommand("exit-speedup",
                                   "Ideal early-exit skip ratio and batch speedup model");
    auto params = std::make_shared<ParamSet>(sub);
    auto model_path = std::make_shared<std::string>();
    auto corpus_path = std::make_shared<std::string>();
    auto corpus_format = std::make_shared<std::string>("auto");
    auto seq_len = std::make_shared<size_t>(32);
    auto batches =
        std::make_shared<std::vector<size_t>>(std::vector<size_t>{1, 2, 4, 8, 16, 32, 64});
    auto out = std::make_shared<std::string>();
    params->bind(sub->add_option("--model", *model_path, "model file"), "model",
                 model_path.get());
    params->bind(sub->add_option("--corpus", *corpus_path, "corpus file"), "corpus",
                 corpus_path.get());
    params->bind(sub->add_option("--corpus-format", *corpus_format, "auto | jsonl | bin"),
                 "corpus-format", corpus_format.get());
    params->bind(sub->add_option("--seq-len", *seq_len, "window length"), "seq-len",
                 seq_len.get());
    params->bind(sub->add_option("--batch-sizes", *batches, "e.g. 1,2,4,8")->delimiter(','),
                 "batch-sizes", batches.get());
    params->bind(sub->add_option("--out", *out, "output CSV"), "out", out.get());
    sub->callback([=]() {
      const json run_config = params->resolve("analyze exit-speedup");
      require_value(*model_path, "--model");
      require_value(*corpus_path, "--corpus");
      require_value(*out, "--out");
      const TransformerModel model = load_model(*model_path);
      const TokenCorpus corpus =
          load_corpus(*corpus_path, resolve_corpus_format(*corpus_format, *corpus_path));
      const ExitSpeedupReport report = ideal_exit_speedup(model, corpus, *seq_len, *batches);
      write_csv_with_meta(*out, to_csv(report), run_config);
      std::cout << "exit speedup: " << *out << " (skip ratio "
                << format_double(report.skip_ratio) << ")\n";
    });
  }
}

// ---------------------------------------------------------------------------
// bench
// ---------------------------------------------------------------------------

void setup_bench(CLI::App& app) {
  auto cmd = app.add_subcommand("bench", "Latency/throughput measurements");
  cmd->require_subcommand(1);

  {
    auto sub = cmd->add_subcommand("prompt", "Prompt-processing latency");
    auto params = std::make_shared<ParamSet>(sub);
    auto model_path = std::make_shared<std::string>();
    auto removed = std::make_shared<std::vector<size_t>>();
    auto prompt_len = std::make_shared<size_t>(128);
    auto batch = std::make_shared<size_t>(1);
    auto reps = std::make_shared<size_t>(5);
    auto warmup = std::make_shared<size_t>(1);
    auto seed = std::make_shared<uint64_t>(0);
    auto out = std::make_shared<std::string>();
    auto csv = std::make_shared<std::string>();
    auto parallel = std::make_shared<bool>(false);
    params->bind(sub->add_option("--model", *model_path, "model file"), "model",
                 model_path.get());
    params->bind(
        sub->add_option("--remove", *removed, "blocks to mask, e.g. 1,4,7")->delimiter(','),
        "remove", removed.get());
    params->bind(sub->add_option("--prompt-len", *prompt_len, "prompt length"), "prompt-len",
                 prompt_len.get());
    params->bind(sub->add_option("--batch", *batch, "sequences per repetition"), "batch",
                 batch.get());
    params->bind(sub->add_flag("--parallel", *parallel,
                               "fan batch rows across workers (off for stable timings)"),
                 "parallel", parallel.get());
    params->bind(sub->add_option("--reps", *reps, "timed repetitions"), "reps", reps.get());
    params->bind(sub->add_option("--warmup", *warmup, "untimed warmup passes"), "warmup",
                 warmup.get());
    params->bind_seed(sub->add_option("--seed", *seed, "token seed"), "seed", seed.get());
    params->bind(sub->add_option("--out", *out, "output report JSON"), "out", out.get());
    params->bind(sub->add_option("--csv", *csv, "optional CSV summary path"), "csv", csv.get());
    sub->callback([=]() {
      const json run_config = params->resolve("bench prompt");
      require_value(*model_path, "--model");
      require_value(*out, "--out");
      const TransformerModel model = load_model(*model_path);
      const BlockMask mask = mask_from_removals(model.config.n_blocks, *removed);
      const BenchReport report = bench_prompt(model, mask, *prompt_len, *batch, *reps, *warmup,
                                              *seed, path_stem(*model_path), *parallel);
      write_json_report(*out, report.to_json(), run_config);
      if (!csv->empty()) {
        write_text_file(*csv, report.to_csv_rows());
      }
      std::cout << "prompt median: " << format_double(report.median_ms) << " ms ("
                << report.active_blocks << "/" << report.total_blocks
                << " blocks active)\nreport: " << *out << "\n";
    });
  }

  {
    auto sub = cmd->add_subcommand("generate", "Token-generation throughput");
    auto params = std::make_shared<ParamSet>(sub);
    auto model_path = std::make_shared<std::string>();
    auto removed = std::make_shared<std::vector<size_t>>();
    auto batch = std::make_shared<size_t>(8);
    auto gen_len = std::make_shared<size_t>(32);
    auto reps = std::make_shared<size_t>(5);
    auto warmup = std::make_shared<size_t>(1);
    auto seed = std::make_shared<uint64_t>(0);
    auto out = std::make_shared<std::string>();
    auto csv = std::make_shared<std::string>();
    params->bind(sub->add_option("--model", *model_path, "model file"), "model",
                 model_path.get());
    params->bind(
        sub->add_option("--remove", *removed, "blocks to mask, e.g. 1,4,7")->delimiter(','),
        "remove", removed.get());
    params->bind(sub->add_option("--batch", *batch, "batch size"), "batch", batch.get());
    params->bind(sub->add_option("--gen-len", *gen_len, "tokens generated per sequence"),
                 "gen-len", gen_len.get());
    params->bind(sub->add_option("--reps", *reps, "timed repetitions"), "reps", reps.get());
    params->bind(sub->add_option("--warmup", *warmup, "untimed warmup passes"), "warmup",
                 warmup.get());
    params->bind_seed(sub->add_option("--seed", *seed, "token seed"), "seed", seed.get());
    params->bind(sub->add_option("--out", *out, "output report JSON"), "out", out.get());
    params->bind(sub->add_option("--csv", *csv, "optional CSV summary path"), "csv", csv.get());
    sub->callback([=]() {
      const json run_config = params->resolve("bench generate");
      require_value(*model_path, "--model");
      require_value(*out, "--out");
      const TransformerModel model = load_model(*model_path);
      const BlockMask mask = mask_from_removals(model.config.n_blocks, *removed);
      const BenchReport report = bench_generate(model, mask, *batch, *gen_len, *reps, *warmup,
                                                *seed, path_stem(*model_path));
      write_json_report(*out, report.to_json(), run_config);
      if (!csv->empty()) {
        write_text_file(*csv, report.to_csv_rows());
      }
      std::cout << "generation throughput: " << format_double(report.tokens_per_s)
                << " tokens/s (" << report.active_blocks << "/" << report.total_blocks
                << " blocks active)\nreport: " << *out << "\n";
    });
  }
}

// ---------------------------------------------------------------------------
// oracle
// ---------------------------------------------------------------------------

void setup_oracle(CLI::App& app) {
  auto cmd = app.add_subcommand("oracle", "Exhaustive removal-subset ranking");
  auto params = std::make_shared<ParamSet>(cmd);
  auto model_path = std::make_shared<std::string>();
  auto corpus_path = std::make_shared<std::string>();
  auto corpus_format = std::make_shared<std::string>("auto");
  auto n = std::make_shared<size_t>(1);
  auto cap = std::make_shared<size_t>(5000);
  auto calib_count = std::make_shared<size_t>(128);
  auto calib_seq_len = std::make_shared<size_t>(32);
  auto seed = std::make_shared<uint64_t>(0);
  auto candidate = std::make_shared<std::vector<size_t>>();
  auto out = std::make_shared<std::string>();

  params->bind(cmd->add_option("--model", *model_path, "model file"), "model", model_path.get());
  params->bind(cmd->add_option("--corpus", *corpus_path, "calibration corpus file"), "corpus",
               corpus_path.get());
  params->bind(cmd->add_option("--corpus-format", *corpus_format, "auto | jsonl | bin"),
               "corpus-format", corpus_format.get());
  params->bind(cmd->add_option("--n", *n, "removal subset size"), "n", n.get());
  params->bind(cmd->add_option("--cap", *cap, "maximum number of subsets"), "cap", cap.get());
  params->bind(cmd->add_option("--calib-count", *calib_count, "calibration sample count"),
               "calib-count", calib_count.get());
  params->bind(cmd->add_option("--calib-seq-len", *calib_seq_len, "calibration sample length"),
               "calib-seq-len", calib_seq_len.get());
  params->bind_seed(cmd->add_option("--seed", *seed, "calibration sampling seed"), "seed",
                    seed.get());
  params->bind(
      cmd->add_option("--candidate", *candidate, "subset whose rank to report, e.g. 2,5")
          ->delimiter(','),
      "candidate", candidate.get());
  params->bind(cmd->add_option("--out", *out, "output ranking JSON"), "out", out.get());

  cmd->callback([=]() {
    const json run_config = params->resolve("oracle");
    require_value(*model_path, "--model");
    require_value(*corpus_path, "--corpus");
    require_value(*out, "--out");
    const TransformerModel model = load_model(*model_path);
    const TokenCorpus corpus =
        load_corpus(*corpus_path, resolve_corpus_format(*corpus_format, *corpus_path));
    const CalibrationSet calib = sample_calibration(corpus, *calib_count, *calib_seq_len, *seed);
    const OracleRanking ranking = exhaustive_oracle(model, *n, calib, *cap);

    json content = ranking.to_json();
    if (!candidate->empty()) {
      content["candidate"] = *candidate;
      content["candidate_rank"] = ranking.rank_of(*candidate);
    }
    write_json_report(*out, content, run_config);
    std::cout << "oracle: " << ranking.entries.size() << " subsets ranked\n";
    if (!candidate->empty()) {
      std::cout << "candidate rank: " << content["candidate_rank"] << "\n";
    }
    std::cout << "report: " << *out << "\n";
  });
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

void setup_sweep(CLI::App& app) {
  auto cmd = app.add_subcommand("sweep", "Perplexity across sparsity targets");
  auto params = std::make_shared<ParamSet>(cmd);
  auto model_path = std::make_shared<std::string>();
  auto corpus_path = std::make_shared<std::string>();
  auto corpus_format = std::make_shared<std::string>("auto");
  auto sparsities = std::make_shared<std::vector<double>>(
      std::vector<double>{0.0, 0.1, 0.2, 0.3, 0.4, 0.5});
  auto seq_len = std::make_shared<size_t>(32);
  auto calib_count = std::make_shared<size_t>(128);
  auto calib_seq_len = std::make_shared<size_t>(32);
  auto seed = std::make_shared<uint64_t>(0);
  auto out = std::make_shared<std::string>();

  params->bind(cmd->add_option("--model", *model_path, "model file"), "model", model_path.get());
  params->bind(cmd->add_option("--corpus", *corpus_path, "corpus file (calibration and eval)"),
               "corpus", corpus_path.get());
  params->bind(cmd->add_option("--corpus-format", *corpus_format, "auto | jsonl | bin"),
               "corpus-format", corpus_format.get());
  params->bind(cmd->add_option("--sparsities", *sparsities, "e.g. 0.1,0.2,0.5")->delimiter(','),
               "sparsities", sparsities.get());
  params->bind(cmd->add_option("--seq-len", *seq_len, "evaluation window length"), "seq-len",
               seq_len.get());
  params->bind(cmd->add_option("--calib-count", *calib_count, "calibration sample count"),
               "calib-count", calib_count.get());
  params->bind(cmd->add_option("--calib-seq-len", *calib_seq_len, "calibration sample length"),
               "calib-seq-len", calib_seq_len.get());
  params->bind_seed(cmd->add_option("--seed", *seed, "calibration sampling seed"), "seed",
                    seed.get());
  params->bind(cmd->add_option("--out", *out, "output CSV"), "out", out.get());

  cmd->callback([=]() {
    const json run_config = params->resolve("sweep");
    require_value(*model_path, "--model");
    require_value(*corpus_path, "--corpus");
    require_value(*out, "--out");
    const TransformerModel model = load_model(*model_path);
    const TokenCorpus corpus =
        load_corpus(*corpus_path, resolve_corpus_format(*corpus_format, *corpus_path));
    const CalibrationSet calib = sample_calibration(corpus, *calib_count, *calib_seq_len, *seed);
    const auto rows = sparsity_sweep(model, corpus, calib, *sparsities, *seq_len);
    write_csv_with_meta(*out, sweep_to_csv(rows), run_config);
    std::cout << "sweep: " << rows.size() << " rows -> " << *out << "\n";
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SLEB: block-redundancy pruning toolkit for toy decoder-only transformers"};
  app.set_version_flag("--version", std::string("sleb ") + kToolVersion);
  app.require_subcommand(1);

  setup_gen_model(app);
  setup_gen_corpus(app);
  setup_prune(app);
  setup_eval(app);
  setup_analyze(app);
  setup_bench(app);
  setup_oracle(app);
  setup_sweep(app);

  try {
    app.parse(argc, argv);
    return 0;
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const CapacityError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
