#include "sleb/data.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "sleb/rng.hpp"

namespace sleb {

using json = nlohmann::json;

size_t TokenCorpus::total_tokens() const {
  size_t n = 0;
  for (const auto& s : sequences) {
    n += s.size();
  }
  return n;
}

namespace {

constexpr char kCorpusMagic[8] = {'S', 'L', 'E', 'B', 'T', 'O', 'K', '1'};

std::string default_name(const std::string& path, const std::string& name) {
  if (!name.empty()) {
    return name;
  }
  return std::filesystem::path(path).stem().string();
}

TokenCorpus load_jsonl(const std::string& path, const std::string& name) {
  std::ifstream in(path);
  if (!in) {
    throw FormatError("cannot open corpus file '" + path + "'");
  }
  TokenCorpus corpus;
  corpus.name = name;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) {
      continue;
    }
    json arr;
    try {
      arr = json::parse(line);
    } catch (const json::exception& e) {
      throw FormatError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (!arr.is_array()) {
      throw FormatError(path + ":" + std::to_string(line_no) + ": expected a JSON array");
    }
    std::vector<uint32_t> seq;
    seq.reserve(arr.size());
    for (const json& v : arr) {
      if (!v.is_number_integer()) {
        throw FormatError(path + ":" + std::to_string(line_no) +
                          ": token ids must be integers");
      }
      const int64_t id = v.get<int64_t>();
      if (id < 0) {
        throw ValueError(path + ":" + std::to_string(line_no) + ": negative token id " +
                         std::to_string(id));
      }
      if (id > static_cast<int64_t>(UINT32_MAX)) {
        throw ValueError(path + ":" + std::to_string(line_no) + ": token id " +
                         std::to_string(id) + " out of 32-bit range");
      }
      seq.push_back(static_cast<uint32_t>(id));
    }
    corpus.sequences.push_back(std::move(seq));
  }
  return corpus;
}

TokenCorpus load_binary(const std::string& path, const std::string& name) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw FormatError("cannot open corpus file '" + path + "'");
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string bytes = buf.str();

  size_t off = 0;
  auto need = [&](size_t n, const char* what) {
    if (off + n > bytes.size()) {
      throw FormatError(path + ": truncated at offset " + std::to_string(off) +
                        " while reading " + what);
    }
  };
  auto read_u32 = [&](const char* what) {
    need(4, what);
    const unsigned char* p = reinterpret_cast<const unsigned char*>(bytes.data()) + off;
    off += 4;
    return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
           (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
  };

  need(sizeof(kCorpusMagic), "magic");
  if (std::memcmp(bytes.data(), kCorpusMagic, sizeof(kCorpusMagic)) != 0) {
    throw FormatError(path + ": bad magic (expected SLEBTOK1)");
  }
  off = sizeof(kCorpusMagic);

  TokenCorpus corpus;
  corpus.name = name;
  const uint32_t n_seq = read_u32("sequence count");
  corpus.sequences.reserve(n_seq);
  for (uint32_t i = 0; i < n_seq; ++i) {
    const uint32_t len = read_u32("sequence length");
    need(static_cast<size_t>(len) * 4, "sequence payload");
    std::vector<uint32_t> seq(len);
    for (uint32_t t = 0; t < len; ++t) {
      seq[t] = read_u32("token id");
    }
    corpus.sequences.push_back(std::move(seq));
  }
  if (off != bytes.size()) {
    throw FormatError(path + ": trailing bytes after sequences");
  }
  return corpus;
}

}  // namespace

TokenCorpus load_corpus(const std::string& path, CorpusFormat format,
                        const std::string& name) {
  TokenCorpus corpus = format == CorpusFormat::kJsonLines
                           ? load_jsonl(path, default_name(path, name))
                           : load_binary(path, default_name(path, name));
  if (corpus.sequences.empty()) {
    throw FormatError(path + ": empty corpus");
  }
  return corpus;
}

void save_corpus(const TokenCorpus& corpus, const std::string& path, CorpusFormat format) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw FormatError("cannot open '" + path + "' for writing");
  }
  if (format == CorpusFormat::kJsonLines) {
    for (const auto& seq : corpus.sequences) {
      out << json(seq).dump() << "\n";
    }
  } else {
    auto write_u32 = [&](uint32_t v) {
      char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                   static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
      out.write(b, 4);
    };
    out.write(kCorpusMagic, sizeof(kCorpusMagic));
    write_u32(static_cast<uint32_t>(corpus.sequences.size()));
    for (const auto& seq : corpus.sequences) {
      write_u32(static_cast<uint32_t>(seq.size()));
      for (uint32_t id : seq) {
        write_u32(id);
      }
    }
  }
  if (!out) {
    throw FormatError("failed writing corpus to '" + path + "'");
  }
}

CalibrationSet sample_calibration(const TokenCorpus& corpus, size_t count, size_t seq_len,
                                  uint64_t seed) {
  if (seq_len == 0) {
    throw ValueError("sample_calibration: seq_len must be positive");
  }
  CalibrationSet cs;
  cs.source = corpus.name;
  cs.seed = seed;
  cs.seq_len = seq_len;
  if (count == 0) {
    return cs;
  }

  Rng rng(seed);
  std::vector<size_t> eligible;
  for (size_t i = 0; i < corpus.sequences.size(); ++i) {
    if (corpus.sequences[i].size() >= seq_len) {
      eligible.push_back(i);
    }
  }

  if (eligible.size() >= count) {
    // Partial Fisher-Yates: `count` distinct sequences, then a uniform slice.
    for (size_t i = 0; i < count; ++i) {
      const size_t j = i + static_cast<size_t>(rng.index(eligible.size() - i));
      std::swap(eligible[i], eligible[j]);
      const auto& src = corpus.sequences[eligible[i]];
      const size_t off = static_cast<size_t>(rng.index(src.size() - seq_len + 1));
      cs.sequences.emplace_back(src.begin() + off, src.begin() + off + seq_len);
    }
    return cs;
  }

  // Fallback: sample offsets from the concatenated token stream.
  std::vector<uint32_t> flat;
  flat.reserve(corpus.total_tokens());
  for (const auto& seq : corpus.sequences) {
    flat.insert(flat.end(), seq.begin(), seq.end());
  }
  if (flat.size() < seq_len) {
    throw CapacityError("sample_calibration: corpus has " + std::to_string(flat.size()) +
                        " tokens, need at least " + std::to_string(seq_len));
  }
  for (size_t i = 0; i < count; ++i) {
    const size_t off = static_cast<size_t>(rng.index(flat.size() - seq_len + 1));
    cs.sequences.emplace_back(flat.begin() + off, flat.begin() + off + seq_len);
  }
  return cs;
}

std::vector<std::vector<uint32_t>> eval_windows(const TokenCorpus& corpus, size_t seq_len) {
  if (seq_len == 0) {
    throw ValueError("eval_windows: seq_len must be positive");
  }
  std::vector<uint32_t> flat;
  flat.reserve(corpus.total_tokens());
  for (const auto& seq : corpus.sequences) {
    flat.insert(flat.end(), seq.begin(), seq.end());
  }
  if (flat.size() < seq_len) {
    throw CapacityError("eval_windows: corpus has " + std::to_string(flat.size()) +
                        " tokens, need at least " + std::to_string(seq_len));
  }
  const size_t n_windows = flat.size() / seq_len;
  std::vector<std::vector<uint32_t>> windows;
  windows.reserve(n_windows);
  for (size_t w = 0; w < n_windows; ++w) {
    windows.emplace_back(flat.begin() + w * seq_len, flat.begin() + (w + 1) * seq_len);
  }
  return windows;
}

TokenCorpus synthetic_corpus(size_t vocab, size_t n_sequences, size_t min_len,
                             size_t max_len, uint64_t seed, const std::string& name) {
  if (vocab < 2) {
    throw ValueError("synthetic_corpus: vocab must be >= 2");
  }
  if (n_sequences == 0) {
    throw ValueError("synthetic_corpus: need at least one sequence");
  }
  if (min_len == 0 || min_len > max_len) {
    throw ValueError("synthetic_corpus: need 1 <= min_len <= max_len");
  }
  Rng rng(seed);
  const size_t branch = std::min<size_t>(4, vocab);
  std::vector<uint32_t> successors(vocab * branch);
  for (uint32_t& s : successors) {
    s = static_cast<uint32_t>(rng.index(vocab));
  }
  TokenCorpus corpus;
  corpus.name = name;
  corpus.sequences.reserve(n_sequences);
  for (size_t i = 0; i < n_sequences; ++i) {
    const size_t len = min_len + static_cast<size_t>(rng.index(max_len - min_len + 1));
    std::vector<uint32_t> seq;
    seq.reserve(len);
    uint32_t cur = static_cast<uint32_t>(rng.index(vocab));
    for (size_t t = 0; t < len; ++t) {
      seq.push_back(cur);
      cur = successors[cur * branch + rng.index(branch)];
    }
    corpus.sequences.push_back(std::move(seq));
  }
  return corpus;
}

}  // namespace sleb
