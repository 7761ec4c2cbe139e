#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <string>

#include <unistd.h>

#include "sleb/data.hpp"
#include "sleb/io_util.hpp"

using namespace sleb;

namespace {

struct TempDir {
  std::filesystem::path path;

  TempDir() {
    static int counter = 0;
    path = std::filesystem::temp_directory_path() /
           ("sleb_data_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

}  // namespace

TEST_CASE("jsonl corpus: two lines parse into two sequences") {
  TempDir dir;
  const std::string path = dir.file("c.jsonl");
  write_text_file(path, "[1,2,3]\n[4]\n");
  const TokenCorpus corpus = load_corpus(path, CorpusFormat::kJsonLines);
  REQUIRE(corpus.sequences.size() == 2);
  CHECK(corpus.sequences[0] == std::vector<uint32_t>{1, 2, 3});
  CHECK(corpus.sequences[1] == std::vector<uint32_t>{4});
  CHECK(corpus.name == "c");
}

TEST_CASE("empty corpus file is an error") {
  TempDir dir;
  const std::string path = dir.file("empty.jsonl");
  write_text_file(path, "");
  CHECK_THROWS_WITH_AS(load_corpus(path, CorpusFormat::kJsonLines),
                       doctest::Contains("empty"), FormatError);
}

TEST_CASE("negative token id is a value error with the line number") {
  TempDir dir;
  const std::string path = dir.file("neg.jsonl");
  write_text_file(path, "[1,2]\n[3,-4]\n");
  CHECK_THROWS_WITH_AS(load_corpus(path, CorpusFormat::kJsonLines), doctest::Contains(":2"),
                       ValueError);
}

TEST_CASE("malformed jsonl line reports the line") {
  TempDir dir;
  const std::string path = dir.file("bad.jsonl");
  write_text_file(path, "[1,2]\nnot json\n");
  CHECK_THROWS_WITH_AS(load_corpus(path, CorpusFormat::kJsonLines), doctest::Contains(":2"),
                       FormatError);
}

TEST_CASE("corpus round-trips through both formats") {
  TempDir dir;
  const TokenCorpus corpus = synthetic_corpus(50, 20, 5, 40, 7, "roundtrip");
  for (CorpusFormat fmt : {CorpusFormat::kJsonLines, CorpusFormat::kBinary}) {
    const std::string path =
        dir.file(fmt == CorpusFormat::kJsonLines ? "rt.jsonl" : "rt.tok");
    save_corpus(corpus, path, fmt);
    const TokenCorpus back = load_corpus(path, fmt, "roundtrip");
    CHECK(back.sequences == corpus.sequences);
  }
}

TEST_CASE("truncated binary corpus is a format error") {
  TempDir dir;
  const TokenCorpus corpus = synthetic_corpus(50, 4, 8, 8, 11);
  const std::string path = dir.file("cut.tok");
  save_corpus(corpus, path, CorpusFormat::kBinary);
  std::string bytes = read_text_file(path);
  write_text_file(path, bytes.substr(0, bytes.size() - 6));
  CHECK_THROWS_WITH_AS(load_corpus(path, CorpusFormat::kBinary),
                       doctest::Contains("truncated"), FormatError);
}

TEST_CASE("sample_calibration is deterministic in the seed") {
  const TokenCorpus corpus = synthetic_corpus(64, 200, 16, 48, 3);
  const CalibrationSet a = sample_calibration(corpus, 16, 12, 5);
  const CalibrationSet b = sample_calibration(corpus, 16, 12, 5);
  CHECK(a.sequences == b.sequences);
  REQUIRE(a.sequences.size() == 16);
  for (const auto& s : a.sequences) {
    CHECK(s.size() == 12);
  }
}

TEST_CASE("sample_calibration: count zero gives an empty set") {
  const TokenCorpus corpus = synthetic_corpus(64, 10, 16, 16, 3);
  CHECK(sample_calibration(corpus, 0, 8, 1).sequences.empty());
}

TEST_CASE("different seeds give different calibration sets") {
  const TokenCorpus corpus = synthetic_corpus(64, 1000, 16, 48, 3);
  const CalibrationSet a = sample_calibration(corpus, 8, 12, 1);
  const CalibrationSet b = sample_calibration(corpus, 8, 12, 2);
  CHECK(a.sequences != b.sequences);
}

TEST_CASE("calibration slices are contiguous runs of some source sequence") {
  const TokenCorpus corpus = synthetic_corpus(32, 60, 20, 30, 9);
  const CalibrationSet cs = sample_calibration(corpus, 10, 8, 4);
  for (const auto& sample : cs.sequences) {
    bool found = false;
    for (const auto& src : corpus.sequences) {
      for (size_t off = 0; !found && off + sample.size() <= src.size(); ++off) {
        found = std::equal(sample.begin(), sample.end(), src.begin() + off);
      }
      if (found) {
        break;
      }
    }
    CHECK(found);
  }
}

TEST_CASE("calibration falls back to the concatenated stream") {
  // Three short sequences, none long enough on its own.
  TokenCorpus corpus;
  corpus.name = "short";
  corpus.sequences = {{1, 2, 3}, {4, 5}, {6, 7, 8, 9}};
  const CalibrationSet cs = sample_calibration(corpus, 5, 6, 2);
  REQUIRE(cs.sequences.size() == 5);
  const std::vector<uint32_t> flat = {1, 2, 3, 4, 5, 6, 7, 8, 9};
  for (const auto& sample : cs.sequences) {
    REQUIRE(sample.size() == 6);
    bool found = false;
    for (size_t off = 0; off + 6 <= flat.size(); ++off) {
      found = found || std::equal(sample.begin(), sample.end(), flat.begin() + off);
    }
    CHECK(found);
  }
}

TEST_CASE("calibration with too few tokens is a capacity error") {
  TokenCorpus corpus;
  corpus.name = "tiny";
  corpus.sequences = {{1, 2, 3}};
  CHECK_THROWS_AS(sample_calibration(corpus, 4, 10, 0), CapacityError);
}

TEST_CASE("eval_windows drops the trailing remainder") {
  TokenCorpus corpus;
  corpus.name = "w";
  corpus.sequences = {{0, 1, 2, 3, 4, 5, 6, 7, 8, 9}};
  const auto windows = eval_windows(corpus, 4);
  REQUIRE(windows.size() == 2);
  CHECK(windows[0] == std::vector<uint32_t>{0, 1, 2, 3});
  CHECK(windows[1] == std::vector<uint32_t>{4, 5, 6, 7});
}

TEST_CASE("eval_windows covers exact multiples exactly") {
  TokenCorpus corpus;
  corpus.name = "w";
  corpus.sequences = {{0, 1, 2, 3, 4, 5}};
  const auto windows = eval_windows(corpus, 3);
  REQUIRE(windows.size() == 2);
  size_t covered = 0;
  for (const auto& w : windows) {
    covered += w.size();
  }
  CHECK(covered == 6);
}

TEST_CASE("eval_windows matches a hand concatenation over multiple sequences") {
  TokenCorpus corpus;
  corpus.name = "w";
  corpus.sequences = {{9, 8}, {7}, {6, 5, 4, 3}};
  const auto windows = eval_windows(corpus, 3);
  REQUIRE(windows.size() == 2);
  CHECK(windows[0] == std::vector<uint32_t>{9, 8, 7});
  CHECK(windows[1] == std::vector<uint32_t>{6, 5, 4});
}

TEST_CASE("eval_windows with too little data is a capacity error") {
  TokenCorpus corpus;
  corpus.name = "w";
  corpus.sequences = {{1, 2}};
  CHECK_THROWS_AS(eval_windows(corpus, 3), CapacityError);
}

TEST_CASE("synthetic corpus is seeded and respects the length range") {
  const TokenCorpus a = synthetic_corpus(40, 30, 5, 9, 77);
  const TokenCorpus b = synthetic_corpus(40, 30, 5, 9, 77);
  CHECK(a.sequences == b.sequences);
  std::set<size_t> lengths;
  for (const auto& s : a.sequences) {
    REQUIRE(s.size() >= 5);
    REQUIRE(s.size() <= 9);
    lengths.insert(s.size());
    for (uint32_t id : s) {
      CHECK(id < 40);
    }
  }
  CHECK(lengths.size() > 1);
}
