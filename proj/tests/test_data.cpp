#include <doctest.h>

#include <fstream>
#include <map>
#include <set>

#include "natlab/data.hpp"
#include "support/toy.hpp"

using namespace natlab;

namespace {

void write_lines(const std::string& path, const std::vector<std::string>& lines) {
  std::ofstream out(path);
  for (const auto& l : lines) out << l << '\n';
}

}  // namespace

TEST_SUITE("data") {

TEST_CASE("vocab: reserved ids are fixed and corpus ids follow") {
  Vocab v = Vocab::from_corpus_tokens({"alpha", "beta"});
  CHECK(v.id_of("[PAD]") == PAD_ID);
  CHECK(v.id_of("[MASK]") == MASK_ID);
  CHECK(v.id_of("[LEN]") == LEN_ID);
  CHECK(v.id_of("[UNK]") == UNK_ID);
  CHECK(v.id_of("alpha") == NUM_RESERVED);
  CHECK(v.id_of("beta") == NUM_RESERVED + 1);
  CHECK(v.id_of("missing") == UNK_ID);
  CHECK(v.token_of(NUM_RESERVED) == "alpha");
  CHECK(v.size() == NUM_RESERVED + 2);
}

TEST_CASE("vocab file round trip: line number - 1 + reserved offset = id") {
  const std::string dir = toy::make_temp_dir("vocab");
  Vocab v = Vocab::from_corpus_tokens({"x", "y", "z"});
  v.save(dir + "/vocab.txt");
  CHECK(toy::read_file(dir + "/vocab.txt") == "x\ny\nz\n");
  Vocab loaded = Vocab::load(dir + "/vocab.txt");
  CHECK(loaded.id_of("y") == NUM_RESERVED + 1);
  CHECK(loaded.size() == v.size());
}

TEST_CASE("tokenize/detokenize round trip on normalized text") {
  const std::string line = "the cat went through an open window";
  CHECK(detokenize(tokenize(line)) == line);
  CHECK(detokenize(tokenize("  a   b \t c ")) == "a b c");
  CHECK(tokenize("").empty());
}

TEST_CASE("load_parallel: empty files give an empty list") {
  const std::string dir = toy::make_temp_dir("load_empty");
  write_lines(dir + "/s", {});
  write_lines(dir + "/t", {});
  Vocab v = Vocab::from_corpus_tokens({"a"});
  CHECK(load_parallel(dir + "/s", dir + "/t", v, 10).empty());
}

TEST_CASE("load_parallel: three lines give three pairs in order, [LEN] prepended") {
  const std::string dir = toy::make_temp_dir("load3");
  write_lines(dir + "/s", {"a b", "b", "a a a"});
  write_lines(dir + "/t", {"b a", "a", "b b b"});
  Vocab v = Vocab::from_corpus_tokens({"a", "b"});
  auto pairs = load_parallel(dir + "/s", dir + "/t", v, 10);
  REQUIRE(pairs.size() == 3);
  CHECK(pairs[0].source_ids == std::vector<int32_t>{LEN_ID, 6, 7});
  CHECK(pairs[0].target_ids == std::vector<int32_t>{7, 6});
  CHECK(pairs[2].target_ids == std::vector<int32_t>{7, 7, 7});
}

TEST_CASE("load_parallel: unknown tokens map to [UNK]") {
  const std::string dir = toy::make_temp_dir("load_unk");
  write_lines(dir + "/s", {"a mystery"});
  write_lines(dir + "/t", {"mystery a"});
  Vocab v = Vocab::from_corpus_tokens({"a"});
  auto pairs = load_parallel(dir + "/s", dir + "/t", v, 10);
  REQUIRE(pairs.size() == 1);
  CHECK(pairs[0].source_ids == std::vector<int32_t>{LEN_ID, 6, UNK_ID});
  CHECK(pairs[0].target_ids == std::vector<int32_t>{UNK_ID, 6});
}

TEST_CASE("load_parallel: overlong targets are rejected and counted") {
  const std::string dir = toy::make_temp_dir("load_long");
  std::string long_line = "a";
  for (int i = 0; i < 8; ++i) long_line += " a";  // 9 tokens
  write_lines(dir + "/s", {"a", "a"});
  write_lines(dir + "/t", {long_line, "a"});
  Vocab v = Vocab::from_corpus_tokens({"a"});
  LoadStats stats;
  auto pairs = load_parallel(dir + "/s", dir + "/t", v, 8, &stats);
  CHECK(pairs.size() == 1);
  CHECK(stats.rejected_too_long == 1);
}

TEST_CASE("load_parallel: line-count mismatch is fatal and names both counts") {
  const std::string dir = toy::make_temp_dir("load_mismatch");
  write_lines(dir + "/s", {"a", "a"});
  write_lines(dir + "/t", {"a"});
  Vocab v = Vocab::from_corpus_tokens({"a"});
  CHECK_THROWS_WITH_AS(load_parallel(dir + "/s", dir + "/t", v, 10), doctest::Contains("2"),
                       FatalError);
}

TEST_CASE("gen_toy_corpus: copy and reverse semantics") {
  const std::string dir = toy::make_temp_dir("gen");
  gen_toy_corpus(ToyTask::Copy, 8, 20, 6, 42, dir + "/cs", dir + "/ct");
  Vocab v = Vocab::build({dir + "/cs", dir + "/ct"});
  auto pairs = load_parallel(dir + "/cs", dir + "/ct", v, 100);
  REQUIRE(pairs.size() == 20);
  for (const auto& p : pairs) {
    std::vector<int32_t> src_body(p.source_ids.begin() + 1, p.source_ids.end());
    CHECK(src_body == p.target_ids);
  }

  gen_toy_corpus(ToyTask::Reverse, 8, 20, 6, 42, dir + "/rs", dir + "/rt");
  auto rpairs = load_parallel(dir + "/rs", dir + "/rt", v, 100);
  for (const auto& p : rpairs) {
    std::vector<int32_t> src_body(p.source_ids.begin() + 1, p.source_ids.end());
    std::vector<int32_t> rev(p.target_ids.rbegin(), p.target_ids.rend());
    CHECK(src_body == rev);
  }
}

TEST_CASE("gen_toy_corpus: identical seeds give byte-identical files") {
  const std::string dir = toy::make_temp_dir("gen_det");
  gen_toy_corpus(ToyTask::Cipher, 16, 50, 10, 7, dir + "/s1", dir + "/t1");
  gen_toy_corpus(ToyTask::Cipher, 16, 50, 10, 7, dir + "/s2", dir + "/t2");
  CHECK(toy::read_file(dir + "/s1") == toy::read_file(dir + "/s2"));
  CHECK(toy::read_file(dir + "/t1") == toy::read_file(dir + "/t2"));
}

TEST_CASE("gen_toy_corpus: cipher mapping is a seed-stable token bijection") {
  const std::string dir = toy::make_temp_dir("gen_cipher");
  gen_toy_corpus(ToyTask::Cipher, 12, 300, 8, 9, dir + "/s", dir + "/t");
  std::ifstream src(dir + "/s"), tgt(dir + "/t");
  std::string sline, tline;
  std::map<std::string, std::string> mapping;
  std::map<std::string, std::string> inverse;
  while (std::getline(src, sline) && std::getline(tgt, tline)) {
    const auto ss = tokenize(sline);
    const auto ts = tokenize(tline);
    REQUIRE(ss.size() == ts.size());
    for (size_t i = 0; i < ss.size(); ++i) {
      auto [it, fresh] = mapping.emplace(ss[i], ts[i]);
      if (!fresh) CHECK(it->second == ts[i]);
      auto [jt, fresh2] = inverse.emplace(ts[i], ss[i]);
      if (!fresh2) CHECK(jt->second == ss[i]);
    }
  }
}

TEST_CASE("gen_toy_corpus: noise corrupts roughly the requested share of target tokens") {
  const std::string dir = toy::make_temp_dir("gen_noise");
  gen_toy_corpus(ToyTask::Copy, 16, 2000, 10, 3, dir + "/s", dir + "/t", 0.1);
  std::ifstream src(dir + "/s"), tgt(dir + "/t");
  std::string sline, tline;
  int64_t tokens = 0, changed = 0;
  while (std::getline(src, sline) && std::getline(tgt, tline)) {
    const auto ss = tokenize(sline);
    const auto ts = tokenize(tline);
    for (size_t i = 0; i < ss.size(); ++i) {
      ++tokens;
      if (ss[i] != ts[i]) ++changed;
    }
  }
  // 10% corruption, but a random replacement can coincide with the original
  // (1/16), so the observed rate centers near 0.094.
  const double rate = static_cast<double>(changed) / static_cast<double>(tokens);
  CHECK(rate > 0.07);
  CHECK(rate < 0.12);
}

TEST_CASE("make_batches: a single pair forms a single batch") {
  std::vector<SentencePair> pairs = {{{LEN_ID, 6}, {6, 6, 6}}};
  auto batches = make_batches(pairs, 10, Rng(1));
  REQUIRE(batches.size() == 1);
  CHECK(batches[0] == std::vector<int>{0});
}

TEST_CASE("make_batches: two length-5 pairs fit a 10-token budget together") {
  std::vector<SentencePair> pairs(2);
  pairs[0].target_ids.assign(5, 6);
  pairs[1].target_ids.assign(5, 7);
  auto batches = make_batches(pairs, 10, Rng(1));
  REQUIRE(batches.size() == 1);
  CHECK(batches[0].size() == 2);
}

TEST_CASE("make_batches conserves tokens and respects the budget") {
  Rng master(11);
  std::vector<SentencePair> pairs;
  int64_t total_tokens = 0;
  for (int i = 0; i < 137; ++i) {
    Rng r = master.fork(static_cast<uint64_t>(i));
    SentencePair p;
    p.target_ids.assign(1 + r.below(14), 6);
    total_tokens += static_cast<int64_t>(p.target_ids.size());
    pairs.push_back(std::move(p));
  }
  auto batches = make_batches(pairs, 64, Rng(3));
  int64_t seen = 0;
  std::set<int> indices;
  for (const auto& b : batches) {
    int64_t batch_tokens = 0;
    for (int idx : b) {
      CHECK(indices.insert(idx).second);
      batch_tokens += static_cast<int64_t>(pairs[static_cast<size_t>(idx)].target_ids.size());
    }
    CHECK(batch_tokens <= 64);
    seen += batch_tokens;
  }
  CHECK(seen == total_tokens);
  CHECK(indices.size() == pairs.size());
}

TEST_CASE("make_batches: budget below the longest sentence is fatal") {
  std::vector<SentencePair> pairs(1);
  pairs[0].target_ids.assign(12, 6);
  CHECK_THROWS_AS(make_batches(pairs, 8, Rng(1)), FatalError);
}

TEST_CASE("pad_ids reconstructs member rows exactly") {
  std::vector<std::vector<int32_t>> rows = {{6, 7, 8}, {9}, {10, 11}};
  const Padded2D padded = pad_ids(rows);
  CHECK(padded.rows == 3);
  CHECK(padded.width == 3);
  for (int r = 0; r < 3; ++r) CHECK(padded.row(r) == rows[static_cast<size_t>(r)]);
  CHECK(padded.at(1, 1) == PAD_ID);
  CHECK(padded.at(1, 2) == PAD_ID);
}

}  // TEST_SUITE
