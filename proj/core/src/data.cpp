#include "natlab/data.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include "natlab/common.hpp"

namespace natlab {

namespace {

std::vector<std::vector<std::string>> read_lines_tokenized(const std::string& path) {
  std::ifstream in(path);
  check(in.good(), "cannot open corpus file '", path, "'");
  std::vector<std::vector<std::string>> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(tokenize(line));
  return lines;
}

}  // namespace

std::vector<SentencePair> load_parallel(const std::string& src_path, const std::string& tgt_path,
                                        const Vocab& vocab, int n_max, LoadStats* stats) {
  auto src_lines = read_lines_tokenized(src_path);
  auto tgt_lines = read_lines_tokenized(tgt_path);
  check(src_lines.size() == tgt_lines.size(), "parallel corpus line counts differ: '", src_path,
        "' has ", src_lines.size(), " lines, '", tgt_path, "' has ", tgt_lines.size());

  LoadStats local;
  std::vector<SentencePair> pairs;
  pairs.reserve(src_lines.size());
  for (size_t i = 0; i < src_lines.size(); ++i) {
    if (src_lines[i].empty() || tgt_lines[i].empty()) continue;
    if (static_cast<int>(tgt_lines[i].size()) > n_max) {
      ++local.rejected_too_long;
      continue;
    }
    SentencePair p;
    p.source_ids.reserve(src_lines[i].size() + 1);
    p.source_ids.push_back(LEN_ID);
    for (const auto& tok : src_lines[i]) p.source_ids.push_back(vocab.id_of(tok));
    p.target_ids = vocab.encode(tgt_lines[i]);
    pairs.push_back(std::move(p));
    ++local.loaded;
  }
  if (stats) *stats = local;
  return pairs;
}

ToyTask toy_task_from_name(const std::string& name) {
  if (name == "copy") return ToyTask::Copy;
  if (name == "reverse") return ToyTask::Reverse;
  if (name == "cipher" || name == "substitution-cipher") return ToyTask::Cipher;
  fatal("unknown toy task '", name, "' (expected copy, reverse or cipher)");
}

void gen_toy_corpus(ToyTask task, int vocab_size, int n_pairs, int max_len, uint64_t seed,
                    const std::string& src_path, const std::string& tgt_path,
                    double target_noise) {
  check(vocab_size >= 8, "toy corpus needs vocab_size >= 8, got ", vocab_size);
  check(max_len >= 1 && n_pairs >= 0, "bad toy corpus dimensions");

  std::vector<std::string> words(static_cast<size_t>(vocab_size));
  for (int i = 0; i < vocab_size; ++i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "t%02d", i);
    words[static_cast<size_t>(i)] = buf;
  }

  // The cipher permutation depends only on the seed, so train and held-out
  // splits generated with different pair streams share one "translation".
  std::vector<int> cipher(static_cast<size_t>(vocab_size));
  std::iota(cipher.begin(), cipher.end(), 0);
  Rng perm_rng = Rng(seed).fork(0x636970u);  // cipher permutation stream
  perm_rng.shuffle(cipher);

  Rng data_rng = Rng(seed).fork(0x64617461u);  // sentence stream
  Rng noise_rng = Rng(seed).fork(0x6e6f6973u);

  std::ofstream src(src_path), tgt(tgt_path);
  check(src.good(), "cannot write '", src_path, "'");
  check(tgt.good(), "cannot write '", tgt_path, "'");

  for (int p = 0; p < n_pairs; ++p) {
    const int len = 1 + static_cast<int>(data_rng.below(static_cast<uint64_t>(max_len)));
    std::vector<int> source(static_cast<size_t>(len));
    for (int& w : source) w = static_cast<int>(data_rng.below(static_cast<uint64_t>(vocab_size)));

    std::vector<int> target;
    target.reserve(source.size());
    switch (task) {
      case ToyTask::Copy:
        target = source;
        break;
      case ToyTask::Reverse:
        target.assign(source.rbegin(), source.rend());
        break;
      case ToyTask::Cipher:
        for (int w : source) target.push_back(cipher[static_cast<size_t>(w)]);
        break;
    }
    if (target_noise > 0.0) {
      for (int& w : target)
        if (noise_rng.bernoulli(target_noise))
          w = static_cast<int>(noise_rng.below(static_cast<uint64_t>(vocab_size)));
    }

    for (size_t i = 0; i < source.size(); ++i)
      src << (i ? " " : "") << words[static_cast<size_t>(source[i])];
    src << '\n';
    for (size_t i = 0; i < target.size(); ++i)
      tgt << (i ? " " : "") << words[static_cast<size_t>(target[i])];
    tgt << '\n';
  }
}

std::vector<std::vector<int>> make_batches(const std::vector<SentencePair>& pairs,
                                           int tokens_per_batch, Rng rng) {
  int longest = 0;
  for (const auto& p : pairs) longest = std::max(longest, static_cast<int>(p.target_ids.size()));
  check(tokens_per_batch >= longest, "tokens_per_batch (", tokens_per_batch,
        ") is smaller than the longest target sentence (", longest, ")");

  // Bucket by target length (stable on corpus order) so batches pad little,
  // then fill greedily under the token budget.
  std::vector<int> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return pairs[static_cast<size_t>(a)].target_ids.size() <
           pairs[static_cast<size_t>(b)].target_ids.size();
  });

  std::vector<std::vector<int>> batches;
  std::vector<int> current;
  int current_tokens = 0;
  for (int idx : order) {
    const int len = static_cast<int>(pairs[static_cast<size_t>(idx)].target_ids.size());
    if (current_tokens + len > tokens_per_batch && !current.empty()) {
      batches.push_back(std::move(current));
      current = {};
      current_tokens = 0;
    }
    current.push_back(idx);
    current_tokens += len;
  }
  if (!current.empty()) batches.push_back(std::move(current));

  rng.shuffle(batches);
  return batches;
}

Padded2D pad_ids(const std::vector<std::vector<int32_t>>& rows) {
  Padded2D out;
  out.rows = static_cast<int>(rows.size());
  for (const auto& r : rows) out.width = std::max(out.width, static_cast<int>(r.size()));
  out.ids.assign(static_cast<size_t>(out.rows) * out.width, PAD_ID);
  out.lengths.reserve(rows.size());
  for (int r = 0; r < out.rows; ++r) {
    const auto& row = rows[static_cast<size_t>(r)];
    out.lengths.push_back(static_cast<int>(row.size()));
    std::copy(row.begin(), row.end(), out.ids.begin() + static_cast<int64_t>(r) * out.width);
  }
  return out;
}

}  // namespace natlab
