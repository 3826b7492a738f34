#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "natlab/rng.hpp"
#include "natlab/vocab.hpp"

namespace natlab {

// One aligned sentence pair; the source carries [LEN] at position 0 so the
// encoder's first state can host the length classifier.
struct SentencePair {
  std::vector<int32_t> source_ids;
  std::vector<int32_t> target_ids;
};

struct LoadStats {
  size_t loaded = 0;
  size_t rejected_too_long = 0;
};

// Parallel corpus = two aligned UTF-8 files, one sentence per line.
// Unknown tokens map to [UNK]; targets longer than n_max are dropped with a
// counted warning; a line-count mismatch is fatal.
std::vector<SentencePair> load_parallel(const std::string& src_path, const std::string& tgt_path,
                                        const Vocab& vocab, int n_max,
                                        LoadStats* stats = nullptr);

enum class ToyTask { Copy, Reverse, Cipher };

ToyTask toy_task_from_name(const std::string& name);

// Deterministic synthetic parallel corpus. Tokens are "t00".."tNN";
// Cipher applies a fixed seed-derived token bijection. target_noise
// replaces that fraction of target tokens with random vocabulary tokens
// (training-side corruption for robustness experiments).
void gen_toy_corpus(ToyTask task, int vocab_size, int n_pairs, int max_len, uint64_t seed,
                    const std::string& src_path, const std::string& tgt_path,
                    double target_noise = 0.0);

// Length-bucketed batches of pair indices, each batch holding at most
// tokens_per_batch target tokens; batch order is shuffled by the rng while
// batch composition is a pure function of the pairs.
std::vector<std::vector<int>> make_batches(const std::vector<SentencePair>& pairs,
                                           int tokens_per_batch, Rng rng);

// Row-padded id matrix. Rows reconstruct exactly via lengths (pad id fills
// the tail, never interior positions).
struct Padded2D {
  int rows = 0;
  int width = 0;
  std::vector<int32_t> ids;  // rows * width, PAD_ID filled
  std::vector<int> lengths;

  int32_t at(int r, int c) const { return ids[static_cast<size_t>(r) * width + c]; }
  std::vector<int32_t> row(int r) const {
    return {ids.begin() + static_cast<int64_t>(r) * width,
            ids.begin() + static_cast<int64_t>(r) * width + lengths[static_cast<size_t>(r)]};
  }
};

Padded2D pad_ids(const std::vector<std::vector<int32_t>>& rows);

}  // namespace natlab
