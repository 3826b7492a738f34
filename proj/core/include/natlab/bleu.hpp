#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace natlab {

// Corpus-level BLEU with 4-gram clipped precisions and brevity penalty:
//   bleu = 100 * BP * exp(1/4 sum_n ln p_n), 0 when any p_n is 0.
struct BleuReport {
  double bleu = 0.0;
  std::array<double, 4> precisions{};  // p1..p4
  double brevity_penalty = 1.0;
  int64_t hyp_tokens = 0;
  int64_t ref_tokens = 0;
};

BleuReport corpus_bleu(const std::vector<std::vector<std::string>>& hypotheses,
                       const std::vector<std::vector<std::string>>& references);

std::string format_bleu(const BleuReport& report);

}  // namespace natlab
