#include "natlab/bleu.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include "natlab/common.hpp"

namespace natlab {

namespace {

// n-gram -> count; tokens joined with an unstriped separator byte.
std::map<std::string, int> ngram_counts(const std::vector<std::string>& tokens, size_t n) {
  std::map<std::string, int> counts;
  if (tokens.size() < n) return counts;
  for (size_t i = 0; i + n <= tokens.size(); ++i) {
    std::string key;
    for (size_t j = 0; j < n; ++j) {
      if (j) key += '\x1f';
      key += tokens[i + j];
    }
    ++counts[key];
  }
  return counts;
}

}  // namespace

BleuReport corpus_bleu(const std::vector<std::vector<std::string>>& hypotheses,
                       const std::vector<std::vector<std::string>>& references) {
  check(!hypotheses.empty(), "corpus_bleu: empty corpus");
  check(hypotheses.size() == references.size(), "corpus_bleu: ", hypotheses.size(),
        " hypotheses vs ", references.size(), " references");

  std::array<int64_t, 4> matches{}, totals{};
  BleuReport report;
  for (size_t i = 0; i < hypotheses.size(); ++i) {
    const auto& hyp = hypotheses[i];
    const auto& ref = references[i];
    report.hyp_tokens += static_cast<int64_t>(hyp.size());
    report.ref_tokens += static_cast<int64_t>(ref.size());
    for (size_t n = 1; n <= 4; ++n) {
      const auto hyp_counts = ngram_counts(hyp, n);
      const auto ref_counts = ngram_counts(ref, n);
      for (const auto& [gram, count] : hyp_counts) {
        totals[n - 1] += count;
        auto it = ref_counts.find(gram);
        if (it != ref_counts.end()) matches[n - 1] += std::min(count, it->second);
      }
    }
  }

  // Orders with no hypothesis n-grams at all (corpus shorter than n) are
  // undefined and excluded from the geometric mean; a defined order with
  // zero matches still forces the score to 0. Keeps the identity
  // corpus_bleu(x, x) = 100 on corpora of very short sentences.
  double log_precision_sum = 0.0;
  int defined_orders = 0;
  bool any_zero = false;
  for (size_t n = 0; n < 4; ++n) {
    if (totals[n] == 0) {
      report.precisions[n] = 0.0;
      continue;
    }
    const double p = static_cast<double>(matches[n]) / static_cast<double>(totals[n]);
    report.precisions[n] = p;
    ++defined_orders;
    if (p <= 0.0)
      any_zero = true;
    else
      log_precision_sum += std::log(p);
  }

  report.brevity_penalty =
      (report.hyp_tokens >= report.ref_tokens || report.hyp_tokens == 0)
          ? 1.0
          : std::exp(1.0 - static_cast<double>(report.ref_tokens) /
                               static_cast<double>(report.hyp_tokens));
  report.bleu = (any_zero || defined_orders == 0)
                    ? 0.0
                    : 100.0 * report.brevity_penalty *
                          std::exp(log_precision_sum / defined_orders);
  return report;
}

std::string format_bleu(const BleuReport& r) {
  char buf[220];
  std::snprintf(buf, sizeof(buf),
                "BLEU = %.2f  p1/p2/p3/p4 = %.1f/%.1f/%.1f/%.1f  BP = %.3f  hyp_tokens = %lld  "
                "ref_tokens = %lld",
                r.bleu, 100.0 * r.precisions[0], 100.0 * r.precisions[1], 100.0 * r.precisions[2],
                100.0 * r.precisions[3], r.brevity_penalty, static_cast<long long>(r.hyp_tokens),
                static_cast<long long>(r.ref_tokens));
  return buf;
}

}  // namespace natlab
