#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "natlab/model.hpp"

namespace natlab {

struct DecodeConfig {
  int iterations = 4;         // refinement passes, T >= 1
  int length_candidates = 5;  // parallel length hypotheses
  // When > 0, iterations >= 2 re-mask every token whose probability falls
  // below this value instead of following the count schedule, stopping
  // early once all tokens clear it.
  double remask_threshold = 0.0;

  void validate() const {
    check(iterations >= 1, "iterations must be >= 1, got ", iterations);
    check(length_candidates >= 1, "length_candidates must be >= 1, got ", length_candidates);
    check(remask_threshold >= 0.0 && remask_threshold < 1.0,
          "remask_threshold must lie in [0, 1), got ", remask_threshold);
  }
};

struct Hypothesis {
  std::vector<int32_t> tokens;
  std::vector<double> token_logprobs;  // log-prob recorded when each token was last predicted
  double score = 0.0;                  // mean token log-prob

  int length() const { return static_cast<int>(tokens.size()); }
};

// Per-iteration snapshot for tests and debugging.
struct DecodeIterationTrace {
  std::vector<int> predicted_positions;  // positions re-predicted this iteration
  std::vector<double> confidences;       // all positions, after the iteration
  std::vector<int32_t> tokens;
};

// Count schedule: at iteration t of T, re-mask the n = ceil(N (T-t+1) / T)
// lowest-confidence positions (t=1 covers all N).
inline int remask_count(int length, int total_iterations, int iteration) {
  return static_cast<int>((static_cast<int64_t>(length) *
                               (total_iterations - iteration + 1) +
                           total_iterations - 1) /
                          total_iterations);
}

// Highest score wins; ties prefer the shorter hypothesis, then the
// lexicographically smaller token sequence.
inline Hypothesis select_candidate(const std::vector<Hypothesis>& hypotheses) {
  check(!hypotheses.empty(), "select_candidate: no hypotheses");
  const Hypothesis* best = &hypotheses[0];
  for (const auto& h : hypotheses) {
    if (h.score > best->score) {
      best = &h;
    } else if (h.score == best->score) {
      if (h.length() < best->length() ||
          (h.length() == best->length() && h.tokens < best->tokens))
        best = &h;
    }
  }
  return *best;
}

// Frozen-parameter decoding context; binds the store once and serves any
// number of sentences.
template <class T>
class DecodeSession {
public:
  DecodeSession(const ParamStore<T>& params, ModelConfig cfg)
      : cfg_(std::move(cfg)), tape_(false), params_(bind_params(tape_, params, false)) {
    cfg_.validate();
  }

  // Mask-predict: for each of the top-k predicted lengths, start from an
  // all-[MASK] target, then iteratively re-mask and re-predict the
  // lowest-confidence tokens; the candidate with the best mean token
  // log-prob wins. Deterministic: no dropout, no sampling.
  Hypothesis translate(const std::vector<int32_t>& source_ids, const DecodeConfig& dcfg,
                       std::vector<std::vector<DecodeIterationTrace>>* traces = nullptr) const {
    dcfg.validate();
    check(!source_ids.empty(), "translate: empty source");
    Rng no_rng(0);  // dropout is zero; never drawn from
    const Padded2D src = pad_ids({source_ids});
    Tape<T> tape(false);
    auto enc = encode(tape, params_, cfg_, src, T(0), no_rng);
    const auto candidates = predict_length(enc.length_logits, dcfg.length_candidates)[0];

    std::vector<Hypothesis> hypotheses;
    hypotheses.reserve(candidates.size());
    if (traces) traces->clear();
    for (const auto& cand : candidates) {
      std::vector<DecodeIterationTrace>* trace = nullptr;
      if (traces) {
        traces->emplace_back();
        trace = &traces->back();
      }
      hypotheses.push_back(decode_one_length(tape, enc, cand.length, dcfg, no_rng, trace));
    }
    return select_candidate(hypotheses);
  }

private:
  Hypothesis decode_one_length(Tape<T>& tape, const EncoderState<T>& enc, int length,
                               const DecodeConfig& dcfg, Rng& no_rng,
                               std::vector<DecodeIterationTrace>* trace) const {
    const int N = length;
    std::vector<int32_t> tokens(static_cast<size_t>(N), MASK_ID);
    std::vector<double> conf(static_cast<size_t>(N), 0.0);

    for (int t = 1; t <= dcfg.iterations; ++t) {
      std::vector<int> positions;
      if (t == 1) {
        positions.resize(static_cast<size_t>(N));
        std::iota(positions.begin(), positions.end(), 0);
      } else if (dcfg.remask_threshold > 0.0) {
        const double log_thresh = std::log(dcfg.remask_threshold);
        for (int p = 0; p < N; ++p)
          if (conf[static_cast<size_t>(p)] < log_thresh) positions.push_back(p);
        if (positions.empty()) break;
      } else {
        const int n_mask = remask_count(N, dcfg.iterations, t);
        std::vector<int> order(static_cast<size_t>(N));
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](int a, int b) {
          const double ca = conf[static_cast<size_t>(a)], cb = conf[static_cast<size_t>(b)];
          if (ca != cb) return ca < cb;
          return a < b;
        });
        positions.assign(order.begin(), order.begin() + n_mask);
        std::sort(positions.begin(), positions.end());
      }

      std::vector<int32_t> input = tokens;
      for (int p : positions) input[static_cast<size_t>(p)] = MASK_ID;
      auto logits = decode_tokens(tape, params_, cfg_, enc, pad_ids({input}), T(0), no_rng);
      auto logp = log_softmax(tape, logits, 2);
      const int V = cfg_.vocab_size;
      for (int p : positions) {
        const T* row = logp->value.data() + static_cast<int64_t>(p) * V;
        int arg = 0;
        for (int j = 1; j < V; ++j)
          if (row[j] > row[arg]) arg = j;
        tokens[static_cast<size_t>(p)] = arg;
        conf[static_cast<size_t>(p)] = static_cast<double>(row[arg]);
      }
      if (trace) trace->push_back({positions, conf, tokens});
    }

    Hypothesis h;
    h.tokens = std::move(tokens);
    h.token_logprobs = std::move(conf);
    h.score = std::accumulate(h.token_logprobs.begin(), h.token_logprobs.end(), 0.0) /
              static_cast<double>(N);
    return h;
  }

  ModelConfig cfg_;
  mutable Tape<T> tape_;
  BoundParams<T> params_;
};

// Single-shot convenience wrapper.
template <class T>
Hypothesis mask_predict(const ParamStore<T>& params, const ModelConfig& cfg,
                        const std::vector<int32_t>& source_ids, const DecodeConfig& dcfg,
                        std::vector<std::vector<DecodeIterationTrace>>* traces = nullptr) {
  DecodeSession<T> session(params, cfg);
  return session.translate(source_ids, dcfg, traces);
}

template <class T>
std::vector<Hypothesis> translate_corpus(const ParamStore<T>& params, const ModelConfig& cfg,
                                         const std::vector<std::vector<int32_t>>& sources,
                                         const DecodeConfig& dcfg) {
  DecodeSession<T> session(params, cfg);
  std::vector<Hypothesis> out;
  out.reserve(sources.size());
  for (const auto& src : sources) out.push_back(session.translate(src, dcfg));
  return out;
}

}  // namespace natlab
