#pragma once

#include <array>
#include <cmath>
#include <span>
#include <utility>
#include <vector>

#include "natlab/masking.hpp"
#include "natlab/tape.hpp"

namespace natlab {

struct LossConfig {
  double lambda = 0.3;          // weight on the five consistency KL terms
  double label_smoothing = 0.1;  // applied to the NLL terms only

  void validate() const {
    check(lambda >= 0.0, "lambda must be >= 0, got ", lambda);
    check(label_smoothing >= 0.0 && label_smoothing < 1.0,
          "label_smoothing must lie in [0, 1), got ", label_smoothing);
  }
};

// The eight loss terms plus their weighted combination, in nats.
// total = 1/2 (nll1 + nll2) + lambda/5 (mkl1 + mkl2 + skl1 + skl2 + skl3) + len.
struct LossBreakdown {
  double nll1 = 0, nll2 = 0;
  double mkl1 = 0, mkl2 = 0;
  double skl1 = 0, skl2 = 0, skl3 = 0;
  double len = 0;
  double total = 0;
};

template <class T>
struct LossNodes {
  NodePtr<T> nll1, nll2, mkl1, mkl2, skl1, skl2, skl3, len, total;

  LossBreakdown values() const {
    return LossBreakdown{
        static_cast<double>(nll1->value[0]), static_cast<double>(nll2->value[0]),
        static_cast<double>(mkl1->value[0]), static_cast<double>(mkl2->value[0]),
        static_cast<double>(skl1->value[0]), static_cast<double>(skl2->value[0]),
        static_cast<double>(skl3->value[0]), static_cast<double>(len->value[0]),
        static_cast<double>(total->value[0])};
  }
};

// Symmetric KL between two log-distributions:
//   bikl(p, q) = 1/2 (KL(p||q) + KL(q||p)).
// Pure log-space summation; exact zero for identical inputs.
template <class T>
T bikl(std::span<const T> logp, std::span<const T> logq) {
  check(logp.size() == logq.size(), "bikl: distribution sizes differ, ", logp.size(), " vs ",
        logq.size());
  T kl_pq = T(0), kl_qp = T(0);
  for (size_t i = 0; i < logp.size(); ++i) {
    const T d = logp[i] - logq[i];
    kl_pq += std::exp(logp[i]) * d;
    kl_qp -= std::exp(logq[i]) * d;
  }
  return (kl_pq + kl_qp) / T(2);
}

namespace loss_detail {

// Per-row bikl for [N, V] log-prob matrices sharing row positions.
template <class T>
NodePtr<T> bikl_rows(Tape<T>& tape, const NodePtr<T>& lp, const NodePtr<T>& lq) {
  auto d_pq = sub(tape, lp, lq);
  auto kl_pq = row_sum(tape, mul(tape, exp(tape, lp), d_pq));
  auto d_qp = sub(tape, lq, lp);
  auto kl_qp = row_sum(tape, mul(tape, exp(tape, lq), d_qp));
  return scale(tape, add(tape, kl_pq, kl_qp), T(0.5));
}

template <class T>
NodePtr<T> zero_scalar(Tape<T>& tape) {
  return tape.constant(TensorData<T>({1}, T(0)));
}

// Flattened row index of (sentence, position) in a [B, L, V] tensor.
inline int64_t flat_row(int sentence, int position, int width) {
  return static_cast<int64_t>(sentence) * width + position;
}

}  // namespace loss_detail

// Label-smoothed negative log-likelihood over one view's masked positions,
// summed over the positions of a single sentence.
//   nll = -sum_p [(1-eps) log P(y_p) + eps/V mean-mass on the full row]
template <class T>
NodePtr<T> nll_masked(Tape<T>& tape, const NodePtr<T>& log_probs2d, const MaskedView& view,
                      T label_smoothing) {
  check(log_probs2d->shape.size() == 2, "nll_masked: expected [len, vocab] log-probs, got ",
        shape_str(log_probs2d->shape));
  const int V = log_probs2d->shape[1];
  std::vector<std::pair<int64_t, int64_t>> at;
  std::vector<int64_t> rows;
  for (int p : view.masked_positions) {
    at.emplace_back(p, view.original_ids[static_cast<size_t>(p)]);
    rows.push_back(p);
  }
  const size_t n = at.size();
  auto picked = gather_elems(tape, log_probs2d, std::move(at));
  auto target_mass = scale(tape, picked, T(1) - label_smoothing);
  if (label_smoothing > T(0)) {
    auto spread = row_sum(tape, gather_rows(tape, log_probs2d, std::move(rows)));
    target_mass = add(tape, target_mass, scale(tape, spread, label_smoothing / static_cast<T>(V)));
  }
  return scale(tape, weighted_sum(tape, target_mass, std::vector<T>(n, T(1))), T(-1));
}

// Batched view NLL: mean over sentences of the per-sentence masked sums.
// log_probs: [B, Lt, V]; views: one per sentence.
template <class T>
NodePtr<T> nll_masked_batch(Tape<T>& tape, const NodePtr<T>& log_probs,
                            const std::vector<MaskedView>& views, T label_smoothing) {
  check(log_probs->shape.size() == 3, "nll_masked_batch: expected [B, L, V] log-probs, got ",
        shape_str(log_probs->shape));
  const int B = log_probs->shape[0], Lt = log_probs->shape[1], V = log_probs->shape[2];
  check(static_cast<size_t>(B) == views.size(), "nll_masked_batch: ", views.size(),
        " views for batch of ", B);
  auto flat = reshape(tape, log_probs, {B * Lt, V});
  std::vector<std::pair<int64_t, int64_t>> at;
  std::vector<int64_t> rows;
  for (int b = 0; b < B; ++b)
    for (int p : views[static_cast<size_t>(b)].masked_positions) {
      const int64_t r = loss_detail::flat_row(b, p, Lt);
      at.emplace_back(r, views[static_cast<size_t>(b)].original_ids[static_cast<size_t>(p)]);
      rows.push_back(r);
    }
  const size_t n = at.size();
  auto picked = gather_elems(tape, flat, std::move(at));
  auto target_mass = scale(tape, picked, T(1) - label_smoothing);
  if (label_smoothing > T(0)) {
    auto spread = row_sum(tape, gather_rows(tape, flat, std::move(rows)));
    target_mass = add(tape, target_mass, scale(tape, spread, label_smoothing / static_cast<T>(V)));
  }
  const T w = T(-1) / static_cast<T>(B);
  return weighted_sum(tape, target_mass, std::vector<T>(n, w));
}

// Model consistency (online vs average, each view): per-sentence mean of
// the per-position bikl over that view's masked set, averaged over the
// batch. The average-model log-probs must be gradient constants.
template <class T>
std::pair<NodePtr<T>, NodePtr<T>> model_consistency(Tape<T>& tape,
                                                    const NodePtr<T>& online_logprobs_v1,
                                                    const NodePtr<T>& online_logprobs_v2,
                                                    const NodePtr<T>& avg_logprobs_v1,
                                                    const NodePtr<T>& avg_logprobs_v2,
                                                    const DualViewBatch& batch) {
  check(!avg_logprobs_v1->requires_grad && !avg_logprobs_v2->requires_grad,
        "model_consistency: average-model log-probs must not require gradients");
  auto one_view = [&](const NodePtr<T>& online, const NodePtr<T>& avg,
                      const std::vector<MaskedView>& views) -> NodePtr<T> {
    const int B = online->shape[0], Lt = online->shape[1], V = online->shape[2];
    auto flat_on = reshape(tape, online, {B * Lt, V});
    auto flat_av = reshape(tape, avg, {B * Lt, V});
    std::vector<int64_t> rows;
    std::vector<T> weights;
    for (int b = 0; b < B; ++b) {
      const auto& masked = views[static_cast<size_t>(b)].masked_positions;
      const T w = T(1) / (static_cast<T>(B) * static_cast<T>(masked.size()));
      for (int p : masked) {
        rows.push_back(loss_detail::flat_row(b, p, Lt));
        weights.push_back(w);
      }
    }
    auto lp = gather_rows(tape, flat_on, rows);
    auto lq = gather_rows(tape, flat_av, std::move(rows));
    return weighted_sum(tape, loss_detail::bikl_rows(tape, lp, lq), std::move(weights));
  };
  return {one_view(online_logprobs_v1, avg_logprobs_v1, batch.view1),
          one_view(online_logprobs_v2, avg_logprobs_v2, batch.view2)};
}

// Shared-mask consistency over Y_ms1 ∩ Y_ms2, three pairings:
//   skl1: online(view1) vs online(view2)
//   skl2: online(view1) vs average(view2)
//   skl3: average(view1) vs online(view2)
// Sentences with an empty shared set contribute zero; an all-empty batch
// yields exact zero scalars.
template <class T>
std::array<NodePtr<T>, 3> shared_mask_consistency(Tape<T>& tape, const NodePtr<T>& online_v1,
                                                  const NodePtr<T>& online_v2,
                                                  const NodePtr<T>& avg_v1,
                                                  const NodePtr<T>& avg_v2,
                                                  const DualViewBatch& batch) {
  check(!avg_v1->requires_grad && !avg_v2->requires_grad,
        "shared_mask_consistency: average-model log-probs must not require gradients");
  const int B = online_v1->shape[0], Lt = online_v1->shape[1], V = online_v1->shape[2];
  std::vector<int64_t> rows;
  std::vector<T> weights;
  for (int b = 0; b < B; ++b) {
    const auto& shared = batch.shared_positions[static_cast<size_t>(b)];
    if (shared.empty()) continue;
    const T w = T(1) / (static_cast<T>(B) * static_cast<T>(shared.size()));
    for (int p : shared) {
      rows.push_back(loss_detail::flat_row(b, p, Lt));
      weights.push_back(w);
    }
  }
  if (rows.empty()) {
    return {loss_detail::zero_scalar(tape), loss_detail::zero_scalar(tape),
            loss_detail::zero_scalar(tape)};
  }
  auto pick = [&](const NodePtr<T>& x) {
    return gather_rows(tape, reshape(tape, x, {B * Lt, V}), rows);
  };
  auto on1 = pick(online_v1), on2 = pick(online_v2);
  auto av1 = pick(avg_v1), av2 = pick(avg_v2);
  auto skl1 = weighted_sum(tape, loss_detail::bikl_rows(tape, on1, on2), weights);
  auto skl2 = weighted_sum(tape, loss_detail::bikl_rows(tape, on1, av2), weights);
  auto skl3 = weighted_sum(tape, loss_detail::bikl_rows(tape, av1, on2), weights);
  return {skl1, skl2, skl3};
}

// Length classification cross-entropy, summed over the batch.
// length_logits: [B, n_max], slot i scores length i+1.
template <class T>
NodePtr<T> length_loss(Tape<T>& tape, const NodePtr<T>& length_logits,
                       const std::vector<int>& true_lengths) {
  check(length_logits->shape.size() == 2, "length_loss: expected [B, n_max] logits, got ",
        shape_str(length_logits->shape));
  const int B = length_logits->shape[0], n_max = length_logits->shape[1];
  check(static_cast<size_t>(B) == true_lengths.size(), "length_loss: ", true_lengths.size(),
        " lengths for batch of ", B);
  auto logp = log_softmax(tape, length_logits, 1);
  std::vector<std::pair<int64_t, int64_t>> at;
  for (int b = 0; b < B; ++b) {
    const int len = true_lengths[static_cast<size_t>(b)];
    check(len >= 1 && len <= n_max, "target length ", len, " outside [1, ", n_max, "]");
    at.emplace_back(b, len - 1);
  }
  auto picked = gather_elems(tape, logp, std::move(at));
  return weighted_sum(tape, picked, std::vector<T>(static_cast<size_t>(B), T(-1)));
}

// Combine the eight terms with the fixed coefficients 1/2, lambda/5, 1.
template <class T>
LossNodes<T> total_loss(Tape<T>& tape, NodePtr<T> nll1, NodePtr<T> nll2, NodePtr<T> mkl1,
                        NodePtr<T> mkl2, NodePtr<T> skl1, NodePtr<T> skl2, NodePtr<T> skl3,
                        NodePtr<T> len, const LossConfig& cfg) {
  cfg.validate();
  LossNodes<T> out;
  out.nll1 = std::move(nll1);
  out.nll2 = std::move(nll2);
  out.mkl1 = std::move(mkl1);
  out.mkl2 = std::move(mkl2);
  out.skl1 = std::move(skl1);
  out.skl2 = std::move(skl2);
  out.skl3 = std::move(skl3);
  out.len = std::move(len);
  auto nll_part = scale(tape, add(tape, out.nll1, out.nll2), T(0.5));
  auto kl_sum = add(tape, add(tape, add(tape, add(tape, out.mkl1, out.mkl2), out.skl1), out.skl2),
                    out.skl3);
  auto kl_part = scale(tape, kl_sum, static_cast<T>(cfg.lambda) / T(5));
  out.total = add(tape, add(tape, nll_part, kl_part), out.len);
  return out;
}

}  // namespace natlab
