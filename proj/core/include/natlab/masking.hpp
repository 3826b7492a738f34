#pragma once

#include <cstdint>
#include <vector>

#include "natlab/rng.hpp"

namespace natlab {

// One random masking of a target sentence. Positions partition the real
// tokens: masked ∪ observed = {0..N-1}, both sorted, intersection empty.
// Placing original_ids back at masked_positions of input_ids reproduces the
// target exactly.
struct MaskedView {
  std::vector<int32_t> input_ids;       // target with [MASK] at masked positions
  std::vector<int> masked_positions;    // sorted
  std::vector<int> observed_positions;  // sorted complement
  std::vector<int32_t> original_ids;    // ground truth target
};

// Deterministic view with forced mask positions (must be valid indices).
MaskedView make_view(const std::vector<int32_t>& target_ids, std::vector<int> mask_positions);

// Random view: mask count k ~ Uniform{1..N}, then k positions uniformly
// without replacement.
MaskedView sample_view(const std::vector<int32_t>& target_ids, Rng& rng);

// Two independent views per target plus the per-sentence shared mask set
// (the exact intersection of the two masked sets; empty is legal and the
// shared-mask losses are zero there).
struct DualViewBatch {
  std::vector<MaskedView> view1;
  std::vector<MaskedView> view2;
  std::vector<std::vector<int>> shared_positions;

  size_t size() const { return view1.size(); }
};

// Views are drawn from per-(sentence, view) child streams of `rng`, so the
// two views are exchangeable and batch preparation can run in any order.
DualViewBatch make_dual_batch(const std::vector<std::vector<int32_t>>& targets, const Rng& rng);

std::vector<int> intersect_sorted(const std::vector<int>& a, const std::vector<int>& b);

}  // namespace natlab
