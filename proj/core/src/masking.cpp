#include "natlab/masking.hpp"

#include <algorithm>

#include "natlab/common.hpp"
#include "natlab/vocab.hpp"

namespace natlab {

MaskedView make_view(const std::vector<int32_t>& target_ids, std::vector<int> mask_positions) {
  const int n = static_cast<int>(target_ids.size());
  check(n >= 1, "cannot mask an empty target");
  std::sort(mask_positions.begin(), mask_positions.end());
  mask_positions.erase(std::unique(mask_positions.begin(), mask_positions.end()),
                       mask_positions.end());
  check(!mask_positions.empty() && mask_positions.front() >= 0 && mask_positions.back() < n,
        "mask positions out of range for target of length ", n);

  MaskedView view;
  view.original_ids = target_ids;
  view.input_ids = target_ids;
  view.masked_positions = std::move(mask_positions);
  for (int p : view.masked_positions) view.input_ids[static_cast<size_t>(p)] = MASK_ID;
  size_t next_masked = 0;
  for (int p = 0; p < n; ++p) {
    if (next_masked < view.masked_positions.size() && view.masked_positions[next_masked] == p)
      ++next_masked;
    else
      view.observed_positions.push_back(p);
  }
  return view;
}

MaskedView sample_view(const std::vector<int32_t>& target_ids, Rng& rng) {
  const int n = static_cast<int>(target_ids.size());
  check(n >= 1, "cannot mask an empty target");
  const int k = 1 + static_cast<int>(rng.below(static_cast<uint64_t>(n)));
  return make_view(target_ids, rng.sample_without_replacement(n, k));
}

DualViewBatch make_dual_batch(const std::vector<std::vector<int32_t>>& targets, const Rng& rng) {
  DualViewBatch batch;
  batch.view1.reserve(targets.size());
  batch.view2.reserve(targets.size());
  batch.shared_positions.reserve(targets.size());
  for (size_t i = 0; i < targets.size(); ++i) {
    Rng r1 = rng.fork(i, 1);
    Rng r2 = rng.fork(i, 2);
    batch.view1.push_back(sample_view(targets[i], r1));
    batch.view2.push_back(sample_view(targets[i], r2));
    batch.shared_positions.push_back(
        intersect_sorted(batch.view1.back().masked_positions, batch.view2.back().masked_positions));
  }
  return batch;
}

std::vector<int> intersect_sorted(const std::vector<int>& a, const std::vector<int>& b) {
  std::vector<int> out;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

}  // namespace natlab
