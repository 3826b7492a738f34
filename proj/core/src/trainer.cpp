#include "natlab/trainer.hpp"

#include <algorithm>
#include <filesystem>

namespace natlab {

TrainBatch make_train_batch(const std::vector<SentencePair>& pairs,
                            const std::vector<int>& indices, const Rng& mask_rng) {
  check(!indices.empty(), "empty batch");
  std::vector<std::vector<int32_t>> sources, targets;
  sources.reserve(indices.size());
  targets.reserve(indices.size());
  TrainBatch batch;
  batch.true_lengths.reserve(indices.size());
  for (int idx : indices) {
    const auto& p = pairs[static_cast<size_t>(idx)];
    sources.push_back(p.source_ids);
    targets.push_back(p.target_ids);
    batch.true_lengths.push_back(static_cast<int>(p.target_ids.size()));
  }
  batch.src = pad_ids(sources);
  batch.dual = make_dual_batch(targets, mask_rng);
  std::vector<std::vector<int32_t>> in1, in2;
  in1.reserve(indices.size());
  in2.reserve(indices.size());
  for (size_t i = 0; i < batch.dual.size(); ++i) {
    in1.push_back(batch.dual.view1[i].input_ids);
    in2.push_back(batch.dual.view2[i].input_ids);
  }
  batch.tgt_v1 = pad_ids(in1);
  batch.tgt_v2 = pad_ids(in2);
  return batch;
}

std::vector<std::string> list_checkpoints(const std::string& dir) {
  namespace fs = std::filesystem;
  std::vector<std::string> found;
  if (!fs::is_directory(dir)) return found;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    if (name.rfind("checkpoint_", 0) == 0 && name.size() > 6 &&
        name.substr(name.size() - 6) == ".natck")
      found.push_back(entry.path().string());
  }
  // Zero-padded step numbers sort lexicographically in step order.
  std::sort(found.begin(), found.end());
  return found;
}

}  // namespace natlab
