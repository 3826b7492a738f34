#pragma once

#include <string>
#include <vector>

#include "natlab/trainer.hpp"

namespace natlab {

// Sweep axes over {lambda, dropout_average, iterations}; an omitted axis
// falls back to the base config's value. Grid file: one `key = v1, v2, ...`
// line per axis.
struct AblationGrid {
  std::vector<double> lambdas;
  std::vector<double> dropout_averages;
  std::vector<int> iterations;
};

AblationGrid parse_grid_file(const std::string& path);

struct AblationRow {
  double lambda = 0.0;
  double dropout_average = 0.0;
  int iterations = 0;
  double bleu = 0.0;
  std::string status;  // "ok" or error description
};

// One train+eval per grid point (training reused across points that differ
// only in decode iterations; runs are deterministic, so the retrain would be
// bit-identical). Every run shares the base seed. Failed runs are recorded
// and the sweep continues.
std::vector<AblationRow> run_ablation(const AblationGrid& grid, const RunConfig& base,
                                      const Vocab& vocab,
                                      const std::vector<SentencePair>& train_pairs,
                                      const std::vector<std::vector<std::string>>& heldout_src,
                                      const std::vector<std::vector<std::string>>& heldout_ref,
                                      const std::string& out_dir, std::ostream* console);

std::string ablation_csv(const std::vector<AblationRow>& rows);

}  // namespace natlab
