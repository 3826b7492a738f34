#include "natlab/ablate.hpp"

#include <cstdio>
#include <sstream>

#include "natlab/bleu.hpp"
#include "natlab/decode.hpp"

namespace natlab {

namespace {

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ',')) {
    const size_t a = item.find_first_not_of(" \t");
    if (a == std::string::npos) continue;
    const size_t b = item.find_last_not_of(" \t");
    out.push_back(item.substr(a, b - a + 1));
  }
  return out;
}

template <class T>
std::vector<AblationRow> run_ablation_impl(
    const AblationGrid& grid, const RunConfig& base, const Vocab& vocab,
    const std::vector<SentencePair>& train_pairs,
    const std::vector<std::vector<std::string>>& heldout_src,
    const std::vector<std::vector<std::string>>& heldout_ref, const std::string& out_dir,
    std::ostream* console) {
  std::vector<std::vector<int32_t>> heldout_ids;
  heldout_ids.reserve(heldout_src.size());
  for (const auto& tokens : heldout_src) {
    std::vector<int32_t> ids{LEN_ID};
    for (const auto& tok : tokens) ids.push_back(vocab.id_of(tok));
    heldout_ids.push_back(std::move(ids));
  }

  std::vector<AblationRow> rows;
  int run_id = 0;
  for (double lambda : grid.lambdas) {
    for (double dropout_avg : grid.dropout_averages) {
      RunConfig cfg = base;
      cfg.loss.lambda = lambda;
      cfg.model.dropout_average = dropout_avg;

      ParamStore<T> weights;
      std::string train_error;
      try {
        char sub[64];
        std::snprintf(sub, sizeof(sub), "/run%02d_l%g_d%g", run_id++, lambda, dropout_avg);
        const std::string run_dir = out_dir + sub;
        if (console) *console << "ablate: training lambda=" << lambda
                              << " dropout_average=" << dropout_avg << "\n";
        run_training<T>(cfg, train_pairs, vocab, run_dir);
        weights = average_checkpoints<T>(list_checkpoints(run_dir));
      } catch (const std::exception& e) {
        train_error = e.what();
      }

      for (int iters : grid.iterations) {
        AblationRow row;
        row.lambda = lambda;
        row.dropout_average = dropout_avg;
        row.iterations = iters;
        if (!train_error.empty()) {
          row.status = "error: " + train_error;
          rows.push_back(row);
          continue;
        }
        try {
          DecodeConfig dcfg;
          dcfg.iterations = iters;
          auto hyps = translate_corpus(weights, cfg.model, heldout_ids, dcfg);
          std::vector<std::vector<std::string>> hyp_tokens;
          hyp_tokens.reserve(hyps.size());
          for (const auto& h : hyps) hyp_tokens.push_back(vocab.decode(h.tokens));
          row.bleu = corpus_bleu(hyp_tokens, heldout_ref).bleu;
          row.status = "ok";
        } catch (const std::exception& e) {
          row.status = std::string("error: ") + e.what();
        }
        if (console) *console << "ablate: lambda=" << lambda << " dropout_average=" << dropout_avg
                              << " iterations=" << iters << " bleu=" << row.bleu << " ("
                              << row.status << ")\n";
        rows.push_back(row);
      }
    }
  }
  return rows;
}

}  // namespace

AblationGrid parse_grid_file(const std::string& path) {
  const KvMap kv = parse_kv_file(path);
  AblationGrid grid;
  for (const auto& [key, value] : kv) {
    if (key == "lambda") {
      for (const auto& v : split_csv(value)) grid.lambdas.push_back(std::stod(v));
    } else if (key == "dropout_average") {
      for (const auto& v : split_csv(value)) grid.dropout_averages.push_back(std::stod(v));
    } else if (key == "iterations") {
      for (const auto& v : split_csv(value)) grid.iterations.push_back(std::stoi(v));
    } else {
      fatal("unknown grid axis '", key, "' (expected lambda, dropout_average, iterations)");
    }
  }
  return grid;
}

std::vector<AblationRow> run_ablation(const AblationGrid& grid, const RunConfig& base,
                                      const Vocab& vocab,
                                      const std::vector<SentencePair>& train_pairs,
                                      const std::vector<std::vector<std::string>>& heldout_src,
                                      const std::vector<std::vector<std::string>>& heldout_ref,
                                      const std::string& out_dir, std::ostream* console) {
  AblationGrid g = grid;
  if (g.lambdas.empty()) g.lambdas = {base.loss.lambda};
  if (g.dropout_averages.empty()) g.dropout_averages = {base.model.dropout_average};
  if (g.iterations.empty()) g.iterations = {4};
  check(heldout_src.size() == heldout_ref.size(), "held-out source/reference counts differ: ",
        heldout_src.size(), " vs ", heldout_ref.size());
  if (base.train.precision == "f64")
    return run_ablation_impl<double>(g, base, vocab, train_pairs, heldout_src, heldout_ref,
                                     out_dir, console);
  return run_ablation_impl<float>(g, base, vocab, train_pairs, heldout_src, heldout_ref, out_dir,
                                  console);
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::string out = "lambda,dropout_average,iterations,bleu,status\n";
  for (const auto& r : rows) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%g,%g,%d,%.2f,", r.lambda, r.dropout_average, r.iterations,
                  r.bleu);
    out += buf;
    std::string status = r.status;
    for (char& c : status)
      if (c == ',' || c == '\n') c = ';';
    out += status;
    out += '\n';
  }
  return out;
}

}  // namespace natlab
