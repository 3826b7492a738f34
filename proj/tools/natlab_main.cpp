// natlab: train, decode and score desk-scale non-autoregressive translation
// models (conditional masked LM with dual-view consistency regularization).

#include <chrono>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "natlab/ablate.hpp"
#include "natlab/bleu.hpp"
#include "natlab/decode.hpp"
#include "natlab/trainer.hpp"

namespace {

using namespace natlab;

std::vector<std::vector<std::string>> read_token_lines(const std::string& path) {
  std::ifstream in(path);
  check(in.good(), "cannot open '", path, "'");
  std::vector<std::vector<std::string>> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(tokenize(line));
  return lines;
}

struct TrainArgs {
  std::string config, data_src, data_tgt, out, resume, vocab_path;
};

template <class T>
void train_with(const RunConfig& cfg, const std::vector<SentencePair>& pairs, const Vocab& vocab,
                const TrainArgs& args) {
  run_training<T>(cfg, pairs, vocab, args.out, args.resume, &std::cout);
}

int cmd_train(const TrainArgs& args) {
  RunConfig cfg = RunConfig::from_kv(parse_kv_file(args.config));

  Vocab vocab;
  if (!args.vocab_path.empty()) {
    vocab = Vocab::load(args.vocab_path);
  } else {
    vocab = Vocab::build({args.data_src, args.data_tgt});
    std::filesystem::create_directories(args.out);
    vocab.save(args.out + "/vocab.txt");
  }
  cfg.model.vocab_size = vocab.size();

  LoadStats stats;
  auto pairs = load_parallel(args.data_src, args.data_tgt, vocab, cfg.model.n_max, &stats);
  if (stats.rejected_too_long > 0)
    std::cerr << "warning: dropped " << stats.rejected_too_long << " pairs with targets over n_max="
              << cfg.model.n_max << "\n";
  std::cout << "training on " << pairs.size() << " pairs, vocab " << vocab.size() << ", precision "
            << cfg.train.precision << "\n";

  if (cfg.train.precision == "f64")
    train_with<double>(cfg, pairs, vocab, args);
  else
    train_with<float>(cfg, pairs, vocab, args);
  std::cout << "done; checkpoints in " << args.out << "\n";
  return 0;
}

struct TranslateArgs {
  std::string ckpt, input, output;
  int iterations = 4;
  int length_candidates = 5;
  double remask_threshold = 0.0;
  bool use_average_model = false;
};

template <class T>
int translate_with(const TranslateArgs& args) {
  Checkpoint<T> ckpt = load_checkpoint<T>(args.ckpt);
  RunConfig cfg = RunConfig::from_kv(ckpt.header.config);
  const Vocab vocab = Vocab::from_corpus_tokens(ckpt.header.vocab_tokens);
  check(cfg.model.vocab_size == vocab.size(), "checkpoint vocab/config disagree");

  DecodeConfig dcfg;
  dcfg.iterations = args.iterations;
  dcfg.length_candidates = args.length_candidates;
  dcfg.remask_threshold = args.remask_threshold;

  const ParamStore<T>& weights = args.use_average_model ? ckpt.average : ckpt.online;
  DecodeSession<T> session(weights, cfg.model);

  std::ostream* out = &std::cout;
  std::ofstream file;
  if (!args.output.empty()) {
    file.open(args.output);
    check(file.good(), "cannot write '", args.output, "'");
    out = &file;
  }

  const auto lines = read_token_lines(args.input);
  const auto start = std::chrono::steady_clock::now();
  size_t translated = 0;
  for (const auto& tokens : lines) {
    if (tokens.empty()) {
      *out << "\n";
      continue;
    }
    std::vector<int32_t> ids{LEN_ID};
    for (const auto& tok : tokens) ids.push_back(vocab.id_of(tok));
    const Hypothesis hyp = session.translate(ids, dcfg);
    *out << detokenize(vocab.decode(hyp.tokens)) << "\n";
    ++translated;
  }
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::cerr << "translated " << translated << " sentences in " << seconds << " s ("
            << (seconds > 0 ? static_cast<double>(translated) / seconds : 0.0)
            << " sentences/s)\n";
  return 0;
}

int cmd_translate(const TranslateArgs& args) {
  if (peek_checkpoint_header(args.ckpt).precision == "f64") return translate_with<double>(args);
  return translate_with<float>(args);
}

int cmd_eval(const std::string& hyp_path, const std::string& ref_path) {
  const auto report = corpus_bleu(read_token_lines(hyp_path), read_token_lines(ref_path));
  std::cout << format_bleu(report) << "\n";
  return 0;
}

struct AblateArgs {
  std::string grid, config, out;
  std::string data_src, data_tgt, heldout_src, heldout_tgt, vocab_path;
};

int cmd_ablate(const AblateArgs& args) {
  const KvMap kv = parse_kv_file(args.config);
  RunConfig cfg = RunConfig::from_kv(kv);
  const AblationGrid grid = parse_grid_file(args.grid);

  auto pick = [&](const std::string& flag, const char* key) {
    return flag.empty() ? kv_str(kv, key, "") : flag;
  };
  const std::string data_src = pick(args.data_src, "data_src");
  const std::string data_tgt = pick(args.data_tgt, "data_tgt");
  const std::string heldout_src = pick(args.heldout_src, "heldout_src");
  const std::string heldout_tgt = pick(args.heldout_tgt, "heldout_tgt");
  check(!data_src.empty() && !data_tgt.empty(), "ablate needs data_src/data_tgt (flag or config)");
  check(!heldout_src.empty() && !heldout_tgt.empty(),
        "ablate needs heldout_src/heldout_tgt (flag or config)");

  Vocab vocab;
  const std::string vocab_path = pick(args.vocab_path, "vocab");
  if (!vocab_path.empty())
    vocab = Vocab::load(vocab_path);
  else
    vocab = Vocab::build({data_src, data_tgt});
  cfg.model.vocab_size = vocab.size();

  auto pairs = load_parallel(data_src, data_tgt, vocab, cfg.model.n_max);
  const auto rows = run_ablation(grid, cfg, vocab, pairs, read_token_lines(heldout_src),
                                 read_token_lines(heldout_tgt), args.out, &std::cout);

  std::filesystem::create_directories(args.out);
  const std::string csv = ablation_csv(rows);
  std::ofstream out(args.out + "/results.csv");
  out << csv;
  std::cout << csv;
  return 0;
}

struct GenArgs {
  std::string task = "cipher";
  int vocab_size = 32;
  int pairs = 1000;
  int max_len = 12;
  uint64_t seed = 1;
  double noise = 0.0;
  std::string out_src, out_tgt;
};

int cmd_gen_data(const GenArgs& args) {
  gen_toy_corpus(toy_task_from_name(args.task), args.vocab_size, args.pairs, args.max_len,
                 args.seed, args.out_src, args.out_tgt, args.noise);
  std::cout << "wrote " << args.pairs << " " << args.task << " pairs to " << args.out_src
            << " / " << args.out_tgt << "\n";
  return 0;
}

int cmd_average(const std::vector<std::string>& inputs, const std::string& out_path) {
  const CheckpointHeader head = peek_checkpoint_header(inputs.front());
  CheckpointHeader merged = head;
  if (head.precision == "f64") {
    auto mean = average_checkpoints<double>(inputs);
    save_checkpoint<double>(out_path, merged, mean, mean, nullptr);
  } else {
    auto mean = average_checkpoints<float>(inputs);
    save_checkpoint<float>(out_path, merged, mean, mean, nullptr);
  }
  std::cout << "averaged " << inputs.size() << " checkpoints into " << out_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"desk-scale non-autoregressive translation laboratory"};
  app.require_subcommand(1);

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "train a model");
  train->add_option("--config", train_args.config, "flat key-value config file")->required();
  train->add_option("--data-src", train_args.data_src, "source corpus")->required();
  train->add_option("--data-tgt", train_args.data_tgt, "target corpus")->required();
  train->add_option("--out", train_args.out, "output directory")->required();
  train->add_option("--resume", train_args.resume, "checkpoint to resume from");
  train->add_option("--vocab", train_args.vocab_path, "vocabulary file (default: build from data)");

  TranslateArgs tr_args;
  auto* translate = app.add_subcommand("translate", "mask-predict decode a source file");
  translate->add_option("--ckpt", tr_args.ckpt, "checkpoint file")->required();
  translate->add_option("--input", tr_args.input, "source sentences, one per line")->required();
  translate->add_option("--iterations", tr_args.iterations, "refinement iterations T");
  translate->add_option("--length-candidates", tr_args.length_candidates, "parallel lengths");
  translate->add_option("--remask-threshold", tr_args.remask_threshold,
                        "probability threshold re-masking (0 = count schedule)");
  translate->add_flag("--use-average-model", tr_args.use_average_model,
                      "decode with the EMA average weights");
  translate->add_option("--output", tr_args.output, "write hypotheses here (default stdout)");

  std::string hyp_path, ref_path;
  auto* eval = app.add_subcommand("eval", "corpus BLEU of hypotheses against references");
  eval->add_option("--hyp", hyp_path, "hypothesis file")->required();
  eval->add_option("--ref", ref_path, "reference file")->required();

  AblateArgs ab_args;
  auto* ablate = app.add_subcommand("ablate", "sweep lambda / dropout_average / iterations");
  ablate->add_option("--grid", ab_args.grid, "grid file")->required();
  ablate->add_option("--config", ab_args.config, "base config file")->required();
  ablate->add_option("--out", ab_args.out, "output directory")->required();
  ablate->add_option("--data-src", ab_args.data_src, "training source (or config data_src)");
  ablate->add_option("--data-tgt", ab_args.data_tgt, "training target (or config data_tgt)");
  ablate->add_option("--heldout-src", ab_args.heldout_src, "held-out source (or config)");
  ablate->add_option("--heldout-tgt", ab_args.heldout_tgt, "held-out reference (or config)");
  ablate->add_option("--vocab", ab_args.vocab_path, "vocabulary file");

  GenArgs gen_args;
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic parallel corpus");
  gen->add_option("--task", gen_args.task, "copy | reverse | cipher");
  gen->add_option("--vocab-size", gen_args.vocab_size, "corpus token count (>= 8)");
  gen->add_option("--pairs", gen_args.pairs, "number of sentence pairs");
  gen->add_option("--max-len", gen_args.max_len, "maximum sentence length");
  gen->add_option("--seed", gen_args.seed, "generator seed");
  gen->add_option("--noise", gen_args.noise, "target token corruption rate");
  gen->add_option("--out-src", gen_args.out_src, "source output file")->required();
  gen->add_option("--out-tgt", gen_args.out_tgt, "target output file")->required();

  std::vector<std::string> avg_inputs;
  std::string avg_out;
  auto* avg = app.add_subcommand("average-checkpoints", "element-wise mean of online stores");
  avg->add_option("--out", avg_out, "output checkpoint")->required();
  avg->add_option("checkpoints", avg_inputs, "input checkpoints")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) return cmd_train(train_args);
    if (*translate) return cmd_translate(tr_args);
    if (*eval) return cmd_eval(hyp_path, ref_path);
    if (*ablate) return cmd_ablate(ab_args);
    if (*gen) return cmd_gen_data(gen_args);
    if (*avg) return cmd_average(avg_inputs, avg_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
