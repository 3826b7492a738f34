#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "natlab/adam.hpp"
#include "natlab/checkpoint.hpp"
#include "natlab/config.hpp"
#include "natlab/data.hpp"
#include "natlab/ema.hpp"
#include "natlab/losses.hpp"
#include "natlab/masking.hpp"
#include "natlab/model.hpp"
#include "natlab/vocab.hpp"

namespace natlab {

struct TrainConfig {
  int tokens_per_batch = 2048;
  int64_t max_steps = 1000;
  int64_t warmup_steps = 1000;
  double peak_lr = 5e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.98;
  double adam_eps = 1e-9;
  double ema_alpha = 0.996;
  uint64_t seed = 1;
  int64_t checkpoint_interval = 0;  // 0: checkpoint only at the end
  int keep_last_k = 10;
  int64_t log_interval = 1;
  double clip_norm = 1.0;  // global norm; <= 0 disables
  std::string precision = "f32";

  void validate() const {
    check(tokens_per_batch >= 1, "tokens_per_batch must be >= 1");
    check(max_steps >= 1, "max_steps must be >= 1");
    check(warmup_steps >= 1, "warmup_steps must be >= 1");
    check(peak_lr > 0, "peak_lr must be > 0");
    check(ema_alpha >= 0 && ema_alpha <= 1, "ema_alpha must lie in [0, 1]");
    check(keep_last_k >= 1, "keep_last_k must be >= 1");
    check(log_interval >= 1, "log_interval must be >= 1");
    check(precision == "f32" || precision == "f64", "precision must be f32 or f64, got '",
          precision, "'");
  }
};

// Whole-run configuration, mirrored one-to-one by the flat key-value file.
struct RunConfig {
  ModelConfig model;
  LossConfig loss;
  TrainConfig train;

  void validate() const {
    model.validate();
    loss.validate();
    train.validate();
  }

  static RunConfig from_kv(const KvMap& kv);
  KvMap to_kv() const;
};

namespace cfg_detail {
inline const char* kKnownKeys[] = {
    "d_model", "d_inner", "n_layers_enc", "n_layers_dec", "n_heads", "vocab_size", "n_max",
    "dropout_online", "dropout_average", "lambda", "label_smoothing", "tokens_per_batch",
    "max_steps", "warmup_steps", "peak_lr", "adam_beta1", "adam_beta2", "adam_eps", "ema_alpha",
    "seed", "checkpoint_interval", "keep_last_k", "log_interval", "clip_norm", "precision"};
// Dataset pointers may live in the same file (used by the ablation driver);
// they are not RunConfig fields.
inline const char* kPassThroughKeys[] = {"data_src", "data_tgt", "heldout_src", "heldout_tgt",
                                         "vocab"};
}  // namespace cfg_detail

inline RunConfig RunConfig::from_kv(const KvMap& kv) {
  for (const auto& [key, value] : kv) {
    bool known = false;
    for (const char* k : cfg_detail::kKnownKeys) known |= key == k;
    for (const char* k : cfg_detail::kPassThroughKeys) known |= key == k;
    check(known, "unknown config key '", key, "'");
  }
  RunConfig c;
  c.model.d_model = static_cast<int>(kv_i64(kv, "d_model", c.model.d_model));
  c.model.d_inner = static_cast<int>(kv_i64(kv, "d_inner", c.model.d_inner));
  c.model.n_layers_enc = static_cast<int>(kv_i64(kv, "n_layers_enc", c.model.n_layers_enc));
  c.model.n_layers_dec = static_cast<int>(kv_i64(kv, "n_layers_dec", c.model.n_layers_dec));
  c.model.n_heads = static_cast<int>(kv_i64(kv, "n_heads", c.model.n_heads));
  c.model.vocab_size = static_cast<int>(kv_i64(kv, "vocab_size", c.model.vocab_size));
  c.model.n_max = static_cast<int>(kv_i64(kv, "n_max", c.model.n_max));
  c.model.dropout_online = kv_f64(kv, "dropout_online", c.model.dropout_online);
  c.model.dropout_average = kv_f64(kv, "dropout_average", c.model.dropout_average);
  c.loss.lambda = kv_f64(kv, "lambda", c.loss.lambda);
  c.loss.label_smoothing = kv_f64(kv, "label_smoothing", c.loss.label_smoothing);
  c.train.tokens_per_batch = static_cast<int>(kv_i64(kv, "tokens_per_batch", c.train.tokens_per_batch));
  c.train.max_steps = kv_i64(kv, "max_steps", c.train.max_steps);
  c.train.warmup_steps = kv_i64(kv, "warmup_steps", c.train.warmup_steps);
  c.train.peak_lr = kv_f64(kv, "peak_lr", c.train.peak_lr);
  c.train.adam_beta1 = kv_f64(kv, "adam_beta1", c.train.adam_beta1);
  c.train.adam_beta2 = kv_f64(kv, "adam_beta2", c.train.adam_beta2);
  c.train.adam_eps = kv_f64(kv, "adam_eps", c.train.adam_eps);
  c.train.ema_alpha = kv_f64(kv, "ema_alpha", c.train.ema_alpha);
  c.train.seed = kv_u64(kv, "seed", c.train.seed);
  c.train.checkpoint_interval = kv_i64(kv, "checkpoint_interval", c.train.checkpoint_interval);
  c.train.keep_last_k = static_cast<int>(kv_i64(kv, "keep_last_k", c.train.keep_last_k));
  c.train.log_interval = kv_i64(kv, "log_interval", c.train.log_interval);
  c.train.clip_norm = kv_f64(kv, "clip_norm", c.train.clip_norm);
  c.train.precision = kv_str(kv, "precision", c.train.precision);
  return c;
}

inline KvMap RunConfig::to_kv() const {
  KvMap kv;
  auto put_i = [&](const char* k, int64_t v) { kv[k] = std::to_string(v); };
  auto put_f = [&](const char* k, double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    kv[k] = buf;
  };
  put_i("d_model", model.d_model);
  put_i("d_inner", model.d_inner);
  put_i("n_layers_enc", model.n_layers_enc);
  put_i("n_layers_dec", model.n_layers_dec);
  put_i("n_heads", model.n_heads);
  put_i("vocab_size", model.vocab_size);
  put_i("n_max", model.n_max);
  put_f("dropout_online", model.dropout_online);
  put_f("dropout_average", model.dropout_average);
  put_f("lambda", loss.lambda);
  put_f("label_smoothing", loss.label_smoothing);
  put_i("tokens_per_batch", train.tokens_per_batch);
  put_i("max_steps", train.max_steps);
  put_i("warmup_steps", train.warmup_steps);
  put_f("peak_lr", train.peak_lr);
  put_f("adam_beta1", train.adam_beta1);
  put_f("adam_beta2", train.adam_beta2);
  put_f("adam_eps", train.adam_eps);
  put_f("ema_alpha", train.ema_alpha);
  kv["seed"] = std::to_string(train.seed);
  put_i("checkpoint_interval", train.checkpoint_interval);
  put_i("keep_last_k", train.keep_last_k);
  put_i("log_interval", train.log_interval);
  put_f("clip_norm", train.clip_norm);
  kv["precision"] = train.precision;
  return kv;
}

// Inverse-square-root schedule with linear warmup:
//   lr(step) = peak_lr * min(step / warmup, sqrt(warmup / step)).
inline double lr_at(int64_t step, int64_t warmup_steps, double peak_lr) {
  check(step >= 1, "lr_at: step must be >= 1, got ", step);
  check(warmup_steps >= 1, "lr_at: warmup_steps must be >= 1");
  const double s = static_cast<double>(step), w = static_cast<double>(warmup_steps);
  return peak_lr * std::min(s / w, std::sqrt(w / s));
}

template <class T>
struct TrainState {
  int64_t step = 0;
  ParamStore<T> online;
  ParamStore<T> average;
  AdamState<T> adam;
  uint64_t seed = 0;
};

// One training batch: shared sources, the two masked views of the targets
// (as padded decoder inputs), and the true lengths for the length head.
struct TrainBatch {
  Padded2D src;
  DualViewBatch dual;
  Padded2D tgt_v1;
  Padded2D tgt_v2;
  std::vector<int> true_lengths;
};

TrainBatch make_train_batch(const std::vector<SentencePair>& pairs,
                            const std::vector<int>& indices, const Rng& mask_rng);

// Stream tags for derived rngs; all per-step randomness is a pure function
// of (seed, tag, step, ...) so interrupted runs resume bit-exactly.
namespace stream_tag {
constexpr uint64_t kInit = 0x696e6974;    // parameter initialization
constexpr uint64_t kEpoch = 0x65706f63;   // per-epoch batch order
constexpr uint64_t kMask = 0x6d61736b;    // per-step dual masking
constexpr uint64_t kDropout = 0x64726f70; // per-step, per-forward dropout
}  // namespace stream_tag

// Observation points inside train_step, in execution order:
//   "after_backward"  - gradients ready, nothing updated yet
//   "after_optimizer" - online store updated, average store untouched
//   "after_ema"       - average store updated
template <class T>
struct StepHooks {
  std::function<void(const std::string& phase, const TrainState<T>&)> on_phase;
};

// Algorithm: four forwards (online and average on both views), one backward,
// one Adam step on the online store only, then one EMA step.
template <class T>
LossBreakdown train_step(TrainState<T>& state, const TrainBatch& batch, const RunConfig& cfg,
                         const StepHooks<T>* hooks = nullptr) {
  const int64_t step = state.step + 1;
  const Rng base(state.seed);
  Rng drop_on1 = base.fork(stream_tag::kDropout, static_cast<uint64_t>(step), 1);
  Rng drop_on2 = base.fork(stream_tag::kDropout, static_cast<uint64_t>(step), 2);
  Rng drop_av1 = base.fork(stream_tag::kDropout, static_cast<uint64_t>(step), 3);
  Rng drop_av2 = base.fork(stream_tag::kDropout, static_cast<uint64_t>(step), 4);

  Tape<T> tape(true);
  auto online = bind_params(tape, state.online, true);
  auto out1 = forward(tape, online, cfg.model, batch.src, batch.tgt_v1,
                      static_cast<T>(cfg.model.dropout_online), drop_on1);
  auto out2 = forward(tape, online, cfg.model, batch.src, batch.tgt_v2,
                      static_cast<T>(cfg.model.dropout_online), drop_on2);

  Tape<T> frozen(false);
  auto average = bind_params(frozen, state.average, false);
  auto avg1 = forward(frozen, average, cfg.model, batch.src, batch.tgt_v1,
                      static_cast<T>(cfg.model.dropout_average), drop_av1);
  auto avg2 = forward(frozen, average, cfg.model, batch.src, batch.tgt_v2,
                      static_cast<T>(cfg.model.dropout_average), drop_av2);

  auto lp1 = log_softmax(tape, out1.token_logits, 2);
  auto lp2 = log_softmax(tape, out2.token_logits, 2);
  auto alp1 = log_softmax(frozen, avg1.token_logits, 2);
  auto alp2 = log_softmax(frozen, avg2.token_logits, 2);

  const T smoothing = static_cast<T>(cfg.loss.label_smoothing);
  auto nll1 = nll_masked_batch(tape, lp1, batch.dual.view1, smoothing);
  auto nll2 = nll_masked_batch(tape, lp2, batch.dual.view2, smoothing);
  auto [mkl1, mkl2] = model_consistency(tape, lp1, lp2, alp1, alp2, batch.dual);
  auto skl = shared_mask_consistency(tape, lp1, lp2, alp1, alp2, batch.dual);
  auto len = length_loss(tape, out1.length_logits, batch.true_lengths);
  auto losses =
      total_loss(tape, nll1, nll2, mkl1, mkl2, skl[0], skl[1], skl[2], len, cfg.loss);

  const LossBreakdown breakdown = losses.values();
  if (!std::isfinite(breakdown.total)) {
    std::string dump = concat("non-finite loss at step ", step, ": nll1=", breakdown.nll1,
                              " nll2=", breakdown.nll2, " mkl1=", breakdown.mkl1, " mkl2=",
                              breakdown.mkl2, " skl1=", breakdown.skl1, " skl2=", breakdown.skl2,
                              " skl3=", breakdown.skl3, " len=", breakdown.len, "; batch of ",
                              batch.dual.size(), " sentences, src:");
    for (size_t b = 0; b < batch.dual.size() && b < 8; ++b) {
      dump += concat("\n  sentence ", b, " src=[");
      for (int32_t id : batch.src.row(static_cast<int>(b))) dump += concat(id, " ");
      dump += concat("] tgt=[");
      for (int32_t id : batch.dual.view1[b].original_ids) dump += concat(id, " ");
      dump += "]";
    }
    fatal(dump);
  }

  tape.backward(losses.total);

  TensorMap<T> grads;
  for (const auto& [name, data] : state.online) grads.emplace(name, grad_of(*online.at(name)));
  clip_grads(grads, cfg.train.clip_norm);

  if (hooks && hooks->on_phase) hooks->on_phase("after_backward", state);
  AdamConfig adam_cfg{cfg.train.adam_beta1, cfg.train.adam_beta2, cfg.train.adam_eps};
  adam_step(state.online, state.adam, grads,
            lr_at(step, cfg.train.warmup_steps, cfg.train.peak_lr), adam_cfg);
  if (hooks && hooks->on_phase) hooks->on_phase("after_optimizer", state);
  ema_step(state.average, state.online, cfg.train.ema_alpha);
  state.step = step;
  if (hooks && hooks->on_phase) hooks->on_phase("after_ema", state);
  return breakdown;
}

// One metrics record: the step and the nine loss scalars, nothing else
// (no timestamps), so logs from equal-seed runs compare byte-for-byte.
inline std::string format_metrics_line(int64_t step, const LossBreakdown& b) {
  char buf[360];
  std::snprintf(buf, sizeof(buf),
                "step=%lld nll1=%.9g nll2=%.9g mkl1=%.9g mkl2=%.9g skl1=%.9g skl2=%.9g "
                "skl3=%.9g len=%.9g total=%.9g",
                static_cast<long long>(step), b.nll1, b.nll2, b.mkl1, b.mkl2, b.skl1, b.skl2,
                b.skl3, b.len, b.total);
  return buf;
}

inline std::string checkpoint_name(int64_t step) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "checkpoint_%08lld.natck", static_cast<long long>(step));
  return buf;
}

std::vector<std::string> list_checkpoints(const std::string& dir);

// The model-identity subset of a config: checkpoints are averageable when
// these agree, even if training-schedule fields (max_steps, lr, ...) differ
// across resumed runs.
inline KvMap model_identity_config(const KvMap& kv) {
  KvMap out;
  for (const char* key : {"d_model", "d_inner", "n_layers_enc", "n_layers_dec", "n_heads",
                          "vocab_size", "n_max", "precision"}) {
    auto it = kv.find(key);
    if (it != kv.end()) out.insert(*it);
  }
  return out;
}

// Element-wise arithmetic mean of the online stores of several checkpoints
// (all of the same model). The classic post-training smoother.
template <class T>
ParamStore<T> average_checkpoints(const std::vector<std::string>& paths) {
  check(!paths.empty(), "average_checkpoints: no checkpoint paths given");
  ParamStore<T> mean;
  KvMap first_config;
  std::vector<std::string> first_vocab;
  for (size_t i = 0; i < paths.size(); ++i) {
    Checkpoint<T> ckpt = load_checkpoint<T>(paths[i]);
    if (i == 0) {
      first_config = model_identity_config(ckpt.header.config);
      first_vocab = ckpt.header.vocab_tokens;
      mean = std::move(ckpt.online);
      continue;
    }
    check(model_identity_config(ckpt.header.config) == first_config &&
              ckpt.header.vocab_tokens == first_vocab,
          "checkpoint '", paths[i], "' was produced with a different config than '", paths[0],
          "'");
    check(ckpt.online.size() == mean.size(), "checkpoint '", paths[i], "' has ",
          ckpt.online.size(), " tensors, expected ", mean.size());
    for (auto& [name, acc] : mean) {
      const TensorData<T>& t = ckpt.online.at(name);
      check(t.shape == acc.shape, "tensor '", name, "' shape mismatch across checkpoints");
      for (int64_t j = 0; j < acc.size(); ++j) acc.at(j) += t.at(j);
    }
  }
  const T inv = T(1) / static_cast<T>(paths.size());
  for (auto& [name, acc] : mean)
    for (int64_t j = 0; j < acc.size(); ++j) acc.at(j) *= inv;
  return mean;
}

template <class T>
void save_train_checkpoint(const std::string& path, const TrainState<T>& state,
                           const RunConfig& cfg, const std::vector<std::string>& vocab_tokens) {
  CheckpointHeader header;
  header.step = state.step;
  header.seed = state.seed;
  header.precision = cfg.train.precision;
  header.config = cfg.to_kv();
  header.vocab_tokens = vocab_tokens;
  save_checkpoint(path, header, state.online, state.average, &state.adam);
}

// Full training drive: deterministic batch plan, per-step dual masking,
// metrics log, periodic checkpoints pruned to keep_last_k. Resuming from a
// checkpoint continues the exact stream the uninterrupted run would have
// produced (the plan depends only on the corpus and the seed, per-step
// randomness only on (seed, step)).
template <class T>
TrainState<T> run_training(const RunConfig& cfg, const std::vector<SentencePair>& pairs,
                           const Vocab& vocab, const std::string& out_dir,
                           const std::string& resume_path = "", std::ostream* console = nullptr,
                           const StepHooks<T>* hooks = nullptr) {
  cfg.validate();
  check(!pairs.empty(), "training corpus is empty");
  check(cfg.model.vocab_size == vocab.size(), "config vocab_size ", cfg.model.vocab_size,
        " does not match vocabulary of ", vocab.size());
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);

  TrainState<T> state;
  if (!resume_path.empty()) {
    Checkpoint<T> ckpt = load_checkpoint<T>(resume_path);
    check(ckpt.has_adam, "checkpoint '", resume_path, "' lacks optimizer state, cannot resume");
    state.step = ckpt.header.step;
    state.seed = ckpt.header.seed;
    state.online = std::move(ckpt.online);
    state.average = std::move(ckpt.average);
    state.adam = std::move(ckpt.adam);
  } else {
    state.seed = cfg.train.seed;
    state.online = init_params<T>(cfg.model, Rng(state.seed).fork(stream_tag::kInit));
    state.average = init_average(state.online);
    state.adam = init_adam(state.online);
  }

  std::ofstream metrics(out_dir + "/metrics.log",
                        resume_path.empty() ? std::ios::trunc : std::ios::app);
  check(metrics.good(), "cannot open metrics log in '", out_dir, "'");

  const Rng base(state.seed);
  const int64_t n_batches = static_cast<int64_t>(
      make_batches(pairs, cfg.train.tokens_per_batch, base.fork(stream_tag::kEpoch, 0)).size());
  std::vector<std::vector<int>> epoch_batches;
  int64_t cached_epoch = -1;

  for (int64_t step = state.step + 1; step <= cfg.train.max_steps; ++step) {
    const int64_t epoch = (step - 1) / n_batches;
    const int64_t slot = (step - 1) % n_batches;
    if (epoch != cached_epoch) {
      epoch_batches = make_batches(pairs, cfg.train.tokens_per_batch,
                                   base.fork(stream_tag::kEpoch, static_cast<uint64_t>(epoch)));
      cached_epoch = epoch;
    }
    const Rng mask_rng = base.fork(stream_tag::kMask, static_cast<uint64_t>(step));
    TrainBatch batch =
        make_train_batch(pairs, epoch_batches[static_cast<size_t>(slot)], mask_rng);

    LossBreakdown breakdown;
    try {
      breakdown = train_step(state, batch, cfg, hooks);
    } catch (const FatalError& e) {
      std::ofstream dump(out_dir + "/diverged.txt");
      dump << e.what() << '\n';
      throw;
    }

    if (step % cfg.train.log_interval == 0 || step == cfg.train.max_steps)
      metrics << format_metrics_line(step, breakdown) << '\n' << std::flush;
    if (console && (step % 100 == 0 || step == cfg.train.max_steps))
      *console << "step " << step << "/" << cfg.train.max_steps << " total=" << breakdown.total
               << "\n";

    const bool periodic =
        cfg.train.checkpoint_interval > 0 && step % cfg.train.checkpoint_interval == 0;
    if (periodic || step == cfg.train.max_steps) {
      save_train_checkpoint(out_dir + "/" + checkpoint_name(step), state, cfg,
                            vocab.corpus_tokens());
      auto kept = list_checkpoints(out_dir);
      while (kept.size() > static_cast<size_t>(cfg.train.keep_last_k)) {
        fs::remove(kept.front());
        kept.erase(kept.begin());
      }
    }
  }
  return state;
}

}  // namespace natlab
