#pragma once

// Adam training loop, checkpoints, and corpus evaluation.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "rose/audio_io.hpp"
#include "rose/echo_sim.hpp"
#include "rose/losses.hpp"
#include "rose/metrics.hpp"
#include "rose/model.hpp"

namespace rose {

struct TrainConfig {
  double lr = 3e-4;
  double lr_decay = 0.999;  // per epoch
  std::size_t batch_size = 64;
  std::size_t epochs = 1;
  std::size_t steps = 0;  // when > 0, overrides epochs
  std::uint64_t seed = 0;
  double clip_seconds = 4.0;
  int sample_rate = 16000;
  std::size_t threads = 1;
  std::size_t checkpoint_every = 1;  // epochs between checkpoint writes; 0: only at the end
  LossConfig loss;
  ModelConfig model;

  void validate() const;
  double lr_at_epoch(std::size_t epoch) const;
};

// `key = value` lines, '#' starts a comment. Unknown keys and malformed
// values raise ConfigError with the line number.
TrainConfig parse_config(const std::string& text);
TrainConfig load_config(const std::filesystem::path& path);
// Every key, one per line, in a fixed order; parse_config(config_to_text(c)) == c.
std::string config_to_text(const TrainConfig& cfg);
// Documented keys in the order config_to_text writes them.
std::vector<std::string> config_keys();

struct AdamState {
  std::uint64_t step = 0;
  std::map<std::string, std::vector<float>> m;
  std::map<std::string, std::vector<float>> v;
};

struct AdamParams {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam update in place. Throws NumericError naming the first
// parameter whose gradient is not finite; no parameter is modified then.
void adam_step(ModelWeights<float>& params, const std::map<std::string, std::vector<float>>& grads,
               AdamState& state, double lr, const AdamParams& hp = {});

struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;
  TrainConfig config;
  std::uint64_t step = 0;
  ModelWeights<float> weights;
  AdamState adam;
};

std::vector<unsigned char> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::vector<unsigned char>& bytes);
// Written to a sibling temp file and renamed into place.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

struct TrainingPair {
  std::string name;
  AudioClip clean;
  AudioClip noisy;
};

// Loads manifest pairs, resampled to the training rate and fitted to
// clip_seconds (when positive).
std::vector<TrainingPair> load_pairs(const Manifest& manifest, const TrainConfig& cfg);

struct StepLog {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double lr = 0.0;
  LossBreakdown loss;  // batch mean
};

inline constexpr const char* kTrainLogHeader = "step,epoch,lr,mae,mag,spec,mfcc,total";
void write_log_row(std::ostream& out, const StepLog& row);

struct TrainOptions {
  std::ostream* log = nullptr;                // CSV rows, header first
  std::filesystem::path checkpoint_path;      // empty: no files written
  std::function<void(const StepLog&)> on_step;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<StepLog> history;
};

Checkpoint initial_checkpoint(const TrainConfig& cfg);

TrainResult train(const TrainConfig& cfg, const std::vector<TrainingPair>& pairs,
                  const TrainOptions& opts = {});
TrainResult train(const TrainConfig& cfg, const std::filesystem::path& manifest_path,
                  const TrainOptions& opts = {});

// Loss breakdown of the current weights on one pair, no tape.
LossBreakdown pair_loss(const Checkpoint& ckpt, const TrainingPair& pair);

// Enhances every pair and scores it against the clean reference.
metrics::MetricReport evaluate(const Checkpoint& ckpt, const std::vector<TrainingPair>& pairs);
metrics::MetricReport evaluate(const Checkpoint& ckpt, const std::filesystem::path& manifest_path);

}  // namespace rose
