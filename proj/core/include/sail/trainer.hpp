#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "sail/embedding_store.hpp"
#include "sail/sae.hpp"

namespace sail {

struct TrainConfig {
  double lr0 = 1e-4;
  double lr_min = 1e-6;
  std::size_t epochs = 100;
  std::size_t batch_size = 2048;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  double threshold_momentum = 0.99;

  void validate() const;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct AdamState {
  Matrix m_weights, v_weights;
  std::vector<double> m_pre_bias, v_pre_bias;
  std::vector<double> m_enc_bias, v_enc_bias;
  std::uint64_t step = 0;

  static AdamState zeros_like(const SaeParams& params);
};

/// lr_min + (lr0 - lr_min) * (1 + cos(pi * step / total_steps)) / 2
double lr_schedule(std::size_t step, std::size_t total_steps, double lr0, double lr_min);

/// Bias-corrected Adam on W, b_pre and b_enc. Thresholds are left alone.
void adam_step(AdamState& state, SaeParams& params, const Gradients& grads, double lr, const TrainConfig& config);

struct Checkpoint {
  SaeConfig sae;
  SaeParams params;
  TrainConfig train;
  std::size_t epochs_completed = 0;
  double final_loss = 0.0;
  std::vector<double> train_loss;                    // per epoch, mean over batches
  std::vector<double> val_loss;                      // per epoch, BatchTopK encoding
  std::vector<std::vector<double>> threshold_trace;  // per epoch, one value per level

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

struct EpochReport {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

using EpochCallback = std::function<void(const EpochReport&)>;

/// Full training run. Parameters start from init_params with the train-split
/// mean; each step runs forward/backward, an Adam step on the cosine
/// schedule, and a threshold EMA update. Throws NumericError on a non-finite
/// loss.
Checkpoint train(const EmbeddingDataset& dataset, const SplitAssignment& split, const SaeConfig& sae_config,
                 const TrainConfig& train_config, const EpochCallback& on_epoch = {});

/// Mean BatchTopK loss over a row set, batched like training.
double evaluate_loss(const EmbeddingDataset& dataset, std::span<const std::size_t> rows, const SaeParams& params,
                     const SaeConfig& config, std::size_t batch_size);

// Checkpoint file: "SAEC", u32 version, u32 section count, then sections of
// [4-byte tag][u64 byte length][payload]. See README for the tag list.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint(std::ostream& out, const Checkpoint& cp);
Checkpoint read_checkpoint(std::istream& in);
void save_checkpoint(const Checkpoint& cp, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

struct SweepSpec {
  std::vector<std::vector<std::size_t>> dict_families;
  std::vector<std::vector<std::size_t>> sparsity_patterns;
  std::vector<std::uint64_t> replicate_seeds;
  // When set, a level with k > D is saturated to k = D instead of rejected.
  bool clamp_k = false;
};

/// Four dictionary families x four fixed + four progressive sparsity
/// patterns x three replicate seeds, with clamp_k set so the small
/// families accept every pattern.
SweepSpec default_sweep_spec();

/// Reads a sweep spec from TOML (.toml) or JSON (anything else).
SweepSpec load_sweep_spec(const std::filesystem::path& path);

struct SweepEntry {
  SaeConfig config;
  std::uint64_t seed = 0;

  /// Stable identifier, e.g. "D16-64-256-1024_K5-10-20-40_s0".
  std::string id() const;
};

/// Cartesian product families x patterns x seeds, in that nesting order.
std::vector<SweepEntry> enumerate_sweep(const SweepSpec& spec, std::size_t input_dim);

struct SweepRunResult {
  SweepEntry entry;
  Checkpoint checkpoint;
};

/// Trains every entry with up to `workers` concurrent runs. Each run copies
/// `base` and overrides the seed. Results keep enumeration order.
std::vector<SweepRunResult> run_sweep(const EmbeddingDataset& dataset, const SplitAssignment& split,
                                      const std::vector<SweepEntry>& entries, const TrainConfig& base,
                                      std::size_t workers,
                                      const std::function<void(const SweepRunResult&)>& on_done = {});

}  // namespace sail
