#pragma once

// Matryoshka sparse autoencoder with a tied, unit-normalized decoder.
//
// Encoder:  z = relu(W (x - b_pre) + b_enc)            (D_L codes)
// Level l:  BatchTopK over the prefix [0, D_l) during training, a per-level
//           JumpReLU threshold at inference.
// Decoder:  x_hat = b_pre + sum_j a_j * W_j / |W_j|
// Loss:     mean over levels of the per-element MSE.
//
// Levels are 1-based throughout the public API.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "sail/matrix.hpp"

namespace sail {

struct SaeConfig {
  std::size_t input_dim = 0;
  std::vector<std::size_t> dict_sizes;  // strictly increasing
  std::vector<std::size_t> k_values;    // k_l <= D_l

  std::size_t levels() const noexcept { return dict_sizes.size(); }
  std::size_t dict_size() const { return dict_sizes.back(); }
  std::size_t prefix(std::size_t level) const { return dict_sizes.at(level - 1); }
  std::size_t k(std::size_t level) const { return k_values.at(level - 1); }

  /// Throws UsageError when the invariants do not hold.
  void validate() const;

  friend bool operator==(const SaeConfig&, const SaeConfig&) = default;
};

struct SaeParams {
  Matrix weights;                     // D_L x d; row j is encoder row j and (normalized) decoder column j
  std::vector<double> pre_bias;       // d
  std::vector<double> enc_bias;       // D_L
  std::vector<double> thresholds;     // L, JumpReLU threshold per level
  std::vector<double> threshold_ema;  // L, raw (biased) EMA accumulators
  std::uint64_t threshold_steps = 0;

  friend bool operator==(const SaeParams&, const SaeParams&) = default;
};

struct Activation {
  std::uint32_t index = 0;
  double value = 0.0;

  friend bool operator==(const Activation&, const Activation&) = default;
};

struct SparseCode {
  std::size_t level = 1;
  std::vector<Activation> entries;  // ascending index, positive values

  friend bool operator==(const SparseCode&, const SparseCode&) = default;
};

/// Gaussian rows scaled to unit norm; b_pre = data_mean; everything else zero.
SaeParams init_params(const SaeConfig& config, std::uint64_t seed, std::span<const double> data_mean);

/// relu(W (x - b_pre) + b_enc) for every row of x. Result is B x D_L.
Matrix encode_pre(const SaeParams& params, const Matrix& x);

/// Keeps the k_level * B largest strictly positive values of the level
/// prefix across the whole batch. Ties at the cutoff keep the smaller row,
/// then the smaller column.
std::vector<SparseCode> batch_topk(const Matrix& preacts, std::size_t level, const SaeConfig& config);

Matrix decode(const SaeParams& params, std::span<const SparseCode> codes);

/// Decoder directions W_j / |W_j|.
Matrix decoder_directions(const SaeParams& params);

struct ForwardResult {
  Matrix preacts;                                // B x D_L (post-ReLU)
  std::vector<std::vector<SparseCode>> codes;    // [level-1][sample]
  std::vector<Matrix> reconstructions;           // [level-1]
  std::vector<double> level_mse;                 // [level-1]
  std::vector<double> min_kept;                  // [level-1]
  double loss = 0.0;
};

ForwardResult forward_train(const SaeParams& params, const Matrix& x, const SaeConfig& config);

struct Gradients {
  Matrix weights;
  std::vector<double> pre_bias;
  std::vector<double> enc_bias;
};

struct TrainStepResult {
  ForwardResult forward;
  Gradients grads;
};

/// Forward pass plus exact gradients of the loss with the TopK selection
/// sets and ReLU masks held at their forward values. The decoder gradient
/// includes the Jacobian of the row normalization.
TrainStepResult forward_backward(const SaeParams& params, const Matrix& x, const SaeConfig& config);
Gradients backward(const SaeParams& params, const Matrix& x, const SaeConfig& config);

/// JumpReLU encoding: prefix codes strictly above thresholds[level-1].
SparseCode encode_inference(const SaeParams& params, std::span<const double> x, const SaeConfig& config,
                            std::size_t level);
std::vector<SparseCode> encode_inference(const SaeParams& params, const Matrix& x, const SaeConfig& config,
                                         std::size_t level);

/// Debiased EMA of the minimum kept activation per level.
void update_thresholds(SaeParams& params, std::span<const double> min_kept, double momentum);

}  // namespace sail
