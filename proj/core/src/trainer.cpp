#include "sail/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "sail/errors.hpp"

namespace sail {
namespace {

void check_finite(std::span<const double> values, const char* what) {
  for (double v : values)
    if (!std::isfinite(v)) throw NumericError(std::string("adam_step: non-finite gradient in ") + what);
}

void adam_update(std::span<double> param, std::span<const double> grad, std::span<double> m, std::span<double> v,
                 double lr, double beta1, double beta2, double eps, double bc1, double bc2) {
  for (std::size_t i = 0; i < param.size(); ++i) {
    m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
    v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
    const double m_hat = m[i] / bc1;
    const double v_hat = v[i] / bc2;
    param[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
  }
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lr_min > 0.0 && lr_min <= lr0)) throw UsageError("TrainConfig: require 0 < lr_min <= lr0");
  if (epochs < 1) throw UsageError("TrainConfig: epochs must be >= 1");
  if (batch_size < 1) throw UsageError("TrainConfig: batch_size must be >= 1");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0))
    throw UsageError("TrainConfig: Adam betas must lie in [0, 1)");
  if (!(adam_eps > 0.0)) throw UsageError("TrainConfig: adam_eps must be > 0");
  if (!(threshold_momentum >= 0.0 && threshold_momentum < 1.0))
    throw UsageError("TrainConfig: threshold_momentum must lie in [0, 1)");
}

AdamState AdamState::zeros_like(const SaeParams& params) {
  AdamState s;
  s.m_weights = Matrix(params.weights.rows(), params.weights.cols());
  s.v_weights = s.m_weights;
  s.m_pre_bias.assign(params.pre_bias.size(), 0.0);
  s.v_pre_bias = s.m_pre_bias;
  s.m_enc_bias.assign(params.enc_bias.size(), 0.0);
  s.v_enc_bias = s.m_enc_bias;
  return s;
}

double lr_schedule(std::size_t step, std::size_t total_steps, double lr0, double lr_min) {
  if (total_steps == 0) throw UsageError("lr_schedule: total_steps must be >= 1");
  if (step > total_steps) throw UsageError("lr_schedule: step beyond total_steps");
  const double phase = std::numbers::pi * static_cast<double>(step) / static_cast<double>(total_steps);
  return lr_min + 0.5 * (lr0 - lr_min) * (1.0 + std::cos(phase));
}

void adam_step(AdamState& state, SaeParams& params, const Gradients& grads, double lr, const TrainConfig& config) {
  if (grads.weights.rows() != params.weights.rows() || grads.weights.cols() != params.weights.cols() ||
      grads.pre_bias.size() != params.pre_bias.size() || grads.enc_bias.size() != params.enc_bias.size())
    throw UsageError("adam_step: gradient shapes do not match parameters");
  check_finite(grads.weights.values(), "W");
  check_finite(grads.pre_bias, "b_pre");
  check_finite(grads.enc_bias, "b_enc");

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(config.adam_beta1, t);
  const double bc2 = 1.0 - std::pow(config.adam_beta2, t);
  const double b1 = config.adam_beta1, b2 = config.adam_beta2, eps = config.adam_eps;
  adam_update(params.weights.values(), grads.weights.values(), state.m_weights.values(), state.v_weights.values(), lr,
              b1, b2, eps, bc1, bc2);
  adam_update(params.pre_bias, grads.pre_bias, state.m_pre_bias, state.v_pre_bias, lr, b1, b2, eps, bc1, bc2);
  adam_update(params.enc_bias, grads.enc_bias, state.m_enc_bias, state.v_enc_bias, lr, b1, b2, eps, bc1, bc2);
}

double evaluate_loss(const EmbeddingDataset& dataset, std::span<const std::size_t> rows, const SaeParams& params,
                     const SaeConfig& config, std::size_t batch_size) {
  if (rows.empty()) throw DataError("evaluate_loss: empty row set");
  double weighted = 0.0;
  for (std::size_t start = 0; start < rows.size(); start += batch_size) {
    const auto count = std::min(batch_size, rows.size() - start);
    const Matrix x = dataset.gather(rows.subspan(start, count));
    weighted += forward_train(params, x, config).loss * static_cast<double>(count);
  }
  return weighted / static_cast<double>(rows.size());
}

Checkpoint train(const EmbeddingDataset& dataset, const SplitAssignment& split, const SaeConfig& sae_config,
                 const TrainConfig& train_config, const EpochCallback& on_epoch) {
  train_config.validate();
  sae_config.validate();
  if (sae_config.input_dim != dataset.d())
    throw UsageError("SAE input_dim " + std::to_string(sae_config.input_dim) + " != dataset d=" +
                     std::to_string(dataset.d()));
  if (split.train_ids.empty()) throw DataError("train: empty train split");

  const auto train_rows = dataset.rows_of(split.train_ids);
  const auto val_rows = dataset.rows_of(split.val_ids);

  Checkpoint cp;
  cp.sae = sae_config;
  cp.train = train_config;
  const auto mean = dataset_mean(dataset, train_rows);
  cp.params = init_params(sae_config, train_config.seed, mean);
  auto adam = AdamState::zeros_like(cp.params);

  const std::size_t steps_per_epoch = (train_rows.size() + train_config.batch_size - 1) / train_config.batch_size;
  const std::size_t total_steps = train_config.epochs * steps_per_epoch;
  std::size_t step = 0;

  for (std::size_t epoch = 0; epoch < train_config.epochs; ++epoch) {
    BatchSampler sampler(dataset, train_rows, train_config.batch_size, train_config.seed, epoch);
    double weighted_loss = 0.0;
    while (auto batch = sampler.next()) {
      auto result = forward_backward(cp.params, batch->x, sae_config);
      if (!std::isfinite(result.forward.loss))
        throw NumericError("training diverged: non-finite loss at step " + std::to_string(step) + " (epoch " +
                           std::to_string(epoch) + ")");
      const double lr = lr_schedule(step, total_steps, train_config.lr0, train_config.lr_min);
      adam_step(adam, cp.params, result.grads, lr, train_config);
      update_thresholds(cp.params, result.forward.min_kept, train_config.threshold_momentum);
      weighted_loss += result.forward.loss * static_cast<double>(batch->rows.size());
      ++step;
    }
    EpochReport report;
    report.epoch = epoch;
    report.train_loss = weighted_loss / static_cast<double>(train_rows.size());
    report.val_loss = val_rows.empty()
                          ? std::numeric_limits<double>::quiet_NaN()
                          : evaluate_loss(dataset, val_rows, cp.params, sae_config, train_config.batch_size);
    if (!val_rows.empty() && !std::isfinite(report.val_loss))
      throw NumericError("training diverged: non-finite validation loss after step " + std::to_string(step));
    cp.train_loss.push_back(report.train_loss);
    if (!val_rows.empty()) cp.val_loss.push_back(report.val_loss);
    cp.threshold_trace.push_back(cp.params.thresholds);
    cp.epochs_completed = epoch + 1;
    cp.final_loss = report.train_loss;
    if (on_epoch) on_epoch(report);
  }
  return cp;
}

}  // namespace sail
