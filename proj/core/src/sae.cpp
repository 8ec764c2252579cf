#include "sail/sae.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "sail/errors.hpp"
#include "sail/random.hpp"

namespace sail {
namespace {

void check_level(const SaeConfig& config, std::size_t level) {
  if (level < 1 || level > config.levels())
    throw UsageError("invalid level " + std::to_string(level) + " (config has " + std::to_string(config.levels()) +
                     " levels)");
}

void check_input(const SaeParams& params, const Matrix& x) {
  if (x.cols() != params.pre_bias.size())
    throw UsageError("input has " + std::to_string(x.cols()) + " columns, SAE expects " +
                     std::to_string(params.pre_bias.size()));
}

std::vector<double> row_norms(const Matrix& w) {
  std::vector<double> norms(w.rows());
  for (std::size_t j = 0; j < w.rows(); ++j) norms[j] = std::sqrt(squared_norm(w.row(j)));
  return norms;
}

void add_decoded(const Matrix& w, std::span<const double> norms, const SparseCode& code, std::span<double> out) {
  for (const auto& e : code.entries) {
    if (e.index >= w.rows()) throw UsageError("feature index " + std::to_string(e.index) + " out of bounds");
    const double scale = e.value / norms[e.index];
    const auto wj = w.row(e.index);
    for (std::size_t c = 0; c < out.size(); ++c) out[c] += scale * wj[c];
  }
}

}  // namespace

void SaeConfig::validate() const {
  if (input_dim == 0) throw UsageError("SaeConfig: input_dim must be >= 1");
  if (dict_sizes.empty()) throw UsageError("SaeConfig: at least one level is required");
  if (k_values.size() != dict_sizes.size())
    throw UsageError("SaeConfig: k_values has " + std::to_string(k_values.size()) + " entries but dict_sizes has " +
                     std::to_string(dict_sizes.size()));
  for (std::size_t l = 0; l < dict_sizes.size(); ++l) {
    if (dict_sizes[l] == 0) throw UsageError("SaeConfig: dictionary sizes must be positive");
    if (l > 0 && dict_sizes[l] <= dict_sizes[l - 1]) throw UsageError("SaeConfig: dict_sizes must strictly increase");
    if (k_values[l] == 0) throw UsageError("SaeConfig: k values must be positive");
    if (k_values[l] > dict_sizes[l])
      throw UsageError("SaeConfig: k=" + std::to_string(k_values[l]) + " exceeds D=" + std::to_string(dict_sizes[l]) +
                       " at level " + std::to_string(l + 1));
  }
}

SaeParams init_params(const SaeConfig& config, std::uint64_t seed, std::span<const double> data_mean) {
  config.validate();
  if (data_mean.size() != config.input_dim) throw UsageError("init_params: data_mean length != input_dim");
  for (double v : data_mean)
    if (!std::isfinite(v)) throw NumericError("init_params: data_mean is not finite");

  SaeParams p;
  p.weights = Matrix(config.dict_size(), config.input_dim);
  auto rng = make_rng(seed, 0x1417);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (std::size_t j = 0; j < p.weights.rows(); ++j) {
    auto row = p.weights.row(j);
    double norm = 0.0;
    while (norm < 1e-12) {
      for (auto& v : row) v = gauss(rng);
      norm = std::sqrt(squared_norm(row));
    }
    for (auto& v : row) v /= norm;
  }
  p.pre_bias.assign(data_mean.begin(), data_mean.end());
  p.enc_bias.assign(config.dict_size(), 0.0);
  p.thresholds.assign(config.levels(), 0.0);
  p.threshold_ema.assign(config.levels(), 0.0);
  return p;
}

Matrix encode_pre(const SaeParams& params, const Matrix& x) {
  check_input(params, x);
  const auto& w = params.weights;
  const std::size_t d = x.cols();
  Matrix z(x.rows(), w.rows());
  std::vector<double> centered(d);
  for (std::size_t b = 0; b < x.rows(); ++b) {
    const auto xb = x.row(b);
    for (std::size_t c = 0; c < d; ++c) centered[c] = xb[c] - params.pre_bias[c];
    auto zb = z.row(b);
    for (std::size_t j = 0; j < w.rows(); ++j) {
      const double v = dot(w.row(j), centered) + params.enc_bias[j];
      zb[j] = v > 0.0 ? v : 0.0;
    }
  }
  return z;
}

std::vector<SparseCode> batch_topk(const Matrix& preacts, std::size_t level, const SaeConfig& config) {
  check_level(config, level);
  const std::size_t prefix = config.prefix(level);
  if (preacts.cols() < prefix) throw UsageError("batch_topk: pre-activation matrix narrower than level prefix");

  struct Candidate {
    double value;
    std::uint32_t row;
    std::uint32_t col;
  };
  std::vector<Candidate> positives;
  for (std::size_t b = 0; b < preacts.rows(); ++b) {
    const auto zb = preacts.row(b);
    for (std::size_t j = 0; j < prefix; ++j)
      if (zb[j] > 0.0) positives.push_back({zb[j], static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(j)});
  }
  const std::size_t budget = config.k(level) * preacts.rows();
  if (positives.size() > budget) {
    auto better = [](const Candidate& a, const Candidate& b) {
      if (a.value != b.value) return a.value > b.value;
      if (a.row != b.row) return a.row < b.row;
      return a.col < b.col;
    };
    std::nth_element(positives.begin(), positives.begin() + static_cast<std::ptrdiff_t>(budget), positives.end(), better);
    positives.resize(budget);
  }
  std::sort(positives.begin(), positives.end(), [](const Candidate& a, const Candidate& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });

  std::vector<SparseCode> codes(preacts.rows());
  for (auto& c : codes) c.level = level;
  for (const auto& c : positives) codes[c.row].entries.push_back({c.col, c.value});
  return codes;
}

Matrix decoder_directions(const SaeParams& params) {
  Matrix dirs = params.weights;
  const auto norms = row_norms(params.weights);
  for (std::size_t j = 0; j < dirs.rows(); ++j)
    for (auto& v : dirs.row(j)) v /= norms[j];
  return dirs;
}

Matrix decode(const SaeParams& params, std::span<const SparseCode> codes) {
  const auto norms = row_norms(params.weights);
  const std::size_t d = params.pre_bias.size();
  Matrix out(codes.size(), d);
  for (std::size_t b = 0; b < codes.size(); ++b) {
    auto row = out.row(b);
    std::copy(params.pre_bias.begin(), params.pre_bias.end(), row.begin());
    add_decoded(params.weights, norms, codes[b], row);
  }
  return out;
}

ForwardResult forward_train(const SaeParams& params, const Matrix& x, const SaeConfig& config) {
  check_input(params, x);
  if (x.rows() == 0) throw UsageError("forward_train: empty batch");
  ForwardResult f;
  f.preacts = encode_pre(params, x);
  const std::size_t levels = config.levels();
  const double elements = static_cast<double>(x.rows() * x.cols());
  f.codes.reserve(levels);
  for (std::size_t level = 1; level <= levels; ++level) {
    auto codes = batch_topk(f.preacts, level, config);
    auto recon = decode(params, codes);
    double sse = 0.0;
    double min_kept = std::numeric_limits<double>::infinity();
    for (std::size_t b = 0; b < x.rows(); ++b) {
      const auto xb = x.row(b);
      const auto rb = recon.row(b);
      for (std::size_t c = 0; c < x.cols(); ++c) {
        const double e = rb[c] - xb[c];
        sse += e * e;
      }
      for (const auto& e : codes[b].entries) min_kept = std::min(min_kept, e.value);
    }
    if (!std::isfinite(min_kept)) min_kept = params.thresholds.at(level - 1);
    f.level_mse.push_back(sse / elements);
    f.min_kept.push_back(min_kept);
    f.codes.push_back(std::move(codes));
    f.reconstructions.push_back(std::move(recon));
  }
  double total = 0.0;
  for (double m : f.level_mse) total += m;
  f.loss = total / static_cast<double>(levels);
  return f;
}

TrainStepResult forward_backward(const SaeParams& params, const Matrix& x, const SaeConfig& config) {
  TrainStepResult out;
  out.forward = forward_train(params, x, config);
  const auto& f = out.forward;

  const auto& w = params.weights;
  const std::size_t n_feat = w.rows();
  const std::size_t d = x.cols();
  const std::size_t batch = x.rows();
  const std::size_t levels = config.levels();
  const double scale = 2.0 / (static_cast<double>(levels) * static_cast<double>(batch) * static_cast<double>(d));

  const auto norms = row_norms(w);
  const Matrix dirs = decoder_directions(params);

  Gradients& g = out.grads;
  g.weights = Matrix(n_feat, d);
  g.pre_bias.assign(d, 0.0);
  g.enc_bias.assign(n_feat, 0.0);

  // dL/da_j for every (sample, feature) selected at any level.
  Matrix grad_act(batch, n_feat);
  std::vector<double> resid_grad(d);

  for (std::size_t l = 0; l < levels; ++l) {
    const auto& recon = f.reconstructions[l];
    for (std::size_t b = 0; b < batch; ++b) {
      const auto xb = x.row(b);
      const auto rb = recon.row(b);
      for (std::size_t c = 0; c < d; ++c) {
        resid_grad[c] = scale * (rb[c] - xb[c]);
        g.pre_bias[c] += resid_grad[c];
      }
      for (const auto& e : f.codes[l][b].entries) {
        const auto dj = dirs.row(e.index);
        const double proj = dot(dj, resid_grad);
        grad_act(b, e.index) += proj;
        // Decoder path: a_j * (I - d_j d_j^T) g / |W_j|
        auto gw = g.weights.row(e.index);
        const double s = e.value / norms[e.index];
        for (std::size_t c = 0; c < d; ++c) gw[c] += s * (resid_grad[c] - dj[c] * proj);
      }
    }
  }

  // Encoder path through z = W (x - b_pre) + b_enc; only selected entries
  // carry gradient, and they are strictly positive so the ReLU passes it.
  std::vector<double> centered(d);
  for (std::size_t b = 0; b < batch; ++b) {
    const auto xb = x.row(b);
    for (std::size_t c = 0; c < d; ++c) centered[c] = xb[c] - params.pre_bias[c];
    const auto gab = grad_act.row(b);
    for (std::size_t j = 0; j < n_feat; ++j) {
      const double delta = gab[j];
      if (delta == 0.0) continue;
      g.enc_bias[j] += delta;
      auto gw = g.weights.row(j);
      const auto wj = w.row(j);
      for (std::size_t c = 0; c < d; ++c) {
        gw[c] += delta * centered[c];
        g.pre_bias[c] -= delta * wj[c];
      }
    }
  }
  return out;
}

Gradients backward(const SaeParams& params, const Matrix& x, const SaeConfig& config) {
  return forward_backward(params, x, config).grads;
}

SparseCode encode_inference(const SaeParams& params, std::span<const double> x, const SaeConfig& config,
                            std::size_t level) {
  check_level(config, level);
  if (x.size() != params.pre_bias.size()) throw UsageError("encode_inference: input dimension mismatch");
  const std::size_t prefix = config.prefix(level);
  const double threshold = params.thresholds.at(level - 1);
  std::vector<double> centered(x.size());
  for (std::size_t c = 0; c < x.size(); ++c) centered[c] = x[c] - params.pre_bias[c];
  SparseCode code;
  code.level = level;
  for (std::size_t j = 0; j < prefix; ++j) {
    const double v = dot(params.weights.row(j), centered) + params.enc_bias[j];
    if (v > threshold && v > 0.0) code.entries.push_back({static_cast<std::uint32_t>(j), v});
  }
  return code;
}

std::vector<SparseCode> encode_inference(const SaeParams& params, const Matrix& x, const SaeConfig& config,
                                         std::size_t level) {
  check_input(params, x);
  std::vector<SparseCode> codes;
  codes.reserve(x.rows());
  for (std::size_t b = 0; b < x.rows(); ++b) codes.push_back(encode_inference(params, x.row(b), config, level));
  return codes;
}

void update_thresholds(SaeParams& params, std::span<const double> min_kept, double momentum) {
  if (min_kept.size() != params.thresholds.size()) throw UsageError("update_thresholds: one value per level required");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw UsageError("update_thresholds: momentum must lie in [0, 1)");
  ++params.threshold_steps;
  const double debias = 1.0 - std::pow(momentum, static_cast<double>(params.threshold_steps));
  for (std::size_t l = 0; l < min_kept.size(); ++l) {
    if (!std::isfinite(min_kept[l]) || min_kept[l] < 0.0)
      throw NumericError("update_thresholds: min-kept activation must be finite and >= 0");
    params.threshold_ema[l] = momentum * params.threshold_ema[l] + (1.0 - momentum) * min_kept[l];
    params.thresholds[l] = params.threshold_ema[l] / debias;
  }
}

}  // namespace sail
