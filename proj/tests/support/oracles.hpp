#pragma once
// Reference implementations shared by the unit tests and the acceptance
// binary. Everything here is deliberately naive.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <tuple>
#include <unistd.h>
#include <vector>

#include "sail/embedding_store.hpp"
#include "sail/evalmetrics.hpp"
#include "sail/random.hpp"
#include "sail/sae.hpp"
#include "sail/trainer.hpp"

namespace sail::testing {

// Loss with the selection sets of `codes` held fixed. Kept values are the
// linear pre-activations, which equal the ReLU output wherever the mask was
// taken.
inline double frozen_mask_loss(const SaeParams& p, const Matrix& x, const SaeConfig& cfg,
                               const std::vector<std::vector<SparseCode>>& codes) {
  const std::size_t d = x.cols(), batch = x.rows();
  double total = 0.0;
  for (std::size_t l = 0; l < cfg.levels(); ++l) {
    double sse = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
      std::vector<double> centered(d), recon(p.pre_bias);
      for (std::size_t i = 0; i < d; ++i) centered[i] = x(b, i) - p.pre_bias[i];
      for (const auto& e : codes[l][b].entries) {
        const auto w = p.weights.row(e.index);
        const double a = dot(w, centered) + p.enc_bias[e.index];
        const double norm = std::sqrt(squared_norm(w));
        for (std::size_t i = 0; i < d; ++i) recon[i] += a * w[i] / norm;
      }
      for (std::size_t i = 0; i < d; ++i) sse += (x(b, i) - recon[i]) * (x(b, i) - recon[i]);
    }
    total += sse / static_cast<double>(batch * d);
  }
  return total / static_cast<double>(cfg.levels());
}

struct GradInstance {
  SaeConfig config;
  SaeParams params;
  Matrix x;
};

// d <= 8, D_L <= 16, B <= 8, 1-3 levels, non-unit encoder rows.
inline GradInstance random_grad_instance(std::uint64_t seed) {
  auto rng = make_rng(seed, 0x6772);
  std::uniform_int_distribution<std::size_t> dim(2, 8), batch(1, 8), levels(1, 3);
  std::normal_distribution<double> gauss(0.0, 1.0);
  GradInstance g;
  g.config.input_dim = dim(rng);
  const std::size_t n_levels = levels(rng);
  std::vector<std::size_t> sizes;
  while (sizes.size() < n_levels) {
    std::uniform_int_distribution<std::size_t> pick(1, 16);
    const auto v = pick(rng);
    if (std::find(sizes.begin(), sizes.end(), v) == sizes.end()) sizes.push_back(v);
  }
  std::sort(sizes.begin(), sizes.end());
  g.config.dict_sizes = sizes;
  for (auto s : sizes) {
    std::uniform_int_distribution<std::size_t> pick(1, std::min<std::size_t>(s, 4));
    g.config.k_values.push_back(pick(rng));
  }
  std::vector<double> mean(g.config.input_dim);
  for (auto& v : mean) v = 0.3 * gauss(rng);
  g.params = init_params(g.config, seed, mean);
  std::uniform_real_distribution<double> scale(0.5, 2.0);
  for (std::size_t j = 0; j < g.params.weights.rows(); ++j)
    for (auto& v : g.params.weights.row(j)) v *= scale(rng);
  for (auto& v : g.params.enc_bias) v = 0.1 * gauss(rng);
  g.x = Matrix(batch(rng), g.config.input_dim);
  for (auto& v : g.x.values()) v = gauss(rng);
  return g;
}

struct GradCheck {
  double max_rel_error = 0.0;
  double loss_mismatch = 0.0;  // |frozen oracle - forward_train| at the base point
  std::size_t coordinates = 0;
};

// Central differences of the frozen-mask loss against forward_backward.
// Relative error uses max(|a|, |n|, 1e-6) as denominator so that exact zeros
// compare absolutely.
inline GradCheck check_gradients(const GradInstance& g, double h = 1e-5) {
  const auto step = forward_backward(g.params, g.x, g.config);
  const auto& codes = step.forward.codes;
  GradCheck out;
  out.loss_mismatch = std::abs(frozen_mask_loss(g.params, g.x, g.config, codes) - step.forward.loss);
  auto compare = [&](double analytic, double numeric) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
    out.max_rel_error = std::max(out.max_rel_error, std::abs(analytic - numeric) / denom);
    ++out.coordinates;
  };
  auto probe = [&](auto&& slot) {
    SaeParams p = g.params;
    double& v = slot(p);
    const double base = v;
    v = base + h;
    const double up = frozen_mask_loss(p, g.x, g.config, codes);
    v = base - h;
    const double down = frozen_mask_loss(p, g.x, g.config, codes);
    return (up - down) / (2.0 * h);
  };
  for (std::size_t j = 0; j < g.params.weights.rows(); ++j)
    for (std::size_t i = 0; i < g.params.weights.cols(); ++i)
      compare(step.grads.weights(j, i), probe([&](SaeParams& p) -> double& { return p.weights(j, i); }));
  for (std::size_t i = 0; i < g.params.pre_bias.size(); ++i)
    compare(step.grads.pre_bias[i], probe([&](SaeParams& p) -> double& { return p.pre_bias[i]; }));
  for (std::size_t j = 0; j < g.params.enc_bias.size(); ++j)
    compare(step.grads.enc_bias[j], probe([&](SaeParams& p) -> double& { return p.enc_bias[j]; }));
  return out;
}

// Mean over planted atoms of the best |cosine| to any decoder direction.
inline double mean_max_cosine(const Matrix& atoms, const SaeParams& params) {
  const auto dirs = decoder_directions(params);
  double total = 0.0;
  for (std::size_t a = 0; a < atoms.rows(); ++a) {
    const auto atom = atoms.row(a);
    const double an = std::sqrt(squared_norm(atom));
    double best = 0.0;
    for (std::size_t j = 0; j < dirs.rows(); ++j) best = std::max(best, dot(atom, dirs.row(j)) / an);
    total += best;
  }
  return total / static_cast<double>(atoms.rows());
}

// Pearson chi-square statistic against a uniform expectation.
inline double chi_square_uniform(const std::vector<std::size_t>& counts) {
  double n = 0.0;
  for (auto c : counts) n += static_cast<double>(c);
  const double expected = n / static_cast<double>(counts.size());
  double stat = 0.0;
  for (auto c : counts) stat += (static_cast<double>(c) - expected) * (static_cast<double>(c) - expected) / expected;
  return stat;
}

// Fresh directory under the system temp dir, removed on destruction.
class ScratchDir {
 public:
  explicit ScratchDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("sail_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// Small hand-built dataset; `organs` per sample, one scan per sample.
inline EmbeddingDataset tiny_dataset(const std::vector<std::vector<float>>& vectors,
                                     const std::vector<OrganSet>& organs) {
  std::vector<EmbeddingRecord> records;
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    EmbeddingRecord r;
    r.sample_id = "s" + std::to_string(i);
    r.scan_id = "scan" + std::to_string(i);
    r.institution = "inst";
    r.modality = Modality::ct;
    r.age_group = "40-59";
    r.sex = Sex::female;
    r.organ_set = organs.empty() ? OrganSet{} : organs[i];
    r.embedding = vectors[i];
    records.push_back(std::move(r));
  }
  return EmbeddingDataset(vectors.empty() ? 1 : vectors[0].size(), std::move(records));
}

inline ConfigResult config(const std::string& id, double m, double recovery) {
  ConfigResult r;
  r.config_id = id;
  r.m_config = m;
  r.recovery[10] = recovery;
  return r;
}

// Builds results so that the named configs get exactly the requested ranks
// on both axes. Fillers pair the best free mono ranks with the worst free
// performance ranks so they cannot beat the named rows.
inline std::vector<ConfigResult> with_ranks(const std::vector<std::tuple<std::string, std::size_t, std::size_t>>& named,
                                            std::size_t total) {
  std::vector<std::size_t> free_mono, free_perf;
  for (std::size_t r = 1; r <= total; ++r) {
    if (std::none_of(named.begin(), named.end(), [&](const auto& t) { return std::get<1>(t) == r; }))
      free_mono.push_back(r);
    if (std::none_of(named.begin(), named.end(), [&](const auto& t) { return std::get<2>(t) == r; }))
      free_perf.push_back(r);
  }
  std::reverse(free_perf.begin(), free_perf.end());
  auto value = [&](std::size_t rank) { return 1.0 - static_cast<double>(rank) / static_cast<double>(total + 1); };
  std::vector<ConfigResult> out;
  for (const auto& [id, mono, perf] : named) out.push_back(config(id, value(mono), value(perf)));
  for (std::size_t i = 0; i < free_mono.size(); ++i)
    out.push_back(config("filler" + std::to_string(100 + i), value(free_mono[i]), value(free_perf[i])));
  return out;
}

}  // namespace sail::testing
