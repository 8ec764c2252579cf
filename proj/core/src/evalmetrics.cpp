#include "sail/evalmetrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <unordered_map>

#include "json.hpp"
#include "sail/errors.hpp"
#include "sail/random.hpp"

namespace sail {
namespace {

using nlohmann::json;

// Orders features or configs by a score, descending, ties by key ascending.
template <typename Key>
std::vector<std::size_t> order_desc(const std::vector<double>& score, const std::vector<Key>& key) {
  std::vector<std::size_t> idx(score.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (score[a] != score[b]) return score[a] > score[b];
    return key[a] < key[b];
  });
  return idx;
}

}  // namespace

double r_squared(const Matrix& x, const Matrix& x_hat) {
  if (x.rows() != x_hat.rows() || x.cols() != x_hat.cols()) throw UsageError("r_squared: shape mismatch");
  if (x.rows() < 2) throw UsageError("r_squared: need at least two rows");
  std::vector<double> mean(x.cols(), 0.0);
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < x.cols(); ++c) mean[c] += x(r, c);
  for (auto& m : mean) m /= static_cast<double>(x.rows());
  double sse = 0.0, sst = 0.0;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t c = 0; c < x.cols(); ++c) {
      const double e = x(r, c) - x_hat(r, c);
      const double t = x(r, c) - mean[c];
      sse += e * e;
      sst += t * t;
    }
  }
  if (sst <= 0.0) throw DataError("r_squared: total sum of squares is zero (constant data)");
  return 1.0 - sse / sst;
}

SparsityStats sparsity_stats(std::span<const SparseCode> codes) {
  SparsityStats s;
  if (codes.empty()) return s;
  std::set<std::uint32_t> alive;
  std::size_t total = 0;
  for (const auto& c : codes) {
    total += c.entries.size();
    for (const auto& e : c.entries) alive.insert(e.index);
  }
  s.mean_l0 = static_cast<double>(total) / static_cast<double>(codes.size());
  s.alive = alive.size();
  return s;
}

double jaccard(const OrganSet& a, const OrganSet& b) {
  if (a.empty() && b.empty()) return 1.0;
  std::size_t inter = 0;
  for (const auto& x : a) inter += b.contains(x) ? 1 : 0;
  const std::size_t uni = a.size() + b.size() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

FeatureActivationTable FeatureActivationTable::build(std::span<const SparseCode> codes, std::span<const std::size_t> rows,
                                                     std::size_t feature_count) {
  if (codes.size() != rows.size()) throw UsageError("activation table: codes and rows must align");
  FeatureActivationTable t;
  t.feature_count = feature_count;
  t.rows.assign(rows.begin(), rows.end());
  t.by_feature.resize(feature_count);
  for (std::size_t i = 0; i < codes.size(); ++i) {
    for (const auto& e : codes[i].entries) {
      if (e.index >= feature_count) throw UsageError("activation table: feature index out of range");
      if (e.value > 0.0) t.by_feature[e.index].push_back({rows[i], e.value});
    }
  }
  for (auto& list : t.by_feature)
    std::sort(list.begin(), list.end(), [](const FeatureActivation& a, const FeatureActivation& b) {
      return a.value != b.value ? a.value > b.value : a.row < b.row;
    });
  return t;
}

std::span<const FeatureActivation> FeatureActivationTable::top(std::size_t feature, std::size_t n) const {
  const auto& list = by_feature.at(feature);
  return {list.data(), std::min(n, list.size())};
}

double null_jaccard(const FeatureActivationTable& table, const EmbeddingDataset& dataset, std::size_t pairs,
                    std::uint64_t seed) {
  if (table.rows.size() < 2 || pairs == 0) return 0.0;
  auto rng = make_rng(seed, 0x9011);
  std::uniform_int_distribution<std::size_t> pick(0, table.rows.size() - 1);
  double total = 0.0;
  for (std::size_t p = 0; p < pairs; ++p) {
    const auto a = pick(rng);
    auto b = pick(rng);
    while (b == a) b = pick(rng);
    total += jaccard(dataset.record(table.rows[a]).organ_set, dataset.record(table.rows[b]).organ_set);
  }
  return total / static_cast<double>(pairs);
}

double coherence(std::size_t feature, const FeatureActivationTable& table, const EmbeddingDataset& dataset,
                 double j_null) {
  const auto top = table.top(feature, kTopSamples);
  if (top.size() < 2) return 0.0;
  double sum = 0.0;
  std::size_t n_pairs = 0;
  for (std::size_t i = 0; i < top.size(); ++i)
    for (std::size_t j = i + 1; j < top.size(); ++j, ++n_pairs)
      sum += jaccard(dataset.record(top[i].row).organ_set, dataset.record(top[j].row).organ_set);
  const double mean = sum / static_cast<double>(n_pairs);
  if (j_null >= 1.0) return 0.0;
  return std::clamp((mean - j_null) / (1.0 - j_null), 0.0, 1.0);
}

double coherence(std::size_t feature, const FeatureActivationTable& table, const EmbeddingDataset& dataset,
                 std::size_t null_pairs, std::uint64_t seed) {
  return coherence(feature, table, dataset, null_jaccard(table, dataset, null_pairs, seed));
}

double specificity(std::size_t feature, const FeatureActivationTable& table, const EmbeddingDataset& dataset) {
  std::map<std::string, std::size_t> counts;
  std::size_t total = 0;
  for (const auto& a : table.top(feature, kTopSamples)) {
    for (const auto& organ : dataset.record(a.row).organ_set) {
      ++counts[organ];
      ++total;
    }
  }
  if (total == 0) return 0.0;
  if (counts.size() == 1) return 1.0;
  const auto vocab = dataset.organ_vocabulary().size();
  if (vocab < 2) return 1.0;
  double entropy = 0.0;
  for (const auto& [organ, n] : counts) {
    const double p = static_cast<double>(n) / static_cast<double>(total);
    entropy -= p * std::log(p);
  }
  return std::clamp(1.0 - entropy / std::log(static_cast<double>(vocab)), 0.0, 1.0);
}

std::vector<FeatureScore> score_features(const FeatureActivationTable& table, const EmbeddingDataset& dataset,
                                         std::size_t null_pairs, std::uint64_t seed) {
  const double j_null = null_jaccard(table, dataset, null_pairs, seed);
  std::vector<FeatureScore> scores(table.feature_count);
  for (std::size_t f = 0; f < table.feature_count; ++f) {
    auto& s = scores[f];
    s.feature = f;
    s.specificity = specificity(f, table, dataset);
    s.coherence = coherence(f, table, dataset, j_null);
    s.m = table.by_feature[f].size() < 2 ? 0.0 : s.coherence * s.specificity;
  }
  return scores;
}

double monosemanticity_config(std::span<const FeatureScore> scores) {
  if (scores.empty()) throw UsageError("monosemanticity_config: no scored features");
  std::vector<double> m;
  m.reserve(scores.size());
  for (const auto& s : scores) m.push_back(s.m);
  const std::size_t n = std::min(kTopSamples, m.size());
  std::partial_sort(m.begin(), m.begin() + static_cast<std::ptrdiff_t>(n), m.end(), std::greater<>());
  return std::accumulate(m.begin(), m.begin() + static_cast<std::ptrdiff_t>(n), 0.0) / static_cast<double>(n);
}

std::string feature_score_line(const FeatureScore& s) {
  return json{{"feature", s.feature}, {"coherence", s.coherence}, {"specificity", s.specificity}, {"m", s.m}}.dump();
}

FeatureScore feature_score_from_line(const std::string& line) {
  try {
    const auto j = json::parse(line);
    return {j.at("feature").get<std::size_t>(), j.at("coherence").get<double>(), j.at("specificity").get<double>(),
            j.at("m").get<double>()};
  } catch (const json::exception& e) {
    throw DataError(std::string("invalid feature score line: ") + e.what());
  }
}

std::string config_result_line(const ConfigResult& r) {
  json rec = json::object();
  for (const auto& [n, ratio] : r.recovery) rec[std::to_string(n)] = ratio;
  return json{{"config_id", r.config_id}, {"dict_sizes", r.dict_sizes}, {"k_values", r.k_values},
              {"seed", r.seed},           {"r2", r.r2},                 {"mean_l0", r.mean_l0},
              {"alive", r.alive},         {"m_config", r.m_config},     {"dense_auc", r.dense_auc},
              {"sparse_auc", r.sparse_auc}, {"recovery", rec}}
      .dump();
}

ConfigResult config_result_from_line(const std::string& line) {
  try {
    const auto j = json::parse(line);
    ConfigResult r;
    r.config_id = j.at("config_id").get<std::string>();
    r.dict_sizes = j.at("dict_sizes").get<std::vector<std::size_t>>();
    r.k_values = j.at("k_values").get<std::vector<std::size_t>>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.r2 = j.at("r2").get<double>();
    r.mean_l0 = j.at("mean_l0").get<double>();
    r.alive = j.at("alive").get<std::size_t>();
    r.m_config = j.at("m_config").get<double>();
    r.dense_auc = j.at("dense_auc").get<double>();
    r.sparse_auc = j.at("sparse_auc").get<double>();
    for (const auto& [n, ratio] : j.at("recovery").items()) r.recovery[std::stoul(n)] = ratio.get<double>();
    return r;
  } catch (const json::exception& e) {
    throw DataError(std::string("invalid report line: ") + e.what());
  }
}

std::vector<RankedConfig> rank_configs(std::span<const ConfigResult> results, std::size_t recovery_n) {
  if (results.empty()) throw UsageError("rank_configs: no results");
  std::vector<std::string> ids;
  std::vector<double> mono, perf;
  for (const auto& r : results) {
    ids.push_back(r.config_id);
    mono.push_back(r.m_config);
    const auto it = r.recovery.find(recovery_n);
    if (it == r.recovery.end())
      throw DataError("rank_configs: " + r.config_id + " has no recovery value at N=" + std::to_string(recovery_n));
    perf.push_back(it->second);
  }
  std::vector<RankedConfig> ranked(results.size());
  const auto by_mono = order_desc(mono, ids);
  const auto by_perf = order_desc(perf, ids);
  for (std::size_t pos = 0; pos < by_mono.size(); ++pos) ranked[by_mono[pos]].mono_rank = pos + 1;
  for (std::size_t pos = 0; pos < by_perf.size(); ++pos) ranked[by_perf[pos]].perf_rank = pos + 1;
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    ranked[i].config_id = ids[i];
    ranked[i].combined_score = ranked[i].mono_rank + ranked[i].perf_rank;
  }
  std::sort(ranked.begin(), ranked.end(), [](const RankedConfig& a, const RankedConfig& b) {
    if (a.combined_score != b.combined_score) return a.combined_score < b.combined_score;
    if (a.mono_rank != b.mono_rank) return a.mono_rank < b.mono_rank;
    return a.config_id < b.config_id;
  });
  for (std::size_t i = 0; i < ranked.size(); ++i) ranked[i].combined_rank = i + 1;
  return ranked;
}

}  // namespace sail
