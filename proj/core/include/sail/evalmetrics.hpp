#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "sail/embedding_store.hpp"
#include "sail/matrix.hpp"
#include "sail/sae.hpp"

namespace sail {

/// 1 - SSE / SST, with SST taken about the column means of x.
double r_squared(const Matrix& x, const Matrix& x_hat);

struct SparsityStats {
  double mean_l0 = 0.0;
  std::size_t alive = 0;
};

SparsityStats sparsity_stats(std::span<const SparseCode> codes);

/// |a ∩ b| / |a ∪ b|, and 1 when both sets are empty.
double jaccard(const OrganSet& a, const OrganSet& b);

struct FeatureActivation {
  std::size_t row = 0;  // dataset row
  double value = 0.0;

  friend bool operator==(const FeatureActivation&, const FeatureActivation&) = default;
};

/// Per-feature activations over an evaluation split. Each feature's list is
/// sorted by descending value, ties by ascending row.
struct FeatureActivationTable {
  std::size_t feature_count = 0;
  std::vector<std::size_t> rows;  // evaluation rows, aligned with the codes used to build the table
  std::vector<std::vector<FeatureActivation>> by_feature;

  static FeatureActivationTable build(std::span<const SparseCode> codes, std::span<const std::size_t> rows,
                                      std::size_t feature_count);

  std::span<const FeatureActivation> top(std::size_t feature, std::size_t n) const;
};

inline constexpr std::size_t kTopSamples = 10;
inline constexpr std::size_t kDefaultNullPairs = 1000;

/// Mean Jaccard over `pairs` seeded random pairs of distinct evaluation rows.
double null_jaccard(const FeatureActivationTable& table, const EmbeddingDataset& dataset, std::size_t pairs,
                    std::uint64_t seed);

/// max(0, (J - J_null) / (1 - J_null)) over the top-10 activating samples;
/// 0 with fewer than two activating samples or when J_null = 1.
double coherence(std::size_t feature, const FeatureActivationTable& table, const EmbeddingDataset& dataset,
                 double j_null);
double coherence(std::size_t feature, const FeatureActivationTable& table, const EmbeddingDataset& dataset,
                 std::size_t null_pairs, std::uint64_t seed);

/// 1 - H(p) / ln|O| of the organ labels pooled over the top-10 samples.
double specificity(std::size_t feature, const FeatureActivationTable& table, const EmbeddingDataset& dataset);

struct FeatureScore {
  std::size_t feature = 0;
  double coherence = 0.0;
  double specificity = 0.0;
  double m = 0.0;

  friend bool operator==(const FeatureScore&, const FeatureScore&) = default;
};

std::vector<FeatureScore> score_features(const FeatureActivationTable& table, const EmbeddingDataset& dataset,
                                         std::size_t null_pairs = kDefaultNullPairs, std::uint64_t seed = 0);

/// Mean M of the (up to) ten highest-scoring features.
double monosemanticity_config(std::span<const FeatureScore> scores);

std::string feature_score_line(const FeatureScore& s);
FeatureScore feature_score_from_line(const std::string& line);

struct ConfigResult {
  std::string config_id;
  std::vector<std::size_t> dict_sizes;
  std::vector<std::size_t> k_values;
  std::uint64_t seed = 0;
  double r2 = 0.0;
  double mean_l0 = 0.0;
  std::size_t alive = 0;
  double m_config = 0.0;
  double dense_auc = 0.0;
  double sparse_auc = 0.0;
  std::map<std::size_t, double> recovery;  // N -> restricted AUC / dense AUC

  friend bool operator==(const ConfigResult&, const ConfigResult&) = default;
};

std::string config_result_line(const ConfigResult& r);
ConfigResult config_result_from_line(const std::string& line);

struct RankedConfig {
  std::string config_id;
  std::size_t mono_rank = 0;
  std::size_t perf_rank = 0;
  std::size_t combined_score = 0;  // mono_rank + perf_rank
  std::size_t combined_rank = 0;   // 1-based position in the final order
};

/// Ranks by m_config and by recovery at `recovery_n` (both descending, ties
/// by config id), then orders by the sum of the two ranks, ties by mono rank
/// and config id.
std::vector<RankedConfig> rank_configs(std::span<const ConfigResult> results, std::size_t recovery_n = 10);

}  // namespace sail
