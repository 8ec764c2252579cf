#pragma once

// Linear probes: L2-regularized logistic regression on standardized
// features, exact ROC-AUC, and top-N performance-recovery curves.

#include <cstddef>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "sail/embedding_store.hpp"
#include "sail/matrix.hpp"
#include "sail/sae.hpp"

namespace sail {

/// Binary organ-presence task over fixed train and validation row lists.
/// Labels align with those rows.
struct ProbeTask {
  std::string organ;
  std::vector<int> train_labels;
  std::vector<int> val_labels;
};

/// One task per organ whose train prevalence lies in
/// [min_prevalence, 1 - min_prevalence] and whose validation rows contain
/// both classes.
std::vector<ProbeTask> build_tasks(const EmbeddingDataset& dataset, std::span<const std::size_t> train_rows,
                                   std::span<const std::size_t> val_rows, double min_prevalence = 0.05);

struct ProbeOptions {
  double l2 = 1e-3;
  std::size_t max_iters = 500;
  double tol = 1e-7;
};

struct ProbeModel {
  std::vector<double> weights;  // in standardized feature space
  double bias = 0.0;
  std::vector<double> mean;
  std::vector<double> scale;     // 0 marks a constant column
  std::vector<std::size_t> subset;  // source columns, empty = all
  std::size_t iterations = 0;
  double final_loss = 0.0;
  std::vector<double> loss_trace;  // objective after each accepted step

  double decision(std::span<const double> row) const;
  std::vector<double> decision(const Matrix& x) const;
};

/// Minimizes mean logistic loss + l2 * |w|^2 / 2 by gradient descent with
/// Armijo backtracking.
ProbeModel train_logistic(const Matrix& features, std::span<const int> labels, const ProbeOptions& options = {});

/// P(score_pos > score_neg) + 0.5 P(equal), computed from average ranks.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

/// Features for the train and validation rows of every task.
struct ProbeSplit {
  Matrix train;
  Matrix val;
};

ProbeSplit dense_probe_split(const EmbeddingDataset& dataset, std::span<const std::size_t> train_rows,
                             std::span<const std::size_t> val_rows);
/// Sparse codes densified (inactive features are 0).
Matrix densify(std::span<const SparseCode> codes, std::size_t feature_count);

struct DownstreamResult {
  double mean_auc = 0.0;
  std::vector<double> task_auc;
};

DownstreamResult downstream_eval(const ProbeSplit& data, std::span<const ProbeTask> tasks,
                                 const ProbeOptions& options = {});

/// Picks the columns to keep for a top-N refit from a full-feature probe.
using FeatureSelector = std::function<std::vector<std::size_t>(const ProbeModel& full, std::size_t n)>;

/// Default rule: largest |standardized weight|, ties by column index.
std::vector<std::size_t> select_by_weight(const ProbeModel& full, std::size_t n);

struct RecoveryCurve {
  double dense_auc = 0.0;
  double sparse_auc = 0.0;
  std::map<std::size_t, double> restricted_auc;  // N -> mean AUC with N features
  std::map<std::size_t, double> ratio;           // N -> restricted_auc / dense_auc
};

RecoveryCurve performance_recovery(const ProbeSplit& sparse, const ProbeSplit& dense, std::span<const ProbeTask> tasks,
                                   std::span<const std::size_t> n_list, const ProbeOptions& options = {},
                                   const FeatureSelector& selector = select_by_weight);

}  // namespace sail
