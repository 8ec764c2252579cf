#include "sail/probe.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sail/errors.hpp"

namespace sail {
namespace {

double softplus(double s) { return s > 0.0 ? s + std::log1p(std::exp(-s)) : std::log1p(std::exp(s)); }
double sigmoid(double s) {
  if (s >= 0.0) return 1.0 / (1.0 + std::exp(-s));
  const double e = std::exp(s);
  return e / (1.0 + e);
}

void require_both_classes(std::span<const int> labels, const char* what) {
  bool pos = false, neg = false;
  for (int y : labels) (y ? pos : neg) = true;
  if (!pos || !neg) throw DataError(std::string(what) + ": labels must contain both classes");
}

struct Objective {
  const Matrix& z;
  std::span<const int> y;
  double l2;

  double value(std::span<const double> w, double b) const {
    double loss = 0.0;
    for (std::size_t i = 0; i < z.rows(); ++i) {
      const double s = dot(z.row(i), w) + b;
      loss += softplus(s) - (y[i] ? s : 0.0);
    }
    return loss / static_cast<double>(z.rows()) + 0.5 * l2 * squared_norm(w);
  }

  // Returns the objective value; writes the gradient.
  double gradient(std::span<const double> w, double b, std::span<double> gw, double& gb) const {
    std::fill(gw.begin(), gw.end(), 0.0);
    gb = 0.0;
    double loss = 0.0;
    const double n = static_cast<double>(z.rows());
    for (std::size_t i = 0; i < z.rows(); ++i) {
      const auto zi = z.row(i);
      const double s = dot(zi, w) + b;
      loss += softplus(s) - (y[i] ? s : 0.0);
      const double r = sigmoid(s) - (y[i] ? 1.0 : 0.0);
      for (std::size_t j = 0; j < gw.size(); ++j) gw[j] += r * zi[j];
      gb += r;
    }
    for (std::size_t j = 0; j < gw.size(); ++j) gw[j] = gw[j] / n + l2 * w[j];
    gb /= n;
    return loss / n + 0.5 * l2 * squared_norm(w);
  }
};

Matrix select_columns(const Matrix& x, std::span<const std::size_t> cols) {
  Matrix out(x.rows(), cols.size());
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < cols.size(); ++c) out(r, c) = x(r, cols[c]);
  return out;
}

double mean_task_auc(const ProbeSplit& data, std::span<const ProbeTask> tasks, const ProbeOptions& options,
                     std::vector<double>* per_task) {
  if (tasks.empty()) throw DataError("no probe tasks");
  double total = 0.0;
  for (const auto& task : tasks) {
    const auto model = train_logistic(data.train, task.train_labels, options);
    const double auc = roc_auc(model.decision(data.val), task.val_labels);
    if (per_task) per_task->push_back(auc);
    total += auc;
  }
  return total / static_cast<double>(tasks.size());
}

}  // namespace

std::vector<ProbeTask> build_tasks(const EmbeddingDataset& dataset, std::span<const std::size_t> train_rows,
                                   std::span<const std::size_t> val_rows, double min_prevalence) {
  if (!(min_prevalence > 0.0 && min_prevalence <= 0.5)) throw UsageError("build_tasks: min_prevalence must lie in (0, 0.5]");
  if (train_rows.empty() || val_rows.empty()) throw DataError("build_tasks: empty train or validation rows");
  if (dataset.organ_vocabulary().empty()) throw DataError("build_tasks: organ vocabulary is empty");
  std::vector<ProbeTask> tasks;
  for (const auto& organ : dataset.organ_vocabulary()) {
    ProbeTask t;
    t.organ = organ;
    std::size_t pos = 0;
    for (auto row : train_rows) {
      const int y = dataset.record(row).organ_set.contains(organ) ? 1 : 0;
      pos += static_cast<std::size_t>(y);
      t.train_labels.push_back(y);
    }
    const double rate = static_cast<double>(pos) / static_cast<double>(train_rows.size());
    if (rate < min_prevalence || rate > 1.0 - min_prevalence) continue;
    std::size_t val_pos = 0;
    for (auto row : val_rows) {
      const int y = dataset.record(row).organ_set.contains(organ) ? 1 : 0;
      val_pos += static_cast<std::size_t>(y);
      t.val_labels.push_back(y);
    }
    if (val_pos == 0 || val_pos == val_rows.size()) continue;
    tasks.push_back(std::move(t));
  }
  if (tasks.empty()) throw DataError("build_tasks: no organ satisfies the prevalence rule");
  return tasks;
}

double ProbeModel::decision(std::span<const double> row) const {
  double s = bias;
  for (std::size_t j = 0; j < weights.size(); ++j) {
    if (scale[j] == 0.0) continue;
    const double x = subset.empty() ? row[j] : row[subset[j]];
    s += weights[j] * (x - mean[j]) / scale[j];
  }
  return s;
}

std::vector<double> ProbeModel::decision(const Matrix& x) const {
  std::vector<double> out(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) out[r] = decision(x.row(r));
  return out;
}

ProbeModel train_logistic(const Matrix& features, std::span<const int> labels, const ProbeOptions& options) {
  if (features.rows() != labels.size()) throw UsageError("train_logistic: features and labels differ in length");
  require_both_classes(labels, "train_logistic");
  const std::size_t n = features.rows(), p = features.cols();

  ProbeModel model;
  model.mean.assign(p, 0.0);
  model.scale.assign(p, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < p; ++j) {
      const double v = features(i, j);
      if (!std::isfinite(v)) throw DataError("train_logistic: non-finite feature value");
      model.mean[j] += v;
    }
  for (auto& m : model.mean) m /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < p; ++j) {
      const double c = features(i, j) - model.mean[j];
      model.scale[j] += c * c;
    }
  for (auto& s : model.scale) {
    s = std::sqrt(s / static_cast<double>(n));
    if (s < 1e-12) s = 0.0;
  }
  Matrix z(n, p);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < p; ++j)
      z(i, j) = model.scale[j] == 0.0 ? 0.0 : (features(i, j) - model.mean[j]) / model.scale[j];

  const Objective obj{z, labels, options.l2};
  std::vector<double> w(p, 0.0), gw(p), trial(p);
  double b = 0.0, gb = 0.0;
  double step = 1.0;
  double f = obj.gradient(w, b, gw, gb);
  std::size_t it = 0;
  for (; it < options.max_iters; ++it) {
    const double gnorm2 = squared_norm(gw) + gb * gb;
    if (std::sqrt(gnorm2) < options.tol) break;
    step = std::min(step * 2.0, 1e6);
    double f_trial = 0.0;
    for (;;) {
      for (std::size_t j = 0; j < p; ++j) trial[j] = w[j] - step * gw[j];
      f_trial = obj.value(trial, b - step * gb);
      if (f_trial <= f - 0.5 * step * gnorm2) break;
      step *= 0.5;
      if (step < 1e-20) break;
    }
    if (step < 1e-20) break;
    w.swap(trial);
    b -= step * gb;
    f = obj.gradient(w, b, gw, gb);
    model.loss_trace.push_back(f);
  }
  model.weights = std::move(w);
  model.bias = b;
  model.iterations = it;
  model.final_loss = f;
  return model;
}

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw UsageError("roc_auc: scores and labels differ in length");
  require_both_classes(labels, "roc_auc");
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double pos_rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
    for (std::size_t k = i; k < j; ++k)
      if (labels[idx[k]]) {
        pos_rank_sum += avg_rank;
        ++n_pos;
      }
    i = j;
  }
  const auto n_neg = scores.size() - n_pos;
  const double u = pos_rank_sum - 0.5 * static_cast<double>(n_pos) * static_cast<double>(n_pos + 1);
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

ProbeSplit dense_probe_split(const EmbeddingDataset& dataset, std::span<const std::size_t> train_rows,
                             std::span<const std::size_t> val_rows) {
  return {dataset.gather(train_rows), dataset.gather(val_rows)};
}

Matrix densify(std::span<const SparseCode> codes, std::size_t feature_count) {
  Matrix out(codes.size(), feature_count);
  for (std::size_t i = 0; i < codes.size(); ++i)
    for (const auto& e : codes[i].entries) {
      if (e.index >= feature_count) throw UsageError("densify: feature index out of range");
      out(i, e.index) = e.value;
    }
  return out;
}

DownstreamResult downstream_eval(const ProbeSplit& data, std::span<const ProbeTask> tasks, const ProbeOptions& options) {
  DownstreamResult r;
  r.mean_auc = mean_task_auc(data, tasks, options, &r.task_auc);
  return r;
}

std::vector<std::size_t> select_by_weight(const ProbeModel& full, std::size_t n) {
  std::vector<std::size_t> idx(full.weights.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return std::abs(full.weights[a]) > std::abs(full.weights[b]);
  });
  idx.resize(std::min(n, idx.size()));
  std::sort(idx.begin(), idx.end());
  return idx;
}

RecoveryCurve performance_recovery(const ProbeSplit& sparse, const ProbeSplit& dense, std::span<const ProbeTask> tasks,
                                   std::span<const std::size_t> n_list, const ProbeOptions& options,
                                   const FeatureSelector& selector) {
  const std::size_t p = sparse.train.cols();
  for (auto n : n_list) {
    if (n == 0) throw UsageError("performance_recovery: N must be >= 1");
    if (n > p) throw UsageError("performance_recovery: N=" + std::to_string(n) + " exceeds feature count " + std::to_string(p));
  }
  RecoveryCurve curve;
  curve.dense_auc = mean_task_auc(dense, tasks, options, nullptr);

  std::map<std::size_t, double> totals;
  double sparse_total = 0.0;
  for (const auto& task : tasks) {
    const auto full = train_logistic(sparse.train, task.train_labels, options);
    sparse_total += roc_auc(full.decision(sparse.val), task.val_labels);
    for (auto n : n_list) {
      auto cols = selector(full, n);
      auto model = train_logistic(select_columns(sparse.train, cols), task.train_labels, options);
      model.subset = std::move(cols);
      totals[n] += roc_auc(model.decision(sparse.val), task.val_labels);
    }
  }
  const double count = static_cast<double>(tasks.size());
  curve.sparse_auc = sparse_total / count;
  for (const auto& [n, total] : totals) {
    curve.restricted_auc[n] = total / count;
    curve.ratio[n] = curve.restricted_auc[n] / curve.dense_auc;
  }
  return curve;
}

}  // namespace sail
