#include "pipeline.hpp"

#include "sail/errors.hpp"

namespace sail::app {

std::vector<std::size_t> split_rows(const EmbeddingDataset& dataset, const SplitAssignment& split,
                                    const std::string& name) {
  const std::set<std::string>* ids = nullptr;
  if (name == "train") ids = &split.train_ids;
  if (name == "val") ids = &split.val_ids;
  if (name == "test") ids = &split.test_ids;
  if (!ids) throw UsageError("unknown split '" + name + "' (expected train, val or test)");
  if (ids->empty()) throw DataError("split '" + name + "' is empty");
  return dataset.rows_of(*ids);
}

std::size_t resolve_level(const SaeConfig& config, std::size_t level) {
  if (level == 0) return config.levels();
  if (level > config.levels())
    throw UsageError("level " + std::to_string(level) + " exceeds the model's " + std::to_string(config.levels()) +
                     " levels");
  return level;
}

std::vector<SparseCode> encode_rows(const EmbeddingDataset& dataset, std::span<const std::size_t> rows,
                                    const Checkpoint& cp, std::size_t level) {
  if (cp.sae.input_dim != dataset.d())
    throw DataError("checkpoint input_dim " + std::to_string(cp.sae.input_dim) + " does not match dataset d " +
                    std::to_string(dataset.d()));
  return encode_inference(cp.params, dataset.gather(rows), cp.sae, resolve_level(cp.sae, level));
}

std::string config_id(const Checkpoint& cp) { return SweepEntry{cp.sae, cp.train.seed}.id(); }

ConfigResult evaluate_checkpoint(const EmbeddingDataset& dataset, const SplitAssignment& split, const Checkpoint& cp,
                                 const EvalOptions& options, std::ostream* log) {
  const auto level = resolve_level(cp.sae, options.level);
  const auto features = cp.sae.prefix(level);
  const auto eval = split_rows(dataset, split, options.split);
  const auto train = split_rows(dataset, split, "train");

  ConfigResult r;
  r.config_id = config_id(cp);
  r.dict_sizes = cp.sae.dict_sizes;
  r.k_values = cp.sae.k_values;
  r.seed = cp.train.seed;

  const auto eval_codes = encode_rows(dataset, eval, cp, level);
  const auto x = dataset.gather(eval);
  r.r2 = r_squared(x, decode(cp.params, eval_codes));
  const auto stats = sparsity_stats(eval_codes);
  r.mean_l0 = stats.mean_l0;
  r.alive = stats.alive;

  const auto table = FeatureActivationTable::build(eval_codes, eval, features);
  r.m_config = monosemanticity_config(score_features(table, dataset, options.null_pairs, options.seed));

  const auto tasks = build_tasks(dataset, train, eval, options.min_prevalence);
  const auto train_codes = encode_rows(dataset, train, cp, level);
  const ProbeSplit sparse{densify(train_codes, features), densify(eval_codes, features)};
  const auto dense = dense_probe_split(dataset, train, eval);

  std::vector<std::size_t> ns;
  for (auto n : options.recovery_n) {
    if (n <= features) {
      ns.push_back(n);
    } else if (log) {
      *log << "note: skipping recovery N=" << n << " (dictionary has " << features << " features)\n";
    }
  }
  const auto curve = performance_recovery(sparse, dense, tasks, ns, options.probe);
  r.dense_auc = curve.dense_auc;
  r.sparse_auc = curve.sparse_auc;
  r.recovery = curve.ratio;
  return r;
}

RetrievalIndex build_index(const EmbeddingDataset& dataset, std::span<const std::size_t> rows,
                           std::span<const SparseCode> codes, std::size_t k) {
  std::vector<std::string> ids;
  std::vector<Fingerprint> fps;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    ids.push_back(dataset.record(rows[i]).sample_id);
    fps.push_back(fingerprint(codes[i], k));
  }
  return RetrievalIndex(std::move(ids), std::move(fps), dataset.gather(rows));
}

}  // namespace sail::app
