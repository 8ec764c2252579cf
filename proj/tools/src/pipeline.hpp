#pragma once

// Glue shared by several commands: encoding a split, the full evaluation of
// one checkpoint, and building a retrieval index.

#include <cstddef>
#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "sail/embedding_store.hpp"
#include "sail/evalmetrics.hpp"
#include "sail/probe.hpp"
#include "sail/retrieval.hpp"
#include "sail/trainer.hpp"

namespace sail::app {

/// "train", "val" or "test" rows in ascending order.
std::vector<std::size_t> split_rows(const EmbeddingDataset& dataset, const SplitAssignment& split,
                                    const std::string& name);

/// 0 selects the final level.
std::size_t resolve_level(const SaeConfig& config, std::size_t level);

/// JumpReLU codes for the given rows.
std::vector<SparseCode> encode_rows(const EmbeddingDataset& dataset, std::span<const std::size_t> rows,
                                    const Checkpoint& cp, std::size_t level);

std::string config_id(const Checkpoint& cp);

struct EvalOptions {
  std::string split = "val";
  std::size_t level = 0;
  std::vector<std::size_t> recovery_n{1, 2, 5, 10, 20, 50, 100};
  ProbeOptions probe;
  double min_prevalence = 0.05;
  std::size_t null_pairs = kDefaultNullPairs;
  std::uint64_t seed = 0;
};

/// R², sparsity, m_config, dense and sparse probe AUC, and the recovery
/// curve at every N that fits the dictionary. Probes train on the train
/// split and are scored on `options.split`.
ConfigResult evaluate_checkpoint(const EmbeddingDataset& dataset, const SplitAssignment& split, const Checkpoint& cp,
                                 const EvalOptions& options, std::ostream* log = nullptr);

RetrievalIndex build_index(const EmbeddingDataset& dataset, std::span<const std::size_t> rows,
                           std::span<const SparseCode> codes, std::size_t k);

}  // namespace sail::app
