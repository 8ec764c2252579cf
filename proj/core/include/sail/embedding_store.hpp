#pragma once

// Embedding datasets: SAIL-EMB + JSON-lines loading, scan-level stratified
// splits with institution holdout, seeded batching, and a planted-dictionary
// generator for desk-scale experiments.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "sail/matrix.hpp"

namespace sail {

enum class Modality { ct, mr, other };
enum class Sex { male, female, unknown };

std::string_view to_string(Modality m);
std::string_view to_string(Sex s);
Modality parse_modality(std::string_view text);
Sex parse_sex(std::string_view text);

using OrganSet = std::set<std::string>;

struct EmbeddingRecord {
  std::string sample_id;
  std::string scan_id;
  std::string institution;
  Modality modality = Modality::other;
  std::string age_group;
  Sex sex = Sex::unknown;
  OrganSet organ_set;
  std::vector<float> embedding;
  // Metadata keys this toolkit does not consume, kept verbatim as a JSON
  // object so that save/load preserves them. Empty means none.
  std::string extra_json;

  friend bool operator==(const EmbeddingRecord&, const EmbeddingRecord&) = default;
};

/// Immutable, validated collection of embedding records sharing one
/// dimension. Rows are addressed by their position in load order.
class EmbeddingDataset {
 public:
  EmbeddingDataset(std::size_t d, std::vector<EmbeddingRecord> records);

  std::size_t d() const noexcept { return d_; }
  std::size_t size() const noexcept { return records_.size(); }
  const std::vector<EmbeddingRecord>& records() const noexcept { return records_; }
  const EmbeddingRecord& record(std::size_t row) const { return records_.at(row); }
  const std::vector<std::string>& organ_vocabulary() const noexcept { return organ_vocabulary_; }

  std::optional<std::size_t> find(std::string_view sample_id) const;
  std::size_t row_of(std::string_view sample_id) const;
  /// Rows of the given ids in ascending row order.
  std::vector<std::size_t> rows_of(const std::set<std::string>& ids) const;
  std::set<std::string> all_ids() const;
  std::set<std::string> institutions() const;

  /// Embeddings of the given rows, in the given order, widened to double.
  Matrix gather(std::span<const std::size_t> rows) const;
  std::vector<double> embedding(std::size_t row) const;

  friend bool operator==(const EmbeddingDataset& a, const EmbeddingDataset& b) {
    return a.d_ == b.d_ && a.records_ == b.records_;
  }

 private:
  std::size_t d_;
  std::vector<EmbeddingRecord> records_;
  std::vector<std::string> organ_vocabulary_;
  std::unordered_map<std::string, std::size_t> index_;
};

EmbeddingDataset load_dataset(const std::filesystem::path& embeddings_path, const std::filesystem::path& metadata_path);
void save_dataset(const EmbeddingDataset& dataset, const std::filesystem::path& embeddings_path,
                  const std::filesystem::path& metadata_path);

/// One metadata line in the JSON-lines format (no trailing newline).
std::string metadata_line(const EmbeddingRecord& record);

struct SplitAssignment {
  std::set<std::string> train_ids;
  std::set<std::string> val_ids;
  std::set<std::string> test_ids;
  std::set<std::string> holdout_institutions;
  std::uint64_t seed = 0;

  friend bool operator==(const SplitAssignment&, const SplitAssignment&) = default;
};

/// Holdout institutions go to test; remaining scans are stratified by
/// (modality, age_group, sex) and split train/val per stratum. A stratum
/// with a single scan goes to train.
SplitAssignment make_splits(const EmbeddingDataset& dataset, const std::set<std::string>& holdout_institutions,
                            double train_fraction = 0.8, std::uint64_t seed = 0);

std::string split_to_json(const SplitAssignment& split);
SplitAssignment split_from_json(std::string_view text);
void save_split(const SplitAssignment& split, const std::filesystem::path& path);
SplitAssignment load_split(const std::filesystem::path& path);

struct Batch {
  std::vector<std::size_t> rows;
  Matrix x;  // rows.size() x d
};

/// Seeded per-epoch permutation of a row set, cut into batches. The last
/// batch may be short.
class BatchSampler {
 public:
  BatchSampler(const EmbeddingDataset& dataset, std::vector<std::size_t> rows, std::size_t batch_size,
               std::uint64_t seed, std::uint64_t epoch);

  std::size_t batch_count() const noexcept;
  std::optional<Batch> next();

 private:
  const EmbeddingDataset* dataset_;
  std::vector<std::size_t> order_;
  std::size_t batch_size_;
  std::size_t cursor_ = 0;
};

std::vector<Batch> iterate_batches(const EmbeddingDataset& dataset, const std::set<std::string>& ids,
                                   std::size_t batch_size, std::uint64_t seed, std::uint64_t epoch);

std::vector<double> dataset_mean(const EmbeddingDataset& dataset, std::span<const std::size_t> rows);
std::vector<double> dataset_mean(const EmbeddingDataset& dataset, const std::set<std::string>& ids);

struct SynthSpec {
  std::size_t d = 16;
  std::size_t n_truth = 8;
  std::size_t n_samples = 2000;
  std::size_t s_active = 1;
  double noise_sigma = 0.0;
  std::uint64_t seed = 1;
  // Gram-Schmidt the planted atoms (requires n_truth <= d).
  bool orthogonal_atoms = false;
  std::size_t slices_per_scan = 4;
};

struct SynthResult {
  EmbeddingDataset dataset;
  Matrix atoms;  // n_truth x d, unit rows
};

/// Each sample is a positive combination of s_active distinct planted atoms
/// (coefficients uniform in [0.5, 1.5]) plus Gaussian noise. The organ set of
/// a sample names its active atoms ("atom_<i>").
SynthResult synth_dataset(const SynthSpec& spec);

std::string atom_label(std::size_t atom);

}  // namespace sail
