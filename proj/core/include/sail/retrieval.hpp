#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sail/evalmetrics.hpp"
#include "sail/matrix.hpp"
#include "sail/sae.hpp"

namespace sail {

enum class FingerprintSource { image, query };

/// The k most activated features of one sample or query, stored in
/// ascending feature order.
struct Fingerprint {
  std::vector<Activation> entries;
  FingerprintSource source = FingerprintSource::image;

  friend bool operator==(const Fingerprint&, const Fingerprint&) = default;
};

/// Top-k entries by value, ties by smaller feature index.
Fingerprint fingerprint(const SparseCode& code, std::size_t k);
Fingerprint fingerprint(const Fingerprint& fp, std::size_t k);

/// Cosine over the union of supports; 0 if either side is empty.
double sparse_cosine(const Fingerprint& a, const Fingerprint& b);
double dense_cosine(std::span<const double> a, std::span<const double> b);

class RetrievalIndex {
 public:
  RetrievalIndex() = default;
  /// `dense` rows align with `ids` and `fingerprints`.
  RetrievalIndex(std::vector<std::string> ids, std::vector<Fingerprint> fingerprints, Matrix dense);

  std::size_t size() const noexcept { return ids_.size(); }
  const std::vector<std::string>& ids() const noexcept { return ids_; }
  const std::vector<Fingerprint>& fingerprints() const noexcept { return fingerprints_; }
  const Matrix& dense() const noexcept { return dense_; }
  std::optional<std::size_t> find(const std::string& id) const;

  /// Same index with every fingerprint cut to k entries.
  RetrievalIndex truncated(std::size_t k) const;

  friend bool operator==(const RetrievalIndex&, const RetrievalIndex&) = default;

 private:
  std::vector<std::string> ids_;
  std::vector<Fingerprint> fingerprints_;
  Matrix dense_;
};

struct RetrievalHit {
  std::string sample_id;
  double similarity = 0.0;

  friend bool operator==(const RetrievalHit&, const RetrievalHit&) = default;
};

/// Exhaustive scan; descending similarity, ties by sample id.
std::vector<RetrievalHit> retrieve(const Fingerprint& query, const RetrievalIndex& index, std::size_t top_m,
                                   const std::optional<std::string>& exclude = std::nullopt);
std::vector<RetrievalHit> retrieve_dense(std::span<const double> query, const RetrievalIndex& index, std::size_t top_m,
                                         const std::optional<std::string>& exclude = std::nullopt);

/// Mean dense-space cosine between the reference and each retrieved sample.
double retrieval_quality(const std::string& reference_id, std::span<const std::string> retrieved,
                         const RetrievalIndex& index);

struct RetrievalTable {
  std::map<std::size_t, double> quality;  // k -> mean quality
  double dense = 0.0;
  std::size_t n_refs = 0;
  std::size_t top_m = 0;
};

/// Seeded reference sample; for each k the reference's own k-fingerprint
/// retrieves top_m neighbors (excluding itself) and their dense cosine to the
/// reference is averaged. The dense column retrieves by dense cosine.
RetrievalTable evaluate_fingerprint_retrieval(const RetrievalIndex& index, std::span<const std::size_t> k_list,
                                              std::size_t n_refs, std::size_t top_m = 5, std::uint64_t seed = 0);

/// Mean activation (over active samples) of each selected feature, top-k kept.
Fingerprint mean_activation_fingerprint(std::span<const std::size_t> features, const FeatureActivationTable& table,
                                        std::size_t k);

// Index file: "SAIX", u32 version, a SAIL-EMB block of the dense rows, then a
// u64 byte length and JSON-lines fingerprints
// ({"sample_id", "features", "values"} per row).
void save_index(const RetrievalIndex& index, const std::filesystem::path& path);
RetrievalIndex load_index(const std::filesystem::path& path);

}  // namespace sail
