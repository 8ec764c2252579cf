#pragma once

// Automated feature interpretation: exemplar dossiers, concept generation,
// the five-candidate judge protocol, and query-to-concept matching.

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sail/chat_client.hpp"
#include "sail/embedding_store.hpp"
#include "sail/evalmetrics.hpp"
#include "sail/matrix.hpp"

namespace sail {

struct MetadataSummary {
  std::map<std::string, std::size_t> modality;
  std::map<std::string, std::size_t> organs;
  std::map<std::string, std::size_t> age_group;
  std::map<std::string, std::size_t> sex;

  friend bool operator==(const MetadataSummary&, const MetadataSummary&) = default;
};

struct FeatureDossier {
  std::size_t feature_index = 0;
  std::vector<std::string> top_ids;       // up to 20, by descending activation
  std::vector<std::string> exemplar_ids;  // greedy-dissimilar subset of top_ids
  MetadataSummary summary;                // over top_ids

  friend bool operator==(const FeatureDossier&, const FeatureDossier&) = default;
};

struct ConceptRecord {
  std::size_t feature_index = 0;
  std::string description;
  std::string model;
  std::string prompt_hash;

  friend bool operator==(const ConceptRecord&, const ConceptRecord&) = default;
};

struct JudgeTrial {
  std::size_t feature_index = 0;
  std::vector<std::string> candidates;  // five, labelled A..E in order
  int truth_position = 0;               // 1-based
  int returned_rank = 0;                // 0 until judged
  std::uint64_t seed = 0;

  friend bool operator==(const JudgeTrial&, const JudgeTrial&) = default;
};

struct RankSummary {
  double mean_rank = 0.0;
  std::array<std::size_t, 5> histogram{};  // counts of ranks 1..5
  std::size_t count = 0;

  friend bool operator==(const RankSummary&, const RankSummary&) = default;
};

inline constexpr std::size_t kDossierTop = 20;
inline constexpr std::size_t kExemplars = 5;
inline constexpr std::size_t kJudgeCandidates = 5;

/// Top-n features by M, ties by feature index.
std::vector<std::size_t> select_features_for_interp(std::span<const FeatureScore> scores, std::size_t n);

/// Max-min cosine greedy over candidates ordered by descending activation;
/// `embeddings` rows align with `candidates`. Starts from candidates[0];
/// ties go to the smaller sample id.
std::vector<std::string> greedy_dissimilar(std::span<const std::string> candidates, const Matrix& embeddings,
                                           std::size_t m);

FeatureDossier build_dossier(std::size_t feature, const FeatureActivationTable& table, const EmbeddingDataset& dataset,
                             std::size_t top_n = kDossierTop, std::size_t exemplars = kExemplars);

std::string build_concept_prompt(const FeatureDossier& dossier, const EmbeddingDataset& dataset);
std::string build_judge_prompt(const JudgeTrial& trial, const FeatureDossier& dossier, const EmbeddingDataset& dataset);
std::string build_match_prompt(const std::string& query, std::span<const ConceptRecord> concepts);

/// Text up to and including the first sentence terminator, trimmed.
std::string first_sentence(const std::string& text);

ConceptRecord generate_concept(ChatClient& client, const FeatureDossier& dossier, const EmbeddingDataset& dataset);

/// Truth plus four distractors drawn without replacement from the other
/// features' distinct descriptions, then placed in a seeded order.
JudgeTrial build_judge_trial(std::size_t feature, std::span<const ConceptRecord> concepts, std::uint64_t seed);

/// Parses "C,A,E,B,D"-style output; empty on malformed text.
std::vector<int> parse_judge_order(const std::string& text);
/// Asks the judge to order the candidates; returns the rank of the truth.
/// One re-ask on malformed output, then ServiceError.
int judge_rank(ChatClient& client, const JudgeTrial& trial, const FeatureDossier& dossier,
               const EmbeddingDataset& dataset);

RankSummary aggregate_ranks(std::span<const int> ranks);
RankSummary aggregate_ranks(std::span<const JudgeTrial> trials);
RankSummary aggregate_histogram(const std::array<std::size_t, 5>& histogram);

/// Concept numbers (1-based) parsed from matcher output; nullopt when
/// malformed or out of range.
std::optional<std::vector<std::size_t>> parse_match_list(const std::string& text, std::size_t catalog_size);
/// Features whose concepts match the query, in the model's order, capped.
std::vector<std::size_t> match_concepts(ChatClient& client, const std::string& query,
                                        std::span<const ConceptRecord> concepts, std::size_t max_matches);

struct InterpOptions {
  std::size_t n_features = 250;
  std::size_t top_n = kDossierTop;
  std::size_t exemplars = kExemplars;
  std::uint64_t seed = 0;
  std::size_t max_in_flight = 4;
};

struct InterpResult {
  std::vector<FeatureDossier> dossiers;
  std::vector<ConceptRecord> concepts;  // ascending feature index
  std::vector<JudgeTrial> trials;       // aligned with concepts
  RankSummary summary;
};

/// Rejects a generator and judge with the same identity.
InterpResult run_interp(ChatClient& generator, ChatClient& judge, std::span<const FeatureScore> scores,
                        const FeatureActivationTable& table, const EmbeddingDataset& dataset,
                        const InterpOptions& options = {});

std::string concept_line(const ConceptRecord& c);
ConceptRecord concept_from_line(const std::string& line);
std::string trial_line(const JudgeTrial& t);
JudgeTrial trial_from_line(const std::string& line);
std::string summary_json(const RankSummary& s);

}  // namespace sail
