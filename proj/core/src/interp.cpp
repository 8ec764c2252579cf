#include "sail/interp.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <exception>
#include <numeric>
#include <random>
#include <thread>

#include "json.hpp"
#include "prompt_format.hpp"
#include "sail/errors.hpp"
#include "sail/hashing.hpp"
#include "sail/random.hpp"

namespace sail {
namespace {

using nlohmann::json;

std::string trim(std::string_view s) {
  auto is_space = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return std::string(s);
}

std::string one_line(std::string_view s) {
  std::string out(s);
  std::replace_if(out.begin(), out.end(), [](char c) { return c == '\n' || c == '\r'; }, ' ');
  return out;
}

std::vector<std::string> split_commas(const std::string& text) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  for (;;) {
    const auto comma = text.find(',', start);
    parts.push_back(trim(std::string_view(text).substr(start, comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return parts;
}

double safe_cosine(std::span<const double> a, std::span<const double> b) {
  const double na = squared_norm(a), nb = squared_norm(b);
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot(a, b) / std::sqrt(na * nb);
}

std::string exemplar_line(const EmbeddingRecord& r) {
  std::string organs;
  for (const auto& o : r.organ_set) {
    if (!organs.empty()) organs += ", ";
    organs += o;
  }
  if (organs.empty()) organs = prompt::kUnknown;
  const std::string age = r.age_group.empty() ? std::string(prompt::kUnknown) : r.age_group;
  std::string line(prompt::kExemplar);
  line += one_line(r.scan_id + "/" + r.sample_id);
  line += prompt::kModality;
  line += to_string(r.modality);
  line += prompt::kOrgans;
  line += one_line(organs);
  line += prompt::kAge;
  line += one_line(age);
  line += prompt::kSex;
  line += to_string(r.sex);
  return line + "\n";
}

std::string exemplar_block(const FeatureDossier& dossier, const EmbeddingDataset& dataset) {
  std::string out = "Exemplars:\n";
  for (const auto& id : dossier.exemplar_ids) out += exemplar_line(dataset.record(dataset.row_of(id)));
  return out;
}

// Runs f(i) for i in [0, n) on up to `width` threads. The exception of the
// lowest failing index is rethrown.
template <typename F>
void bounded_for(std::size_t n, std::size_t width, F f) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < n;) {
      try {
        f(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < std::clamp<std::size_t>(width, 1, std::max<std::size_t>(n, 1)); ++t)
      pool.emplace_back(worker);
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace

std::vector<std::size_t> select_features_for_interp(std::span<const FeatureScore> scores, std::size_t n) {
  if (n == 0) throw UsageError("select_features_for_interp: n must be >= 1");
  std::vector<FeatureScore> sorted(scores.begin(), scores.end());
  std::sort(sorted.begin(), sorted.end(), [](const FeatureScore& a, const FeatureScore& b) {
    return a.m != b.m ? a.m > b.m : a.feature < b.feature;
  });
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < std::min(n, sorted.size()); ++i) out.push_back(sorted[i].feature);
  return out;
}

std::vector<std::string> greedy_dissimilar(std::span<const std::string> candidates, const Matrix& embeddings,
                                           std::size_t m) {
  if (candidates.empty()) throw UsageError("greedy_dissimilar: no candidates");
  if (m == 0) throw UsageError("greedy_dissimilar: m must be >= 1");
  if (embeddings.rows() != candidates.size()) throw UsageError("greedy_dissimilar: embeddings must align with candidates");
  std::vector<std::size_t> chosen{0};
  std::vector<bool> used(candidates.size(), false);
  used[0] = true;
  // worst[c] = max cosine from candidate c to the chosen set
  std::vector<double> worst(candidates.size(), -2.0);
  while (chosen.size() < std::min(m, candidates.size())) {
    const auto last = chosen.back();
    std::size_t best = candidates.size();
    for (std::size_t c = 0; c < candidates.size(); ++c) {
      if (used[c]) continue;
      worst[c] = std::max(worst[c], safe_cosine(embeddings.row(c), embeddings.row(last)));
      if (best == candidates.size() || worst[c] < worst[best] ||
          (worst[c] == worst[best] && candidates[c] < candidates[best]))
        best = c;
    }
    used[best] = true;
    chosen.push_back(best);
  }
  std::vector<std::string> out;
  for (auto c : chosen) out.push_back(candidates[c]);
  return out;
}

FeatureDossier build_dossier(std::size_t feature, const FeatureActivationTable& table, const EmbeddingDataset& dataset,
                             std::size_t top_n, std::size_t exemplars) {
  if (feature >= table.feature_count) throw UsageError("build_dossier: feature index out of range");
  const auto top = table.top(feature, top_n);
  if (top.empty()) throw DataError("build_dossier: feature " + std::to_string(feature) + " never activates");
  FeatureDossier d;
  d.feature_index = feature;
  std::vector<std::size_t> rows;
  for (const auto& a : top) {
    rows.push_back(a.row);
    const auto& r = dataset.record(a.row);
    d.top_ids.push_back(r.sample_id);
    ++d.summary.modality[std::string(to_string(r.modality))];
    for (const auto& o : r.organ_set) ++d.summary.organs[o];
    ++d.summary.age_group[r.age_group.empty() ? std::string(prompt::kUnknown) : r.age_group];
    ++d.summary.sex[std::string(to_string(r.sex))];
  }
  d.exemplar_ids = greedy_dissimilar(d.top_ids, dataset.gather(rows), exemplars);
  return d;
}

std::string build_concept_prompt(const FeatureDossier& dossier, const EmbeddingDataset& dataset) {
  std::string p =
      "The images below are mutually dissimilar samples among those that most strongly activate one feature of a "
      "sparse autoencoder trained on medical image embeddings.\n"
      "Name the single visual or clinical concept they share, considering modality, orientation, anatomy and "
      "demographics.\n";
  p += exemplar_block(dossier, dataset);
  p += "Answer with exactly one sentence.\n";
  return p;
}

std::string build_judge_prompt(const JudgeTrial& trial, const FeatureDossier& dossier, const EmbeddingDataset& dataset) {
  std::string p =
      "The images below strongly activate one feature of a sparse autoencoder trained on medical image embeddings.\n";
  p += exemplar_block(dossier, dataset);
  p += "Candidate concept descriptions:\n";
  for (std::size_t i = 0; i < trial.candidates.size(); ++i)
    p += std::string(1, static_cast<char>('A' + i)) + ". " + one_line(trial.candidates[i]) + "\n";
  p += "Rank all five candidates from the best to the worst description of the shared concept.\n"
       "Answer with the five letters separated by commas, best first, for example: C,A,E,B,D\n";
  return p;
}

std::string build_match_prompt(const std::string& query, std::span<const ConceptRecord> concepts) {
  std::string p = "Match a clinical text query to the feature concepts below.\n";
  p += std::string(prompt::kQuery) + one_line(query) + "\n";
  p += "Concepts:\n";
  for (std::size_t i = 0; i < concepts.size(); ++i)
    p += std::to_string(i + 1) + ". " + one_line(concepts[i].description) + "\n";
  p += "Reply with the numbers of all concepts that match the query, separated by commas, best match first, or " +
       std::string(prompt::kNone) + " if no concept matches.\n";
  return p;
}

std::string first_sentence(const std::string& text) {
  const auto t = one_line(trim(text));
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] != '.' && t[i] != '!' && t[i] != '?') continue;
    if (i + 1 == t.size() || std::isspace(static_cast<unsigned char>(t[i + 1]))) return trim(t.substr(0, i + 1));
  }
  return trim(t);
}

ConceptRecord generate_concept(ChatClient& client, const FeatureDossier& dossier, const EmbeddingDataset& dataset) {
  const auto text = build_concept_prompt(dossier, dataset);
  const auto reply = client.complete({client.model(), {{"user", text}}, 0.0});
  auto description = first_sentence(reply);
  if (description.empty())
    throw ServiceError("empty concept description for feature " + std::to_string(dossier.feature_index));
  return {dossier.feature_index, std::move(description), client.model(), sha256_hex(text)};
}

JudgeTrial build_judge_trial(std::size_t feature, std::span<const ConceptRecord> concepts, std::uint64_t seed) {
  const auto truth = std::find_if(concepts.begin(), concepts.end(),
                                  [&](const ConceptRecord& c) { return c.feature_index == feature; });
  if (truth == concepts.end()) throw UsageError("build_judge_trial: no concept for feature " + std::to_string(feature));
  std::vector<std::string> pool;
  for (const auto& c : concepts) {
    if (c.feature_index == feature || c.description == truth->description) continue;
    if (std::find(pool.begin(), pool.end(), c.description) == pool.end()) pool.push_back(c.description);
  }
  if (pool.size() + 1 < kJudgeCandidates)
    throw DataError("build_judge_trial: need at least 5 distinct concept descriptions, have " +
                    std::to_string(pool.size() + 1));
  auto rng = make_rng(seed, (std::uint64_t{0x7a11} << 32) ^ feature);
  for (std::size_t i = 0; i + 1 < kJudgeCandidates; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(kJudgeCandidates - 1);
  JudgeTrial t;
  t.feature_index = feature;
  t.seed = seed;
  t.truth_position = std::uniform_int_distribution<int>(1, static_cast<int>(kJudgeCandidates))(rng);
  t.candidates = std::move(pool);
  t.candidates.insert(t.candidates.begin() + (t.truth_position - 1), truth->description);
  return t;
}

std::vector<int> parse_judge_order(const std::string& text) {
  const auto parts = split_commas(trim(text));
  if (parts.size() != kJudgeCandidates) return {};
  std::vector<int> order;
  for (const auto& p : parts) {
    if (p.size() != 1 || p[0] < 'A' || p[0] >= 'A' + static_cast<int>(kJudgeCandidates)) return {};
    const int pos = p[0] - 'A' + 1;
    if (std::find(order.begin(), order.end(), pos) != order.end()) return {};
    order.push_back(pos);
  }
  return order;
}

int judge_rank(ChatClient& client, const JudgeTrial& trial, const FeatureDossier& dossier,
               const EmbeddingDataset& dataset) {
  if (trial.candidates.size() != kJudgeCandidates || trial.truth_position < 1 ||
      trial.truth_position > static_cast<int>(kJudgeCandidates))
    throw UsageError("judge_rank: malformed trial");
  ChatRequest request{client.model(), {{"user", build_judge_prompt(trial, dossier, dataset)}}, 0.0};
  for (int attempt = 0; attempt < 2; ++attempt) {
    const auto reply = client.complete(request);
    const auto order = parse_judge_order(reply);
    if (!order.empty())
      return static_cast<int>(std::find(order.begin(), order.end(), trial.truth_position) - order.begin()) + 1;
    request.messages.push_back({"assistant", reply});
    request.messages.push_back(
        {"user", "That answer did not follow the format. Reply with exactly the five letters A-E separated by "
                 "commas, best first."});
  }
  throw ServiceError("judge output unparseable after retry for feature " + std::to_string(trial.feature_index));
}

RankSummary aggregate_ranks(std::span<const int> ranks) {
  if (ranks.empty()) throw UsageError("aggregate_ranks: no ranks");
  std::array<std::size_t, 5> hist{};
  for (int r : ranks) {
    if (r < 1 || r > 5) throw UsageError("aggregate_ranks: rank out of range: " + std::to_string(r));
    ++hist[static_cast<std::size_t>(r - 1)];
  }
  return aggregate_histogram(hist);
}

RankSummary aggregate_ranks(std::span<const JudgeTrial> trials) {
  std::vector<int> ranks;
  for (const auto& t : trials) ranks.push_back(t.returned_rank);
  return aggregate_ranks(ranks);
}

RankSummary aggregate_histogram(const std::array<std::size_t, 5>& histogram) {
  RankSummary s;
  s.histogram = histogram;
  std::size_t weighted = 0;
  for (std::size_t i = 0; i < histogram.size(); ++i) {
    s.count += histogram[i];
    weighted += (i + 1) * histogram[i];
  }
  if (s.count == 0) throw UsageError("aggregate_histogram: empty histogram");
  s.mean_rank = static_cast<double>(weighted) / static_cast<double>(s.count);
  return s;
}

std::optional<std::vector<std::size_t>> parse_match_list(const std::string& text, std::size_t catalog_size) {
  const auto t = trim(text);
  if (t == prompt::kNone) return std::vector<std::size_t>{};
  std::vector<std::size_t> out;
  for (const auto& p : split_commas(t)) {
    if (p.empty() || p.size() > 9 ||
        !std::all_of(p.begin(), p.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; }))
      return std::nullopt;
    const auto n = static_cast<std::size_t>(std::stoul(p));
    if (n < 1 || n > catalog_size) return std::nullopt;
    if (std::find(out.begin(), out.end(), n) == out.end()) out.push_back(n);
  }
  return out;
}

std::vector<std::size_t> match_concepts(ChatClient& client, const std::string& query,
                                        std::span<const ConceptRecord> concepts, std::size_t max_matches) {
  if (concepts.empty()) throw UsageError("match_concepts: empty concept catalog");
  ChatRequest request{client.model(), {{"user", build_match_prompt(query, concepts)}}, 0.0};
  for (int attempt = 0; attempt < 2; ++attempt) {
    const auto reply = client.complete(request);
    if (const auto numbers = parse_match_list(reply, concepts.size())) {
      std::vector<std::size_t> features;
      for (auto n : *numbers) {
        if (features.size() == max_matches) break;
        features.push_back(concepts[n - 1].feature_index);
      }
      return features;
    }
    request.messages.push_back({"assistant", reply});
    request.messages.push_back({"user", "That answer did not follow the format. Reply with concept numbers between 1 and " +
                                            std::to_string(concepts.size()) + " separated by commas, or " +
                                            std::string(prompt::kNone) + "."});
  }
  throw ServiceError("matcher output unparseable after retry");
}

InterpResult run_interp(ChatClient& generator, ChatClient& judge, std::span<const FeatureScore> scores,
                        const FeatureActivationTable& table, const EmbeddingDataset& dataset,
                        const InterpOptions& options) {
  if (generator.identity() == judge.identity())
    throw UsageError("concept generator and judge must be distinct clients (both are " + judge.identity() + ")");
  std::vector<FeatureScore> active;
  for (const auto& s : scores)
    if (s.feature < table.feature_count && !table.by_feature[s.feature].empty()) active.push_back(s);
  auto features = select_features_for_interp(active, options.n_features);
  std::sort(features.begin(), features.end());

  InterpResult result;
  for (auto f : features) result.dossiers.push_back(build_dossier(f, table, dataset, options.top_n, options.exemplars));

  result.concepts.resize(features.size());
  bounded_for(features.size(), options.max_in_flight,
              [&](std::size_t i) { result.concepts[i] = generate_concept(generator, result.dossiers[i], dataset); });

  for (auto f : features) result.trials.push_back(build_judge_trial(f, result.concepts, options.seed));
  bounded_for(features.size(), options.max_in_flight, [&](std::size_t i) {
    result.trials[i].returned_rank = judge_rank(judge, result.trials[i], result.dossiers[i], dataset);
  });
  result.summary = aggregate_ranks(std::span<const JudgeTrial>(result.trials));
  return result;
}

std::string concept_line(const ConceptRecord& c) {
  return json{{"feature", c.feature_index}, {"description", c.description}, {"model", c.model}, {"prompt_hash", c.prompt_hash}}
      .dump();
}

ConceptRecord concept_from_line(const std::string& line) {
  try {
    const auto j = json::parse(line);
    ConceptRecord c{j.at("feature").get<std::size_t>(), j.at("description").get<std::string>(),
                    j.at("model").get<std::string>(), j.at("prompt_hash").get<std::string>()};
    if (c.description.empty()) throw DataError("concept line has an empty description");
    return c;
  } catch (const json::exception& e) {
    throw DataError(std::string("invalid concept line: ") + e.what());
  }
}

std::string trial_line(const JudgeTrial& t) {
  return json{{"feature", t.feature_index},
              {"candidates", t.candidates},
              {"truth_position", t.truth_position},
              {"returned_rank", t.returned_rank},
              {"seed", t.seed}}
      .dump();
}

JudgeTrial trial_from_line(const std::string& line) {
  try {
    const auto j = json::parse(line);
    return {j.at("feature").get<std::size_t>(), j.at("candidates").get<std::vector<std::string>>(),
            j.at("truth_position").get<int>(), j.at("returned_rank").get<int>(), j.at("seed").get<std::uint64_t>()};
  } catch (const json::exception& e) {
    throw DataError(std::string("invalid trial line: ") + e.what());
  }
}

std::string summary_json(const RankSummary& s) {
  return json{{"mean_rank", s.mean_rank}, {"histogram", s.histogram}, {"count", s.count}}.dump();
}

}  // namespace sail
