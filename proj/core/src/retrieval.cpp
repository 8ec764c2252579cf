#include "sail/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "sail/binary_io.hpp"
#include "sail/errors.hpp"
#include "sail/random.hpp"

namespace sail {
namespace {

constexpr std::string_view kIndexMagic = "SAIX";
constexpr std::uint32_t kIndexVersion = 1;

Fingerprint top_k(std::span<const Activation> entries, std::size_t k, FingerprintSource source) {
  if (k == 0) throw UsageError("fingerprint: k must be >= 1");
  std::vector<Activation> sorted(entries.begin(), entries.end());
  std::sort(sorted.begin(), sorted.end(), [](const Activation& a, const Activation& b) {
    return a.value != b.value ? a.value > b.value : a.index < b.index;
  });
  if (sorted.size() > k) sorted.resize(k);
  std::sort(sorted.begin(), sorted.end(), [](const Activation& a, const Activation& b) { return a.index < b.index; });
  return {std::move(sorted), source};
}

double fp_norm(const Fingerprint& f) {
  double s = 0.0;
  for (const auto& e : f.entries) s += e.value * e.value;
  return std::sqrt(s);
}

template <typename Score>
std::vector<RetrievalHit> rank(const RetrievalIndex& index, std::size_t top_m, const std::optional<std::string>& exclude,
                               Score score) {
  if (index.size() == 0) throw DataError("retrieve: empty index");
  if (top_m == 0) throw UsageError("retrieve: top_m must be >= 1");
  std::vector<RetrievalHit> hits;
  hits.reserve(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (exclude && index.ids()[i] == *exclude) continue;
    hits.push_back({index.ids()[i], score(i)});
  }
  const auto better = [](const RetrievalHit& a, const RetrievalHit& b) {
    return a.similarity != b.similarity ? a.similarity > b.similarity : a.sample_id < b.sample_id;
  };
  const auto m = std::min(top_m, hits.size());
  std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(m), hits.end(), better);
  hits.resize(m);
  return hits;
}

}  // namespace

Fingerprint fingerprint(const SparseCode& code, std::size_t k) { return top_k(code.entries, k, FingerprintSource::image); }

Fingerprint fingerprint(const Fingerprint& fp, std::size_t k) { return top_k(fp.entries, k, fp.source); }

double sparse_cosine(const Fingerprint& a, const Fingerprint& b) {
  if (a.entries.empty() || b.entries.empty()) return 0.0;
  double dot_ab = 0.0;
  auto ia = a.entries.begin();
  auto ib = b.entries.begin();
  while (ia != a.entries.end() && ib != b.entries.end()) {
    if (ia->index < ib->index) {
      ++ia;
    } else if (ib->index < ia->index) {
      ++ib;
    } else {
      dot_ab += ia->value * ib->value;
      ++ia;
      ++ib;
    }
  }
  const double denom = fp_norm(a) * fp_norm(b);
  return denom > 0.0 ? dot_ab / denom : 0.0;
}

double dense_cosine(std::span<const double> a, std::span<const double> b) {
  const double na = std::sqrt(squared_norm(a));
  const double nb = std::sqrt(squared_norm(b));
  if (na == 0.0 || nb == 0.0) throw DataError("cosine of a zero-norm dense vector");
  return dot(a, b) / (na * nb);
}

RetrievalIndex::RetrievalIndex(std::vector<std::string> ids, std::vector<Fingerprint> fingerprints, Matrix dense)
    : ids_(std::move(ids)), fingerprints_(std::move(fingerprints)), dense_(std::move(dense)) {
  if (ids_.size() != fingerprints_.size() || ids_.size() != dense_.rows())
    throw UsageError("retrieval index: ids, fingerprints and dense rows must align");
}

std::optional<std::size_t> RetrievalIndex::find(const std::string& id) const {
  const auto it = std::find(ids_.begin(), ids_.end(), id);
  if (it == ids_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - ids_.begin());
}

RetrievalIndex RetrievalIndex::truncated(std::size_t k) const {
  std::vector<Fingerprint> fps;
  fps.reserve(fingerprints_.size());
  for (const auto& f : fingerprints_) fps.push_back(fingerprint(f, k));
  return RetrievalIndex(ids_, std::move(fps), dense_);
}

std::vector<RetrievalHit> retrieve(const Fingerprint& query, const RetrievalIndex& index, std::size_t top_m,
                                   const std::optional<std::string>& exclude) {
  return rank(index, top_m, exclude, [&](std::size_t i) { return sparse_cosine(query, index.fingerprints()[i]); });
}

std::vector<RetrievalHit> retrieve_dense(std::span<const double> query, const RetrievalIndex& index, std::size_t top_m,
                                         const std::optional<std::string>& exclude) {
  return rank(index, top_m, exclude, [&](std::size_t i) { return dense_cosine(query, index.dense().row(i)); });
}

double retrieval_quality(const std::string& reference_id, std::span<const std::string> retrieved,
                         const RetrievalIndex& index) {
  if (retrieved.empty()) throw UsageError("retrieval_quality: nothing retrieved");
  const auto ref = index.find(reference_id);
  if (!ref) throw DataError("retrieval_quality: unknown reference " + reference_id);
  double total = 0.0;
  for (const auto& id : retrieved) {
    const auto row = index.find(id);
    if (!row) throw DataError("retrieval_quality: unknown sample " + id);
    total += dense_cosine(index.dense().row(*ref), index.dense().row(*row));
  }
  return total / static_cast<double>(retrieved.size());
}

RetrievalTable evaluate_fingerprint_retrieval(const RetrievalIndex& index, std::span<const std::size_t> k_list,
                                              std::size_t n_refs, std::size_t top_m, std::uint64_t seed) {
  if (n_refs == 0 || n_refs > index.size()) throw UsageError("evaluate_fingerprint_retrieval: n_refs must lie in [1, index size]");
  if (index.size() < 2) throw DataError("evaluate_fingerprint_retrieval: index needs at least two samples");
  std::vector<std::size_t> order(index.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return index.ids()[a] < index.ids()[b]; });
  auto rng = make_rng(seed, 0x4e75);
  std::shuffle(order.begin(), order.end(), rng);
  order.resize(n_refs);

  auto hit_ids = [](const std::vector<RetrievalHit>& hits) {
    std::vector<std::string> ids;
    for (const auto& h : hits) ids.push_back(h.sample_id);
    return ids;
  };

  RetrievalTable table;
  table.n_refs = n_refs;
  table.top_m = top_m;
  double dense_total = 0.0;
  for (auto ref : order) {
    const auto& id = index.ids()[ref];
    dense_total += retrieval_quality(id, hit_ids(retrieve_dense(index.dense().row(ref), index, top_m, id)), index);
  }
  table.dense = dense_total / static_cast<double>(n_refs);

  for (auto k : k_list) {
    const auto cut = index.truncated(k);
    double total = 0.0;
    for (auto ref : order) {
      const auto& id = cut.ids()[ref];
      total += retrieval_quality(id, hit_ids(retrieve(cut.fingerprints()[ref], cut, top_m, id)), cut);
    }
    table.quality[k] = total / static_cast<double>(n_refs);
  }
  return table;
}

Fingerprint mean_activation_fingerprint(std::span<const std::size_t> features, const FeatureActivationTable& table,
                                        std::size_t k) {
  if (features.empty()) throw UsageError("mean_activation_fingerprint: no features selected");
  std::vector<Activation> entries;
  for (auto f : features) {
    if (f >= table.feature_count) throw UsageError("mean_activation_fingerprint: feature index out of range");
    const auto& acts = table.by_feature[f];
    if (acts.empty()) continue;
    double sum = 0.0;
    for (const auto& a : acts) sum += a.value;
    const auto index = static_cast<std::uint32_t>(f);
    if (std::none_of(entries.begin(), entries.end(), [&](const Activation& e) { return e.index == index; }))
      entries.push_back({index, sum / static_cast<double>(acts.size())});
  }
  return top_k(entries, k, FingerprintSource::query);
}

void save_index(const RetrievalIndex& index, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write index " + path.string());
  write_magic(out, kIndexMagic);
  write_u32(out, kIndexVersion);
  const auto& dense = index.dense();
  std::vector<float> values(dense.values().begin(), dense.values().end());
  write_emb_block(out, static_cast<std::uint32_t>(dense.cols()), dense.rows(), values);
  std::string lines;
  for (std::size_t i = 0; i < index.size(); ++i) {
    nlohmann::json j;
    j["sample_id"] = index.ids()[i];
    std::vector<std::uint32_t> features;
    std::vector<double> vals;
    for (const auto& e : index.fingerprints()[i].entries) {
      features.push_back(e.index);
      vals.push_back(e.value);
    }
    j["features"] = features;
    j["values"] = vals;
    lines += j.dump();
    lines += '\n';
  }
  write_u64(out, lines.size());
  out.write(lines.data(), static_cast<std::streamsize>(lines.size()));
}

RetrievalIndex load_index(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open index " + path.string());
  expect_magic(in, kIndexMagic, "retrieval index");
  const auto version = read_u32(in);
  if (version != kIndexVersion) throw VersionError("retrieval index: unsupported version " + std::to_string(version));
  const auto block = read_emb_block(in);
  Matrix dense(block.n, block.d);
  std::copy(block.values.begin(), block.values.end(), dense.values().begin());
  const auto length = read_u64(in);
  const auto bytes = read_bytes(in, length);
  std::istringstream lines(std::string(bytes.begin(), bytes.end()));
  std::vector<std::string> ids;
  std::vector<Fingerprint> fps;
  std::string line;
  try {
    while (std::getline(lines, line)) {
      if (line.empty()) continue;
      const auto j = nlohmann::json::parse(line);
      ids.push_back(j.at("sample_id").get<std::string>());
      const auto features = j.at("features").get<std::vector<std::uint32_t>>();
      const auto vals = j.at("values").get<std::vector<double>>();
      if (features.size() != vals.size()) throw DataError("retrieval index: features/values length mismatch");
      Fingerprint fp;
      for (std::size_t i = 0; i < features.size(); ++i) fp.entries.push_back({features[i], vals[i]});
      fps.push_back(std::move(fp));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("retrieval index: bad fingerprint line: ") + e.what());
  }
  if (ids.size() != dense.rows()) throw CorruptFileError("retrieval index: fingerprint count != dense rows");
  return RetrievalIndex(std::move(ids), std::move(fps), std::move(dense));
}

}  // namespace sail
