#include <gtest/gtest.h>

#include <fstream>

#include "oracles.hpp"
#include "sail/errors.hpp"
#include "sail/retrieval.hpp"

using namespace sail;
using sail::testing::ScratchDir;

namespace {

Fingerprint fp(std::vector<Activation> e) { return Fingerprint{std::move(e), FingerprintSource::image}; }

Matrix rows(std::initializer_list<std::vector<double>> r) {
  Matrix m(r.size(), r.begin()->size());
  std::size_t i = 0;
  for (const auto& row : r) {
    for (std::size_t j = 0; j < row.size(); ++j) m(i, j) = row[j];
    ++i;
  }
  return m;
}

RetrievalIndex random_index(std::size_t n, std::size_t features, std::uint64_t seed) {
  auto rng = make_rng(seed, 0);
  std::uniform_real_distribution<double> u(0.01, 2.0);
  std::vector<std::string> ids;
  std::vector<Fingerprint> fps;
  Matrix dense(n, 4);
  for (std::size_t i = 0; i < n; ++i) {
    ids.push_back("id" + std::to_string(i));
    SparseCode c;
    for (std::uint32_t j = 0; j < features; ++j)
      if (rng() % 3 == 0) c.entries.push_back({j, u(rng)});
    fps.push_back(fingerprint(c, 5));
    for (auto& v : dense.row(i)) v = u(rng);
  }
  return RetrievalIndex(ids, fps, dense);
}

}  // namespace

TEST(Fingerprint, TopKByValue) {
  const SparseCode code{1, {{2, 0.5}, {7, 0.9}, {9, 0.1}}};
  EXPECT_EQ(fingerprint(code, 2).entries, (std::vector<Activation>{{2, 0.5}, {7, 0.9}}));
  EXPECT_EQ(fingerprint(code, 10).entries, code.entries);
  EXPECT_TRUE(fingerprint(SparseCode{}, 3).entries.empty());
  EXPECT_THROW(fingerprint(code, 0), UsageError);
  const SparseCode ties{1, {{1, 0.5}, {4, 0.5}, {6, 0.5}}};
  EXPECT_EQ(fingerprint(ties, 2).entries, (std::vector<Activation>{{1, 0.5}, {4, 0.5}}));
}

TEST(Fingerprint, NestedInK) {
  auto rng = make_rng(4, 0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    SparseCode c;
    for (std::uint32_t j = 0; j < 30; ++j)
      if (u(rng) < 0.5) c.entries.push_back({j, std::round(u(rng) * 8) / 8 + 0.01});
    for (std::size_t k1 = 1; k1 < 12; ++k1) {
      const auto small = fingerprint(c, k1), large = fingerprint(c, k1 + 1);
      for (const auto& e : small.entries)
        EXPECT_NE(std::find(large.entries.begin(), large.entries.end(), e), large.entries.end());
    }
  }
}

TEST(SparseCosine, HandCasesAndProperties) {
  const auto a = fp({{0, 1}, {1, 1}});
  const auto b = fp({{1, 1}, {2, 1}});
  EXPECT_DOUBLE_EQ(sparse_cosine(a, b), 0.5);
  EXPECT_DOUBLE_EQ(sparse_cosine(a, a), 1.0);
  EXPECT_EQ(sparse_cosine(a, fp({{5, 2.0}})), 0.0);
  EXPECT_EQ(sparse_cosine(a, fp({})), 0.0);

  auto rng = make_rng(6, 0);
  std::uniform_real_distribution<double> u(0.01, 3.0);
  for (int t = 0; t < 500; ++t) {
    std::vector<Activation> ea, eb, scaled;
    for (std::uint32_t j = 0; j < 10; ++j) {
      if (rng() % 2) ea.push_back({j, u(rng)});
      if (rng() % 2) eb.push_back({j, u(rng)});
    }
    const double c = u(rng) * 100;
    for (auto e : ea) scaled.push_back({e.index, e.value * c});
    const double s = sparse_cosine(fp(ea), fp(eb));
    EXPECT_GE(s, 0.0);
    EXPECT_LE(s, 1.0 + 1e-15);
    EXPECT_DOUBLE_EQ(s, sparse_cosine(fp(eb), fp(ea)));
    EXPECT_NEAR(s, sparse_cosine(fp(scaled), fp(eb)), 1e-12);
  }
}

TEST(Retrieve, HandOrderAndSelfMatch) {
  const auto q = fp({{0, 1}, {1, 1}});
  RetrievalIndex index({"first", "second", "third"}, {fp({{1, 1}, {2, 1}}), fp({{5, 1}}), q},
                       rows({{1, 0}, {0, 1}, {1, 1}}));
  const auto hits = retrieve(q, index, 3);
  ASSERT_EQ(hits.size(), 3u);
  EXPECT_EQ(hits[0].sample_id, "third");
  EXPECT_DOUBLE_EQ(hits[0].similarity, 1.0);
  EXPECT_EQ(hits[1].sample_id, "first");
  EXPECT_DOUBLE_EQ(hits[1].similarity, 0.5);
  EXPECT_EQ(hits[2].sample_id, "second");
  EXPECT_EQ(retrieve(q, index, 10).size(), 3u);
  const auto excluded = retrieve(q, index, 3, std::string("third"));
  EXPECT_EQ(excluded.size(), 2u);
  EXPECT_EQ(excluded[0].sample_id, "first");
}

TEST(Retrieve, StableUnderIndexPermutation) {
  const auto index = random_index(60, 12, 3);
  std::vector<std::size_t> perm(60);
  std::iota(perm.begin(), perm.end(), 0);
  auto rng = make_rng(9, 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<std::string> ids;
  std::vector<Fingerprint> fps;
  Matrix dense(60, 4);
  for (std::size_t i = 0; i < 60; ++i) {
    ids.push_back(index.ids()[perm[i]]);
    fps.push_back(index.fingerprints()[perm[i]]);
    for (std::size_t j = 0; j < 4; ++j) dense(i, j) = index.dense()(perm[i], j);
  }
  const RetrievalIndex shuffled(ids, fps, dense);
  for (std::size_t q = 0; q < 10; ++q)
    EXPECT_EQ(retrieve(index.fingerprints()[q], index, 15), retrieve(index.fingerprints()[q], shuffled, 15));
}

TEST(RetrievalQuality, HandCases) {
  RetrievalIndex index({"r", "same", "orth"}, {fp({}), fp({}), fp({})}, rows({{1, 0}, {2, 0}, {0, 3}}));
  EXPECT_DOUBLE_EQ(retrieval_quality("r", std::vector<std::string>{"r"}, index), 1.0);
  EXPECT_DOUBLE_EQ(retrieval_quality("r", std::vector<std::string>{"same"}, index), 1.0);
  EXPECT_DOUBLE_EQ(retrieval_quality("r", std::vector<std::string>{"orth"}, index), 0.0);
  EXPECT_DOUBLE_EQ(retrieval_quality("r", std::vector<std::string>{"same", "orth"}, index), 0.5);
  // Fraction of dense quality at k=5.
  EXPECT_NEAR(0.954 / 0.976, 0.977, 0.0005);
}

// With orthonormal atoms, single-atom samples and the full support, the
// fingerprint cosine equals the dense cosine, so the rankings agree.
TEST(EvaluateRetrieval, FullSupportMatchesDenseOnOrthonormalAtoms) {
  SynthSpec spec;
  spec.orthogonal_atoms = true;
  spec.s_active = 2;
  spec.n_samples = 120;
  const auto data = synth_dataset(spec);
  std::vector<std::string> ids;
  std::vector<Fingerprint> fps;
  std::vector<std::size_t> all(data.dataset.size());
  std::iota(all.begin(), all.end(), 0);
  for (std::size_t i = 0; i < data.dataset.size(); ++i) {
    ids.push_back(data.dataset.record(i).sample_id);
    SparseCode c;
    const auto x = data.dataset.embedding(i);
    for (std::uint32_t a = 0; a < data.atoms.rows(); ++a) {
      const double v = dot(x, data.atoms.row(a));
      if (v > 1e-4) c.entries.push_back({a, v});
    }
    fps.push_back(fingerprint(c, 8));
  }
  const RetrievalIndex index(ids, fps, data.dataset.gather(all));
  for (std::size_t q = 0; q < 20; ++q) {
    const auto sparse = retrieve(fps[q], index, 10, ids[q]);
    const auto dense = retrieve_dense(data.dataset.embedding(q), index, 10, ids[q]);
    for (std::size_t i = 0; i < 10; ++i) EXPECT_NEAR(sparse[i].similarity, dense[i].similarity, 1e-6);
  }
  const std::vector<std::size_t> ks{8};
  const auto table = evaluate_fingerprint_retrieval(index, ks, 50, 5, 0);
  EXPECT_NEAR(table.quality.at(8), table.dense, 1e-6);
}

TEST(EvaluateRetrieval, DeterministicAndValidated) {
  const auto index = random_index(40, 10, 1);
  const std::vector<std::size_t> ks{1, 3, 5};
  const auto a = evaluate_fingerprint_retrieval(index, ks, 20, 5, 7);
  const auto b = evaluate_fingerprint_retrieval(index, ks, 20, 5, 7);
  EXPECT_EQ(a.quality, b.quality);
  EXPECT_EQ(a.dense, b.dense);
  EXPECT_EQ(a.n_refs, 20u);
  EXPECT_THROW(evaluate_fingerprint_retrieval(index, ks, 41, 5, 7), UsageError);
}

TEST(MeanActivation, Rules) {
  const std::vector<SparseCode> codes{{1, {{0, 1.0}, {2, 5.0}}}, {1, {{0, 3.0}}}, {1, {}}};
  const std::vector<std::size_t> r{0, 1, 2};
  const auto table = FeatureActivationTable::build(codes, r, 4);
  const std::vector<std::size_t> f0{0};
  EXPECT_EQ(mean_activation_fingerprint(f0, table, 3).entries, (std::vector<Activation>{{0, 2.0}}));
  EXPECT_EQ(mean_activation_fingerprint(f0, table, 3).source, FingerprintSource::query);
  const std::vector<std::size_t> dead{1};
  EXPECT_TRUE(mean_activation_fingerprint(dead, table, 3).entries.empty());
  const std::vector<std::size_t> both{0, 2};
  EXPECT_EQ(mean_activation_fingerprint(both, table, 1).entries, (std::vector<Activation>{{2, 5.0}}));
}

TEST(IndexFile, RoundTripAndVersion) {
  ScratchDir dir("index");
  const auto index = random_index(25, 9, 2);
  save_index(index, dir / "i.saix");
  const auto loaded = load_index(dir / "i.saix");
  EXPECT_EQ(loaded.ids(), index.ids());
  EXPECT_EQ(loaded.fingerprints(), index.fingerprints());
  for (std::size_t i = 0; i < index.dense().values().size(); ++i)
    EXPECT_EQ(loaded.dense().values()[i], static_cast<double>(static_cast<float>(index.dense().values()[i])));

  std::ifstream in(dir / "i.saix", std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), {});
  in.close();
  EXPECT_EQ(bytes.substr(0, 4), "SAIX");
  bytes[4] = 42;
  std::ofstream(dir / "bad.saix", std::ios::binary) << bytes;
  EXPECT_THROW(load_index(dir / "bad.saix"), VersionError);
  std::ofstream(dir / "short.saix", std::ios::binary) << bytes.substr(0, 30);
  EXPECT_THROW(load_index(dir / "short.saix"), DataError);
}
