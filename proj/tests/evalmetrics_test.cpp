#include <gtest/gtest.h>

#include <algorithm>

#include "oracles.hpp"
#include "sail/errors.hpp"
#include "sail/evalmetrics.hpp"

using namespace sail;
using sail::testing::config;
using sail::testing::tiny_dataset;
using sail::testing::with_ranks;

namespace {

Matrix column(std::initializer_list<double> v) {
  Matrix m(v.size(), 1);
  std::size_t i = 0;
  for (double x : v) m(i++, 0) = x;
  return m;
}

// Feature 0 active on every row with value n - row, so the top order is row
// order.
FeatureActivationTable single_feature_table(std::size_t n) {
  std::vector<SparseCode> codes(n);
  std::vector<std::size_t> rows(n);
  for (std::size_t i = 0; i < n; ++i) {
    rows[i] = i;
    codes[i].entries = {{0, static_cast<double>(n - i)}};
  }
  return FeatureActivationTable::build(codes, rows, 1);
}

}  // namespace

TEST(RSquared, HandCases) {
  const auto x = column({0, 2});
  EXPECT_DOUBLE_EQ(r_squared(x, x), 1.0);
  EXPECT_DOUBLE_EQ(r_squared(x, column({1, 1})), 0.0);
  EXPECT_DOUBLE_EQ(r_squared(x, column({0.5, 1.5})), 0.75);
}

TEST(RSquared, InvariantUnderOrthogonalTransform) {
  auto rng = make_rng(3, 0);
  std::normal_distribution<double> g(0.0, 1.0);
  Matrix x(30, 2), y(30, 2);
  for (auto& v : x.values()) v = g(rng) + 1.0;
  for (std::size_t i = 0; i < y.values().size(); ++i) y.values()[i] = x.values()[i] + 0.3 * g(rng);
  const double c = std::cos(0.7), s = std::sin(0.7);
  auto rotate = [&](const Matrix& m) {
    Matrix r(m.rows(), 2);
    for (std::size_t i = 0; i < m.rows(); ++i) {
      r(i, 0) = c * m(i, 0) - s * m(i, 1);
      r(i, 1) = s * m(i, 0) + c * m(i, 1);
    }
    return r;
  };
  EXPECT_NEAR(r_squared(x, y), r_squared(rotate(x), rotate(y)), 1e-12);
}

TEST(SparsityStats, Counting) {
  EXPECT_EQ(sparsity_stats(std::vector<SparseCode>(3)).mean_l0, 0.0);
  EXPECT_EQ(sparsity_stats(std::vector<SparseCode>(3)).alive, 0u);
  const std::vector<SparseCode> codes{{1, {{0, 1.0}}}, {1, {{0, 2.0}, {3, 1.0}}}};
  const auto s = sparsity_stats(codes);
  EXPECT_DOUBLE_EQ(s.mean_l0, 1.5);
  EXPECT_EQ(s.alive, 2u);
}

TEST(Jaccard, HandCases) {
  EXPECT_EQ(jaccard({"liver"}, {"liver"}), 1.0);
  EXPECT_EQ(jaccard({"liver"}, {"spleen"}), 0.0);
  EXPECT_EQ(jaccard({"liver", "spleen"}, {"liver"}), 0.5);
  EXPECT_EQ(jaccard({}, {}), 1.0);
}

TEST(ActivationTable, SortedWithTies) {
  const std::vector<SparseCode> codes{{1, {{0, 1.0}}}, {1, {{0, 3.0}, {1, 2.0}}}, {1, {{0, 3.0}}}};
  const std::vector<std::size_t> rows{7, 4, 9};
  const auto t = FeatureActivationTable::build(codes, rows, 2);
  ASSERT_EQ(t.by_feature[0].size(), 3u);
  EXPECT_EQ(t.by_feature[0][0], (FeatureActivation{4, 3.0}));
  EXPECT_EQ(t.by_feature[0][1], (FeatureActivation{9, 3.0}));
  EXPECT_EQ(t.top(0, 2).size(), 2u);
  EXPECT_EQ(t.top(1, 10).size(), 1u);
}

TEST(Coherence, HandCases) {
  const auto ds = tiny_dataset({{1}, {1}, {1}}, {{"a"}, {"a"}, {"b"}});
  const auto t = single_feature_table(3);
  EXPECT_NEAR(coherence(0, t, ds, 0.0), 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(coherence(0, t, ds, 1.0 / 3.0), 0.0, 1e-15);
  EXPECT_EQ(coherence(0, t, ds, 1.0), 0.0);

  const auto same = tiny_dataset({{1}, {1}, {1}}, {{"a", "b"}, {"a", "b"}, {"a", "b"}});
  EXPECT_DOUBLE_EQ(coherence(0, t, same, 0.4), 1.0);

  const auto one = single_feature_table(1);
  EXPECT_EQ(coherence(0, one, ds, 0.0), 0.0);
}

TEST(Specificity, HandCases) {
  const auto t4 = single_feature_table(4);
  const auto ab = tiny_dataset({{1}, {1}, {1}, {1}, {1}}, {{"a"}, {"a"}, {"b"}, {"b"}, {"c", "d"}});
  EXPECT_NEAR(specificity(0, t4, ab), 0.5, 1e-15);

  const auto uniform = tiny_dataset({{1}, {1}, {1}, {1}}, {{"a"}, {"b"}, {"c"}, {"d"}});
  EXPECT_NEAR(specificity(0, t4, uniform), 0.0, 1e-15);
}

TEST(Specificity, SingleOrganPool) {
  std::vector<std::vector<float>> v(11, {1.0f});
  std::vector<OrganSet> organs(10, OrganSet{"liver"});
  organs.push_back({"spleen"});
  const auto ds = tiny_dataset(v, organs);
  EXPECT_DOUBLE_EQ(specificity(0, single_feature_table(10), ds), 1.0);
}

TEST(Scores, BoundedOnRandomData) {
  auto rng = make_rng(5, 0);
  const std::vector<std::string> vocab{"a", "b", "c", "d", "e"};
  std::vector<std::vector<float>> v;
  std::vector<OrganSet> organs;
  for (int i = 0; i < 60; ++i) {
    v.push_back({1.0f});
    OrganSet s;
    for (const auto& o : vocab)
      if (rng() % 3 == 0) s.insert(o);
    organs.push_back(s);
  }
  const auto ds = tiny_dataset(v, organs);
  std::vector<SparseCode> codes(60);
  std::vector<std::size_t> rows(60);
  std::uniform_real_distribution<double> u(0.1, 2.0);
  for (std::size_t i = 0; i < 60; ++i) {
    rows[i] = i;
    for (std::uint32_t j = 0; j < 8; ++j)
      if (rng() % 2) codes[i].entries.push_back({j, u(rng)});
  }
  const auto t = FeatureActivationTable::build(codes, rows, 8);
  for (const auto& s : score_features(t, ds, 300, 1)) {
    EXPECT_GE(s.coherence, 0.0);
    EXPECT_LE(s.coherence, 1.0);
    EXPECT_GE(s.specificity, 0.0);
    EXPECT_LE(s.specificity, 1.0);
    EXPECT_DOUBLE_EQ(s.m, s.coherence * s.specificity);
  }
  EXPECT_EQ(score_features(t, ds, 300, 1), score_features(t, ds, 300, 1));
}

TEST(Monosemanticity, ConfigMean) {
  std::vector<FeatureScore> ten(10);
  for (auto& s : ten) s.m = 1.0;
  EXPECT_DOUBLE_EQ(monosemanticity_config(ten), 1.0);
  std::vector<FeatureScore> twenty(20);
  for (std::size_t i = 0; i < 10; ++i) twenty[2 * i].m = 0.5;
  EXPECT_DOUBLE_EQ(monosemanticity_config(twenty), 0.5);
  std::vector<FeatureScore> two(2);
  two[0].m = 0.9;
  two[1].m = 0.3;
  EXPECT_DOUBLE_EQ(monosemanticity_config(two), 0.6);
  EXPECT_THROW(monosemanticity_config(std::vector<FeatureScore>{}), UsageError);
}

TEST(Serialization, RoundTrips) {
  FeatureScore s{3, 0.25, 0.5, 0.125};
  EXPECT_EQ(feature_score_from_line(feature_score_line(s)), s);
  ConfigResult r = config("D8_K1_s0", 0.7, 0.9);
  r.dict_sizes = {8};
  r.k_values = {1};
  r.recovery[1] = 0.5;
  EXPECT_EQ(config_result_from_line(config_result_line(r)), r);
}

TEST(RankConfigs, ReportedPairs) {
  auto enc_a = rank_configs(with_ranks({{"b1", 2, 3}, {"b2", 3, 6}}, 24));
  EXPECT_EQ(enc_a[0].config_id, "b1");
  EXPECT_EQ(enc_a[0].combined_score, 5u);
  EXPECT_EQ(enc_a[1].config_id, "b2");
  EXPECT_EQ(enc_a[1].combined_score, 9u);

  auto enc_b = rank_configs(with_ranks({{"d1", 1, 11}, {"d2", 4, 10}}, 24));
  EXPECT_EQ(enc_b[0].config_id, "d1");
  EXPECT_EQ(enc_b[0].combined_score, 12u);
  EXPECT_EQ(enc_b[1].config_id, "d2");
  EXPECT_EQ(enc_b[1].combined_score, 14u);
}

TEST(RankConfigs, ReproducesTopThreeRows) {
  const auto b = rank_configs(with_ranks({{"b_row3", 1, 12}, {"b_row1", 2, 3}, {"b_row2", 3, 6}}, 20));
  EXPECT_EQ(b[0].config_id, "b_row1");
  EXPECT_EQ(b[1].config_id, "b_row2");
  EXPECT_EQ(b[2].config_id, "b_row3");
  EXPECT_EQ(b[2].mono_rank, 1u);
  EXPECT_EQ(b[2].perf_rank, 12u);

  const auto d = rank_configs(with_ranks({{"d_row2", 4, 10}, {"d_row3", 2, 14}, {"d_row1", 1, 11}}, 20));
  EXPECT_EQ(d[0].config_id, "d_row1");
  EXPECT_EQ(d[1].config_id, "d_row2");
  EXPECT_EQ(d[2].config_id, "d_row3");
}

TEST(RankConfigs, SingleAndPermutationInvariant) {
  const auto one = rank_configs(std::vector<ConfigResult>{config("x", 0.1, 0.2)});
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one[0].mono_rank, 1u);
  EXPECT_EQ(one[0].perf_rank, 1u);
  EXPECT_EQ(one[0].combined_rank, 1u);

  auto rng = make_rng(8, 0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<ConfigResult> results;
  for (int i = 0; i < 15; ++i) results.push_back(config("c" + std::to_string(i), u(rng), u(rng)));
  const auto base = rank_configs(results);
  std::shuffle(results.begin(), results.end(), rng);
  const auto shuffled = rank_configs(results);
  ASSERT_EQ(base.size(), shuffled.size());
  std::set<std::string> ids;
  for (std::size_t i = 0; i < base.size(); ++i) {
    EXPECT_EQ(base[i].config_id, shuffled[i].config_id);
    EXPECT_EQ(base[i].combined_score, shuffled[i].combined_score);
    EXPECT_EQ(base[i].combined_rank, i + 1);
    ids.insert(base[i].config_id);
  }
  EXPECT_EQ(ids.size(), 15u);
}
