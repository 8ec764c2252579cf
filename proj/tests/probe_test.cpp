#include <gtest/gtest.h>

#include "oracles.hpp"
#include "sail/errors.hpp"
#include "sail/probe.hpp"

using namespace sail;

namespace {

struct OneHotSetup {
  EmbeddingDataset dataset;
  std::vector<std::size_t> train, val;
  Matrix one_hot_train, one_hot_val;
};

// Synthetic single-atom data; the one-hot atom identity is the perfect
// representation for atom-presence tasks.
OneHotSetup one_hot_setup() {
  SynthSpec spec;
  spec.n_samples = 400;
  auto data = synth_dataset(spec);
  const auto split = make_splits(data.dataset, {}, 0.8, 0);
  OneHotSetup s{data.dataset, data.dataset.rows_of(split.train_ids), data.dataset.rows_of(split.val_ids), {}, {}};
  auto encode = [&](const std::vector<std::size_t>& rows) {
    Matrix m(rows.size(), spec.n_truth);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto& label = *s.dataset.record(rows[i]).organ_set.begin();
      for (std::size_t a = 0; a < spec.n_truth; ++a)
        if (atom_label(a) == label) m(i, a) = 1.0;
    }
    return m;
  };
  s.one_hot_train = encode(s.train);
  s.one_hot_val = encode(s.val);
  return s;
}

}  // namespace

TEST(RocAuc, HandCases) {
  const std::vector<double> s{0.9, 0.8, 0.2, 0.1};
  EXPECT_EQ(roc_auc(s, std::vector<int>{1, 1, 0, 0}), 1.0);
  EXPECT_EQ(roc_auc(s, std::vector<int>{1, 0, 1, 0}), 0.75);
  EXPECT_EQ(roc_auc(std::vector<double>(4, 0.3), std::vector<int>{1, 0, 1, 0}), 0.5);
  EXPECT_THROW(roc_auc(s, std::vector<int>{1, 1, 1, 1}), DataError);
}

TEST(RocAuc, NegationAndMonotoneTransform) {
  auto rng = make_rng(1, 0);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> s(40), neg(40), warped(40);
    std::vector<int> y(40);
    for (int i = 0; i < 40; ++i) {
      s[i] = g(rng);
      neg[i] = -s[i];
      warped[i] = std::exp(3.0 * s[i]) + 2.0;
      y[i] = i % 3 == 0;
    }
    const double a = roc_auc(s, y);
    EXPECT_NEAR(roc_auc(neg, y), 1.0 - a, 1e-15);
    EXPECT_DOUBLE_EQ(roc_auc(warped, y), a);
  }
}

TEST(Logistic, SeparableCase) {
  Matrix x(2, 1);
  x(0, 0) = -1;
  x(1, 0) = 1;
  const std::vector<int> y{0, 1};
  const auto m = train_logistic(x, y, {1e-4, 500, 1e-9});
  EXPECT_GT(m.weights[0], 0.0);
  EXPECT_LT(m.decision(x.row(0)), 0.0);
  EXPECT_GT(m.decision(x.row(1)), 0.0);
}

// With all-zero features the regularized optimum has w = 0 and the bias at
// the log-odds of the base rate.
TEST(Logistic, ZeroFeaturesGiveLogOdds) {
  Matrix x(10, 3);
  const std::vector<int> y{1, 1, 1, 0, 0, 0, 0, 0, 0, 0};
  const auto m = train_logistic(x, y, {1e-3, 1000, 1e-12});
  for (double w : m.weights) EXPECT_EQ(w, 0.0);
  EXPECT_NEAR(m.bias, std::log(0.3 / 0.7), 1e-6);
}

TEST(Logistic, LossNonIncreasingAndL2Shrinks) {
  auto rng = make_rng(2, 0);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    Matrix x(60, 4);
    std::vector<int> y(60);
    for (std::size_t i = 0; i < 60; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < 4; ++j) {
        x(i, j) = g(rng);
        s += (j + 1.0) * x(i, j);
      }
      y[i] = s + g(rng) > 0.0;
    }
    double prev_norm = std::numeric_limits<double>::infinity();
    for (double l2 : {1e-3, 2e-3, 4e-3, 8e-2, 1.6e-1}) {
      const auto m = train_logistic(x, y, {l2, 2000, 1e-12});
      for (std::size_t k = 1; k < m.loss_trace.size(); ++k) EXPECT_LE(m.loss_trace[k], m.loss_trace[k - 1] + 1e-15);
      const double norm = squared_norm(m.weights);
      EXPECT_LE(norm, prev_norm + 1e-9);
      prev_norm = norm;
    }
  }
}

TEST(BuildTasks, PrevalenceRules) {
  std::vector<std::vector<float>> v(20, {1.0f});
  std::vector<OrganSet> organs;
  for (int i = 0; i < 20; ++i) {
    OrganSet s{"everywhere"};
    if (i % 10 < 3) s.insert("thirty");
    organs.push_back(s);
  }
  const auto ds = sail::testing::tiny_dataset(v, organs);
  std::vector<std::size_t> train(10), val(10);
  for (std::size_t i = 0; i < 10; ++i) {
    train[i] = i;
    val[i] = 10 + i;
  }
  const auto tasks = build_tasks(ds, train, val, 0.05);
  ASSERT_EQ(tasks.size(), 1u);
  EXPECT_EQ(tasks[0].organ, "thirty");
  EXPECT_EQ(tasks[0].train_labels.size(), 10u);

  const auto empty = sail::testing::tiny_dataset({{1.0f}, {2.0f}}, {{}, {}});
  const std::vector<std::size_t> r0{0}, r1{1};
  EXPECT_THROW(build_tasks(empty, r0, r1, 0.05), DataError);
}

TEST(Downstream, OneHotIsPerfectAndZerosAreChance) {
  const auto s = one_hot_setup();
  const auto tasks = build_tasks(s.dataset, s.train, s.val, 0.05);
  ASSERT_EQ(tasks.size(), 8u);
  const auto perfect = downstream_eval({s.one_hot_train, s.one_hot_val}, tasks);
  EXPECT_EQ(perfect.mean_auc, 1.0);
  const auto chance =
      downstream_eval({Matrix(s.train.size(), 8), Matrix(s.val.size(), 8)}, tasks);
  EXPECT_EQ(chance.mean_auc, 0.5);
}

TEST(Downstream, TaskOrderInvariant) {
  const auto s = one_hot_setup();
  auto tasks = build_tasks(s.dataset, s.train, s.val, 0.05);
  const auto dense = dense_probe_split(s.dataset, s.train, s.val);
  const auto a = downstream_eval(dense, tasks);
  std::reverse(tasks.begin(), tasks.end());
  const auto b = downstream_eval(dense, tasks);
  EXPECT_DOUBLE_EQ(a.mean_auc, b.mean_auc);
}

TEST(Recovery, FullNEqualsUnrestrictedAndMonotone) {
  const auto s = one_hot_setup();
  const auto tasks = build_tasks(s.dataset, s.train, s.val, 0.05);
  const auto dense = dense_probe_split(s.dataset, s.train, s.val);
  const ProbeSplit sparse{s.one_hot_train, s.one_hot_val};
  const std::vector<std::size_t> ns{1, 2, 4, 8};
  const auto curve = performance_recovery(sparse, dense, tasks, ns);
  EXPECT_DOUBLE_EQ(curve.ratio.at(8), curve.sparse_auc / curve.dense_auc);
  double prev = 0.0;
  for (auto n : ns) {
    EXPECT_GE(curve.ratio.at(n), prev - 1e-12);
    prev = curve.ratio.at(n);
  }
}

TEST(Recovery, ReportedRatioArithmetic) {
  // A dense AUC of 0.907 recovered at 87.8% means a restricted AUC of 0.796.
  EXPECT_NEAR(0.907 * 0.878, 0.796, 0.0005);
}

TEST(Densify, PlacesValues) {
  const std::vector<SparseCode> codes{{1, {{2, 0.5}}}, {1, {}}};
  const auto m = densify(codes, 4);
  EXPECT_EQ(m(0, 2), 0.5);
  EXPECT_EQ(m(1, 2), 0.0);
  EXPECT_THROW(densify(codes, 2), UsageError);
}
