#include "fastnose/classifiers.hpp"
#include "fastnose/rng.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

using namespace fastnose;

namespace {

Dataset blobs(int per_class, double sep, double sigma, std::uint64_t seed, int classes = 2, std::size_t d = 3) {
  Dataset ds;
  ds.d = d;
  for (int c = 0; c < classes; ++c) ds.classes.push_back("c" + std::to_string(c));
  Rng rng(seed);
  for (int i = 0; i < per_class; ++i)
    for (int c = 0; c < classes; ++c) {
      std::vector<double> x(d);
      for (std::size_t j = 0; j < d; ++j) x[j] = sigma * rng.normal() + (j == static_cast<std::size_t>(c) % d ? sep : 0.0);
      ds.add(x, c);
    }
  return ds;
}

Dataset xor_data(int n, std::uint64_t seed) {
  Dataset ds;
  ds.d = 2;
  ds.classes = {"a", "b"};
  Rng rng(seed);
  for (int i = 0; i < n; ++i) {
    const double x = rng.uniform(-1.0, 1.0), y = rng.uniform(-1.0, 1.0);
    ds.add(std::vector<double>{x, y}, (x > 0) != (y > 0) ? 1 : 0);
  }
  return ds;
}

std::string saved(const Model& m) {
  std::ostringstream out;
  m.save(out);
  return out.str();
}

// Member with fixed scores, for exercising the ensemble vote.
class FixedModel final : public Model {
public:
  explicit FixedModel(std::vector<double> s) : s_(std::move(s)) {}
  std::string kind() const override { return "fixed"; }
  std::size_t n_classes() const override { return s_.size(); }
  std::vector<double> scores(std::span<const double>) const override { return s_; }
  void save(std::ostream&) const override {}

private:
  std::vector<double> s_;
};

}  // namespace

TEST(Dataset, ValidationAndWeights) {
  Dataset ds;
  ds.d = 1;
  ds.classes = {"a", "b", "c"};
  EXPECT_THROW(ds.validate(), std::invalid_argument);
  for (int i = 0; i < 6; ++i) ds.add(std::vector<double>{double(i)}, i < 4 ? 0 : 1);
  EXPECT_NO_THROW(ds.validate());
  const auto w = ds.balanced_weights();
  // empty classes do not count
  EXPECT_DOUBLE_EQ(w[0], 6.0 / (2 * 4));
  EXPECT_DOUBLE_EQ(w[1], 6.0 / (2 * 2));
  EXPECT_DOUBLE_EQ(w[2], 0.0);
  ds.x[2] = NAN;
  EXPECT_THROW(ds.validate(), std::invalid_argument);
}

TEST(Knn, ExactMatchWithKOne) {
  const auto ds = blobs(20, 3.0, 1.0, 1);
  for (std::size_t i = 0; i < ds.size(); ++i) EXPECT_EQ(knn_predict_one(ds, ds.row(i), 1), ds.y[i]);
}

TEST(Knn, SeparatedBlobsAreLearned) {
  const auto train = blobs(30, 10.0, 0.5, 2, 3), test = blobs(30, 10.0, 0.5, 3, 3);
  for (std::size_t i = 0; i < test.size(); ++i) EXPECT_EQ(knn_predict_one(train, test.row(i), 5), test.y[i]);
}

TEST(Knn, KEqualsNGivesMajority) {
  auto ds = blobs(5, 3.0, 1.0, 4);
  ds.add(std::vector<double>{0.0, 0.0, 0.0}, 1);
  Rng rng(1);
  for (int i = 0; i < 20; ++i) {
    const std::vector<double> q{rng.normal() * 5, rng.normal() * 5, rng.normal() * 5};
    EXPECT_EQ(knn_predict_one(ds, q, static_cast<int>(ds.size())), 1);
  }
}

TEST(Knn, VoteTieGoesToNearest) {
  Dataset ds;
  ds.d = 1;
  ds.classes = {"a", "b"};
  ds.add(std::vector<double>{0.0}, 0);
  ds.add(std::vector<double>{1.0}, 1);
  EXPECT_EQ(knn_predict_one(ds, std::vector<double>{0.6}, 2), 1);
  EXPECT_EQ(knn_predict_one(ds, std::vector<double>{0.4}, 2), 0);
  // equal distance: lower training index wins
  EXPECT_EQ(knn_predict_one(ds, std::vector<double>{0.5}, 1), 0);
}

TEST(Knn, Errors) {
  Dataset empty;
  empty.d = 1;
  empty.classes = {"a"};
  EXPECT_THROW(knn_predict_one(empty, std::vector<double>{0.0}, 1), std::invalid_argument);
  const auto ds = blobs(2, 1.0, 1.0, 5);
  EXPECT_THROW(knn_predict_one(ds, ds.row(0), 5), std::invalid_argument);
}

TEST(KnnProperty, PermutationInvariantWithDistinctDistances) {
  const auto ds = blobs(25, 1.0, 1.0, 6, 3);
  std::vector<std::size_t> perm(ds.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(7);
  rng.shuffle(perm);
  const auto shuffled = ds.subset(perm);
  const auto queries = blobs(20, 1.0, 1.0, 8, 3);
  for (std::size_t i = 0; i < queries.size(); ++i)
    EXPECT_EQ(knn_predict_one(ds, queries.row(i), 5), knn_predict_one(shuffled, queries.row(i), 5));
}

TEST(Svm, SeparableSetSatisfiesKkt) {
  const auto ds = blobs(20, 6.0, 0.5, 9);
  SvmParams p;
  p.gamma = 1.0;
  const auto m = svm_train(ds, p);
  for (std::size_t i = 0; i < ds.size(); ++i) EXPECT_EQ(m->predict(ds.row(i)), ds.y[i]);
  for (const auto& info : m->train_info()) EXPECT_LE(info.kkt_gap, p.tol);
}

TEST(Svm, KktGapRecomputedFromSolution) {
  const auto ds = blobs(15, 2.0, 1.0, 10);
  SvmParams p;
  p.gamma = 0.5;
  p.c = 1.0;
  const auto gram = rbf_gram(ds, p.gamma);
  std::vector<std::size_t> idx(ds.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::vector<int> y;
  for (int v : ds.y) y.push_back(v == 0 ? 1 : -1);
  const std::vector<double> upper(ds.size(), p.c);
  const KernelView kv{gram.data(), ds.size(), idx};
  const auto sol = smo_solve(kv, y, upper, 1e-6, 1000000, true);
  EXPECT_LE(kkt_gap(kv, y, upper, sol.alpha), 1e-6);
  for (std::size_t i = 0; i < sol.alpha.size(); ++i) {
    EXPECT_GE(sol.alpha[i], 0.0);
    EXPECT_LE(sol.alpha[i], p.c);
  }
  double eq = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) eq += y[i] * sol.alpha[i];
  EXPECT_NEAR(eq, 0.0, 1e-9);
  // minimised dual objective never rises
  const auto& tr = sol.info.objective_trace;
  ASSERT_GT(tr.size(), 2u);
  for (std::size_t i = 1; i < tr.size(); ++i) ASSERT_LE(tr[i], tr[i - 1] + 1e-12);
}

TEST(Svm, OnePointPerClassBisects) {
  Dataset ds;
  ds.d = 2;
  ds.classes = {"l", "r"};
  ds.add(std::vector<double>{0.0, 0.0}, 0);
  ds.add(std::vector<double>{2.0, 0.0}, 1);
  SvmParams p;
  p.gamma = 0.5;
  const auto m = svm_train(ds, p);
  for (double y : {0.0, 1.0, -3.0}) {
    const auto s = m->scores(std::vector<double>{1.0, y});
    EXPECT_NEAR(s[0], s[1], 1e-9);
    EXPECT_EQ(m->predict(std::vector<double>{1.0, y}), 0);
    EXPECT_EQ(m->predict(std::vector<double>{0.9, y}), 0);
    EXPECT_EQ(m->predict(std::vector<double>{1.1, y}), 1);
  }
}

TEST(Svm, DuplicatedDataKeepsDecisionFunction) {
  const auto ds = blobs(12, 5.0, 0.7, 11, 3);
  Dataset twice = ds;
  for (std::size_t i = 0; i < ds.size(); ++i) twice.add(ds.row(i), ds.y[i]);
  SvmParams p;
  p.gamma = 0.2;
  p.tol = 1e-9;
  const auto a = svm_train(ds, p), b = svm_train(twice, p);
  Rng rng(12);
  for (int i = 0; i < 50; ++i) {
    const std::vector<double> q{rng.normal() * 4, rng.normal() * 4, rng.normal() * 4};
    const auto sa = a->scores(q), sb = b->scores(q);
    for (std::size_t k = 0; k < sa.size(); ++k) EXPECT_NEAR(sa[k], sb[k], 1e-6);
  }
}

TEST(Svm, Errors) {
  Dataset one;
  one.d = 1;
  one.classes = {"only"};
  one.add(std::vector<double>{1.0}, 0);
  one.add(std::vector<double>{2.0}, 0);
  EXPECT_THROW(svm_train(one, SvmParams{}), std::invalid_argument);
  const auto ds = blobs(30, 0.5, 1.0, 13);
  SvmParams p;
  p.gamma = 1.0;
  p.max_iter = 3;
  try {
    svm_train(ds, p);
    FAIL() << "expected non-convergence";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("KKT"), std::string::npos) << e.what();
  }
}

TEST(Forest, PureClassGivesLeaves) {
  Dataset ds;
  ds.d = 2;
  ds.classes = {"x", "y"};
  Rng rng(1);
  for (int i = 0; i < 30; ++i) ds.add(std::vector<double>{rng.normal(), rng.normal()}, 1);
  ForestParams p;
  p.n_trees = 20;
  const auto m = forest_train(ds, p, 3);
  for (const auto& tree : m->trees()) {
    ASSERT_EQ(tree.size(), 1u);
    EXPECT_EQ(tree[0].feature, -1);
    EXPECT_EQ(tree[0].label, 1);
  }
}

TEST(Forest, XorOutOfBagAccuracy) {
  const auto ds = xor_data(200, 14);
  const auto m = forest_train(ds, ForestParams{}, 15);
  EXPECT_GT(m->oob_accuracy(), 0.9);
}

TEST(Forest, SameSeedSameForest) {
  const auto ds = blobs(30, 1.0, 1.0, 16, 3);
  EXPECT_EQ(saved(*forest_train(ds, ForestParams{}, 5)), saved(*forest_train(ds, ForestParams{}, 5)));
  EXPECT_NE(saved(*forest_train(ds, ForestParams{}, 5)), saved(*forest_train(ds, ForestParams{}, 6)));
}

TEST(Forest, VotesSumToTreeCount) {
  const auto ds = blobs(30, 1.0, 1.0, 17, 4);
  ForestParams p;
  p.n_trees = 37;
  const auto m = forest_train(ds, p, 1);
  Rng rng(2);
  for (int i = 0; i < 50; ++i) {
    const std::vector<double> q{rng.normal(), rng.normal(), rng.normal()};
    const auto v = m->votes(q);
    EXPECT_EQ(std::accumulate(v.begin(), v.end(), 0), 37);
  }
}

TEST(Folds, StratifiedWithinOne) {
  Rng rng(3);
  std::vector<int> labels;
  for (int i = 0; i < 103; ++i) labels.push_back(static_cast<int>(rng.index(3)));
  const auto fold = stratified_folds(labels, 3, 5, 9);
  for (int c = 0; c < 3; ++c) {
    const double total = static_cast<double>(std::count(labels.begin(), labels.end(), c));
    for (int f = 0; f < 5; ++f) {
      int n = 0;
      for (std::size_t i = 0; i < labels.size(); ++i) n += labels[i] == c && fold[i] == f;
      EXPECT_LE(std::abs(n - total / 5.0), 1.0);
    }
  }
  EXPECT_THROW(stratified_folds(std::vector<int>{0, 0, 1}, 2, 2, 1), std::invalid_argument);
}

TEST(Ensemble, SingleFoldEqualsLearner) {
  const auto ds = blobs(20, 1.0, 1.0, 18, 3);
  const auto e = cv_ensemble(ds, forest_learner(ForestParams{}), 1, 77);
  ASSERT_EQ(e->size(), 1u);
  std::vector<std::size_t> all(ds.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  const auto direct = forest_train_indexed(ds, all, ForestParams{}, derive_seed(77, 0));
  EXPECT_EQ(saved(e->member(0)), saved(*direct));
}

TEST(Ensemble, IdenticalMembersMatchSingle) {
  const auto ds = blobs(20, 1.0, 1.0, 19, 3);
  std::vector<std::unique_ptr<Model>> members;
  for (int i = 0; i < 5; ++i) members.push_back(std::make_unique<KnnModel>(ds, 5));
  const EnsembleModel e(std::move(members), ds.classes);
  const KnnModel single(ds, 5);
  const auto q = blobs(30, 1.0, 1.0, 20, 3);
  for (std::size_t i = 0; i < q.size(); ++i) EXPECT_EQ(e.predict(q.row(i)), single.predict(q.row(i)));
}

TEST(Ensemble, VoteTieBreaks) {
  const std::vector<double> x{0.0};
  {
    // one vote each for 1 and 2; summed score favours 2
    std::vector<std::unique_ptr<Model>> m;
    m.push_back(std::make_unique<FixedModel>(std::vector<double>{0.0, 0.6, 0.4}));
    m.push_back(std::make_unique<FixedModel>(std::vector<double>{0.0, 0.1, 0.9}));
    EXPECT_EQ(EnsembleModel(std::move(m), {"a", "b", "c"}).predict(x), 2);
  }
  {
    // equal votes and equal sums: lower class index
    std::vector<std::unique_ptr<Model>> m;
    m.push_back(std::make_unique<FixedModel>(std::vector<double>{0.0, 0.6, 0.4}));
    m.push_back(std::make_unique<FixedModel>(std::vector<double>{0.0, 0.4, 0.6}));
    EXPECT_EQ(EnsembleModel(std::move(m), {"a", "b", "c"}).predict(x), 1);
  }
  {
    // majority beats a larger summed score
    std::vector<std::unique_ptr<Model>> m;
    m.push_back(std::make_unique<FixedModel>(std::vector<double>{0.51, 0.49}));
    m.push_back(std::make_unique<FixedModel>(std::vector<double>{0.51, 0.49}));
    m.push_back(std::make_unique<FixedModel>(std::vector<double>{0.0, 1.0}));
    EXPECT_EQ(EnsembleModel(std::move(m), {"a", "b"}).predict(x), 0);
  }
}

TEST(Ensemble, SmallClassIsAnError) {
  auto ds = blobs(10, 1.0, 1.0, 21);
  ds.classes.push_back("rare");
  ds.add(std::vector<double>{0.0, 0.0, 0.0}, 2);
  EXPECT_THROW(cv_ensemble(ds, forest_learner(ForestParams{}), 5, 1), std::invalid_argument);
}

TEST(ModelFiles, RoundTripIsBitIdentical) {
  const auto ds = blobs(15, 2.0, 1.0, 22, 3);
  SvmParams sp;
  sp.gamma = 0.3;
  ForestParams fp;
  fp.n_trees = 15;
  std::vector<std::unique_ptr<Model>> models;
  models.push_back(svm_train(ds, sp));
  models.push_back(forest_train(ds, fp, 4));
  models.push_back(std::make_unique<KnnModel>(ds, 3));
  models.push_back(cv_ensemble(ds, svm_learner(sp), 3, 8));
  models.push_back(cv_ensemble(ds, forest_learner(fp), 3, 8));
  const auto q = blobs(20, 2.0, 1.5, 23, 3);
  for (const auto& m : models) {
    std::stringstream ss;
    ss << "fastnose-model 1\n";
    m->save(ss);
    const auto back = read_model(ss);
    EXPECT_EQ(back->kind(), m->kind());
    EXPECT_EQ(saved(*back), saved(*m));
    for (std::size_t i = 0; i < q.size(); ++i) {
      ASSERT_EQ(back->scores(q.row(i)), m->scores(q.row(i)));
      ASSERT_EQ(back->predict(q.row(i)), m->predict(q.row(i)));
    }
  }
}
