#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace fastnose {

/// Row-major n x d feature matrix with integer labels into `classes`.
struct Dataset {
  std::size_t d = 0;
  std::vector<double> x;
  std::vector<int> y;
  std::vector<std::string> classes;

  std::size_t size() const { return y.size(); }
  std::span<const double> row(std::size_t i) const { return {x.data() + i * d, d}; }
  void add(std::span<const double> features, int label);

  /// Throws on NaN/Inf, labels outside the class set, ragged rows or n == 0.
  void validate() const;
  std::vector<std::size_t> class_counts() const;
  /// Balanced weights n / (K * n_c); classes absent from the data get 0.
  std::vector<double> balanced_weights() const;
  Dataset subset(std::span<const std::size_t> idx) const;
};

double squared_distance(std::span<const double> a, std::span<const double> b);

// --- k-NN -------------------------------------------------------------------------

/// Euclidean k-NN. Distance ties break on lower training index; vote ties
/// go to the class of the nearest neighbour among the tied classes.
int knn_predict_one(const Dataset& train, std::span<const double> query, int k);
std::vector<int> knn_predict(const Dataset& train, const std::vector<std::vector<double>>& queries, int k);

// --- model interface --------------------------------------------------------------

class Model {
public:
  virtual ~Model() = default;
  virtual std::string kind() const = 0;
  virtual std::size_t n_classes() const = 0;
  /// Per-class confidence; predict() is its argmax (lowest index on ties).
  virtual std::vector<double> scores(std::span<const double> x) const = 0;
  virtual int predict(std::span<const double> x) const;
  virtual void save(std::ostream& out) const = 0;
};

/// Trains on rows `idx` of `data` with the given seed.
using Learner =
    std::function<std::unique_ptr<Model>(const Dataset& data, std::span<const std::size_t> idx, std::uint64_t seed)>;

/// Stored-sample k-NN behind the Model interface.
class KnnModel final : public Model {
public:
  KnnModel(Dataset train, int k);
  std::string kind() const override { return "knn"; }
  std::size_t n_classes() const override { return train_.classes.size(); }
  /// Vote fraction among the k nearest rows.
  std::vector<double> scores(std::span<const double> x) const override;
  int predict(std::span<const double> x) const override { return knn_predict_one(train_, x, k_); }
  void save(std::ostream& out) const override;
  static std::unique_ptr<KnnModel> load(std::istream& in);
  int k() const { return k_; }

private:
  Dataset train_;
  int k_;
};

// --- SVM --------------------------------------------------------------------------

struct SvmParams {
  double c = 1e3;
  double gamma = 1e-4;
  bool balanced = true;
  double tol = 1e-3;
  long long max_iter = 2'000'000;
};

struct SvmTrainInfo {
  long long iterations = 0;
  double kkt_gap = 0.0;                  // final max violating-pair gap
  std::vector<double> objective_trace;   // dual objective per iteration (if requested)
};

/// Read-only view of a precomputed kernel: entry (a, b) is
/// gram[idx[a] * ld + idx[b]].
struct KernelView {
  const double* gram = nullptr;
  std::size_t ld = 0;
  std::span<const std::size_t> idx;
  double operator()(std::size_t a, std::size_t b) const { return gram[idx[a] * ld + idx[b]]; }
};

/// One binary C-SVC dual solved by SMO with second-order working set
/// selection. labels are +1/-1, upper[i] is the box bound C_i. The decision
/// function is f(x) = sum y_i a_i K(x_i, x) - rho.
struct BinarySvmSolution {
  std::vector<double> alpha;
  double rho = 0.0;
  SvmTrainInfo info;
};
BinarySvmSolution smo_solve(const KernelView& kernel, std::span<const int> labels,
                            std::span<const double> upper, double tol, long long max_iter,
                            bool trace_objective = false);

/// Max violating-pair gap m(a) - M(a) of a dual solution; <= tol at a KKT point.
double kkt_gap(const KernelView& kernel, std::span<const int> labels, std::span<const double> upper,
               std::span<const double> alpha);

class SvmModel final : public Model {
public:
  SvmModel() = default;
  std::string kind() const override { return "svm"; }
  std::size_t n_classes() const override { return rho_.size(); }
  std::vector<double> scores(std::span<const double> x) const override;
  void save(std::ostream& out) const override;
  static std::unique_ptr<SvmModel> load(std::istream& in);

  const SvmParams& params() const { return params_; }
  std::size_t support_count() const { return sv_.size() / std::max<std::size_t>(d_, 1); }
  const std::vector<SvmTrainInfo>& train_info() const { return info_; }

  friend std::unique_ptr<SvmModel> svm_train_indexed(const Dataset&, std::span<const std::size_t>,
                                                     const SvmParams&, const std::vector<double>*,
                                                     bool);

private:
  SvmParams params_;
  std::size_t d_ = 0;
  std::vector<double> sv_;    // n_sv x d
  std::vector<double> coef_;  // n_sv x K (y_i alpha_i per class)
  std::vector<double> rho_;   // K
  std::vector<SvmTrainInfo> info_;
};

/// One-vs-rest RBF SVM. Throws std::invalid_argument with fewer than 2
/// classes and std::runtime_error (with the residual KKT gap) when SMO hits
/// max_iter.
std::unique_ptr<SvmModel> svm_train(const Dataset& train, const SvmParams& params,
                                    bool trace_objective = false);
/// Same, on rows `idx`. `gram` optionally holds the full n x n RBF kernel of
/// `data` so folds can share it.
std::unique_ptr<SvmModel> svm_train_indexed(const Dataset& data, std::span<const std::size_t> idx,
                                            const SvmParams& params, const std::vector<double>* gram,
                                            bool trace_objective = false);
std::vector<double> rbf_gram(const Dataset& data, double gamma);
Learner svm_learner(const SvmParams& params, std::shared_ptr<const std::vector<double>> gram = nullptr);

// --- random forest ----------------------------------------------------------------

struct ForestParams {
  int n_trees = 100;
  bool balanced = true;
  int max_depth = 0;  // 0: unlimited
  int min_samples_split = 2;
  int features_per_split = 0;  // 0: floor(sqrt(d))
};

struct TreeNode {
  int feature = -1;  // -1 for leaves
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  int label = 0;
};

class ForestModel final : public Model {
public:
  std::string kind() const override { return "forest"; }
  std::size_t n_classes() const override { return n_classes_; }
  /// Vote fractions per class.
  std::vector<double> scores(std::span<const double> x) const override;
  std::vector<int> votes(std::span<const double> x) const;
  void save(std::ostream& out) const override;
  static std::unique_ptr<ForestModel> load(std::istream& in);

  const std::vector<std::vector<TreeNode>>& trees() const { return trees_; }
  /// Out-of-bag accuracy on the training rows (rows never out of bag are skipped).
  double oob_accuracy() const { return oob_accuracy_; }

  friend std::unique_ptr<ForestModel> forest_train_indexed(const Dataset&, std::span<const std::size_t>,
                                                           const ForestParams&, std::uint64_t);

private:
  ForestParams params_;
  std::uint64_t seed_ = 0;
  std::size_t n_classes_ = 0;
  std::vector<std::vector<TreeNode>> trees_;
  double oob_accuracy_ = 0.0;
};

std::unique_ptr<ForestModel> forest_train(const Dataset& train, const ForestParams& params, std::uint64_t seed);
std::unique_ptr<ForestModel> forest_train_indexed(const Dataset& data, std::span<const std::size_t> idx,
                                                  const ForestParams& params, std::uint64_t seed);
Learner forest_learner(const ForestParams& params);

// --- cross-validation ensemble ----------------------------------------------------

/// Stratified fold index for every row: class members are shuffled with the
/// seed, then dealt round-robin. Throws when a class has fewer than `folds`
/// members.
std::vector<int> stratified_folds(std::span<const int> labels, std::size_t n_classes, int folds,
                                  std::uint64_t seed);

class EnsembleModel final : public Model {
public:
  EnsembleModel() = default;
  EnsembleModel(std::vector<std::unique_ptr<Model>> members, std::vector<std::string> classes);

  std::string kind() const override { return "ensemble"; }
  std::size_t n_classes() const override { return classes_.size(); }
  /// Summed member scores.
  std::vector<double> scores(std::span<const double> x) const override;
  /// Majority vote; ties by summed score, then lower class index.
  int predict(std::span<const double> x) const override;
  void save(std::ostream& out) const override;
  static std::unique_ptr<EnsembleModel> load(std::istream& in);

  const std::vector<std::string>& classes() const { return classes_; }
  std::size_t size() const { return members_.size(); }
  std::uint64_t seed = 0;
  const Model& member(std::size_t i) const { return *members_[i]; }
  std::vector<double> fold_scores;  // validation accuracy per fold (empty for folds == 1)

private:
  std::vector<std::unique_ptr<Model>> members_;
  std::vector<std::string> classes_;
};

/// folds == 1 trains one model on everything.
std::unique_ptr<EnsembleModel> cv_ensemble(const Dataset& train, const Learner& learner, int folds,
                                           std::uint64_t seed);

// --- persistence ------------------------------------------------------------------

/// Versioned text format; doubles are written in shortest round-trip form so
/// save -> load -> predict is bit-identical.
void save_model(const std::string& path, const Model& model);
std::unique_ptr<Model> load_model(const std::string& path);
std::unique_ptr<Model> read_model(std::istream& in);

}  // namespace fastnose
