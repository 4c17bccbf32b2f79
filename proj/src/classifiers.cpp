#include "fastnose/classifiers.hpp"

#include "fastnose/rng.hpp"
#include "fastnose/text.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace fastnose {

// --- Dataset -----------------------------------------------------------------------

void Dataset::add(std::span<const double> features, int label) {
  if (d == 0 && y.empty()) d = features.size();
  if (features.size() != d) throw std::invalid_argument("feature dimension mismatch");
  x.insert(x.end(), features.begin(), features.end());
  y.push_back(label);
}

void Dataset::validate() const {
  if (y.empty()) throw std::invalid_argument("dataset is empty");
  if (x.size() != y.size() * d) throw std::invalid_argument("dataset rows are ragged");
  for (double v : x)
    if (!std::isfinite(v)) throw std::invalid_argument("dataset contains NaN or Inf");
  for (int l : y)
    if (l < 0 || static_cast<std::size_t>(l) >= classes.size())
      throw std::invalid_argument("label outside the class set");
}

std::vector<std::size_t> Dataset::class_counts() const {
  std::vector<std::size_t> c(classes.size(), 0);
  for (int l : y) ++c[static_cast<std::size_t>(l)];
  return c;
}

std::vector<double> Dataset::balanced_weights() const {
  const auto counts = class_counts();
  std::size_t present = 0;
  for (auto c : counts) present += c > 0;
  std::vector<double> w(classes.size(), 0.0);
  for (std::size_t k = 0; k < counts.size(); ++k)
    if (counts[k] > 0)
      w[k] = static_cast<double>(size()) / (static_cast<double>(present) * static_cast<double>(counts[k]));
  return w;
}

Dataset Dataset::subset(std::span<const std::size_t> idx) const {
  Dataset out;
  out.d = d;
  out.classes = classes;
  for (auto i : idx) out.add(row(i), y[i]);
  return out;
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double t = a[i] - b[i];
    s += t * t;
  }
  return s;
}

// --- k-NN ----------------------------------------------------------------------------

int knn_predict_one(const Dataset& train, std::span<const double> query, int k) {
  if (train.size() == 0) throw std::invalid_argument("k-NN needs a non-empty training set");
  if (k < 1 || static_cast<std::size_t>(k) > train.size())
    throw std::invalid_argument("k must be in [1, n_train]");
  std::vector<std::pair<double, std::size_t>> dist(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) dist[i] = {squared_distance(train.row(i), query), i};
  std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
  std::vector<int> votes(train.classes.size(), 0);
  for (int i = 0; i < k; ++i) ++votes[static_cast<std::size_t>(train.y[dist[i].second])];
  const int best = *std::max_element(votes.begin(), votes.end());
  for (int i = 0; i < k; ++i) {
    const int label = train.y[dist[i].second];
    if (votes[static_cast<std::size_t>(label)] == best) return label;
  }
  return train.y[dist[0].second];
}

std::vector<int> knn_predict(const Dataset& train, const std::vector<std::vector<double>>& queries, int k) {
  std::vector<int> out;
  out.reserve(queries.size());
  for (const auto& q : queries) out.push_back(knn_predict_one(train, q, k));
  return out;
}

KnnModel::KnnModel(Dataset train, int k) : train_(std::move(train)), k_(k) {
  train_.validate();
  if (k < 1 || static_cast<std::size_t>(k) > train_.size()) throw std::invalid_argument("k must be in [1, n_train]");
}

std::vector<double> KnnModel::scores(std::span<const double> x) const {
  if (x.size() != train_.d) throw std::invalid_argument("k-NN query dimension mismatch");
  std::vector<std::pair<double, std::size_t>> dist(train_.size());
  for (std::size_t i = 0; i < train_.size(); ++i) dist[i] = {squared_distance(train_.row(i), x), i};
  std::partial_sort(dist.begin(), dist.begin() + k_, dist.end());
  std::vector<double> s(train_.classes.size(), 0.0);
  for (int i = 0; i < k_; ++i) s[static_cast<std::size_t>(train_.y[dist[i].second])] += 1.0 / k_;
  return s;
}

int Model::predict(std::span<const double> x) const {
  const auto s = scores(x);
  return static_cast<int>(std::max_element(s.begin(), s.end()) - s.begin());
}

// --- SMO ---------------------------------------------------------------------------------

namespace {

constexpr double kTau = 1e-12;

bool in_up(int y, double a, double c) { return (y > 0 && a < c) || (y < 0 && a > 0.0); }
bool in_low(int y, double a, double c) { return (y > 0 && a > 0.0) || (y < 0 && a < c); }

double dual_objective(std::span<const double> alpha, std::span<const double> grad) {
  // 0.5 a'Qa - e'a = 0.5 sum a_i (G_i - 1) with G = Qa - e.
  double s = 0.0;
  for (std::size_t i = 0; i < alpha.size(); ++i) s += alpha[i] * (grad[i] - 1.0);
  return 0.5 * s;
}

}  // namespace

double kkt_gap(const KernelView& kernel, std::span<const int> y, std::span<const double> upper,
               std::span<const double> alpha) {
  const std::size_t n = y.size();
  double m = -std::numeric_limits<double>::infinity();
  double big_m = std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < n; ++t) {
    double g = -1.0;
    for (std::size_t j = 0; j < n; ++j)
      if (alpha[j] != 0.0) g += y[t] * y[j] * kernel(t, j) * alpha[j];
    const double v = -y[t] * g;
    if (in_up(y[t], alpha[t], upper[t])) m = std::max(m, v);
    if (in_low(y[t], alpha[t], upper[t])) big_m = std::min(big_m, v);
  }
  return m - big_m;
}

BinarySvmSolution smo_solve(const KernelView& kernel, std::span<const int> y, std::span<const double> upper,
                            double tol, long long max_iter, bool trace_objective) {
  const std::size_t n = y.size();
  BinarySvmSolution sol;
  sol.alpha.assign(n, 0.0);
  auto& a = sol.alpha;
  std::vector<double> grad(n, -1.0);
  std::vector<double> diag(n);
  for (std::size_t t = 0; t < n; ++t) diag[t] = kernel(t, t);

  long long iter = 0;
  double gap = 0.0;
  for (;;) {
    double gmax = -std::numeric_limits<double>::infinity();
    std::size_t i = n;
    for (std::size_t t = 0; t < n; ++t) {
      if (in_up(y[t], a[t], upper[t])) {
        const double v = -y[t] * grad[t];
        if (v > gmax) {
          gmax = v;
          i = t;
        }
      }
    }
    double gmin = std::numeric_limits<double>::infinity();
    std::size_t j = n;
    double best = std::numeric_limits<double>::infinity();
    if (i < n) {
      const double* ki = kernel.gram + kernel.idx[i] * kernel.ld;
      for (std::size_t t = 0; t < n; ++t) {
        if (!in_low(y[t], a[t], upper[t])) continue;
        const double v = -y[t] * grad[t];
        gmin = std::min(gmin, v);
        const double b = gmax - v;
        if (b > 0.0) {
          double quad = diag[i] + diag[t] - 2.0 * ki[kernel.idx[t]];
          if (quad <= 0.0) quad = kTau;
          const double obj = -(b * b) / quad;
          if (obj <= best) {
            best = obj;
            j = t;
          }
        }
      }
    }
    gap = gmax - gmin;
    if (i == n || j == n || gap < tol) break;
    if (iter >= max_iter) {
      sol.info.iterations = iter;
      sol.info.kkt_gap = gap;
      throw std::runtime_error("SMO did not converge within " + std::to_string(max_iter) +
                               " iterations; residual KKT gap " + text::format_double(gap));
    }
    ++iter;

    const double kij = kernel(i, j);
    const double ci = upper[i], cj = upper[j];
    const double old_i = a[i], old_j = a[j];
    double quad = diag[i] + diag[j] - 2.0 * kij;
    if (quad <= 0.0) quad = kTau;
    if (y[i] != y[j]) {
      const double delta = (-grad[i] - grad[j]) / quad;
      const double diff = a[i] - a[j];
      a[i] += delta;
      a[j] += delta;
      if (diff > 0.0) {
        if (a[j] < 0.0) {
          a[j] = 0.0;
          a[i] = diff;
        }
      } else if (a[i] < 0.0) {
        a[i] = 0.0;
        a[j] = -diff;
      }
      if (diff > ci - cj) {
        if (a[i] > ci) {
          a[i] = ci;
          a[j] = ci - diff;
        }
      } else if (a[j] > cj) {
        a[j] = cj;
        a[i] = cj + diff;
      }
    } else {
      const double delta = (grad[i] - grad[j]) / quad;
      const double sum = a[i] + a[j];
      a[i] -= delta;
      a[j] += delta;
      if (sum > ci) {
        if (a[i] > ci) {
          a[i] = ci;
          a[j] = sum - ci;
        }
      } else if (a[j] < 0.0) {
        a[j] = 0.0;
        a[i] = sum;
      }
      if (sum > cj) {
        if (a[j] > cj) {
          a[j] = cj;
          a[i] = sum - cj;
        }
      } else if (a[i] < 0.0) {
        a[i] = 0.0;
        a[j] = sum;
      }
    }
    const double di = (a[i] - old_i) * y[i];
    const double dj = (a[j] - old_j) * y[j];
    const double* ki = kernel.gram + kernel.idx[i] * kernel.ld;
    const double* kj = kernel.gram + kernel.idx[j] * kernel.ld;
    for (std::size_t t = 0; t < n; ++t) {
      const std::size_t c = kernel.idx[t];
      grad[t] += y[t] * (ki[c] * di + kj[c] * dj);
    }
    if (trace_objective) sol.info.objective_trace.push_back(dual_objective(a, grad));
  }

  double ub = std::numeric_limits<double>::infinity();
  double lb = -std::numeric_limits<double>::infinity();
  double sum_free = 0.0;
  std::size_t n_free = 0;
  for (std::size_t t = 0; t < n; ++t) {
    const double yg = y[t] * grad[t];
    if (a[t] >= upper[t]) {
      if (y[t] < 0) ub = std::min(ub, yg);
      else lb = std::max(lb, yg);
    } else if (a[t] <= 0.0) {
      if (y[t] > 0) ub = std::min(ub, yg);
      else lb = std::max(lb, yg);
    } else {
      ++n_free;
      sum_free += yg;
    }
  }
  sol.rho = n_free > 0 ? sum_free / static_cast<double>(n_free) : 0.5 * (ub + lb);
  sol.info.iterations = iter;
  sol.info.kkt_gap = gap;
  return sol;
}

// --- SVM model -----------------------------------------------------------------------

std::vector<double> rbf_gram(const Dataset& data, double gamma) {
  const std::size_t n = data.size();
  std::vector<double> g(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    g[i * n + i] = 1.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      const double k = std::exp(-gamma * squared_distance(data.row(i), data.row(j)));
      g[i * n + j] = k;
      g[j * n + i] = k;
    }
  }
  return g;
}

std::unique_ptr<SvmModel> svm_train_indexed(const Dataset& data, std::span<const std::size_t> idx,
                                            const SvmParams& params, const std::vector<double>* gram,
                                            bool trace_objective) {
  const std::size_t k_classes = data.classes.size();
  if (k_classes < 2) throw std::invalid_argument("SVM needs at least 2 classes");
  if (idx.empty()) throw std::invalid_argument("SVM training set is empty");
  std::vector<double> local;
  std::vector<std::size_t> local_idx;
  KernelView view;
  if (gram) {
    if (gram->size() != data.size() * data.size()) throw std::invalid_argument("gram size mismatch");
    view = {gram->data(), data.size(), idx};
  } else {
    const Dataset sub = data.subset(idx);
    local = rbf_gram(sub, params.gamma);
    local_idx.resize(idx.size());
    std::iota(local_idx.begin(), local_idx.end(), std::size_t{0});
    view = {local.data(), idx.size(), local_idx};
  }
  const std::size_t n = idx.size();
  std::vector<std::size_t> counts(k_classes, 0);
  for (auto i : idx) ++counts[static_cast<std::size_t>(data.y[i])];
  std::size_t present = 0;
  for (auto c : counts) present += c > 0;
  if (present < 2) throw std::invalid_argument("SVM needs at least 2 classes present in the training data");

  auto model = std::make_unique<SvmModel>();
  model->params_ = params;
  model->d_ = data.d;
  model->rho_.assign(k_classes, 0.0);
  std::vector<std::vector<double>> coefs(k_classes, std::vector<double>(n, 0.0));
  std::vector<int> labels(n);
  std::vector<double> upper(n);
  for (std::size_t c = 0; c < k_classes; ++c) {
    if (counts[c] == 0) {
      // Class absent from this training split: never predicted.
      model->rho_[c] = std::numeric_limits<double>::infinity();
      model->info_.push_back({});
      continue;
    }
    const double n_pos = static_cast<double>(counts[c]);
    const double n_neg = static_cast<double>(n) - n_pos;
    for (std::size_t t = 0; t < n; ++t) {
      labels[t] = static_cast<std::size_t>(data.y[idx[t]]) == c ? 1 : -1;
      double w = 1.0;
      if (params.balanced) w = static_cast<double>(n) / (2.0 * (labels[t] > 0 ? n_pos : n_neg));
      upper[t] = params.c * w;
    }
    auto sol = smo_solve(view, labels, upper, params.tol, params.max_iter, trace_objective);
    for (std::size_t t = 0; t < n; ++t) coefs[c][t] = labels[t] * sol.alpha[t];
    model->rho_[c] = sol.rho;
    model->info_.push_back(std::move(sol.info));
  }
  for (std::size_t t = 0; t < n; ++t) {
    bool used = false;
    for (std::size_t c = 0; c < k_classes; ++c) used = used || coefs[c][t] != 0.0;
    if (!used) continue;
    const auto r = data.row(idx[t]);
    model->sv_.insert(model->sv_.end(), r.begin(), r.end());
    for (std::size_t c = 0; c < k_classes; ++c) model->coef_.push_back(coefs[c][t]);
  }
  return model;
}

std::unique_ptr<SvmModel> svm_train(const Dataset& train, const SvmParams& params, bool trace_objective) {
  train.validate();
  std::vector<std::size_t> idx(train.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return svm_train_indexed(train, idx, params, nullptr, trace_objective);
}

std::vector<double> SvmModel::scores(std::span<const double> x) const {
  const std::size_t k = rho_.size();
  std::vector<double> f(k, 0.0);
  const std::size_t n_sv = support_count();
  for (std::size_t s = 0; s < n_sv; ++s) {
    const double kv = std::exp(-params_.gamma * squared_distance({sv_.data() + s * d_, d_}, x));
    const double* c = coef_.data() + s * k;
    for (std::size_t j = 0; j < k; ++j) f[j] += c[j] * kv;
  }
  for (std::size_t j = 0; j < k; ++j) f[j] -= rho_[j];
  return f;
}

Learner svm_learner(const SvmParams& params, std::shared_ptr<const std::vector<double>> gram) {
  return [params, gram](const Dataset& data, std::span<const std::size_t> idx, std::uint64_t) {
    return std::unique_ptr<Model>(svm_train_indexed(data, idx, params, gram.get()));
  };
}

// --- random forest -----------------------------------------------------------------

namespace {

struct WeightedRow {
  std::size_t row;
  double weight;
};

int weighted_argmax(const std::vector<double>& totals) {
  return static_cast<int>(std::max_element(totals.begin(), totals.end()) - totals.begin());
}

class TreeBuilder {
public:
  TreeBuilder(const Dataset& data, const ForestParams& params, std::size_t n_classes, Rng& rng)
      : data_(data), params_(params), k_(n_classes), rng_(rng) {
    mtry_ = params.features_per_split > 0
                ? static_cast<std::size_t>(params.features_per_split)
                : std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(data.d)))));
    mtry_ = std::min(mtry_, data.d);
  }

  std::vector<TreeNode> build(std::vector<WeightedRow> rows) {
    nodes_.clear();
    grow(rows, 0);
    return std::move(nodes_);
  }

private:
  int grow(std::vector<WeightedRow>& rows, int depth) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back({});
    std::vector<double> totals(k_, 0.0);
    double wsum = 0.0;
    for (const auto& r : rows) {
      totals[static_cast<std::size_t>(data_.y[r.row])] += r.weight;
      wsum += r.weight;
    }
    nodes_[id].label = weighted_argmax(totals);
    std::size_t nonzero = 0;
    for (double t : totals) nonzero += t > 0.0;
    const bool depth_done = params_.max_depth > 0 && depth >= params_.max_depth;
    if (nonzero <= 1 || depth_done || rows.size() < static_cast<std::size_t>(params_.min_samples_split))
      return id;

    std::vector<std::size_t> features(data_.d);
    std::iota(features.begin(), features.end(), std::size_t{0});
    int best_f = -1;
    double best_thr = 0.0, best_score = -1.0;
    const double parent_score = purity(totals, wsum);
    // Draw features without replacement; keep drawing past mtry only while
    // no valid split has been found.
    for (std::size_t drawn = 0; drawn < data_.d; ++drawn) {
      if (drawn >= mtry_ && best_f >= 0) break;
      const std::size_t pick = drawn + static_cast<std::size_t>(rng_.index(data_.d - drawn));
      std::swap(features[drawn], features[pick]);
      const std::size_t f = features[drawn];
      std::sort(rows.begin(), rows.end(), [&](const WeightedRow& a, const WeightedRow& b) {
        const double va = data_.x[a.row * data_.d + f], vb = data_.x[b.row * data_.d + f];
        return va < vb || (va == vb && a.row < b.row);
      });
      std::vector<double> left(k_, 0.0);
      double wl = 0.0;
      for (std::size_t i = 0; i + 1 < rows.size(); ++i) {
        left[static_cast<std::size_t>(data_.y[rows[i].row])] += rows[i].weight;
        wl += rows[i].weight;
        const double v = data_.x[rows[i].row * data_.d + f];
        const double vn = data_.x[rows[i + 1].row * data_.d + f];
        if (!(vn > v)) continue;
        const double wr = wsum - wl;
        if (wl <= 0.0 || wr <= 0.0) continue;
        double sl = 0.0, sr = 0.0;
        for (std::size_t c = 0; c < k_; ++c) {
          sl += left[c] * left[c];
          const double r = totals[c] - left[c];
          sr += r * r;
        }
        const double score = sl / wl + sr / wr;  // larger = lower weighted Gini
        if (score > best_score + 1e-12 * std::abs(best_score)) {
          best_score = score;
          best_f = static_cast<int>(f);
          best_thr = v + 0.5 * (vn - v);
          if (!(best_thr > v) || !(best_thr < vn)) best_thr = v;
        }
      }
    }
    if (best_f < 0 || best_score <= parent_score * (1.0 + 1e-12)) return id;

    std::vector<WeightedRow> lrows, rrows;
    for (const auto& r : rows)
      (data_.x[r.row * data_.d + static_cast<std::size_t>(best_f)] <= best_thr ? lrows : rrows).push_back(r);
    if (lrows.empty() || rrows.empty()) return id;
    rows.clear();
    rows.shrink_to_fit();
    nodes_[id].feature = best_f;
    nodes_[id].threshold = best_thr;
    const int l = grow(lrows, depth + 1);
    nodes_[id].left = l;
    const int r = grow(rrows, depth + 1);
    nodes_[id].right = r;
    return id;
  }

  static double purity(const std::vector<double>& totals, double wsum) {
    double s = 0.0;
    for (double t : totals) s += t * t;
    return wsum > 0.0 ? s / wsum : 0.0;
  }

  const Dataset& data_;
  const ForestParams& params_;
  std::size_t k_;
  Rng& rng_;
  std::size_t mtry_ = 1;
  std::vector<TreeNode> nodes_;
};

int tree_predict(const std::vector<TreeNode>& tree, std::span<const double> x) {
  int n = 0;
  while (tree[static_cast<std::size_t>(n)].feature >= 0) {
    const auto& node = tree[static_cast<std::size_t>(n)];
    n = x[static_cast<std::size_t>(node.feature)] <= node.threshold ? node.left : node.right;
  }
  return tree[static_cast<std::size_t>(n)].label;
}

}  // namespace

std::unique_ptr<ForestModel> forest_train_indexed(const Dataset& data, std::span<const std::size_t> idx,
                                                  const ForestParams& params, std::uint64_t seed) {
  if (idx.size() < 1) throw std::invalid_argument("forest training set is empty");
  if (params.n_trees < 1) throw std::invalid_argument("forest needs at least one tree");
  auto model = std::make_unique<ForestModel>();
  model->params_ = params;
  model->seed_ = seed;
  model->n_classes_ = data.classes.size();
  const std::size_t k = data.classes.size();

  std::vector<double> cw(k, 1.0);
  if (params.balanced) {
    std::vector<std::size_t> counts(k, 0);
    for (auto i : idx) ++counts[static_cast<std::size_t>(data.y[i])];
    std::size_t present = 0;
    for (auto c : counts) present += c > 0;
    for (std::size_t c = 0; c < k; ++c)
      cw[c] = counts[c] > 0 ? static_cast<double>(idx.size()) / (static_cast<double>(present) * counts[c]) : 0.0;
  }

  const std::size_t n = idx.size();
  std::vector<std::vector<int>> oob_votes(n, std::vector<int>(k, 0));
  for (int t = 0; t < params.n_trees; ++t) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(t)));
    std::vector<int> mult(n, 0);
    for (std::size_t i = 0; i < n; ++i) ++mult[static_cast<std::size_t>(rng.index(n))];
    std::vector<WeightedRow> rows;
    for (std::size_t i = 0; i < n; ++i)
      if (mult[i] > 0) rows.push_back({idx[i], mult[i] * cw[static_cast<std::size_t>(data.y[idx[i]])]});
    TreeBuilder builder(data, params, k, rng);
    model->trees_.push_back(builder.build(std::move(rows)));
    for (std::size_t i = 0; i < n; ++i)
      if (mult[i] == 0) ++oob_votes[i][static_cast<std::size_t>(tree_predict(model->trees_.back(), data.row(idx[i])))];
  }
  std::size_t seen = 0, hit = 0;
  for (std::size_t i = 0; i < n; ++i) {
    int total = 0;
    for (int v : oob_votes[i]) total += v;
    if (total == 0) continue;
    ++seen;
    const int pred = static_cast<int>(std::max_element(oob_votes[i].begin(), oob_votes[i].end()) - oob_votes[i].begin());
    hit += pred == data.y[idx[i]];
  }
  model->oob_accuracy_ = seen > 0 ? static_cast<double>(hit) / static_cast<double>(seen) : 0.0;
  return model;
}

std::unique_ptr<ForestModel> forest_train(const Dataset& train, const ForestParams& params, std::uint64_t seed) {
  train.validate();
  if (train.size() < 2) throw std::invalid_argument("forest needs at least 2 training rows");
  std::vector<std::size_t> idx(train.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return forest_train_indexed(train, idx, params, seed);
}

std::vector<int> ForestModel::votes(std::span<const double> x) const {
  std::vector<int> v(n_classes_, 0);
  for (const auto& t : trees_) ++v[static_cast<std::size_t>(tree_predict(t, x))];
  return v;
}

std::vector<double> ForestModel::scores(std::span<const double> x) const {
  const auto v = votes(x);
  std::vector<double> s(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) s[i] = static_cast<double>(v[i]) / static_cast<double>(trees_.size());
  return s;
}

Learner forest_learner(const ForestParams& params) {
  return [params](const Dataset& data, std::span<const std::size_t> idx, std::uint64_t seed) {
    return std::unique_ptr<Model>(forest_train_indexed(data, idx, params, seed));
  };
}

// --- ensemble ----------------------------------------------------------------------

std::vector<int> stratified_folds(std::span<const int> labels, std::size_t n_classes, int folds,
                                  std::uint64_t seed) {
  if (folds < 1) throw std::invalid_argument("folds must be >= 1");
  std::vector<std::vector<std::size_t>> members(n_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) members[static_cast<std::size_t>(labels[i])].push_back(i);
  Rng rng(seed);
  std::vector<int> fold(labels.size(), 0);
  std::size_t offset = 0;
  for (std::size_t c = 0; c < n_classes; ++c) {
    auto& m = members[c];
    if (m.empty()) continue;
    if (m.size() < static_cast<std::size_t>(folds))
      throw std::invalid_argument("class " + std::to_string(c) + " has " + std::to_string(m.size()) +
                                  " members, fewer than " + std::to_string(folds) + " folds");
    rng.shuffle(m);
    // Continue the round-robin across classes so fold sizes stay balanced.
    for (std::size_t i = 0; i < m.size(); ++i) fold[m[i]] = static_cast<int>((offset + i) % folds);
    offset += m.size();
  }
  return fold;
}

EnsembleModel::EnsembleModel(std::vector<std::unique_ptr<Model>> members, std::vector<std::string> classes)
    : members_(std::move(members)), classes_(std::move(classes)) {}

std::vector<double> EnsembleModel::scores(std::span<const double> x) const {
  std::vector<double> s(classes_.size(), 0.0);
  for (const auto& m : members_) {
    const auto ms = m->scores(x);
    for (std::size_t i = 0; i < s.size(); ++i)
      if (std::isfinite(ms[i])) s[i] += ms[i];
  }
  return s;
}

int EnsembleModel::predict(std::span<const double> x) const {
  const std::size_t k = classes_.size();
  std::vector<int> votes(k, 0);
  std::vector<double> summed(k, 0.0);
  for (const auto& m : members_) {
    const auto ms = m->scores(x);
    ++votes[static_cast<std::size_t>(m->predict(x))];
    for (std::size_t i = 0; i < k; ++i)
      if (std::isfinite(ms[i])) summed[i] += ms[i];
  }
  int best = 0;
  for (std::size_t c = 1; c < k; ++c) {
    const auto b = static_cast<std::size_t>(best);
    if (votes[c] > votes[b] || (votes[c] == votes[b] && summed[c] > summed[b])) best = static_cast<int>(c);
  }
  return best;
}

std::unique_ptr<EnsembleModel> cv_ensemble(const Dataset& train, const Learner& learner, int folds,
                                           std::uint64_t seed) {
  train.validate();
  std::vector<std::unique_ptr<Model>> members;
  std::vector<double> fold_scores;
  if (folds == 1) {
    std::vector<std::size_t> idx(train.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    members.push_back(learner(train, idx, derive_seed(seed, 0)));
  } else {
    const auto fold = stratified_folds(train.y, train.classes.size(), folds, derive_seed(seed, 0xf01d));
    for (int f = 0; f < folds; ++f) {
      std::vector<std::size_t> tr, va;
      for (std::size_t i = 0; i < train.size(); ++i) (fold[i] == f ? va : tr).push_back(i);
      auto m = learner(train, tr, derive_seed(seed, static_cast<std::uint64_t>(f)));
      std::size_t hit = 0;
      for (auto i : va) hit += m->predict(train.row(i)) == train.y[i];
      fold_scores.push_back(va.empty() ? 0.0 : static_cast<double>(hit) / static_cast<double>(va.size()));
      members.push_back(std::move(m));
    }
  }
  auto e = std::make_unique<EnsembleModel>(std::move(members), train.classes);
  e->fold_scores = std::move(fold_scores);
  e->seed = seed;
  return e;
}

// --- serialisation --------------------------------------------------------------

namespace {

constexpr const char* kMagic = "fastnose-model";
constexpr int kFormatVersion = 1;

class Tokens {
public:
  explicit Tokens(std::istream& in) : in_(in) {}
  std::string word() {
    std::string s;
    if (!(in_ >> s)) throw std::runtime_error("model file truncated");
    return s;
  }
  void expect(const std::string& w) {
    const auto got = word();
    if (got != w) throw std::runtime_error("model file: expected '" + w + "', got '" + got + "'");
  }
  double real() { return text::parse_double(word()); }
  long long integer() { return text::parse_int(word()); }
  std::uint64_t u64() { return text::parse_u64(word()); }

private:
  std::istream& in_;
};

std::string fmt(double v) { return text::format_double(v); }

std::unique_ptr<Model> read_member(Tokens& tok, std::istream& in) {
  const auto kind = tok.word();
  if (kind == "svm") return SvmModel::load(in);
  if (kind == "forest") return ForestModel::load(in);
  if (kind == "ensemble") return EnsembleModel::load(in);
  if (kind == "knn") return KnnModel::load(in);
  throw std::runtime_error("unknown model kind '" + kind + "'");
}

}  // namespace

void KnnModel::save(std::ostream& out) const {
  out << "knn\nk " << k_ << " dims " << train_.d << " rows " << train_.size() << " classes " << train_.classes.size();
  for (const auto& c : train_.classes) out << ' ' << c;
  out << '\n';
  for (std::size_t i = 0; i < train_.size(); ++i) {
    out << train_.y[i];
    for (double v : train_.row(i)) out << ' ' << fmt(v);
    out << '\n';
  }
}

std::unique_ptr<KnnModel> KnnModel::load(std::istream& in) {
  Tokens tok(in);
  tok.expect("k");
  const int k = static_cast<int>(tok.integer());
  tok.expect("dims");
  Dataset d;
  d.d = static_cast<std::size_t>(tok.integer());
  tok.expect("rows");
  const auto n = static_cast<std::size_t>(tok.integer());
  tok.expect("classes");
  const auto nc = static_cast<std::size_t>(tok.integer());
  for (std::size_t c = 0; c < nc; ++c) d.classes.push_back(tok.word());
  std::vector<double> row(d.d);
  for (std::size_t i = 0; i < n; ++i) {
    const int y = static_cast<int>(tok.integer());
    for (auto& v : row) v = tok.real();
    d.add(row, y);
  }
  return std::make_unique<KnnModel>(std::move(d), k);
}

void SvmModel::save(std::ostream& out) const {
  const std::size_t k = rho_.size();
  out << "svm\n"
      << "c " << fmt(params_.c) << " gamma " << fmt(params_.gamma) << " balanced " << params_.balanced
      << " tol " << fmt(params_.tol) << " max_iter " << params_.max_iter << '\n'
      << "dims " << d_ << " support " << support_count() << " classes " << k << '\n'
      << "rho";
  for (double r : rho_) out << ' ' << fmt(r);
  out << '\n';
  for (std::size_t s = 0; s < support_count(); ++s) {
    for (std::size_t j = 0; j < k; ++j) out << (j ? " " : "") << fmt(coef_[s * k + j]);
    for (std::size_t j = 0; j < d_; ++j) out << ' ' << fmt(sv_[s * d_ + j]);
    out << '\n';
  }
}

std::unique_ptr<SvmModel> SvmModel::load(std::istream& in) {
  Tokens tok(in);
  auto m = std::make_unique<SvmModel>();
  tok.expect("c");
  m->params_.c = tok.real();
  tok.expect("gamma");
  m->params_.gamma = tok.real();
  tok.expect("balanced");
  m->params_.balanced = tok.integer() != 0;
  tok.expect("tol");
  m->params_.tol = tok.real();
  tok.expect("max_iter");
  m->params_.max_iter = tok.integer();
  tok.expect("dims");
  m->d_ = static_cast<std::size_t>(tok.integer());
  tok.expect("support");
  const auto n_sv = static_cast<std::size_t>(tok.integer());
  tok.expect("classes");
  const auto k = static_cast<std::size_t>(tok.integer());
  tok.expect("rho");
  for (std::size_t j = 0; j < k; ++j) m->rho_.push_back(tok.real());
  for (std::size_t s = 0; s < n_sv; ++s) {
    for (std::size_t j = 0; j < k; ++j) m->coef_.push_back(tok.real());
    for (std::size_t j = 0; j < m->d_; ++j) m->sv_.push_back(tok.real());
  }
  m->info_.resize(k);
  return m;
}

void ForestModel::save(std::ostream& out) const {
  out << "forest\n"
      << "trees " << params_.n_trees << " balanced " << params_.balanced << " max_depth " << params_.max_depth
      << " min_split " << params_.min_samples_split << " mtry " << params_.features_per_split << " seed " << seed_
      << " classes " << n_classes_ << " oob " << fmt(oob_accuracy_) << '\n';
  for (const auto& t : trees_) {
    out << "tree " << t.size() << '\n';
    for (const auto& n : t)
      out << n.feature << ' ' << fmt(n.threshold) << ' ' << n.left << ' ' << n.right << ' ' << n.label << '\n';
  }
}

std::unique_ptr<ForestModel> ForestModel::load(std::istream& in) {
  Tokens tok(in);
  auto m = std::make_unique<ForestModel>();
  tok.expect("trees");
  m->params_.n_trees = static_cast<int>(tok.integer());
  tok.expect("balanced");
  m->params_.balanced = tok.integer() != 0;
  tok.expect("max_depth");
  m->params_.max_depth = static_cast<int>(tok.integer());
  tok.expect("min_split");
  m->params_.min_samples_split = static_cast<int>(tok.integer());
  tok.expect("mtry");
  m->params_.features_per_split = static_cast<int>(tok.integer());
  tok.expect("seed");
  m->seed_ = tok.u64();
  tok.expect("classes");
  m->n_classes_ = static_cast<std::size_t>(tok.integer());
  tok.expect("oob");
  m->oob_accuracy_ = tok.real();
  for (int t = 0; t < m->params_.n_trees; ++t) {
    tok.expect("tree");
    const auto n = static_cast<std::size_t>(tok.integer());
    std::vector<TreeNode> nodes(n);
    for (auto& node : nodes) {
      node.feature = static_cast<int>(tok.integer());
      node.threshold = tok.real();
      node.left = static_cast<int>(tok.integer());
      node.right = static_cast<int>(tok.integer());
      node.label = static_cast<int>(tok.integer());
      if (node.feature >= 0 && (node.left < 0 || node.right < 0 || static_cast<std::size_t>(node.left) >= n ||
                                static_cast<std::size_t>(node.right) >= n))
        throw std::runtime_error("model file: corrupt tree");
    }
    m->trees_.push_back(std::move(nodes));
  }
  return m;
}

void EnsembleModel::save(std::ostream& out) const {
  out << "ensemble\n"
      << "seed " << seed << " classes " << classes_.size();
  for (const auto& c : classes_) out << ' ' << c;
  out << "\nfold_scores " << fold_scores.size();
  for (double s : fold_scores) out << ' ' << fmt(s);
  out << "\nmembers " << members_.size() << '\n';
  for (const auto& m : members_) m->save(out);
}

std::unique_ptr<EnsembleModel> EnsembleModel::load(std::istream& in) {
  Tokens tok(in);
  tok.expect("seed");
  const auto seed = tok.u64();
  tok.expect("classes");
  const auto k = static_cast<std::size_t>(tok.integer());
  std::vector<std::string> classes;
  for (std::size_t i = 0; i < k; ++i) classes.push_back(tok.word());
  tok.expect("fold_scores");
  const auto nf = static_cast<std::size_t>(tok.integer());
  std::vector<double> fs;
  for (std::size_t i = 0; i < nf; ++i) fs.push_back(tok.real());
  tok.expect("members");
  const auto nm = static_cast<std::size_t>(tok.integer());
  std::vector<std::unique_ptr<Model>> members;
  for (std::size_t i = 0; i < nm; ++i) {
    members.push_back(read_member(tok, in));
    if (members.back()->n_classes() != k) throw std::runtime_error("model file: member class count mismatch");
  }
  auto e = std::make_unique<EnsembleModel>(std::move(members), std::move(classes));
  e->fold_scores = std::move(fs);
  e->seed = seed;
  return e;
}

std::unique_ptr<Model> read_model(std::istream& in) {
  Tokens tok(in);
  tok.expect(kMagic);
  const auto version = tok.integer();
  if (version != kFormatVersion)
    throw std::runtime_error("unsupported model format version " + std::to_string(version));
  return read_member(tok, in);
}

void save_model(const std::string& path, const Model& model) {
  std::ostringstream buf;
  buf << kMagic << ' ' << kFormatVersion << '\n';
  model.save(buf);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write model file: " + path);
  out << buf.str();
  if (!out) throw std::runtime_error("failed writing model file: " + path);
}

std::unique_ptr<Model> load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open model file: " + path);
  return read_model(in);
}

}  // namespace fastnose
