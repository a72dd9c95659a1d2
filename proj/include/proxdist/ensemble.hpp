#pragma once

// Multiclass tree ensembles: Extremely Randomized Trees and softmax gradient
// boosting, with CBOR model serialisation and an exhaustive grid search.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "proxdist/error.hpp"
#include "proxdist/matrix.hpp"
#include "proxdist/parallel.hpp"
#include "proxdist/rng.hpp"

namespace proxdist {

inline double gini(std::span<const std::size_t> labels, std::size_t n_classes) {
  if (labels.empty()) fail(ErrorCode::EmptySet, "gini of an empty set");
  std::vector<double> counts(n_classes, 0.0);
  for (auto l : labels) counts.at(l) += 1.0;
  const double n = static_cast<double>(labels.size());
  double s = 0.0;
  for (double c : counts) s += (c / n) * (c / n);
  return 1.0 - s;
}

inline double gini_from_counts(std::span<const double> counts, double n) {
  if (n <= 0.0) return 0.0;
  double s = 0.0;
  for (double c : counts) s += (c / n) * (c / n);
  return 1.0 - s;
}

// ---------------------------------------------------------------------------
// Trees

// Flat binary tree. A split sends x[feature] < threshold left, otherwise
// right. Leaves have feature == -1 and own `width` values (class counts for
// Extra Trees, a single score for boosting).
struct Tree {
  std::size_t width = 1;
  std::vector<std::int32_t> feature;
  std::vector<double> threshold;
  std::vector<std::int32_t> left;
  std::vector<std::int32_t> right;
  std::vector<double> values;  // node_count * width; zero for split nodes

  std::size_t node_count() const { return feature.size(); }
  bool is_leaf(std::size_t node) const { return feature[node] < 0; }

  std::int32_t add_node() {
    feature.push_back(-1);
    threshold.push_back(0.0);
    left.push_back(-1);
    right.push_back(-1);
    values.resize(values.size() + width, 0.0);
    return static_cast<std::int32_t>(feature.size() - 1);
  }

  std::span<const double> leaf_values(std::size_t node) const { return {values.data() + node * width, width}; }
  std::span<double> leaf_values(std::size_t node) { return {values.data() + node * width, width}; }

  std::size_t find_leaf(std::span<const double> x) const {
    std::size_t node = 0;
    while (feature[node] >= 0) {
      node = static_cast<std::size_t>(x[static_cast<std::size_t>(feature[node])] < threshold[node] ? left[node]
                                                                                                   : right[node]);
    }
    return node;
  }

  std::size_t depth(std::size_t node = 0) const {
    if (is_leaf(node)) return 0;
    return 1 + std::max(depth(static_cast<std::size_t>(left[node])), depth(static_cast<std::size_t>(right[node])));
  }

  bool operator==(const Tree&) const = default;
};

enum class ModelKind { ExtraTrees, Gbm };

inline std::string_view model_kind_name(ModelKind k) { return k == ModelKind::ExtraTrees ? "extra_trees" : "gbm"; }

inline ModelKind model_kind_from_name(std::string_view s) {
  if (s == "extra_trees") return ModelKind::ExtraTrees;
  if (s == "gbm") return ModelKind::Gbm;
  fail(ErrorCode::BadConfig, "unknown model kind: " + std::string(s));
}

struct TreeEnsembleModel {
  ModelKind kind = ModelKind::ExtraTrees;
  std::vector<double> classes;  // ascending
  std::vector<std::string> schema;
  std::vector<Tree> trees;  // Gbm: round-major, trees[round * n_classes + class]
  std::vector<double> init_scores;  // Gbm only: log class priors
  double learning_rate = 0.0;       // Gbm only
  std::vector<double> train_loss;   // Gbm only: log-loss after each round

  std::size_t n_classes() const { return classes.size(); }
  bool operator==(const TreeEnsembleModel&) const = default;
};

struct ExtraTreesHyperparams {
  std::size_t n_trees = 400;
  std::optional<std::size_t> k_features;  // default ceil(sqrt(p))
  std::size_t min_samples_split = 2;
  std::optional<std::size_t> max_depth;
  std::uint64_t seed = 0;
  bool bootstrap = false;  // Random Forest style resampling
  bool test_mode = false;  // midpoint thresholds, features scanned in index order

  bool operator==(const ExtraTreesHyperparams&) const = default;
};

struct GbmHyperparams {
  std::size_t n_rounds = 300;
  double learning_rate = 0.1;
  std::size_t max_depth = 3;
  std::size_t min_samples_leaf = 1;
  double subsample = 1.0;
  std::uint64_t seed = 0;

  bool operator==(const GbmHyperparams&) const = default;
};

namespace detail {

struct Labels {
  std::vector<double> classes;
  std::vector<std::size_t> index;  // per row
};

inline Labels encode_labels(std::span<const double> y) {
  Labels l;
  l.classes.assign(y.begin(), y.end());
  std::sort(l.classes.begin(), l.classes.end());
  l.classes.erase(std::unique(l.classes.begin(), l.classes.end()), l.classes.end());
  l.index.reserve(y.size());
  for (double v : y) {
    l.index.push_back(static_cast<std::size_t>(std::lower_bound(l.classes.begin(), l.classes.end(), v) -
                                                l.classes.begin()));
  }
  return l;
}

inline void check_training_data(const Matrix& X, std::span<const double> y) {
  if (X.rows != y.size() || X.rows == 0) {
    fail(ErrorCode::ShapeMismatch, "X has " + std::to_string(X.rows) + " rows, y has " + std::to_string(y.size()));
  }
  for (std::size_t i = 0; i < X.data.size(); ++i) {
    if (!std::isfinite(X.data[i])) fail(ErrorCode::NonFiniteFeature, X.schema[i % X.cols()]);
  }
  for (double v : y) {
    if (!std::isfinite(v)) fail(ErrorCode::NonFiniteFeature, "label");
  }
}

// Weighted child Gini of a split, held as an exact fraction. At a fixed node
// size, minimizing the impurity maximizes
//   (sum_c l_c^2 * n_r + sum_c r_c^2 * n_l) / (n_l * n_r),
// so ties between candidates are detected exactly.
struct SplitScore {
  unsigned __int128 num = 0;
  unsigned __int128 den = 0;  // 0 marks "no candidate yet"

  static SplitScore of(std::span<const std::uint64_t> l, std::span<const std::uint64_t> r, std::uint64_t nl,
                       std::uint64_t nr) {
    unsigned __int128 sl = 0, sr = 0;
    for (auto c : l) sl += static_cast<unsigned __int128>(c) * c;
    for (auto c : r) sr += static_cast<unsigned __int128>(c) * c;
    return {sl * nr + sr * nl, static_cast<unsigned __int128>(nl) * nr};
  }

  bool better_than(const SplitScore& o) const { return o.den == 0 || num * o.den > o.num * den; }
};

class ExtraTreeBuilder {
 public:
  ExtraTreeBuilder(const Matrix& X, const std::vector<std::size_t>& y, std::size_t n_classes,
                   const ExtraTreesHyperparams& hp, std::size_t k, Rng rng)
      : X_(X), y_(y), n_classes_(n_classes), hp_(hp), k_(k), rng_(rng), features_(X.cols()) {
    std::iota(features_.begin(), features_.end(), 0);
  }

  Tree build(std::vector<std::size_t> rows) {
    tree_.width = n_classes_;
    rows_ = std::move(rows);
    grow(0, rows_.size(), 0);
    return std::move(tree_);
  }

 private:
  std::int32_t grow(std::size_t begin, std::size_t end, std::size_t depth) {
    const std::int32_t node = tree_.add_node();
    const std::size_t n = end - begin;
    std::vector<double> counts(n_classes_, 0.0);
    for (std::size_t i = begin; i < end; ++i) counts[y_[rows_[i]]] += 1.0;
    const bool pure = std::count_if(counts.begin(), counts.end(), [](double c) { return c > 0.0; }) <= 1;
    const bool capped = hp_.max_depth && depth >= *hp_.max_depth;
    if (pure || n < hp_.min_samples_split || capped) return make_leaf(node, counts);

    // Visit features in random order (index order in test mode) until k
    // non-constant ones have been tried.
    std::size_t best_feature = 0;
    double best_threshold = 0.0;
    SplitScore best_score;
    std::size_t tried = 0;
    const std::size_t p = features_.size();
    std::vector<std::uint64_t> lc(n_classes_), rc(n_classes_);
    for (std::size_t drawn = 0; drawn < p && tried < k_; ++drawn) {
      std::size_t f;
      if (hp_.test_mode) {
        f = drawn;
      } else {
        const std::size_t j = drawn + static_cast<std::size_t>(rng_.below(p - drawn));
        std::swap(features_[drawn], features_[j]);
        f = features_[drawn];
      }
      double lo = std::numeric_limits<double>::infinity();
      double hi = -lo;
      for (std::size_t i = begin; i < end; ++i) {
        const double v = X_.at(rows_[i], f);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      if (!(hi > lo)) continue;
      ++tried;
      double t = hp_.test_mode ? lo + (hi - lo) / 2.0 : lo + (hi - lo) * rng_.uniform_open();
      if (!(t > lo && t <= hi)) t = lo + (hi - lo) / 2.0;
      std::fill(lc.begin(), lc.end(), 0);
      std::fill(rc.begin(), rc.end(), 0);
      std::uint64_t nl = 0;
      for (std::size_t i = begin; i < end; ++i) {
        const std::size_t r = rows_[i];
        if (X_.at(r, f) < t) {
          ++lc[y_[r]];
          ++nl;
        } else {
          ++rc[y_[r]];
        }
      }
      const auto score = SplitScore::of(lc, rc, nl, n - nl);
      if (score.better_than(best_score)) {
        best_score = score;
        best_feature = f;
        best_threshold = t;
      }
    }
    if (tried == 0) return make_leaf(node, counts);

    auto mid = std::partition(rows_.begin() + static_cast<std::ptrdiff_t>(begin),
                              rows_.begin() + static_cast<std::ptrdiff_t>(end),
                              [&](std::size_t r) { return X_.at(r, best_feature) < best_threshold; });
    const auto split = static_cast<std::size_t>(mid - rows_.begin());
    tree_.feature[static_cast<std::size_t>(node)] = static_cast<std::int32_t>(best_feature);
    tree_.threshold[static_cast<std::size_t>(node)] = best_threshold;
    const auto l = grow(begin, split, depth + 1);
    const auto r = grow(split, end, depth + 1);
    tree_.left[static_cast<std::size_t>(node)] = l;
    tree_.right[static_cast<std::size_t>(node)] = r;
    return node;
  }

  std::int32_t make_leaf(std::int32_t node, const std::vector<double>& counts) {
    auto v = tree_.leaf_values(static_cast<std::size_t>(node));
    std::copy(counts.begin(), counts.end(), v.begin());
    return node;
  }

  const Matrix& X_;
  const std::vector<std::size_t>& y_;
  std::size_t n_classes_;
  const ExtraTreesHyperparams& hp_;
  std::size_t k_;
  Rng rng_;
  std::vector<std::size_t> features_;
  std::vector<std::size_t> rows_;
  Tree tree_;
};

}  // namespace detail

inline TreeEnsembleModel fit_extra_trees(const Matrix& X, std::span<const double> y, const ExtraTreesHyperparams& hp,
                                         std::size_t jobs = 1) {
  detail::check_training_data(X, y);
  const std::size_t p = X.cols();
  if (hp.n_trees < 1) fail(ErrorCode::BadHyperparams, "n_trees must be >= 1");
  if (p == 0) fail(ErrorCode::ShapeMismatch, "no features");
  const std::size_t k =
      hp.k_features.value_or(static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(p)))));
  if (k < 1 || k > p) fail(ErrorCode::BadHyperparams, "k_features must lie in [1, p]");

  const auto labels = detail::encode_labels(y);
  TreeEnsembleModel model;
  model.kind = ModelKind::ExtraTrees;
  model.classes = labels.classes;
  model.schema = X.schema;
  model.trees.resize(hp.n_trees);
  parallel_for(hp.n_trees, jobs, [&](std::size_t t) {
    Rng rng(hp.seed, t);
    std::vector<std::size_t> rows(X.rows);
    if (hp.bootstrap) {
      for (auto& r : rows) r = static_cast<std::size_t>(rng.below(X.rows));
    } else {
      std::iota(rows.begin(), rows.end(), 0);
    }
    detail::ExtraTreeBuilder builder(X, labels.index, labels.classes.size(), hp, k, rng);
    model.trees[t] = builder.build(std::move(rows));
  });
  return model;
}

// ---------------------------------------------------------------------------
// Gradient boosting

namespace detail {

// Level-wise least-squares regression tree over presorted feature columns.
class RegressionTreeBuilder {
 public:
  RegressionTreeBuilder(const Matrix& X, const std::vector<std::vector<std::uint32_t>>& sorted,
                        std::size_t max_depth, std::size_t min_leaf)
      : X_(X), sorted_(sorted), max_depth_(max_depth), min_leaf_(std::max<std::size_t>(1, min_leaf)) {}

  // `active` marks the rows used for this tree; node_of receives each row's leaf.
  Tree build(std::span<const double> target, std::span<const std::uint8_t> active,
             std::vector<std::int32_t>& node_of) {
    Tree tree;
    tree.width = 1;
    const std::size_t n = X_.rows;
    node_of.assign(n, -1);
    tree.add_node();
    struct Stat {
      double sum = 0.0;
      double count = 0.0;
    };
    std::vector<Stat> stats(1);
    for (std::size_t i = 0; i < n; ++i) {
      if (!active[i]) continue;
      node_of[i] = 0;
      stats[0].sum += target[i];
      stats[0].count += 1.0;
    }
    std::vector<std::int32_t> open = {0};
    for (std::size_t depth = 0; depth < max_depth_ && !open.empty(); ++depth) {
      struct Best {
        double gain = 1e-12;
        std::int32_t feature = -1;
        double threshold = 0.0;
      };
      struct Scan {
        double sum = 0.0;
        double count = 0.0;
        double last = 0.0;
      };
      std::vector<Best> best(tree.node_count());
      std::vector<Scan> scan(tree.node_count());
      std::vector<std::uint8_t> is_open(tree.node_count(), 0);
      for (auto o : open) is_open[static_cast<std::size_t>(o)] = 1;
      for (std::size_t f = 0; f < X_.cols(); ++f) {
        for (auto o : open) scan[static_cast<std::size_t>(o)] = Scan{};
        for (const auto row : sorted_[f]) {
          const auto node = node_of[row];
          if (node < 0 || !is_open[static_cast<std::size_t>(node)]) continue;
          auto& s = scan[static_cast<std::size_t>(node)];
          const auto& tot = stats[static_cast<std::size_t>(node)];
          const double x = X_.at(row, f);
          if (s.count >= static_cast<double>(min_leaf_) && x > s.last &&
              tot.count - s.count >= static_cast<double>(min_leaf_)) {
            const double sr = tot.sum - s.sum;
            const double nr = tot.count - s.count;
            const double gain = s.sum * s.sum / s.count + sr * sr / nr - tot.sum * tot.sum / tot.count;
            auto& b = best[static_cast<std::size_t>(node)];
            if (gain > b.gain) {
              double t = s.last + (x - s.last) / 2.0;
              if (!(s.last < t)) t = x;
              b = {gain, static_cast<std::int32_t>(f), t};
            }
          }
          s.sum += target[row];
          s.count += 1.0;
          s.last = x;
        }
      }
      std::vector<std::int32_t> next;
      std::vector<std::pair<std::int32_t, std::int32_t>> children(tree.node_count(), {-1, -1});
      for (auto o : open) {
        const auto& b = best[static_cast<std::size_t>(o)];
        if (b.feature < 0) continue;
        const auto l = tree.add_node();
        const auto r = tree.add_node();
        const auto on = static_cast<std::size_t>(o);
        tree.feature[on] = b.feature;
        tree.threshold[on] = b.threshold;
        tree.left[on] = l;
        tree.right[on] = r;
        children[on] = {l, r};
        next.push_back(l);
        next.push_back(r);
      }
      stats.resize(tree.node_count());
      for (std::size_t i = 0; i < n; ++i) {
        const auto node = node_of[i];
        if (node < 0) continue;
        const auto [l, r] = children[static_cast<std::size_t>(node)];
        if (l < 0) continue;
        const auto on = static_cast<std::size_t>(node);
        const auto child = X_.at(i, static_cast<std::size_t>(tree.feature[on])) < tree.threshold[on] ? l : r;
        node_of[i] = child;
        stats[static_cast<std::size_t>(child)].sum += target[i];
        stats[static_cast<std::size_t>(child)].count += 1.0;
      }
      open = std::move(next);
    }
    return tree;
  }

 private:
  const Matrix& X_;
  const std::vector<std::vector<std::uint32_t>>& sorted_;
  std::size_t max_depth_;
  std::size_t min_leaf_;
};

inline void softmax_inplace(std::span<double> z) {
  const double m = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (double& v : z) {
    v = std::exp(v - m);
    s += v;
  }
  for (double& v : z) v /= s;
}

}  // namespace detail

inline TreeEnsembleModel fit_gbm(const Matrix& X, std::span<const double> y, const GbmHyperparams& hp,
                                 std::size_t jobs = 1) {
  detail::check_training_data(X, y);
  if (!(hp.learning_rate > 0.0 && hp.learning_rate <= 1.0)) fail(ErrorCode::BadHyperparams, "learning_rate must lie in (0, 1]");
  if (!(hp.subsample > 0.0 && hp.subsample <= 1.0)) fail(ErrorCode::BadHyperparams, "subsample must lie in (0, 1]");
  if (hp.max_depth < 1) fail(ErrorCode::BadHyperparams, "max_depth must be >= 1");
  const auto labels = detail::encode_labels(y);
  const std::size_t C = labels.classes.size();
  const std::size_t n = X.rows;

  TreeEnsembleModel model;
  model.kind = ModelKind::Gbm;
  model.classes = labels.classes;
  model.schema = X.schema;
  model.learning_rate = hp.learning_rate;
  std::vector<double> counts(C, 0.0);
  for (auto l : labels.index) counts[l] += 1.0;
  for (double c : counts) model.init_scores.push_back(std::log(c / static_cast<double>(n)));

  std::vector<std::vector<std::uint32_t>> sorted(X.cols());
  for (std::size_t f = 0; f < X.cols(); ++f) {
    auto& s = sorted[f];
    s.resize(n);
    std::iota(s.begin(), s.end(), 0u);
    std::stable_sort(s.begin(), s.end(), [&](std::uint32_t a, std::uint32_t b) { return X.at(a, f) < X.at(b, f); });
  }

  std::vector<double> F(n * C);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < C; ++c) F[i * C + c] = model.init_scores[c];
  }
  std::vector<double> P(n * C);
  auto refresh_probs = [&] {
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      std::span<double> row(P.data() + i * C, C);
      std::copy_n(F.data() + i * C, C, row.begin());
      detail::softmax_inplace(row);
      loss -= std::log(std::max(row[labels.index[i]], 1e-300));
    }
    return loss / static_cast<double>(n);
  };
  refresh_probs();

  detail::RegressionTreeBuilder builder(X, sorted, hp.max_depth, hp.min_samples_leaf);
  const double scale = C > 1 ? static_cast<double>(C - 1) / static_cast<double>(C) : 1.0;
  model.trees.resize(hp.n_rounds * C);
  for (std::size_t round = 0; round < hp.n_rounds; ++round) {
    std::vector<std::uint8_t> active(n, 1);
    if (hp.subsample < 1.0) {
      Rng rng(hp.seed, round);
      for (auto& a : active) a = rng.uniform() < hp.subsample ? 1 : 0;
    }
    std::vector<std::vector<double>> deltas(C, std::vector<double>(n, 0.0));
    parallel_for(C, jobs, [&](std::size_t c) {
      std::vector<double> residual(n);
      for (std::size_t i = 0; i < n; ++i) residual[i] = (labels.index[i] == c ? 1.0 : 0.0) - P[i * C + c];
      std::vector<std::int32_t> node_of;
      Tree tree = builder.build(residual, active, node_of);
      // Newton step per leaf
      std::vector<double> num(tree.node_count(), 0.0), den(tree.node_count(), 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        if (node_of[i] < 0) continue;
        const double r = residual[i];
        num[static_cast<std::size_t>(node_of[i])] += r;
        den[static_cast<std::size_t>(node_of[i])] += std::abs(r) * (1.0 - std::abs(r));
      }
      for (std::size_t node = 0; node < tree.node_count(); ++node) {
        if (!tree.is_leaf(node)) continue;
        tree.leaf_values(node)[0] = den[node] < 1e-12 ? 0.0 : scale * num[node] / den[node];
      }
      for (std::size_t i = 0; i < n; ++i) {
        deltas[c][i] = hp.learning_rate * tree.leaf_values(tree.find_leaf(X.row(i)))[0];
      }
      model.trees[round * C + c] = std::move(tree);
    });
    for (std::size_t c = 0; c < C; ++c) {
      for (std::size_t i = 0; i < n; ++i) F[i * C + c] += deltas[c][i];
    }
    model.train_loss.push_back(refresh_probs());
  }
  return model;
}

// ---------------------------------------------------------------------------
// Prediction

inline void check_schema(const TreeEnsembleModel& model, const Matrix& X) {
  if (X.schema != model.schema) fail(ErrorCode::SchemaMismatch, "feature schema differs from the model's fit schema");
}

// Row-major rows x n_classes probabilities.
inline std::vector<double> predict_proba(const TreeEnsembleModel& model, const Matrix& X, std::size_t jobs = 1) {
  check_schema(model, X);
  const std::size_t C = model.n_classes();
  std::vector<double> out(X.rows * C, 0.0);
  parallel_for(X.rows, jobs, [&](std::size_t i) {
    std::span<double> p(out.data() + i * C, C);
    const auto x = X.row(i);
    if (model.kind == ModelKind::ExtraTrees) {
      for (const auto& tree : model.trees) {
        const auto leaf = tree.leaf_values(tree.find_leaf(x));
        const double total = std::accumulate(leaf.begin(), leaf.end(), 0.0);
        for (std::size_t c = 0; c < C; ++c) p[c] += leaf[c] / total;
      }
      const double nt = static_cast<double>(model.trees.size());
      for (double& v : p) v /= nt;
    } else {
      std::copy(model.init_scores.begin(), model.init_scores.end(), p.begin());
      for (std::size_t t = 0; t < model.trees.size(); ++t) {
        const auto& tree = model.trees[t];
        p[t % C] += model.learning_rate * tree.leaf_values(tree.find_leaf(x))[0];
      }
      detail::softmax_inplace(p);
    }
  });
  return out;
}

// Argmax of predict_proba; ties go to the lower (nearer) class.
inline std::vector<double> predict(const TreeEnsembleModel& model, const Matrix& X, std::size_t jobs = 1) {
  const auto proba = predict_proba(model, X, jobs);
  const std::size_t C = model.n_classes();
  std::vector<double> out(X.rows);
  for (std::size_t i = 0; i < X.rows; ++i) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < C; ++c) {
      if (proba[i * C + c] > proba[i * C + best]) best = c;
    }
    out[i] = model.classes[best];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Serialisation

inline constexpr int kModelFormatVersion = 1;

inline nlohmann::json tree_to_json(const Tree& t) {
  return {{"width", t.width}, {"feature", t.feature}, {"threshold", t.threshold},
          {"left", t.left},   {"right", t.right},     {"values", t.values}};
}

inline Tree tree_from_json(const nlohmann::json& j) {
  Tree t;
  t.width = j.at("width").get<std::size_t>();
  t.feature = j.at("feature").get<std::vector<std::int32_t>>();
  t.threshold = j.at("threshold").get<std::vector<double>>();
  t.left = j.at("left").get<std::vector<std::int32_t>>();
  t.right = j.at("right").get<std::vector<std::int32_t>>();
  t.values = j.at("values").get<std::vector<double>>();
  const auto n = t.feature.size();
  if (n == 0 || t.threshold.size() != n || t.left.size() != n || t.right.size() != n || t.values.size() != n * t.width) {
    fail(ErrorCode::BadModel, "inconsistent tree arrays");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (t.feature[i] < 0) continue;
    if (t.left[i] <= static_cast<std::int32_t>(i) || t.right[i] <= static_cast<std::int32_t>(i) ||
        t.left[i] >= static_cast<std::int32_t>(n) || t.right[i] >= static_cast<std::int32_t>(n)) {
      fail(ErrorCode::BadModel, "tree child index out of range");
    }
  }
  return t;
}

inline nlohmann::json model_to_json(const TreeEnsembleModel& m) {
  nlohmann::json trees = nlohmann::json::array();
  for (const auto& t : m.trees) trees.push_back(tree_to_json(t));
  return {{"version", kModelFormatVersion},
          {"kind", model_kind_name(m.kind)},
          {"classes", m.classes},
          {"schema", m.schema},
          {"trees", std::move(trees)},
          {"init_scores", m.init_scores},
          {"learning_rate", m.learning_rate},
          {"train_loss", m.train_loss}};
}

inline TreeEnsembleModel model_from_json(const nlohmann::json& j) try {
  if (j.value("version", -1) != kModelFormatVersion) fail(ErrorCode::BadModel, "unsupported model format version");
  TreeEnsembleModel m;
  m.kind = model_kind_from_name(j.at("kind").get<std::string>());
  m.classes = j.at("classes").get<std::vector<double>>();
  m.schema = j.at("schema").get<std::vector<std::string>>();
  for (const auto& t : j.at("trees")) {
    m.trees.push_back(tree_from_json(t));
    const auto& tree = m.trees.back();
    for (auto f : tree.feature) {
      if (f >= static_cast<std::int32_t>(m.schema.size())) fail(ErrorCode::BadModel, "feature index out of range");
    }
  }
  m.init_scores = j.at("init_scores").get<std::vector<double>>();
  m.learning_rate = j.at("learning_rate").get<double>();
  m.train_loss = j.at("train_loss").get<std::vector<double>>();
  return m;
} catch (const nlohmann::json::exception& e) {
  fail(ErrorCode::BadModel, e.what());
}

// ---------------------------------------------------------------------------
// Grid search

// Parameter name -> candidate values. std::map orders names
// lexicographically; the product is enumerated with the first name varying
// slowest, which defines "first in grid order" for tie-breaking.
using HyperGrid = std::map<std::string, std::vector<double>>;
using HyperPoint = std::map<std::string, double>;

inline std::vector<HyperPoint> grid_points(const HyperGrid& grid) {
  if (grid.empty()) fail(ErrorCode::EmptyGrid, "grid names no parameters");
  for (const auto& [name, values] : grid) {
    if (values.empty()) fail(ErrorCode::EmptyGrid, "no values for " + name);
  }
  std::vector<HyperPoint> out;
  std::vector<std::size_t> idx(grid.size(), 0);
  for (;;) {
    HyperPoint p;
    std::size_t d = 0;
    for (const auto& [name, values] : grid) p[name] = values[idx[d++]];
    out.push_back(std::move(p));
    // odometer: last name fastest
    std::size_t pos = grid.size();
    auto it = grid.end();
    for (;;) {
      if (pos == 0) return out;
      --pos;
      --it;
      if (++idx[pos] < it->second.size()) break;
      idx[pos] = 0;
    }
  }
}

namespace detail {

inline std::size_t as_count(const std::string& name, double v, std::size_t min) {
  if (!(v >= static_cast<double>(min)) || v != std::floor(v)) {
    fail(ErrorCode::BadHyperparams, name + " must be an integer >= " + std::to_string(min));
  }
  return static_cast<std::size_t>(v);
}

}  // namespace detail

// k_features = 0 and max_depth = 0 mean "default" / "no cap".
inline ExtraTreesHyperparams apply_point(ExtraTreesHyperparams hp, const HyperPoint& p) {
  for (const auto& [name, v] : p) {
    if (name == "n_trees") hp.n_trees = detail::as_count(name, v, 1);
    else if (name == "k_features") {
      const auto k = detail::as_count(name, v, 0);
      hp.k_features = k == 0 ? std::nullopt : std::optional<std::size_t>(k);
    } else if (name == "min_samples_split") hp.min_samples_split = detail::as_count(name, v, 1);
    else if (name == "max_depth") {
      const auto d = detail::as_count(name, v, 0);
      hp.max_depth = d == 0 ? std::nullopt : std::optional<std::size_t>(d);
    } else if (name == "bootstrap") hp.bootstrap = v != 0.0;
    else fail(ErrorCode::BadHyperparams, "unknown extra_trees parameter: " + name);
  }
  return hp;
}

inline GbmHyperparams apply_point(GbmHyperparams hp, const HyperPoint& p) {
  for (const auto& [name, v] : p) {
    if (name == "n_rounds") hp.n_rounds = detail::as_count(name, v, 0);
    else if (name == "learning_rate") hp.learning_rate = v;
    else if (name == "max_depth") hp.max_depth = detail::as_count(name, v, 1);
    else if (name == "min_samples_leaf") hp.min_samples_leaf = detail::as_count(name, v, 1);
    else if (name == "subsample") hp.subsample = v;
    else fail(ErrorCode::BadHyperparams, "unknown gbm parameter: " + name);
  }
  return hp;
}

// Everything needed to fit either model family.
struct ModelSpec {
  ModelKind kind = ModelKind::ExtraTrees;
  ExtraTreesHyperparams extra_trees;
  GbmHyperparams gbm;

  bool operator==(const ModelSpec&) const = default;
};

inline ModelSpec apply_point(ModelSpec spec, const HyperPoint& p) {
  if (spec.kind == ModelKind::ExtraTrees) spec.extra_trees = apply_point(spec.extra_trees, p);
  else spec.gbm = apply_point(spec.gbm, p);
  return spec;
}

inline TreeEnsembleModel fit_model(const ModelSpec& spec, const Matrix& X, std::span<const double> y,
                                   std::size_t jobs = 1) {
  return spec.kind == ModelKind::ExtraTrees ? fit_extra_trees(X, y, spec.extra_trees, jobs)
                                            : fit_gbm(X, y, spec.gbm, jobs);
}

// Lower is better.
using Metric = std::function<double(std::span<const double> pred, std::span<const double> truth)>;

struct GridRow {
  HyperPoint point;
  double score = 0.0;
};

struct GridResult {
  std::size_t best_index = 0;
  HyperPoint best;
  std::vector<GridRow> table;  // one row per grid point, grid order
};

// Trains every grid point on `train`, scores on `dev`, returns the argmin
// (first in grid order on ties).
inline GridResult grid_search(const ModelSpec& base, const HyperGrid& grid, const Matrix& X_train,
                              std::span<const double> y_train, const Matrix& X_dev, std::span<const double> y_dev,
                              const Metric& metric, std::size_t jobs = 1) {
  const auto points = grid_points(grid);
  if (points.empty()) fail(ErrorCode::EmptyGrid, "grid has no points");
  GridResult result;
  result.table.resize(points.size());
  // Trees inside one fit run serially; the pool is spent on grid points.
  parallel_for(points.size(), jobs, [&](std::size_t i) {
    const auto spec = apply_point(base, points[i]);
    const auto model = fit_model(spec, X_train, y_train, 1);
    const auto pred = predict(model, X_dev, 1);
    result.table[i] = {points[i], metric(pred, y_dev)};
  });
  for (std::size_t i = 1; i < result.table.size(); ++i) {
    if (result.table[i].score < result.table[result.best_index].score) result.best_index = i;
  }
  result.best = result.table[result.best_index].point;
  return result;
}

}  // namespace proxdist
