#include "dpgkit/random_forest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dpgkit/util.hpp"

namespace dpgkit {

using nlohmann::json;

void FeatureTable::add(std::span<const double> row, double target) {
  if (row.size() != n_features_) throw std::invalid_argument("feature row has wrong length");
  values_.insert(values_.end(), row.begin(), row.end());
  targets_.push_back(target);
}

double DecisionTree::predict(std::span<const double> x) const {
  int i = 0;
  while (nodes_[i].feature >= 0) i = x[nodes_[i].feature] <= nodes_[i].threshold ? nodes_[i].left : nodes_[i].right;
  return nodes_[i].value;
}

namespace {

struct SplitChoice {
  int feature = -1;
  double threshold = 0.0;
  double impurity = 0.0;
};

class TreeBuilder {
 public:
  TreeBuilder(const FeatureTable& data, const ForestParams& params, std::uint64_t seed)
      : data_(data), params_(params), rng_(seed) {
    mtry_ = params.features_per_split > 0
                ? std::min<int>(params.features_per_split, static_cast<int>(data.features()))
                : static_cast<int>(std::ceil(std::sqrt(static_cast<double>(data.features()))));
    feature_order_.resize(data.features());
    std::iota(feature_order_.begin(), feature_order_.end(), 0);
  }

  DecisionTree build(std::vector<std::size_t> sample) {
    DecisionTree tree;
    grow(tree, sample, 0);
    return tree;
  }

 private:
  double leaf_value(std::span<const std::size_t> idx) const {
    double sum = 0.0;
    for (auto i : idx) sum += data_.target(i);
    return idx.empty() ? 0.0 : sum / static_cast<double>(idx.size());
  }

  // Weighted node impurity: n * gini for classification, SSE for regression.
  double impurity(double n, double sum, double sumsq) const {
    if (n <= 0.0) return 0.0;
    if (params_.task == ForestTask::Classification) {
      const double p = sum / n;
      return n * 2.0 * p * (1.0 - p);
    }
    return sumsq - sum * sum / n;
  }

  SplitChoice best_split(std::vector<std::size_t>& idx) {
    const double n = static_cast<double>(idx.size());
    double sum = 0.0, sumsq = 0.0;
    for (auto i : idx) {
      sum += data_.target(i);
      sumsq += data_.target(i) * data_.target(i);
    }
    SplitChoice best;
    best.impurity = impurity(n, sum, sumsq);
    const double parent = best.impurity;
    if (parent <= 1e-12) return best;

    // Partial Fisher-Yates picks mtry distinct features.
    const int nf = static_cast<int>(feature_order_.size());
    for (int k = 0; k < mtry_; ++k) {
      const int j = rng_.uniform_int(k, nf - 1);
      std::swap(feature_order_[k], feature_order_[j]);
    }
    const std::size_t min_leaf = static_cast<std::size_t>(std::max(1, params_.min_leaf));
    for (int k = 0; k < mtry_; ++k) {
      const int f = feature_order_[k];
      std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        const double va = data_.at(a, f), vb = data_.at(b, f);
        return va != vb ? va < vb : a < b;
      });
      double lsum = 0.0, lsq = 0.0;
      for (std::size_t pos = 0; pos + 1 < idx.size(); ++pos) {
        const double t = data_.target(idx[pos]);
        lsum += t;
        lsq += t * t;
        const std::size_t nl = pos + 1, nr = idx.size() - nl;
        const double v = data_.at(idx[pos], f), next = data_.at(idx[pos + 1], f);
        if (v == next || nl < min_leaf || nr < min_leaf) continue;
        const double imp = impurity(static_cast<double>(nl), lsum, lsq) +
                           impurity(static_cast<double>(nr), sum - lsum, sumsq - lsq);
        if (imp < best.impurity - 1e-12) {
          best = {f, 0.5 * (v + next), imp};
        }
      }
    }
    return best;
  }

  int grow(DecisionTree& tree, std::vector<std::size_t>& idx, int depth) {
    auto& nodes = tree.mutable_nodes();
    const int self = static_cast<int>(nodes.size());
    nodes.push_back({});
    nodes[self].value = leaf_value(idx);
    const std::size_t min_leaf = static_cast<std::size_t>(std::max(1, params_.min_leaf));
    if (depth >= params_.max_depth || idx.size() < 2 * min_leaf) return self;
    const SplitChoice split = best_split(idx);
    if (split.feature < 0) return self;

    std::vector<std::size_t> left, right;
    for (auto i : idx) (data_.at(i, split.feature) <= split.threshold ? left : right).push_back(i);
    idx.clear();
    idx.shrink_to_fit();
    const int l = grow(tree, left, depth + 1);
    const int r = grow(tree, right, depth + 1);
    nodes[self].feature = split.feature;
    nodes[self].threshold = split.threshold;
    nodes[self].left = l;
    nodes[self].right = r;
    return self;
  }

  const FeatureTable& data_;
  const ForestParams& params_;
  Rng rng_;
  int mtry_ = 1;
  std::vector<int> feature_order_;
};

}  // namespace

DecisionTree RandomForest::grow_tree(const FeatureTable& data, std::span<const std::size_t> sample,
                                     const ForestParams& params, std::uint64_t seed) {
  TreeBuilder builder(data, params, seed);
  return builder.build({sample.begin(), sample.end()});
}

RandomForest RandomForest::train(const FeatureTable& data, const ForestParams& params) {
  if (data.rows() < 2) throw DataError("random forest needs at least two training rows");
  if (params.n_trees < 1) throw std::invalid_argument("n_trees must be >= 1");
  for (double t : data.targets())
    if (!std::isfinite(t)) throw NumericError("non-finite training target");

  RandomForest forest;
  forest.n_features_ = data.features();
  forest.task_ = params.task;
  if (params.task == ForestTask::Classification) {
    for (double t : data.targets())
      if (t != 0.0 && t != 1.0) throw DataError("classification targets must be 0 or 1");
    const auto first = data.target(0);
    forest.degenerate_ = std::all_of(data.targets().begin(), data.targets().end(),
                                     [&](double t) { return t == first; });
  }

  forest.trees_.resize(static_cast<std::size_t>(params.n_trees));
  parallel_for(forest.trees_.size(), [&](std::size_t t) {
    const std::uint64_t seed = hash_combine(params.seed, t);
    std::vector<std::size_t> sample(data.rows());
    if (params.bootstrap) {
      Rng rng(hash_combine(seed, 0xb007));
      const int n = static_cast<int>(data.rows());
      for (auto& s : sample) s = static_cast<std::size_t>(rng.uniform_int(0, n - 1));
    } else {
      std::iota(sample.begin(), sample.end(), 0);
    }
    forest.trees_[t] = grow_tree(data, sample, params, seed);
  });
  return forest;
}

double RandomForest::predict(std::span<const double> x) const {
  if (x.size() != n_features_) throw std::invalid_argument("feature vector has wrong length");
  double sum = 0.0;
  for (const auto& t : trees_) sum += t.predict(x);
  return trees_.empty() ? 0.0 : sum / static_cast<double>(trees_.size());
}

json RandomForest::to_json() const {
  json j;
  j["format"] = "dpgkit-forest";
  j["version"] = 1;
  j["task"] = task_ == ForestTask::Classification ? "classification" : "regression";
  j["n_features"] = n_features_;
  j["degenerate"] = degenerate_;
  j["trees"] = json::array();
  for (const auto& t : trees_) {
    json tj;
    std::vector<int> feature, left, right;
    std::vector<double> threshold, value;
    for (const auto& n : t.nodes()) {
      feature.push_back(n.feature);
      left.push_back(n.left);
      right.push_back(n.right);
      threshold.push_back(n.threshold);
      value.push_back(n.value);
    }
    tj["feature"] = feature;
    tj["threshold"] = threshold;
    tj["left"] = left;
    tj["right"] = right;
    tj["value"] = value;
    j["trees"].push_back(std::move(tj));
  }
  return j;
}

RandomForest RandomForest::from_json(const json& j) {
  if (j.value("format", "") != "dpgkit-forest" || j.value("version", 0) != 1)
    throw DataError("not a version-1 dpgkit forest");
  RandomForest f;
  f.task_ = j.at("task").get<std::string>() == "classification" ? ForestTask::Classification
                                                                 : ForestTask::Regression;
  f.n_features_ = j.at("n_features").get<std::size_t>();
  f.degenerate_ = j.at("degenerate").get<bool>();
  for (const auto& tj : j.at("trees")) {
    DecisionTree t;
    const auto feature = tj.at("feature").get<std::vector<int>>();
    const auto left = tj.at("left").get<std::vector<int>>();
    const auto right = tj.at("right").get<std::vector<int>>();
    const auto threshold = tj.at("threshold").get<std::vector<double>>();
    const auto value = tj.at("value").get<std::vector<double>>();
    const std::size_t n = feature.size();
    if (left.size() != n || right.size() != n || threshold.size() != n || value.size() != n || n == 0)
      throw DataError("forest tree arrays disagree in length");
    for (std::size_t i = 0; i < n; ++i) {
      if (feature[i] >= 0 && (left[i] <= static_cast<int>(i) || right[i] <= static_cast<int>(i) ||
                              left[i] >= static_cast<int>(n) || right[i] >= static_cast<int>(n) ||
                              feature[i] >= static_cast<int>(f.n_features_)))
        throw DataError("forest tree has an invalid node");
      t.mutable_nodes().push_back({feature[i], threshold[i], left[i], right[i], value[i]});
    }
    f.trees_.push_back(std::move(t));
  }
  if (f.trees_.empty()) throw DataError("forest has no trees");
  return f;
}

}  // namespace dpgkit
