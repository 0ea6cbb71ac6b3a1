#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

namespace dpgkit {

/// Row-major feature matrix with one target per row.
class FeatureTable {
 public:
  explicit FeatureTable(std::size_t n_features) : n_features_(n_features) {}

  void add(std::span<const double> row, double target);
  std::size_t rows() const { return targets_.size(); }
  std::size_t features() const { return n_features_; }
  std::span<const double> row(std::size_t i) const { return {values_.data() + i * n_features_, n_features_}; }
  double at(std::size_t i, std::size_t f) const { return values_[i * n_features_ + f]; }
  double target(std::size_t i) const { return targets_[i]; }
  std::span<const double> targets() const { return targets_; }

 private:
  std::size_t n_features_;
  std::vector<double> values_;
  std::vector<double> targets_;
};

enum class ForestTask { Classification, Regression };

struct ForestParams {
  ForestTask task = ForestTask::Classification;
  int n_trees = 100;
  int max_depth = 12;
  int min_leaf = 2;
  int features_per_split = 0;  // 0 -> ceil(sqrt(F))
  bool bootstrap = true;
  std::uint64_t seed = 1;
};

/// CART tree with axis-aligned splits. Classification trees split on Gini
/// impurity and store P(label = 1) at the leaves, so a leaf's class
/// distribution is (1 - value, value); regression trees split on squared
/// error and store the mean target.
class DecisionTree {
 public:
  struct Node {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;
  };

  double predict(std::span<const double> x) const;
  const std::vector<Node>& nodes() const { return nodes_; }
  std::vector<Node>& mutable_nodes() { return nodes_; }

 private:
  std::vector<Node> nodes_;
};

class RandomForest {
 public:
  RandomForest() = default;

  /// Classification targets must be 0 or 1. Requires at least two rows. When
  /// every classification target is equal the result is a constant forest
  /// and degenerate() is set.
  static RandomForest train(const FeatureTable& data, const ForestParams& params);

  /// Classification: mean over trees of the leaf P(label = 1), in [0,1].
  /// Regression: mean of leaf means.
  double predict(std::span<const double> x) const;

  const std::vector<DecisionTree>& trees() const { return trees_; }
  std::size_t n_features() const { return n_features_; }
  ForestTask task() const { return task_; }
  bool degenerate() const { return degenerate_; }

  nlohmann::json to_json() const;
  static RandomForest from_json(const nlohmann::json& j);

  /// Single tree grown on the full data (no bootstrap); exposed for tests.
  static DecisionTree grow_tree(const FeatureTable& data, std::span<const std::size_t> sample,
                                const ForestParams& params, std::uint64_t seed);

 private:
  std::vector<DecisionTree> trees_;
  std::size_t n_features_ = 0;
  ForestTask task_ = ForestTask::Classification;
  bool degenerate_ = false;
};

}  // namespace dpgkit
