#pragma once

#include <array>
#include <functional>
#include <span>
#include <vector>

#include <json.hpp>

#include "dpgkit/annotation.hpp"
#include "dpgkit/dpg.hpp"
#include "dpgkit/dsdp.hpp"
#include "dpgkit/parse_state.hpp"
#include "dpgkit/random_forest.hpp"

namespace dpgkit {

inline constexpr int kExitFeatureSize = 15;

/// DPG-state features for the exit model:
///   0 mean node score   1 mean edge score   2 canvas coverage
///   3 redundancy (mean IoU over same-category node pairs)
///   4 edges / nodes     5..14 edge count per category R1..R10, divided by
///                            the pool's summed candidate score for that
///                            category (at least 1)
std::array<double, kExitFeatureSize> exit_features(const ParseState& state);

/// Estimates how close a partial parse is to complete, in [0,1].
using ExitFn = std::function<double(const ParseState&)>;
/// Scores adding a relationship to a partial parse, in [0,1].
using RankFn = std::function<double(const ParseState&, int rel)>;

/// Regression forest over exit_features, trained on JIG targets.
class ExitModel {
 public:
  ExitModel() = default;
  explicit ExitModel(RandomForest forest) : forest_(std::move(forest)) {}
  double score(const ParseState& state) const;
  ExitFn fn() const {
    return [this](const ParseState& s) { return score(s); };
  }
  const RandomForest& forest() const { return forest_; }

 private:
  RandomForest forest_;
};

/// Classification forest over rank_features that predicts whether adding a
/// relationship improves the parse.
class RankModel {
 public:
  RankModel() = default;
  RankModel(RandomForest forest, int max_steps) : forest_(std::move(forest)), max_steps_(max_steps) {}
  double score(const ParseState& state, int rel) const;
  RankFn fn() const {
    return [this](const ParseState& s, int r) { return score(s, r); };
  }
  const RandomForest& forest() const { return forest_; }
  int max_steps() const { return max_steps_; }

 private:
  RandomForest forest_;
  int max_steps_ = 60;
};

/// Step features without presentation history (search has no presentation
/// order): the step entry is the accepted count.
StepFeature rank_features(const ParseState& state, int rel, int max_steps);

struct SearchResult {
  Dpg graph;
  std::vector<int> added;  // relationship indices in the order added
  double cost = 0.0;
  std::size_t expansions = 0;
};

/// Adds candidates in proposal-score order (ties by id) until the exit
/// model reaches the threshold or candidates run out.
SearchResult greedy_parse(const CandidateSet& candidates, const ExitFn& exit_model, double threshold = 0.5);

struct AStarConfig {
  double lambda = 0.5;
  int beam = 50;
  double threshold = 0.5;
  std::size_t max_expansions = 4000;
};

/// Step cost of adding rel to state (resulting state passed separately).
double step_cost(const ParseState& state, const ParseState& next, int rel, const RankFn& rank, const ExitFn& exit_model,
                 double lambda);

/// Accumulated step cost of adding relationships in the given order.
double path_cost(const CandidateSet& candidates, std::span<const int> order, const RankFn& rank,
                 const ExitFn& exit_model, double lambda);

/// Best-first search over partial parses. A state's priority is its
/// accumulated step cost
///   lambda * (1 - rank(candidate, state)) + (1 - lambda) * (1 - exit(next state)).
/// The popped state is returned once its exit score reaches the threshold.
/// The frontier keeps the `beam` cheapest states and the exit heuristic is
/// not admissible, so the result is best-first, not provably optimal. When
/// the frontier empties (or max_expansions is hit) the deepest expanded
/// state is returned.
SearchResult astar_parse(const CandidateSet& candidates, const RankFn& rank, const ExitFn& exit_model,
                         const AStarConfig& cfg = {});

struct SearchTrainConfig {
  ForestParams forest;
  int partials_per_rate = 4;
  int seq_per_image = 10;
  int max_len = 60;
  std::size_t max_rank_rows = 20000;
  int search_aware_rounds = 2;
  AStarConfig astar;  // settings used when collecting search-aware rows
  /// When set, every tune_every-th diagram is held out and each method's
  /// exit threshold is chosen from threshold_grid by mean held-out JIG.
  bool tune_thresholds = true;
  int tune_every = 4;
  std::vector<double> threshold_grid{0.3, 0.35, 0.4, 0.45, 0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85};
  std::uint64_t seed = 1;
};

/// Partial parses are drawn by deleting each truth-matching candidate with
/// rate r in {0, 0.25, 0.5, 0.75, 1}; targets are the partials' combined JIG.
ExitModel train_exit_model(std::span<const ParserExample> corpus, const SearchTrainConfig& cfg);
/// Rows come from sampled sequences. A candidate is positive iff adding it
/// reproduces a truth edge the state has not matched yet; the state then
/// advances by label_step.
RankModel train_rank_model(std::span<const ParserExample> corpus, const SearchTrainConfig& cfg);

struct SearchModels {
  ExitModel exit;
  RankModel rank;
  double greedy_threshold = 0.5;
  double astar_threshold = 0.5;

  nlohmann::json to_json() const;
  static SearchModels from_json(const nlohmann::json& j);
};

/// Rank model plus an exit model refined over search_aware_rounds: each
/// round adds every prefix of the paths greedy and best-first search return
/// on the training diagrams, labeled with its true JIG, and refits. This
/// corrects the states the searches select because the model overrates them.
/// With tune_thresholds the models are fitted on the remaining diagrams and
/// the stored thresholds are the held-out best per method.
SearchModels train_search_models(std::span<const ParserExample> corpus, const SearchTrainConfig& cfg);

}  // namespace dpgkit
