#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "dpgkit/annotation.hpp"
#include "dpgkit/dpg.hpp"

namespace dpgkit {

struct MatchConfig {
  double iou_threshold = 0.5;  // (0, 1]
  bool require_category_match = true;
};

/// Jaccard Index for Graphs. combined pools nodes and edges into one set.
struct JigScore {
  double node_jaccard = 1.0;
  double edge_jaccard = 1.0;
  double combined = 1.0;
  std::size_t node_intersection = 0;
  std::size_t node_union = 0;
  std::size_t edge_intersection = 0;
  std::size_t edge_union = 0;
};

using NodeMatching = std::vector<std::pair<std::string, std::string>>;  // (proposed, truth)

/// Greedy one-to-one matching: candidate pairs with IoU >= threshold, sorted
/// by IoU descending then (proposed id, truth id); a pair is taken when both
/// ends are still free.
NodeMatching match_nodes(const Dpg& proposed, const Dpg& truth, const MatchConfig& cfg = {});

JigScore jig(const Dpg& proposed, const Dpg& truth, const MatchConfig& cfg = {});

/// Builds the JIG score from raw counts; empty unions count as a perfect score.
JigScore make_jig_score(std::size_t node_inter, std::size_t n_proposed, std::size_t n_truth,
                        std::size_t edge_inter, std::size_t e_proposed, std::size_t e_truth);

/// JIG of subsets of a candidate pool against a fixed truth graph.
///
/// Pairwise IoUs are computed once, so scoring a partial parse costs
/// O(matches + edges). Results equal jig() on the corresponding Dpg whose
/// nodes are the members of the chosen relationships.
class JigEvaluator {
 public:
  JigEvaluator(const CandidateSet& pool, const Dpg& truth, const MatchConfig& cfg = {});

  /// Score of the graph formed by the given pool relationships (indices into
  /// pool.relationships) and their member constituents.
  JigScore score(std::span<const int> relationship_indices) const;

  /// Index of each relationship's members in pool.constituents.
  const std::vector<std::vector<int>>& members() const { return members_; }
  std::size_t pool_size() const { return members_.size(); }

 private:
  struct Pair {
    int proposed;
    int truth;
  };
  std::vector<Pair> ranked_pairs_;
  std::vector<std::vector<int>> members_;
  std::vector<int> categories_;
  std::unordered_set<std::uint64_t> truth_edges_;
  std::size_t n_constituents_ = 0;
  std::size_t n_truth_nodes_ = 0;
  std::size_t n_truth_edges_ = 0;
};

/// Packs (category, member indices) into a collision-free key (indices < 2^16).
std::uint64_t edge_key(int category, std::span<const int> member_indices);

}  // namespace dpgkit
