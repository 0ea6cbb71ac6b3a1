#pragma once

#include <map>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "dpgkit/annotation.hpp"
#include "dpgkit/dpg.hpp"
#include "dpgkit/kde.hpp"
#include "dpgkit/random_forest.hpp"

namespace dpgkit {

/// Spatial features of a relationship tuple with m members (m = 2 or 3),
/// length 12 * m, in normalized coordinates.
///
/// Per-member block (6 entries, member order):
///   [center x, center y, width, height, detection score,
///    max IoU with the other members]
/// Cross-member block (6 entries per member i, relating i to member (i+1) mod m):
///   [dx, dy, center distance, sin(angle), cos(angle), area_i / area_next]
/// The angle entries are 0 when the centers coincide.
std::vector<double> rel_features(RelationshipCategory category, std::span<const Constituent> members);

inline constexpr std::size_t rel_feature_length(std::size_t member_count) { return 12 * member_count; }

/// Fitted per-category scorers: a forest for each of R1..R6 and a KDE over
/// text-box centers for each of R7..R10. Missing categories fall back to the
/// product of member detection scores (R1..R6) or produce no candidates
/// (R7..R10).
struct ProposalModels {
  double radius = 0.5;
  std::map<RelationshipCategory, RandomForest> forests;
  std::map<RelationshipCategory, Kde2D> kdes;
  std::map<RelationshipCategory, double> kde_peaks;  // 64x64 grid maximum

  nlohmann::json to_json() const;
  static ProposalModels from_json(const nlohmann::json& j);
};

/// A legal member tuple before scoring.
struct TupleCandidate {
  RelationshipCategory category;
  std::vector<int> members;  // indices into the constituent list
};

/// All category-legal member tuples for R1..R6 whose pairwise member center
/// distances are <= radius, followed by one R7..R10 singleton per text box.
std::vector<TupleCandidate> enumerate_tuples(std::span<const Constituent> constituents, double radius);

/// Scores every enumerated tuple and returns candidates sorted by score
/// descending (ties by enumeration order), with ids "p0", "p1", ...
CandidateSet propose_relationships(std::span<const Constituent> constituents, double radius,
                                   const ProposalModels& models);

struct ProposalTrainingConfig {
  double radius = 0.5;
  ForestParams forest;
  std::size_t max_rows_per_category = 8000;
  std::uint64_t seed = 1;
};

struct ProposalExample {
  std::vector<Constituent> constituents;  // detected constituents
  Dpg truth;
};

/// Labels each enumerated tuple positive when its members match (IoU
/// greedy matching) a truth edge of the same category, then fits the
/// per-category forests; KDEs are fitted on truth text-box centers.
ProposalModels train_proposals(std::span<const ProposalExample> corpus, const ProposalTrainingConfig& cfg);

}  // namespace dpgkit
