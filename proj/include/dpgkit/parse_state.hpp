#pragma once

#include <cstdint>
#include <span>
#include <unordered_set>
#include <vector>

#include "dpgkit/annotation.hpp"
#include "dpgkit/dpg.hpp"

namespace dpgkit {

/// A partial parse over a candidate pool: which relationships have been
/// accepted, which have been shown to the parser, and the derived node set.
/// The pool must outlive the state.
class ParseState {
 public:
  explicit ParseState(const CandidateSet& pool);

  const CandidateSet& pool() const { return *pool_; }
  std::size_t pool_size() const { return members_.size(); }
  std::span<const int> members(int rel) const { return members_[rel]; }
  const Constituent& constituent(int c) const { return pool_->constituents[c]; }
  const Relationship& relationship(int r) const { return pool_->relationships[r]; }

  bool is_accepted(int rel) const { return accepted_flag_[rel] != 0; }
  /// Adds the relationship and its member constituents. No-op if already accepted.
  void accept(int rel);
  /// Records that the relationship was presented to the parser.
  void mark_presented(int rel);

  const std::vector<int>& accepted() const { return accepted_; }
  std::size_t node_count() const { return node_count_; }
  bool node_present(int c) const { return present_[c] != 0; }
  bool node_presented(int c) const { return presented_node_[c] != 0; }
  /// Number of accepted edges touching the constituent.
  int degree(int c) const { return degree_[c]; }
  /// Accepted edges of this category holding the constituent in this slot.
  int role_count(RelationshipCategory cat, std::size_t slot, int c) const;
  /// True if a relationship over the same member set was presented earlier.
  bool tuple_presented(int rel) const;
  /// Union area of the present constituent boxes.
  double coverage() const;

  /// Present constituents in pool order and accepted edges in acceptance order.
  Dpg to_dpg() const;

 private:
  std::uint64_t tuple_key(int rel) const;

  const CandidateSet* pool_;
  std::vector<std::vector<int>> members_;
  std::vector<char> accepted_flag_;
  std::vector<int> accepted_;
  std::vector<char> present_;
  std::vector<char> presented_node_;
  std::vector<int> degree_;
  std::vector<int> roles_;
  std::unordered_set<std::uint64_t> presented_tuples_;
  std::size_t node_count_ = 0;
  mutable double coverage_ = 0.0;
  mutable bool coverage_valid_ = true;
};

}  // namespace dpgkit
