#include "dpgkit/parse_state.hpp"

#include <algorithm>
#include <unordered_map>

#include "dpgkit/metrics.hpp"

namespace dpgkit {

namespace {
constexpr int kMaxSlots = 3;
}

ParseState::ParseState(const CandidateSet& pool) : pool_(&pool) {
  std::unordered_map<std::string, int> index;
  for (std::size_t i = 0; i < pool.constituents.size(); ++i) index.emplace(pool.constituents[i].id, static_cast<int>(i));
  for (const auto& r : pool.relationships) {
    std::vector<int> m;
    for (const auto& id : r.members) {
      auto it = index.find(id);
      if (it == index.end()) throw DataError("relationship " + r.id + " references unknown constituent " + id);
      m.push_back(it->second);
    }
    members_.push_back(std::move(m));
  }
  const std::size_t n = pool.constituents.size();
  accepted_flag_.assign(members_.size(), 0);
  present_.assign(n, 0);
  presented_node_.assign(n, 0);
  degree_.assign(n, 0);
  roles_.assign(n * kNumRelationshipCategories * kMaxSlots, 0);
}

void ParseState::accept(int rel) {
  if (accepted_flag_[rel]) return;
  accepted_flag_[rel] = 1;
  accepted_.push_back(rel);
  const auto cat = category_index(relationship(rel).category);
  const auto& m = members_[rel];
  for (std::size_t k = 0; k < m.size(); ++k) {
    const int c = m[k];
    if (!present_[c]) {
      present_[c] = 1;
      ++node_count_;
      coverage_valid_ = false;
    }
    ++degree_[c];
    ++roles_[(static_cast<std::size_t>(c) * kNumRelationshipCategories + cat) * kMaxSlots + k];
  }
}

void ParseState::mark_presented(int rel) {
  for (int c : members_[rel]) presented_node_[c] = 1;
  presented_tuples_.insert(tuple_key(rel));
}

int ParseState::role_count(RelationshipCategory cat, std::size_t slot, int c) const {
  return roles_[(static_cast<std::size_t>(c) * kNumRelationshipCategories + category_index(cat)) * kMaxSlots + slot];
}

std::uint64_t ParseState::tuple_key(int rel) const {
  std::vector<int> m = members_[rel];
  std::sort(m.begin(), m.end());
  return edge_key(0, m);
}

bool ParseState::tuple_presented(int rel) const { return presented_tuples_.count(tuple_key(rel)) > 0; }

double ParseState::coverage() const {
  if (!coverage_valid_) {
    std::vector<Box> boxes;
    for (std::size_t c = 0; c < present_.size(); ++c)
      if (present_[c]) boxes.push_back(pool_->constituents[c].box);
    coverage_ = union_coverage(boxes);
    coverage_valid_ = true;
  }
  return coverage_;
}

Dpg ParseState::to_dpg() const {
  std::vector<Constituent> nodes;
  for (std::size_t c = 0; c < present_.size(); ++c)
    if (present_[c]) nodes.push_back(pool_->constituents[c]);
  std::vector<Relationship> edges;
  for (int r : accepted_) edges.push_back(pool_->relationships[r]);
  return make_dpg(std::move(nodes), std::move(edges));
}

}  // namespace dpgkit
