#include "dpgkit/metrics.hpp"

#include <algorithm>
#include <tuple>
#include <unordered_map>

namespace dpgkit {

namespace {

struct ScoredPair {
  int p;
  int t;
  double overlap;
};

// Pairs above threshold in acceptance order.
std::vector<ScoredPair> ranked_pairs(const std::vector<Constituent>& proposed,
                                     const std::vector<Constituent>& truth, const MatchConfig& cfg) {
  std::vector<ScoredPair> pairs;
  for (std::size_t i = 0; i < proposed.size(); ++i) {
    for (std::size_t j = 0; j < truth.size(); ++j) {
      if (cfg.require_category_match && proposed[i].category != truth[j].category) continue;
      const double v = iou(proposed[i].box, truth[j].box);
      if (v >= cfg.iou_threshold && v > 0.0)
        pairs.push_back({static_cast<int>(i), static_cast<int>(j), v});
    }
  }
  std::sort(pairs.begin(), pairs.end(), [&](const ScoredPair& a, const ScoredPair& b) {
    if (a.overlap != b.overlap) return a.overlap > b.overlap;
    return std::tie(proposed[a.p].id, truth[a.t].id) < std::tie(proposed[b.p].id, truth[b.t].id);
  });
  return pairs;
}

double ratio(std::size_t inter, std::size_t uni) {
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace

std::uint64_t edge_key(int category, std::span<const int> member_indices) {
  std::uint64_t key = static_cast<std::uint64_t>(category) & 0xF;
  for (int m : member_indices) key = (key << 16) | (static_cast<std::uint64_t>(m + 1) & 0xFFFF);
  return key;
}

JigScore make_jig_score(std::size_t node_inter, std::size_t n_proposed, std::size_t n_truth,
                        std::size_t edge_inter, std::size_t e_proposed, std::size_t e_truth) {
  JigScore s;
  s.node_intersection = node_inter;
  s.node_union = n_proposed + n_truth - node_inter;
  s.edge_intersection = edge_inter;
  s.edge_union = e_proposed + e_truth - edge_inter;
  s.node_jaccard = ratio(s.node_intersection, s.node_union);
  s.edge_jaccard = ratio(s.edge_intersection, s.edge_union);
  s.combined = ratio(s.node_intersection + s.edge_intersection, s.node_union + s.edge_union);
  return s;
}

NodeMatching match_nodes(const Dpg& proposed, const Dpg& truth, const MatchConfig& cfg) {
  const auto& pn = proposed.nodes();
  const auto& tn = truth.nodes();
  std::vector<char> p_used(pn.size(), 0), t_used(tn.size(), 0);
  NodeMatching out;
  for (const auto& pair : ranked_pairs(pn, tn, cfg)) {
    if (p_used[pair.p] || t_used[pair.t]) continue;
    p_used[pair.p] = t_used[pair.t] = 1;
    out.emplace_back(pn[pair.p].id, tn[pair.t].id);
  }
  return out;
}

JigScore jig(const Dpg& proposed, const Dpg& truth, const MatchConfig& cfg) {
  const NodeMatching matching = match_nodes(proposed, truth, cfg);
  std::unordered_map<std::string, std::string> to_truth;
  for (const auto& [p, t] : matching) to_truth.emplace(p, t);

  std::unordered_set<std::string> truth_edges;
  auto key = [](RelationshipCategory c, const std::vector<std::string>& members) {
    std::string k{to_string(c)};
    for (const auto& m : members) {
      k.push_back('\x1f');
      k += m;
    }
    return k;
  };
  for (const auto& e : truth.edges()) truth_edges.insert(key(e.category, e.members));

  std::size_t edge_inter = 0;
  for (const auto& e : proposed.edges()) {
    std::vector<std::string> mapped;
    bool complete = true;
    for (const auto& m : e.members) {
      auto it = to_truth.find(m);
      if (it == to_truth.end()) {
        complete = false;
        break;
      }
      mapped.push_back(it->second);
    }
    if (complete && truth_edges.count(key(e.category, mapped))) ++edge_inter;
  }
  return make_jig_score(matching.size(), proposed.nodes().size(), truth.nodes().size(), edge_inter,
                        proposed.edges().size(), truth.edges().size());
}

JigEvaluator::JigEvaluator(const CandidateSet& pool, const Dpg& truth, const MatchConfig& cfg)
    : n_constituents_(pool.constituents.size()),
      n_truth_nodes_(truth.nodes().size()),
      n_truth_edges_(truth.edges().size()) {
  for (const auto& p : ranked_pairs(pool.constituents, truth.nodes(), cfg)) ranked_pairs_.push_back({p.p, p.t});

  std::unordered_map<std::string, int> pool_index;
  for (std::size_t i = 0; i < pool.constituents.size(); ++i)
    pool_index.emplace(pool.constituents[i].id, static_cast<int>(i));
  for (const auto& r : pool.relationships) {
    std::vector<int> idx;
    for (const auto& m : r.members) {
      auto it = pool_index.find(m);
      if (it == pool_index.end()) throw DataError("relationship " + r.id + " references unknown " + m);
      idx.push_back(it->second);
    }
    members_.push_back(std::move(idx));
    categories_.push_back(category_index(r.category));
  }
  for (const auto& e : truth.edges()) {
    std::vector<int> idx;
    for (const auto& m : e.members) idx.push_back(truth.node_index(m));
    truth_edges_.insert(edge_key(category_index(e.category), idx));
  }
}

JigScore JigEvaluator::score(std::span<const int> relationship_indices) const {
  std::vector<char> present(n_constituents_, 0);
  std::size_t n_nodes = 0;
  for (int r : relationship_indices)
    for (int m : members_[r])
      if (!present[m]) {
        present[m] = 1;
        ++n_nodes;
      }

  std::vector<int> to_truth(n_constituents_, -1);
  std::vector<char> t_used(n_truth_nodes_, 0);
  std::size_t matched = 0;
  for (const Pair& pr : ranked_pairs_) {
    if (!present[pr.proposed] || to_truth[pr.proposed] >= 0 || t_used[pr.truth]) continue;
    to_truth[pr.proposed] = pr.truth;
    t_used[pr.truth] = 1;
    ++matched;
  }

  // Distinct relationships only; a repeated index is one edge.
  std::vector<int> uniq(relationship_indices.begin(), relationship_indices.end());
  std::sort(uniq.begin(), uniq.end());
  uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());

  std::size_t edge_inter = 0;
  std::vector<int> mapped;
  for (int r : uniq) {
    mapped.clear();
    bool complete = true;
    for (int m : members_[r]) {
      if (to_truth[m] < 0) {
        complete = false;
        break;
      }
      mapped.push_back(to_truth[m]);
    }
    if (complete && truth_edges_.count(edge_key(categories_[r], mapped))) ++edge_inter;
  }
  return make_jig_score(matched, n_nodes, n_truth_nodes_, edge_inter, uniq.size(), n_truth_edges_);
}

}  // namespace dpgkit
