#include "dpgkit/proposals.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <unordered_map>

#include "dpgkit/metrics.hpp"
#include "dpgkit/util.hpp"

namespace dpgkit {

using nlohmann::json;

std::vector<double> rel_features(RelationshipCategory category, std::span<const Constituent> members) {
  const auto sig = arity(category);
  if (members.size() != sig.size())
    throw DataError(std::string(to_string(category)) + " expects " + std::to_string(sig.size()) + " members");
  for (std::size_t k = 0; k < sig.size(); ++k)
    if (sig[k] && *sig[k] != members[k].category)
      throw DataError(std::string(to_string(category)) + " member " + std::to_string(k) + " has the wrong category");
  if (members.size() < 2) throw DataError("spatial features need at least two members");

  const std::size_t m = members.size();
  std::vector<double> f;
  f.reserve(rel_feature_length(m));
  for (std::size_t i = 0; i < m; ++i) {
    const Box& b = members[i].box;
    double best = 0.0;
    for (std::size_t j = 0; j < m; ++j)
      if (j != i) best = std::max(best, iou(b, members[j].box));
    f.insert(f.end(), {b.cx(), b.cy(), b.width(), b.height(), members[i].score, best});
  }
  for (std::size_t i = 0; i < m; ++i) {
    const Box& a = members[i].box;
    const Box& b = members[(i + 1) % m].box;
    const double dx = b.cx() - a.cx(), dy = b.cy() - a.cy();
    const double dist = std::hypot(dx, dy);
    const double s = dist > 0.0 ? dy / dist : 0.0;
    const double c = dist > 0.0 ? dx / dist : 0.0;
    f.insert(f.end(), {dx, dy, dist, s, c, a.area() / b.area()});
  }
  return f;
}

std::vector<TupleCandidate> enumerate_tuples(std::span<const Constituent> constituents, double radius) {
  std::vector<TupleCandidate> out;
  const int n = static_cast<int>(constituents.size());
  auto near = [&](int a, int b) { return center_distance(constituents[a].box, constituents[b].box) <= radius; };
  std::array<std::vector<int>, kNumConstituentCategories> by_cat;
  for (int i = 0; i < n; ++i) by_cat[category_index(constituents[i].category)].push_back(i);

  for (auto cat : kAllRelationshipCategories) {
    if (is_canvas_relation(cat)) continue;
    const auto sig = arity(cat);
    // Slots are typed for R1..R6, so iterate the per-category lists.
    std::vector<int> tuple(sig.size());
    auto recurse = [&](auto&& self, std::size_t slot) -> void {
      if (slot == sig.size()) {
        out.push_back({cat, tuple});
        return;
      }
      for (int idx : by_cat[category_index(*sig[slot])]) {
        if (std::find(tuple.begin(), tuple.begin() + static_cast<long>(slot), idx) != tuple.begin() + static_cast<long>(slot))
          continue;
        bool ok = true;
        for (std::size_t k = 0; k < slot && ok; ++k) ok = near(tuple[k], idx);
        if (!ok) continue;
        tuple[slot] = idx;
        self(self, slot + 1);
      }
    };
    recurse(recurse, 0);
  }
  for (auto cat : {RelationshipCategory::ImageTitle, RelationshipCategory::ImageSectionTitle,
                   RelationshipCategory::ImageCaption, RelationshipCategory::ImageMisc})
    for (int idx : by_cat[category_index(ConstituentCategory::TextBox)]) out.push_back({cat, {idx}});
  return out;
}

namespace {

std::vector<Constituent> gather(std::span<const Constituent> all, const std::vector<int>& idx) {
  std::vector<Constituent> out;
  for (int i : idx) out.push_back(all[i]);
  return out;
}

}  // namespace

CandidateSet propose_relationships(std::span<const Constituent> constituents, double radius,
                                   const ProposalModels& models) {
  if (!(radius > 0.0 && radius <= std::sqrt(2.0) + 1e-12)) throw std::invalid_argument("radius must be in (0, sqrt 2]");
  const auto tuples = enumerate_tuples(constituents, radius);
  struct Scored {
    double score;
    std::size_t order;
    Relationship rel;
  };
  std::vector<Scored> scored;
  for (std::size_t t = 0; t < tuples.size(); ++t) {
    const auto& tc = tuples[t];
    double score = 0.0;
    if (is_canvas_relation(tc.category)) {
      auto k = models.kdes.find(tc.category);
      if (k == models.kdes.end()) continue;
      const Box& b = constituents[tc.members[0]].box;
      const double peak = models.kde_peaks.at(tc.category);
      score = peak > 0.0 ? std::clamp(k->second.eval({b.cx(), b.cy()}) / peak, 0.0, 1.0) : 0.0;
    } else {
      auto f = models.forests.find(tc.category);
      if (f != models.forests.end()) {
        score = f->second.predict(rel_features(tc.category, gather(constituents, tc.members)));
      } else {
        score = 1.0;
        for (int i : tc.members) score *= constituents[i].score;
      }
    }
    Relationship r;
    r.category = tc.category;
    for (int i : tc.members) r.members.push_back(constituents[i].id);
    r.score = std::clamp(score, 0.0, 1.0);
    scored.push_back({r.score, t, std::move(r)});
  }
  std::sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) {
    return a.score != b.score ? a.score > b.score : a.order < b.order;
  });
  CandidateSet out;
  out.constituents.assign(constituents.begin(), constituents.end());
  out.provenance = "proposed";
  for (std::size_t i = 0; i < scored.size(); ++i) {
    scored[i].rel.id = "p" + std::to_string(i);
    out.relationships.push_back(std::move(scored[i].rel));
  }
  return out;
}

ProposalModels train_proposals(std::span<const ProposalExample> corpus, const ProposalTrainingConfig& cfg) {
  ProposalModels models;
  models.radius = cfg.radius;
  std::map<RelationshipCategory, std::vector<std::pair<std::vector<double>, double>>> rows;
  std::map<RelationshipCategory, std::vector<Point2>> centers;

  for (const auto& ex : corpus) {
    const Dpg detections = make_dpg(ex.constituents, {});
    std::unordered_map<std::string, std::string> to_truth;
    for (const auto& [p, t] : match_nodes(detections, ex.truth)) to_truth.emplace(p, t);
    std::set<std::pair<RelationshipCategory, std::vector<std::string>>> truth_edges;
    for (const auto& e : ex.truth.edges()) {
      truth_edges.emplace(e.category, e.members);
      if (is_canvas_relation(e.category)) {
        const Box& b = ex.truth.find_node(e.members[0])->box;
        centers[e.category].push_back({b.cx(), b.cy()});
      }
    }
    for (const auto& tc : enumerate_tuples(ex.constituents, cfg.radius)) {
      if (is_canvas_relation(tc.category)) continue;
      std::vector<std::string> mapped;
      for (int i : tc.members) {
        auto it = to_truth.find(ex.constituents[i].id);
        if (it == to_truth.end()) break;
        mapped.push_back(it->second);
      }
      const bool positive = mapped.size() == tc.members.size() && truth_edges.count({tc.category, mapped}) > 0;
      rows[tc.category].emplace_back(rel_features(tc.category, gather(ex.constituents, tc.members)),
                                     positive ? 1.0 : 0.0);
    }
  }

  Rng rng(cfg.seed);
  for (auto& [cat, data] : rows) {
    if (data.size() < 2) continue;
    // Keep every positive (up to the cap) and subsample negatives.
    std::vector<std::size_t> pos, neg;
    for (std::size_t i = 0; i < data.size(); ++i) (data[i].second > 0.5 ? pos : neg).push_back(i);
    std::shuffle(neg.begin(), neg.end(), rng.engine());
    std::shuffle(pos.begin(), pos.end(), rng.engine());
    const std::size_t cap = cfg.max_rows_per_category;
    if (pos.size() > cap / 2) pos.resize(cap / 2);
    if (neg.size() + pos.size() > cap) neg.resize(cap - pos.size());
    std::vector<std::size_t> keep = pos;
    keep.insert(keep.end(), neg.begin(), neg.end());
    std::sort(keep.begin(), keep.end());
    FeatureTable table(data.front().first.size());
    for (auto i : keep) table.add(data[i].first, data[i].second);
    if (table.rows() < 2) continue;
    ForestParams p = cfg.forest;
    p.task = ForestTask::Classification;
    p.seed = hash_combine(cfg.seed, static_cast<std::uint64_t>(category_index(cat)));
    models.forests.emplace(cat, RandomForest::train(table, p));
  }
  for (auto& [cat, pts] : centers) {
    Kde2D k = Kde2D::fit(pts);
    models.kde_peaks[cat] = k.grid_peak(64);
    models.kdes.emplace(cat, std::move(k));
  }
  return models;
}

json ProposalModels::to_json() const {
  json j;
  j["format"] = "dpgkit-proposals";
  j["version"] = 1;
  j["radius"] = radius;
  j["forests"] = json::object();
  for (const auto& [cat, f] : forests) j["forests"][std::string(to_string(cat))] = f.to_json();
  j["kdes"] = json::object();
  for (const auto& [cat, k] : kdes) {
    json kj = k.to_json();
    kj["peak"] = kde_peaks.at(cat);
    j["kdes"][std::string(to_string(cat))] = std::move(kj);
  }
  return j;
}

ProposalModels ProposalModels::from_json(const json& j) {
  if (j.value("format", "") != "dpgkit-proposals" || j.value("version", 0) != 1)
    throw DataError("not a version-1 dpgkit proposal model");
  ProposalModels m;
  m.radius = j.at("radius").get<double>();
  for (const auto& [name, fj] : j.at("forests").items()) {
    auto cat = parse_relationship_category(name);
    if (!cat) throw DataError("unknown category " + name);
    m.forests.emplace(*cat, RandomForest::from_json(fj));
  }
  for (const auto& [name, kj] : j.at("kdes").items()) {
    auto cat = parse_relationship_category(name);
    if (!cat) throw DataError("unknown category " + name);
    m.kdes.emplace(*cat, Kde2D::from_json(kj));
    m.kde_peaks[*cat] = kj.at("peak").get<double>();
  }
  return m;
}

}  // namespace dpgkit
