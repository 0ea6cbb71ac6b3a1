#include <doctest.h>

#include <cmath>
#include <numbers>
#include <set>

#include "dpgkit/kde.hpp"
#include "dpgkit/proposals.hpp"
#include "dpgkit/random_forest.hpp"
#include "dpgkit/synthgen.hpp"
#include "test_support.hpp"

using namespace dpgkit;
using dpgkit::testing::node;
using CC = ConstituentCategory;
using RC = RelationshipCategory;

namespace {

double overlap_1d(double a0, double a1, double b0, double b1) { return std::max(0.0, std::min(a1, b1) - std::max(a0, b0)); }

double interval_iou(const Box& a, const Box& b) {
  const double inter = overlap_1d(a.x0, a.x1, b.x0, b.x1) * overlap_1d(a.y0, a.y1, b.y0, b.y1);
  return inter / ((a.x1 - a.x0) * (a.y1 - a.y0) + (b.x1 - b.x0) * (b.y1 - b.y0) - inter);
}

// Offsets within the 24-entry pairwise layout.
constexpr std::size_t kIou0 = 5, kDx = 12, kDy = 13, kDist = 14, kAreaRatio = 17;

}  // namespace

TEST_CASE("geometry matches an interval-overlap oracle") {
  Rng rng(2);
  for (int i = 0; i < 500; ++i) {
    Box a = dpgkit::testing::random_box(rng), b = dpgkit::testing::random_box(rng);
    CHECK(iou(a, b) == doctest::Approx(interval_iou(a, b)).epsilon(1e-12));
  }
  CHECK(union_coverage(std::vector<Box>{{0, 0, 0.5, 0.5}, {0.25, 0.25, 0.75, 0.75}}) == doctest::Approx(0.4375));
}

TEST_CASE("rel_features of coincident boxes") {
  std::vector<Constituent> m{node("t", CC::TextBox, {0.2, 0.2, 0.4, 0.4}), node("b", CC::Blob, {0.2, 0.2, 0.4, 0.4})};
  auto f = rel_features(RC::IntraObjectLabel, m);
  REQUIRE(f.size() == rel_feature_length(2));
  CHECK(f[kDx] == 0.0);
  CHECK(f[kDy] == 0.0);
  CHECK(f[kDist] == 0.0);
  CHECK(f[kIou0] == 1.0);
  CHECK(f[kAreaRatio] == doctest::Approx(1.0));
}

TEST_CASE("rel_features of opposite corners") {
  std::vector<Constituent> m{node("t", CC::TextBox, {0.0, 0.0, 0.2, 0.2}), node("b", CC::Blob, {0.8, 0.8, 1.0, 1.0})};
  auto f = rel_features(RC::IntraObjectLabel, m);
  CHECK(f[kDist] == doctest::Approx(std::sqrt(2.0) * 0.8).epsilon(1e-12));
  CHECK(f[kIou0] == interval_iou(m[0].box, m[1].box));
  CHECK(f[kIou0] == 0.0);
}

TEST_CASE("translation changes only absolute centers") {
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Constituent> m{node("t", CC::TextBox, {0.1, 0.1, 0.2, 0.25}), node("a", CC::ArrowTail, {0.3, 0.2, 0.4, 0.3}),
                               node("b", CC::Blob, {0.5, 0.4, 0.8, 0.7})};
    for (auto& c : m) {
      const double s = rng.uniform(0.0, 0.1);
      c.box = {c.box.x0 + s, c.box.y0, c.box.x1 + s, c.box.y1};
    }
    auto before = rel_features(RC::IntraObjectLinkage, m);
    auto moved = m;
    for (auto& c : moved) c.box = {c.box.x0 + 0.1, c.box.y0 + 0.1, c.box.x1 + 0.1, c.box.y1 + 0.1};
    auto after = rel_features(RC::IntraObjectLinkage, moved);
    REQUIRE(after.size() == 36);
    for (std::size_t i = 0; i < after.size(); ++i) {
      const bool center = i < 18 && (i % 6 == 0 || i % 6 == 1);
      CHECK(after[i] == doctest::Approx(before[i] + (center ? 0.1 : 0.0)).epsilon(1e-9));
    }
  }
}

TEST_CASE("rel_features rejects illegal members") {
  std::vector<Constituent> m{node("b", CC::Blob, {0, 0, 0.1, 0.1}), node("t", CC::TextBox, {0, 0, 0.1, 0.1})};
  CHECK_THROWS_AS(rel_features(RC::IntraObjectLabel, m), DataError);
}

TEST_CASE("forest trained on one class is constant") {
  FeatureTable t(2);
  Rng rng(1);
  for (int i = 0; i < 20; ++i) {
    std::vector<double> x{rng.uniform(), rng.uniform()};
    t.add(x, 1.0);
  }
  auto f = RandomForest::train(t, {});
  CHECK(f.degenerate());
  for (int i = 0; i < 10; ++i) {
    std::vector<double> x{rng.uniform(-5, 5), rng.uniform(-5, 5)};
    CHECK(f.predict(x) == 1.0);
  }
}

TEST_CASE("single tree split matches a hand-traced Gini split") {
  // Feature 0 separates perfectly between 1 and 2 (Gini 0). Feature 1
  // alternates, so its best split leaves Gini 0.5 on one side.
  FeatureTable t(2);
  const double xs[4][2] = {{0, 0}, {1, 1}, {2, 0}, {3, 1}};
  const double ys[4] = {0, 0, 1, 1};
  for (int i = 0; i < 4; ++i) t.add(xs[i], ys[i]);
  ForestParams p;
  p.max_depth = 1;
  p.min_leaf = 1;
  p.features_per_split = 2;
  p.bootstrap = false;
  const std::size_t sample[] = {0, 1, 2, 3};
  auto tree = RandomForest::grow_tree(t, sample, p, 1);
  REQUIRE(tree.nodes().size() == 3);
  CHECK(tree.nodes()[0].feature == 0);
  CHECK(tree.nodes()[0].threshold > 1.0);
  CHECK(tree.nodes()[0].threshold < 2.0);
  const double lo[] = {0.5, 0.0}, hi[] = {2.5, 1.0};
  CHECK(tree.predict(lo) == 0.0);
  CHECK(tree.predict(hi) == 1.0);
}

namespace {

// Best training accuracy of any depth-2 axis-aligned tree, by exhaustive search.
double depth2_oracle(const std::vector<std::array<double, 2>>& x, const std::vector<int>& y) {
  auto thresholds = [&](std::size_t f) {
    std::set<double> v;
    for (const auto& p : x) v.insert(p[f]);
    std::vector<double> out{-1e9};
    for (auto it = v.begin(); std::next(it) != v.end(); ++it) out.push_back(0.5 * (*it + *std::next(it)));
    return out;
  };
  const std::array<std::vector<double>, 2> th{thresholds(0), thresholds(1)};
  auto best_stump = [&](const std::vector<std::size_t>& idx) {
    std::size_t best = 0;
    for (std::size_t f = 0; f < 2; ++f)
      for (double t : th[f]) {
        std::size_t l1 = 0, l0 = 0, r1 = 0, r0 = 0;
        for (auto i : idx) (x[i][f] <= t ? (y[i] ? l1 : l0) : (y[i] ? r1 : r0))++;
        best = std::max(best, std::max(l1, l0) + std::max(r1, r0));
      }
    return best;
  };
  std::size_t best = 0;
  for (std::size_t f = 0; f < 2; ++f)
    for (double t : th[f]) {
      std::vector<std::size_t> l, r;
      for (std::size_t i = 0; i < x.size(); ++i) (x[i][f] <= t ? l : r).push_back(i);
      best = std::max(best, best_stump(l) + best_stump(r));
    }
  return static_cast<double>(best) / x.size();
}

}  // namespace

TEST_CASE("separable blobs are learned") {
  Rng rng(42);
  std::vector<std::array<double, 2>> xs;
  std::vector<int> ys;
  FeatureTable t(2);
  while (xs.size() < 200) {
    std::array<double, 2> p{rng.uniform(), rng.uniform()};
    const double s = p[0] + p[1];
    if (std::abs(s - 1.0) / std::sqrt(2.0) < 0.1) continue;  // 0.2-wide gap across the diagonal
    xs.push_back(p);
    ys.push_back(s > 1.0);
    t.add(p, ys.back());
  }
  auto f = RandomForest::train(t, {});
  int correct = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) correct += (f.predict(xs[i]) > 0.5) == (ys[i] == 1);
  const double acc = correct / 200.0;
  CHECK(acc >= 0.95);
  CHECK(acc >= depth2_oracle(xs, ys));
  for (std::size_t i = 0; i < 20; ++i) {
    const double p = f.predict(xs[i]);
    CHECK(p >= 0.0);
    CHECK(p <= 1.0);
  }
}

TEST_CASE("forest is deterministic and survives JSON") {
  FeatureTable t(3);
  Rng rng(8);
  for (int i = 0; i < 60; ++i) {
    std::vector<double> x{rng.uniform(), rng.uniform(), rng.uniform()};
    t.add(x, x[0] + 0.3 * x[2] > 0.6);
  }
  ForestParams p;
  p.n_trees = 10;
  auto a = RandomForest::train(t, p), b = RandomForest::train(t, p);
  auto c = RandomForest::from_json(a.to_json());
  for (std::size_t i = 0; i < t.rows(); ++i) {
    CHECK(a.predict(t.row(i)) == b.predict(t.row(i)));
    CHECK(a.predict(t.row(i)) == c.predict(t.row(i)));
  }
}

TEST_CASE("regression forest fits a step") {
  FeatureTable t(1);
  for (int i = 0; i < 100; ++i) {
    const double x = i / 100.0;
    const double row[] = {x};
    t.add(row, x < 0.5 ? 0.2 : 0.8);
  }
  ForestParams p;
  p.task = ForestTask::Regression;
  p.n_trees = 20;
  auto f = RandomForest::train(t, p);
  const double lo[] = {0.1}, hi[] = {0.9};
  CHECK(f.predict(lo) == doctest::Approx(0.2).epsilon(0.05));
  CHECK(f.predict(hi) == doctest::Approx(0.8).epsilon(0.05));
}

TEST_CASE("KDE closed forms") {
  auto k = Kde2D::fit({{0.5, 0.5}}, Point2{0.1, 0.1});
  const double peak = 1.0 / (2.0 * std::numbers::pi * 0.01);
  CHECK(k.eval({0.5, 0.5}) == doctest::Approx(peak).epsilon(1e-12));
  CHECK(peak == doctest::Approx(15.9155).epsilon(1e-5));
  CHECK(k.eval({0.5 + 1.0, 0.5}) < 1e-15 * peak);
  CHECK(k.eval({0.3, 0.9}) >= 0.0);
}

TEST_CASE("KDE bandwidth: Scott's rule and the floor") {
  std::vector<Point2> pts{{0.2, 0.5}, {0.4, 0.5}, {0.6, 0.5}, {0.8, 0.5}};
  auto k = Kde2D::fit(pts);
  double mean = 0.5, var = 0.0;
  for (auto& p : pts) var += (p.x - mean) * (p.x - mean);
  const double sd_pop = std::sqrt(var / 4.0), sd_sample = std::sqrt(var / 3.0);
  const double scale = std::pow(4.0, -1.0 / 6.0);
  // Either standard deviation convention is a valid reading of the rule; the
  // implementation must use one of them.
  const double hx = k.bandwidth().x;
  CHECK((hx == doctest::Approx(scale * sd_sample) || hx == doctest::Approx(scale * sd_pop)));
  CHECK(k.bandwidth().y == Kde2D::kBandwidthFloor);
}

TEST_CASE("KDE integrates to one") {
  Rng rng(4);
  std::vector<Point2> pts;
  for (int i = 0; i < 50; ++i) pts.push_back({rng.uniform(0.25, 0.75), rng.uniform(0.25, 0.75)});
  auto k = Kde2D::fit(pts);
  double sum = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) sum += k.eval({rng.uniform(), rng.uniform()});
  const double integral = sum / n;
  CHECK(integral >= 0.97);
  CHECK(integral <= 1.03);
}

namespace {

using TupleKey = std::pair<int, std::vector<int>>;

// Independent enumerator: every ordered tuple of distinct indices whose
// categories fit the signature and whose pairwise center distances are <= r.
std::set<TupleKey> brute_tuples(const std::vector<Constituent>& cs, double r) {
  std::set<TupleKey> out;
  const int n = static_cast<int>(cs.size());
  auto dist = [&](int a, int b) { return std::hypot(cs[a].box.cx() - cs[b].box.cx(), cs[a].box.cy() - cs[b].box.cy()); };
  for (auto cat : kAllRelationshipCategories) {
    const int ci = category_index(cat);
    if (ci >= 6) {
      for (int i = 0; i < n; ++i)
        if (cs[i].category == CC::TextBox) out.insert({ci, {i}});
      continue;
    }
    const auto sig = arity(cat);
    const int m = static_cast<int>(sig.size());
    int total = 1;
    for (int k = 0; k < m; ++k) total *= n;
    for (int code = 0; code < total; ++code) {
      std::vector<int> t(m);
      int c = code;
      for (int k = 0; k < m; ++k, c /= n) t[k] = c % n;
      bool ok = true;
      for (int a = 0; a < m && ok; ++a) {
        ok = cs[t[a]].category == *sig[a];
        for (int b = 0; b < a && ok; ++b) ok = t[a] != t[b] && dist(t[a], t[b]) <= r;
      }
      if (ok) out.insert({ci, t});
    }
  }
  return out;
}

std::set<TupleKey> as_set(const std::vector<TupleCandidate>& ts) {
  std::set<TupleKey> out;
  for (const auto& t : ts) out.insert({category_index(t.category), t.members});
  return out;
}

}  // namespace

TEST_CASE("one blob and one text box") {
  std::vector<Constituent> cs{node("b", CC::Blob, {0.1, 0.1, 0.3, 0.3}), node("t", CC::TextBox, {0.3, 0.3, 0.4, 0.35})};
  auto ts = enumerate_tuples(cs, 0.5);
  std::multiset<int> cats;
  for (const auto& t : ts) cats.insert(category_index(t.category) + 1);
  CHECK(cats == std::multiset<int>{1, 2, 7, 8, 9, 10});
}

TEST_CASE("linkage needs every pairwise distance within the radius") {
  std::vector<Constituent> cs{node("b1", CC::Blob, {0.0, 0.45, 0.1, 0.55}), node("a", CC::ArrowTail, {0.45, 0.45, 0.55, 0.55}),
                              node("b2", CC::Blob, {0.9, 0.45, 1.0, 0.55})};
  for (const auto& t : enumerate_tuples(cs, 0.5)) CHECK(t.category != RC::InterObjectLinkage);
  int r4 = 0;
  for (const auto& t : enumerate_tuples(cs, 0.9)) r4 += t.category == RC::InterObjectLinkage;
  CHECK(r4 == 2);
}

TEST_CASE("enumeration equals brute force and is monotone in the radius") {
  int checked = 0;
  for (std::uint64_t seed = 1; seed <= 12; ++seed) {
    auto tmpl = SceneTemplate::of(static_cast<TemplateKind>(seed % 3));
    tmpl.max_objects = 4;
    const auto d = gen_diagram(tmpl, NoiseConfig::preset("default"), seed);
    const auto& cs = d.candidates.constituents;
    if (cs.size() > 30) continue;
    ++checked;
    std::set<TupleKey> prev;
    for (double r : {0.1, 0.3, 0.5, 0.8, std::sqrt(2.0)}) {
      auto got = as_set(enumerate_tuples(cs, r));
      CHECK(got == brute_tuples(cs, r));
      CHECK(std::includes(got.begin(), got.end(), prev.begin(), prev.end()));
      prev = got;
    }
  }
  CHECK(checked >= 3);
}

TEST_CASE("trained proposals score, sort and cover every tuple") {
  CorpusConfig cfg;
  cfg.n_train = 20;
  cfg.n_test = 1;
  auto corpus = generate_corpus(cfg);
  std::vector<ProposalExample> ex;
  for (const auto& d : corpus.train) ex.push_back({d.candidates.constituents, d.truth});
  ProposalTrainingConfig tc;
  tc.forest.n_trees = 10;
  auto models = train_proposals(ex, tc);
  auto again = ProposalModels::from_json(models.to_json());

  const auto& cs = corpus.train[0].candidates.constituents;
  auto set = propose_relationships(cs, 0.5, models);
  CHECK(set.relationships.size() == enumerate_tuples(cs, 0.5).size());
  for (std::size_t i = 0; i < set.relationships.size(); ++i) {
    CHECK(set.relationships[i].id == "p" + std::to_string(i));
    CHECK(set.relationships[i].score >= 0.0);
    CHECK(set.relationships[i].score <= 1.0);
    if (i > 0) CHECK(set.relationships[i - 1].score >= set.relationships[i].score);
  }
  CHECK(propose_relationships(cs, 0.5, again) == set);
  CHECK(propose_relationships({}, 0.5, models).relationships.empty());
}
