#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "dpgkit/metrics.hpp"
#include "dpgkit/search.hpp"
#include "dpgkit/synthgen.hpp"
#include "test_support.hpp"

using namespace dpgkit;
using dpgkit::testing::edge;
using dpgkit::testing::node;
using CC = ConstituentCategory;
using RC = RelationshipCategory;

namespace {

struct Instance {
  Dpg truth;
  CandidateSet pool;
};

// Three labeled blobs; the pool holds the three true R1 edges and three
// wrong pairings, with random scores.
Instance six_candidates(std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Constituent> nodes;
  std::vector<Relationship> edges;
  for (int i = 0; i < 3; ++i) {
    const double x = 0.05 + 0.3 * i;
    nodes.push_back(node("b" + std::to_string(i), CC::Blob, {x, 0.2, x + 0.2, 0.4}));
    nodes.push_back(node("t" + std::to_string(i), CC::TextBox, {x, 0.5, x + 0.2, 0.6}));
    edges.push_back(edge("r" + std::to_string(i), RC::IntraObjectLabel, {"t" + std::to_string(i), "b" + std::to_string(i)}));
  }
  Instance inst{make_dpg(nodes, edges), {}};
  inst.pool.constituents = nodes;
  for (int i = 0; i < 3; ++i) {
    inst.pool.relationships.push_back(edge("c" + std::to_string(i), RC::IntraObjectLabel,
                                           {"t" + std::to_string(i), "b" + std::to_string(i)}, rng.uniform()));
    inst.pool.relationships.push_back(edge("w" + std::to_string(i), RC::IntraObjectLabel,
                                           {"t" + std::to_string(i), "b" + std::to_string((i + 1) % 3)}, rng.uniform()));
  }
  return inst;
}

ExitFn jig_exit(const JigEvaluator& ev) {
  return [&ev](const ParseState& s) { return ev.score(s.accepted()).combined; };
}

RankFn score_rank() {
  return [](const ParseState& s, int rel) { return s.relationship(rel).score; };
}

// Cheapest accumulated cost over every add order that first reaches the goal
// at its last step.
double exhaustive_best(const CandidateSet& pool, const RankFn& rank, const ExitFn& exit, double lambda, double threshold) {
  double best = std::numeric_limits<double>::infinity();
  std::vector<int> path;
  std::function<void(const ParseState&, double)> dfs = [&](const ParseState& s, double cost) {
    if (exit(s) >= threshold) {
      best = std::min(best, cost);
      return;
    }
    for (int r = 0; r < static_cast<int>(pool.relationships.size()); ++r) {
      if (s.is_accepted(r)) continue;
      ParseState next = s;
      next.accept(r);
      dfs(next, cost + step_cost(s, next, r, rank, exit, lambda));
    }
  };
  dfs(ParseState(pool), 0.0);
  return best;
}

}  // namespace

TEST_CASE("greedy with constant exit models") {
  auto inst = six_candidates(1);
  CHECK(greedy_parse(inst.pool, [](const ParseState&) { return 1.0; }).graph.empty());
  auto all = greedy_parse(inst.pool, [](const ParseState&) { return 0.0; });
  CHECK(all.graph.edges().size() == 6);
  CHECK(all.added == score_order(inst.pool));
}

TEST_CASE("greedy follows the hand-simulated trace") {
  // Pool order c0 w0 c1 w1 c2 w2 with scores 0.9 down to 0.4. Truth has six
  // nodes and three edges, so the exit score (true JIG) of each state is
  //   {}                 0
  //   {c0}               3/9
  //   {c0 w0}            4/10
  //   {c0 w0 c1}         6/10
  //   {c0 w0 c1 w1}      7/11
  //   {c0 w0 c1 w1 c2}   9/11 >= 0.8, stop
  CandidateSet pool = six_candidates(1).pool;
  const double scores[] = {0.9, 0.8, 0.7, 0.6, 0.5, 0.4};
  for (int i = 0; i < 6; ++i) pool.relationships[i].score = scores[i];
  Dpg truth = six_candidates(1).truth;
  JigEvaluator ev(pool, truth);
  auto exit = jig_exit(ev);

  const std::vector<int> expected{0, 1, 2, 3, 4};
  CHECK(ev.score(expected).combined == doctest::Approx(9.0 / 11.0));
  auto res = greedy_parse(pool, exit, 0.8);
  CHECK(res.added == expected);
  CHECK(jig(res.graph, truth).combined == ev.score(expected).combined);
}

TEST_CASE("best-first with lambda 1 and beam 1 reproduces greedy") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    auto inst = six_candidates(seed);
    JigEvaluator ev(inst.pool, inst.truth);
    AStarConfig cfg;
    cfg.lambda = 1.0;
    cfg.beam = 1;
    cfg.threshold = 0.9;
    auto a = astar_parse(inst.pool, score_rank(), jig_exit(ev), cfg);
    auto g = greedy_parse(inst.pool, jig_exit(ev), 0.9);
    CHECK(a.added == g.added);
    CHECK(a.graph == g.graph);
  }
}

TEST_CASE("best-first against exhaustive enumeration of add orders") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    auto inst = six_candidates(seed);
    JigEvaluator ev(inst.pool, inst.truth);
    auto exit = jig_exit(ev);
    auto rank = score_rank();
    const double threshold = 0.99;
    for (double lambda : {0.0, 0.5, 1.0}) {
      const double best = exhaustive_best(inst.pool, rank, exit, lambda, threshold);
      AStarConfig wide;
      wide.lambda = lambda;
      wide.beam = 100000;
      wide.threshold = threshold;
      auto exact = astar_parse(inst.pool, rank, exit, wide);
      CHECK(exact.cost == doctest::Approx(best).epsilon(1e-12));
      CHECK(exact.cost == doctest::Approx(path_cost(inst.pool, exact.added, rank, exit, lambda)).epsilon(1e-12));

      AStarConfig beam = wide;
      beam.beam = 50;
      auto a = astar_parse(inst.pool, rank, exit, beam);
      auto g = greedy_parse(inst.pool, exit, threshold);
      CHECK(exit(ParseState(inst.pool)) < threshold);
      CHECK(path_cost(inst.pool, a.added, rank, exit, lambda) <= path_cost(inst.pool, g.added, rank, exit, lambda) + 1e-12);
    }
  }
}

TEST_CASE("empty candidates") {
  CandidateSet empty;
  auto zero = [](const ParseState&) { return 0.0; };
  CHECK(greedy_parse(empty, zero).graph.empty());
  CHECK(astar_parse(empty, score_rank(), zero).graph.empty());
}

TEST_CASE("exit features are finite and non-negative") {
  auto d = gen_diagram(SceneTemplate::food_web(), NoiseConfig::preset("default"), 4);
  ParseState s(d.candidates);
  for (int r : score_order(d.candidates)) {
    s.accept(r);
    for (double v : exit_features(s)) {
      CHECK(std::isfinite(v));
      CHECK(v >= 0.0);
    }
  }
  CHECK(exit_features(ParseState(d.candidates))[4] == 0.0);
}

namespace {

std::vector<ParserExample> examples(const std::vector<GeneratedDiagram>& ds) {
  std::vector<ParserExample> out;
  for (const auto& d : ds) out.push_back({d.candidates, d.truth});
  return out;
}

}  // namespace

TEST_CASE("exit model tracks the true JIG of held-out partials") {
  CorpusConfig cc;
  cc.n_train = 40;
  cc.n_test = 10;
  auto corpus = generate_corpus(cc);
  auto train = examples(corpus.train);
  SearchTrainConfig cfg;
  cfg.forest.n_trees = 30;
  auto exit = train_exit_model(train, cfg);

  // Held-out partials: truth-matching candidates kept at rate 1 - r.
  Rng rng(99);
  double abs_err = 0.0, complete = 0.0, empty = 0.0;
  int n = 0;
  for (const auto& d : corpus.test) {
    JigEvaluator ev(d.candidates, d.truth);
    std::vector<int> matching;
    for (int r = 0; r < static_cast<int>(d.candidates.relationships.size()); ++r) {
      const int one[] = {r};
      if (ev.score(one).edge_intersection == 1) matching.push_back(r);
    }
    for (double rate : {0.0, 0.25, 0.5, 0.75, 1.0}) {
      ParseState s(d.candidates);
      for (int r : matching)
        if (!rng.bernoulli(rate)) s.accept(r);
      abs_err += std::abs(exit.score(s) - ev.score(s.accepted()).combined);
      ++n;
      if (rate == 0.0) complete += exit.score(s);
      if (rate == 1.0) empty += exit.score(s);
    }
  }
  MESSAGE("held-out exit MAE " << abs_err / n);
  CHECK(abs_err / n < 0.15);
  CHECK(complete / corpus.test.size() > 0.75);
  CHECK(empty / corpus.test.size() < 0.25);
}

TEST_CASE("trained search models round trip and parse deterministically") {
  CorpusConfig cc;
  cc.n_train = 16;
  cc.n_test = 2;
  auto corpus = generate_corpus(cc);
  auto train = examples(corpus.train);
  SearchTrainConfig cfg;
  cfg.forest.n_trees = 10;
  cfg.search_aware_rounds = 1;
  cfg.threshold_grid = {0.4, 0.6, 0.8};
  auto m = train_search_models(train, cfg);
  auto again = SearchModels::from_json(m.to_json());
  CHECK(again.greedy_threshold == m.greedy_threshold);
  CHECK(again.astar_threshold == m.astar_threshold);
  for (const auto& d : corpus.test) {
    AStarConfig ac;
    ac.threshold = m.astar_threshold;
    auto a = astar_parse(d.candidates, m.rank.fn(), m.exit.fn(), ac);
    auto b = astar_parse(d.candidates, again.rank.fn(), again.exit.fn(), ac);
    CHECK(a.graph == b.graph);
    CHECK(greedy_parse(d.candidates, m.exit.fn(), m.greedy_threshold).graph ==
          greedy_parse(d.candidates, again.exit.fn(), again.greedy_threshold).graph);
  }
}
