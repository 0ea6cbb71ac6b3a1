#include <doctest.h>

#include <algorithm>
#include <map>
#include <numeric>
#include <set>

#include "dpgkit/annotation.hpp"
#include "dpgkit/metrics.hpp"
#include "dpgkit/synthgen.hpp"
#include "test_support.hpp"

using namespace dpgkit;
using RC = RelationshipCategory;
using Strings = std::vector<std::string>;

namespace {

// Number of truth edges reproduced by some candidate relationship.
double truth_edge_recall(const GeneratedDiagram& d) {
  JigEvaluator ev(d.candidates, d.truth);
  std::vector<int> all(d.candidates.relationships.size());
  std::iota(all.begin(), all.end(), 0);
  return static_cast<double>(ev.score(all).edge_intersection);
}

}  // namespace

TEST_CASE("same seed, same diagram") {
  for (auto kind : {TemplateKind::FoodWeb, TemplateKind::Cycle, TemplateKind::LabeledParts}) {
    auto a = gen_diagram(SceneTemplate::of(kind), NoiseConfig::preset("default"), 77);
    auto b = gen_diagram(SceneTemplate::of(kind), NoiseConfig::preset("default"), 77);
    CHECK(write_annotation(a.truth) == write_annotation(b.truth));
    CHECK(write_candidates(a.candidates) == write_candidates(b.candidates));
    CHECK(write_questions(a.questions) == write_questions(b.questions));
    auto c = gen_diagram(SceneTemplate::of(kind), NoiseConfig::preset("default"), 78);
    CHECK(write_candidates(a.candidates) != write_candidates(c.candidates));
  }
}

TEST_CASE("noiseless candidates equal the truth") {
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    auto d = gen_diagram(SceneTemplate::of(static_cast<TemplateKind>(seed % 3)), NoiseConfig::preset("clean"), seed);
    CHECK(d.candidates.constituents == d.truth.nodes());
    CHECK(d.candidates.relationships == d.truth.edges());
    CHECK(jig(make_dpg(d.candidates.constituents, d.candidates.relationships), d.truth).combined == 1.0);
  }
}

TEST_CASE("without drops every truth edge is reachable") {
  double recalled = 0.0, total = 0.0;
  for (std::uint64_t seed = 1; seed <= 60; ++seed) {
    auto d = gen_diagram(SceneTemplate::of(static_cast<TemplateKind>(seed % 3)), NoiseConfig::preset("default"), seed);
    recalled += truth_edge_recall(d);
    total += static_cast<double>(d.truth.edges().size());
  }
  CHECK(recalled / total >= 0.95);
}

TEST_CASE("drop rate 0.3 keeps about seventy percent of truth edges") {
  NoiseConfig noise;
  noise.jitter = 0.0;
  noise.fp_constituent_rate = 0.0;
  noise.false_rel_rate = 0.0;
  noise.drop_rate = 0.3;
  double kept = 0.0, total = 0.0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    auto d = gen_diagram(SceneTemplate::of(static_cast<TemplateKind>(seed % 3)), noise, seed);
    kept += truth_edge_recall(d);
    total += static_cast<double>(d.truth.edges().size());
  }
  CHECK(std::abs(kept / total - 0.7) <= 0.05);
}

TEST_CASE("calibrated scores separate true from false candidates") {
  // Mann-Whitney U over relationship scores, true (reproduces a truth edge)
  // versus false; reported as the probability a true score ranks higher.
  std::vector<double> pos, neg;
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    auto d = gen_diagram(SceneTemplate::of(static_cast<TemplateKind>(seed % 3)), NoiseConfig::preset("default"), seed);
    JigEvaluator ev(d.candidates, d.truth);
    for (int r = 0; r < static_cast<int>(d.candidates.relationships.size()); ++r) {
      const int one[] = {r};
      (ev.score(one).edge_intersection == 1 ? pos : neg).push_back(d.candidates.relationships[r].score);
    }
  }
  REQUIRE(pos.size() > 50);
  REQUIRE(neg.size() > 50);
  double u = 0.0;
  for (double p : pos)
    for (double n : neg) u += p > n ? 1.0 : (p == n ? 0.5 : 0.0);
  const double auc = u / (static_cast<double>(pos.size()) * static_cast<double>(neg.size()));
  MESSAGE("score AUC " << auc);
  CHECK(auc > 0.8);
}

TEST_CASE("food webs are acyclic") {
  CorpusConfig cfg;
  cfg.n_train = 40;
  cfg.n_test = 1;
  cfg.mix = {1.0, 0.0, 0.0};
  for (const auto& d : generate_corpus(cfg).train) {
    CHECK(d.kind == TemplateKind::FoodWeb);
    std::map<std::string, std::vector<std::string>> out;
    std::map<std::string, int> indeg;
    for (const auto& e : d.truth.edges())
      if (e.category == RC::InterObjectLinkage) {
        out[e.members[0]].push_back(e.members[2]);
        ++indeg[e.members[2]];
        indeg.try_emplace(e.members[0], 0);
      }
    // Kahn's algorithm consumes every node iff there is no cycle.
    std::vector<std::string> ready;
    for (const auto& [n, k] : indeg)
      if (k == 0) ready.push_back(n);
    std::size_t seen = 0;
    while (!ready.empty()) {
      auto n = ready.back();
      ready.pop_back();
      ++seen;
      for (const auto& m : out[n])
        if (--indeg[m] == 0) ready.push_back(m);
    }
    CHECK(seen == indeg.size());
    CHECK_FALSE(indeg.empty());
  }
}

TEST_CASE("cycles are rings") {
  auto d = gen_diagram(SceneTemplate::cycle(), NoiseConfig::preset("clean"), 3);
  std::map<std::string, int> outdeg, indeg;
  for (const auto& e : d.truth.edges())
    if (e.category == RC::InterObjectLinkage) ++outdeg[e.members[0]], ++indeg[e.members[2]];
  CHECK(outdeg.size() >= 3);
  for (const auto& [n, k] : outdeg) CHECK((k == 1 && indeg[n] == 1));
}

TEST_CASE("questions are consistent with the truth") {
  for (std::uint64_t seed = 1; seed <= 40; ++seed) {
    auto d = gen_diagram(SceneTemplate::of(static_cast<TemplateKind>(seed % 3)), NoiseConfig::preset("default"), seed);
    const auto sentences = verbalize(d.truth);
    for (const auto& q : d.questions) {
      REQUIRE(q.gold >= 1);
      REQUIRE(q.gold <= 4);
      CHECK(q.diagram == d.id);
      // The gold answer is spelled out in some relation sentence.
      const auto& gold = q.choices[q.gold - 1];
      bool found = false;
      for (const auto& s : sentences) {
        Strings lower;
        for (const auto& w : s.tokens) lower.push_back(tokenize(w).empty() ? w : tokenize(w).front());
        found = found || std::search(lower.begin(), lower.end(), gold.begin(), gold.end()) != lower.end();
      }
      CHECK(found);
      std::set<Strings> distinct(q.choices.begin(), q.choices.end());
      CHECK(distinct.size() == 4);
    }
  }
}

TEST_CASE("food-web choices come from one trophic layer") {
  const auto tmpl = SceneTemplate::food_web();
  const std::size_t third = tmpl.lexicon.size() / 3;
  auto layer = [&](const Strings& w) {
    REQUIRE(w.size() == 1);
    const auto it = std::find(tmpl.lexicon.begin(), tmpl.lexicon.end(), w[0]);
    REQUIRE(it != tmpl.lexicon.end());
    return static_cast<std::size_t>(it - tmpl.lexicon.begin()) / third;
  };
  int checked = 0;
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    for (const auto& q : gen_diagram(tmpl, NoiseConfig::preset("default"), seed).questions) {
      const auto g = layer(q.choices[q.gold - 1]);
      CHECK(g > 0);  // producers eat nothing
      for (const auto& c : q.choices) CHECK(layer(c) == g);
      ++checked;
    }
  }
  CHECK(checked > 60);
}

TEST_CASE("noise presets") {
  CHECK(NoiseConfig::preset("clean").noiseless());
  CHECK_FALSE(NoiseConfig::preset("default").noiseless());
  CHECK(NoiseConfig::preset("hard").drop_rate > 0.0);
  CHECK_THROWS_AS(NoiseConfig::preset("loud"), std::invalid_argument);
  NoiseConfig bad;
  bad.drop_rate = 1.0;
  CHECK_THROWS(bad.validate());
}

TEST_CASE("corpus on disk validates and reloads") {
  const auto dir = std::filesystem::temp_directory_path() / "dpgkit_test_corpus";
  std::filesystem::remove_all(dir);
  CorpusConfig cfg;
  cfg.n_train = 4;
  cfg.n_test = 1;
  gen_corpus(cfg, dir);
  CHECK(std::filesystem::exists(dir / "manifest.json"));
  auto train = load_split(dir / "train");
  auto test = load_split(dir / "test");
  CHECK(train.ids.size() == 4);
  CHECK(test.ids.size() == 1);
  CHECK(test.questions.size() >= 1);
  auto mem = generate_corpus(cfg);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(train.truth[i] == mem.train[i].truth);
    CHECK(train.candidates[i] == mem.train[i].candidates);
  }
  std::filesystem::remove_all(dir);
}
