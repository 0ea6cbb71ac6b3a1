#include "dpgkit/search.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <set>

#include "dpgkit/metrics.hpp"
#include "dpgkit/util.hpp"

namespace dpgkit {

using nlohmann::json;

std::array<double, kExitFeatureSize> exit_features(const ParseState& state) {
  std::array<double, kExitFeatureSize> f{};
  std::vector<int> nodes;
  double node_score = 0.0;
  for (std::size_t c = 0; c < state.pool().constituents.size(); ++c)
    if (state.node_present(static_cast<int>(c))) {
      nodes.push_back(static_cast<int>(c));
      node_score += state.constituent(static_cast<int>(c)).score;
    }
  double edge_score = 0.0;
  for (int r : state.accepted()) {
    edge_score += state.relationship(r).score;
    f[5 + category_index(state.relationship(r).category)] += 1.0;
  }
  // Counts are relative to the pool's expected edges per category (sum of
  // candidate scores), which tells a small parse from a complete one.
  std::array<double, kNumRelationshipCategories> expected{};
  for (const auto& r : state.pool().relationships) expected[category_index(r.category)] += r.score;
  for (int k = 0; k < kNumRelationshipCategories; ++k) f[5 + k] /= std::max(1.0, expected[k]);
  double overlap = 0.0;
  int pairs = 0;
  for (std::size_t a = 0; a < nodes.size(); ++a)
    for (std::size_t b = a + 1; b < nodes.size(); ++b) {
      const auto& x = state.constituent(nodes[a]);
      const auto& y = state.constituent(nodes[b]);
      if (x.category != y.category) continue;
      overlap += iou(x.box, y.box);
      ++pairs;
    }
  const double n_nodes = static_cast<double>(nodes.size());
  const double n_edges = static_cast<double>(state.accepted().size());
  f[0] = nodes.empty() ? 0.0 : node_score / n_nodes;
  f[1] = state.accepted().empty() ? 0.0 : edge_score / n_edges;
  f[2] = state.coverage();
  f[3] = pairs ? overlap / pairs : 0.0;
  f[4] = nodes.empty() ? 0.0 : n_edges / n_nodes;
  return f;
}

double ExitModel::score(const ParseState& state) const {
  const auto f = exit_features(state);
  return std::clamp(forest_.predict(f), 0.0, 1.0);
}

StepFeature rank_features(const ParseState& state, int rel, int max_steps) {
  StepFeature f = step_feature(state, rel, static_cast<int>(state.accepted().size()), max_steps);
  for (int k = 0; k < kSlotCount; ++k) f[k * kSlotWidth + 8] = 0.0;
  f[kRelationBlockOffset + 11] = 0.0;
  return f;
}

double RankModel::score(const ParseState& state, int rel) const {
  return std::clamp(forest_.predict(rank_features(state, rel, max_steps_)), 0.0, 1.0);
}

SearchResult greedy_parse(const CandidateSet& candidates, const ExitFn& exit_model, double threshold) {
  ParseState state(candidates);
  SearchResult res;
  for (int rel : score_order(candidates)) {
    if (exit_model(state) >= threshold) break;
    if (state.is_accepted(rel)) continue;
    state.accept(rel);
    res.added.push_back(rel);
  }
  res.graph = state.to_dpg();
  return res;
}

double step_cost(const ParseState& state, const ParseState& next, int rel, const RankFn& rank, const ExitFn& exit_model,
                 double lambda) {
  return lambda * (1.0 - rank(state, rel)) + (1.0 - lambda) * (1.0 - exit_model(next));
}

double path_cost(const CandidateSet& candidates, std::span<const int> order, const RankFn& rank,
                 const ExitFn& exit_model, double lambda) {
  ParseState state(candidates);
  double cost = 0.0;
  for (int rel : order) {
    ParseState next = state;
    next.accept(rel);
    cost += step_cost(state, next, rel, rank, exit_model, lambda);
    state = std::move(next);
  }
  return cost;
}

namespace {

struct FrontierEntry {
  double cost;
  std::vector<int> path;      // relationship indices in the order added
  std::vector<int> sort_key;  // path mapped to score-order positions

  bool operator<(const FrontierEntry& o) const {
    if (cost != o.cost) return cost < o.cost;
    if (path.size() != o.path.size()) return path.size() > o.path.size();
    return sort_key < o.sort_key;
  }
};

}  // namespace

SearchResult astar_parse(const CandidateSet& candidates, const RankFn& rank, const ExitFn& exit_model,
                         const AStarConfig& cfg) {
  const auto order = score_order(candidates);
  std::vector<int> position(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) position[order[i]] = static_cast<int>(i);
  const std::size_t beam = static_cast<std::size_t>(std::max(1, cfg.beam));

  auto replay = [&](const std::vector<int>& path) {
    ParseState s(candidates);
    for (int r : path) s.accept(r);
    return s;
  };

  std::set<FrontierEntry> frontier;
  std::set<std::vector<int>> closed;
  frontier.insert({0.0, {}, {}});
  SearchResult res;
  FrontierEntry deepest{0.0, {}, {}};
  bool have_deepest = false;

  while (!frontier.empty()) {
    FrontierEntry cur = *frontier.begin();
    frontier.erase(frontier.begin());
    std::vector<int> set_key = cur.path;
    std::sort(set_key.begin(), set_key.end());
    if (!closed.insert(set_key).second) continue;

    ParseState state = replay(cur.path);
    if (!have_deepest || cur.path.size() > deepest.path.size()) {
      deepest = cur;
      have_deepest = true;
    }
    if (exit_model(state) >= cfg.threshold) {
      res.graph = state.to_dpg();
      res.added = cur.path;
      res.cost = cur.cost;
      return res;
    }
    if (res.expansions >= cfg.max_expansions) break;
    ++res.expansions;

    for (int rel : order) {
      if (state.is_accepted(rel)) continue;
      std::vector<int> child_key = set_key;
      child_key.insert(std::upper_bound(child_key.begin(), child_key.end(), rel), rel);
      if (closed.count(child_key)) continue;
      ParseState next = state;
      next.accept(rel);
      FrontierEntry child{cur.cost + step_cost(state, next, rel, rank, exit_model, cfg.lambda), cur.path, cur.sort_key};
      child.path.push_back(rel);
      child.sort_key.push_back(position[rel]);
      if (frontier.size() >= beam && !(child < *std::prev(frontier.end()))) continue;
      frontier.insert(std::move(child));
      while (frontier.size() > beam) frontier.erase(std::prev(frontier.end()));
    }
  }
  const ParseState state = replay(deepest.path);
  res.graph = state.to_dpg();
  res.added = deepest.path;
  res.cost = deepest.cost;
  return res;
}

namespace {

// Candidates that on their own reproduce a truth edge.
std::vector<int> truth_matching(const ParserExample& ex, const JigEvaluator& ev) {
  std::vector<int> out;
  for (std::size_t r = 0; r < ex.candidates.relationships.size(); ++r) {
    const int idx = static_cast<int>(r);
    if (ev.score(std::span<const int>(&idx, 1)).edge_intersection == 1) out.push_back(idx);
  }
  return out;
}

}  // namespace

namespace {

FeatureTable exit_training_rows(std::span<const ParserExample> corpus, const SearchTrainConfig& cfg) {
  FeatureTable table(kExitFeatureSize);
  Rng rng(hash_combine(cfg.seed, 0xe417));
  static constexpr std::array<double, 5> kRates{0.0, 0.25, 0.5, 0.75, 1.0};
  static constexpr std::array<double, 4> kNoiseRates{0.0, 0.1, 0.25, 0.5};
  for (const auto& ex : corpus) {
    const JigEvaluator ev(ex.candidates, ex.truth);
    const auto pool = truth_matching(ex, ev);
    std::vector<char> is_true(ex.candidates.relationships.size(), 0);
    for (int r : pool) is_true[r] = 1;
    for (double rate : kRates) {
      for (int k = 0; k < cfg.partials_per_rate; ++k) {
        // Partials also carry some non-truth candidates so the model is
        // calibrated on the states search and greedy actually reach.
        const double noise = kNoiseRates[k % kNoiseRates.size()];
        ParseState state(ex.candidates);
        for (std::size_t r = 0; r < is_true.size(); ++r)
          if (is_true[r] ? !rng.bernoulli(rate) : rng.bernoulli(noise)) state.accept(static_cast<int>(r));
        const auto f = exit_features(state);
        table.add(f, ev.score(state.accepted()).combined);
      }
    }
    // Score-weighted prefixes resemble the states the parsers visit.
    if (ex.candidates.relationships.empty()) continue;
    const int n = static_cast<int>(ex.candidates.relationships.size());
    const auto orders = sample_sequences(ex.candidates, cfg.partials_per_rate * static_cast<int>(kRates.size()), n,
                                         hash_combine(cfg.seed ^ 0xe418, table.rows()));
    for (const auto& order : orders.orders) {
      ParseState state(ex.candidates);
      const int len = rng.uniform_int(0, std::min<int>(n, 2 * static_cast<int>(pool.size()) + 1));
      for (int i = 0; i < len; ++i) state.accept(order[i]);
      table.add(exit_features(state), ev.score(state.accepted()).combined);
    }
  }
  return table;
}

ExitModel fit_exit(const FeatureTable& table, const SearchTrainConfig& cfg) {
  ForestParams p = cfg.forest;
  p.task = ForestTask::Regression;
  p.seed = hash_combine(cfg.seed, 0xe417);
  return ExitModel(RandomForest::train(table, p));
}

}  // namespace

ExitModel train_exit_model(std::span<const ParserExample> corpus, const SearchTrainConfig& cfg) {
  return fit_exit(exit_training_rows(corpus, cfg), cfg);
}

namespace {

SearchModels fit_search_models(std::span<const ParserExample> corpus, const SearchTrainConfig& cfg) {
  SearchModels m;
  m.rank = train_rank_model(corpus, cfg);
  FeatureTable table = exit_training_rows(corpus, cfg);
  m.exit = fit_exit(table, cfg);
  for (int round = 0; round < cfg.search_aware_rounds; ++round) {
    // Every prefix of the path each parser returns, labeled with its true JIG.
    std::vector<std::vector<std::pair<std::array<double, kExitFeatureSize>, double>>> rows(corpus.size());
    const auto rank = m.rank.fn();
    const auto exit_fn = m.exit.fn();
    parallel_for(corpus.size(), [&](std::size_t e) {
      const auto& ex = corpus[e];
      const JigEvaluator ev(ex.candidates, ex.truth);
      AStarConfig acfg = cfg.astar;
      for (const auto& path : {astar_parse(ex.candidates, rank, exit_fn, acfg).added,
                               greedy_parse(ex.candidates, exit_fn, acfg.threshold).added}) {
        ParseState state(ex.candidates);
        for (int r : path) {
          state.accept(r);
          rows[e].emplace_back(exit_features(state), ev.score(state.accepted()).combined);
        }
      }
    });
    for (const auto& per : rows)
      for (const auto& [f, y] : per) table.add(f, y);
    m.exit = fit_exit(table, cfg);
  }
  return m;
}

}  // namespace

SearchModels train_search_models(std::span<const ParserExample> corpus, const SearchTrainConfig& cfg) {
  const int every = std::max(2, cfg.tune_every);
  if (!cfg.tune_thresholds || corpus.size() < static_cast<std::size_t>(every)) return fit_search_models(corpus, cfg);
  std::vector<ParserExample> fit, held;
  for (std::size_t i = 0; i < corpus.size(); ++i) (static_cast<int>(i % every) == every - 1 ? held : fit).push_back(corpus[i]);
  SearchModels m = fit_search_models(fit, cfg);
  const auto rank = m.rank.fn();
  const auto exit_fn = m.exit.fn();
  const std::size_t g = cfg.threshold_grid.size();
  std::vector<double> greedy_sum(g, 0.0), astar_sum(g, 0.0);
  std::vector<std::vector<std::pair<double, double>>> per(held.size(), std::vector<std::pair<double, double>>(g));
  parallel_for(held.size(), [&](std::size_t e) {
    for (std::size_t k = 0; k < g; ++k) {
      AStarConfig acfg = cfg.astar;
      acfg.threshold = cfg.threshold_grid[k];
      per[e][k] = {jig(greedy_parse(held[e].candidates, exit_fn, acfg.threshold).graph, held[e].truth).combined,
                   jig(astar_parse(held[e].candidates, rank, exit_fn, acfg).graph, held[e].truth).combined};
    }
  });
  for (const auto& row : per)
    for (std::size_t k = 0; k < g; ++k) {
      greedy_sum[k] += row[k].first;
      astar_sum[k] += row[k].second;
    }
  // Ties go to the lower threshold.
  const auto best = [&](const std::vector<double>& sums) {
    return cfg.threshold_grid[std::max_element(sums.begin(), sums.end()) - sums.begin()];
  };
  m.greedy_threshold = best(greedy_sum);
  m.astar_threshold = best(astar_sum);
  return m;
}

RankModel train_rank_model(std::span<const ParserExample> corpus, const SearchTrainConfig& cfg) {
  std::vector<std::pair<StepFeature, double>> rows;
  for (std::size_t e = 0; e < corpus.size(); ++e) {
    const auto& ex = corpus[e];
    if (ex.candidates.relationships.empty()) continue;
    const JigEvaluator ev(ex.candidates, ex.truth);
    const auto sampled =
        sample_sequences(ex.candidates, cfg.seq_per_image, cfg.max_len, hash_combine(cfg.seed ^ 0x7a11, e));
    for (const auto& order : sampled.orders) {
      ParseState state(ex.candidates);
      for (int rel : order) {
        // Positive when the edge reproduces a truth edge not yet matched.
        const std::size_t before = ev.score(state.accepted()).edge_intersection;
        std::vector<int> with = state.accepted();
        with.push_back(rel);
        const bool good = ev.score(with).edge_intersection > before;
        rows.emplace_back(rank_features(state, rel, cfg.max_len), good ? 1.0 : 0.0);
        if (label_step(ev, state, rel)) state.accept(rel);
      }
    }
  }
  Rng rng(hash_combine(cfg.seed, 0x4a4b));
  std::shuffle(rows.begin(), rows.end(), rng.engine());
  if (rows.size() > cfg.max_rank_rows) rows.resize(cfg.max_rank_rows);
  FeatureTable table(kStepFeatureSize);
  for (const auto& [f, y] : rows) table.add(f, y);
  ForestParams p = cfg.forest;
  p.task = ForestTask::Classification;
  p.seed = hash_combine(cfg.seed, 0x4a4b);
  return RankModel(RandomForest::train(table, p), cfg.max_len);
}

json SearchModels::to_json() const {
  json j;
  j["format"] = "dpgkit-search";
  j["version"] = 1;
  j["exit"] = exit.forest().to_json();
  j["rank"] = rank.forest().to_json();
  j["rank_max_steps"] = rank.max_steps();
  j["greedy_threshold"] = greedy_threshold;
  j["astar_threshold"] = astar_threshold;
  return j;
}

SearchModels SearchModels::from_json(const json& j) {
  if (j.value("format", "") != "dpgkit-search" || j.value("version", 0) != 1)
    throw DataError("not a version-1 dpgkit search model");
  SearchModels m;
  m.exit = ExitModel(RandomForest::from_json(j.at("exit")));
  m.rank = RankModel(RandomForest::from_json(j.at("rank")), j.at("rank_max_steps").get<int>());
  m.greedy_threshold = j.value("greedy_threshold", 0.5);
  m.astar_threshold = j.value("astar_threshold", 0.5);
  if (m.exit.forest().n_features() != kExitFeatureSize || m.rank.forest().n_features() != kStepFeatureSize)
    throw DataError("search model has unexpected feature sizes");
  return m;
}

}  // namespace dpgkit
