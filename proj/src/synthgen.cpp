#include "dpgkit/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>

#include "dpgkit/util.hpp"

namespace dpgkit {

using nlohmann::json;
using CC = ConstituentCategory;
using RC = RelationshipCategory;

std::string_view to_string(TemplateKind k) {
  switch (k) {
    case TemplateKind::FoodWeb: return "foodweb";
    case TemplateKind::Cycle: return "cycle";
    case TemplateKind::LabeledParts: return "parts";
  }
  return "?";
}

SceneTemplate SceneTemplate::food_web() {
  SceneTemplate t;
  t.kind = TemplateKind::FoodWeb;
  t.min_objects = 4;
  t.max_objects = 7;
  t.lexicon = {"grass", "algae", "seeds", "berries", "plankton", "clover", "acorns", "moss", "kelp", "fern",
               "rabbit", "mouse", "deer", "grasshopper", "squirrel", "cricket", "caterpillar", "shrimp", "snail", "vole",
               "frog", "snake", "fox", "owl", "hawk", "wolf", "bear", "eagle", "heron", "weasel"};
  t.titles = {"food web", "forest food web", "pond food web", "ocean food chain", "grassland food web"};
  return t;
}

SceneTemplate SceneTemplate::cycle() {
  SceneTemplate t;
  t.kind = TemplateKind::Cycle;
  t.min_objects = 3;
  t.max_objects = 6;
  t.lexicon = {"evaporation", "condensation", "precipitation", "collection", "runoff", "infiltration",
               "egg", "larva", "pupa", "adult", "nymph", "tadpole",
               "seedling", "sapling", "flowering", "pollination", "germination", "fruiting",
               "melting", "freezing", "erosion", "deposition", "compaction", "uplift"};
  t.titles = {"water cycle", "life cycle", "rock cycle", "plant life cycle", "the cycle"};
  return t;
}

SceneTemplate SceneTemplate::labeled_parts() {
  SceneTemplate t;
  t.kind = TemplateKind::LabeledParts;
  t.min_objects = 3;
  t.max_objects = 5;
  t.lexicon = {"leaf", "flower", "cell", "heart", "volcano", "insect", "tooth", "eye", "ear", "tree"};
  t.part_lexicon = {"stem", "petal", "root", "nucleus", "membrane", "vein", "crater", "vent",
                    "antenna", "thorax", "abdomen", "crown", "enamel", "retina", "lens", "pupil",
                    "cochlea", "bark", "branch", "stigma", "sepal", "chloroplast", "ventricle", "valve",
                    "magma", "wing", "iris", "cornea", "pulp", "anther"};
  t.titles = {"parts of a plant", "labeled diagram", "anatomy", "structure", "parts"};
  return t;
}

SceneTemplate SceneTemplate::of(TemplateKind k) {
  switch (k) {
    case TemplateKind::FoodWeb: return food_web();
    case TemplateKind::Cycle: return cycle();
    case TemplateKind::LabeledParts: return labeled_parts();
  }
  return food_web();
}

bool NoiseConfig::noiseless() const {
  return jitter == 0.0 && fp_constituent_rate == 0.0 && false_rel_rate == 0.0 && drop_rate == 0.0 &&
         !calibrated_scores;
}

void NoiseConfig::validate() const {
  auto rate = [](double r, const char* name) {
    if (!(r >= 0.0 && r < 1.0)) throw std::invalid_argument(std::string(name) + " must lie in [0,1)");
  };
  if (!(jitter >= 0.0)) throw std::invalid_argument("jitter must be >= 0");
  rate(fp_constituent_rate, "fp_constituent_rate");
  rate(false_rel_rate, "false_rel_rate");
  rate(drop_rate, "drop_rate");
}

json NoiseConfig::to_json() const {
  return {{"jitter", jitter},
          {"fp_constituent_rate", fp_constituent_rate},
          {"false_rel_rate", false_rel_rate},
          {"drop_rate", drop_rate},
          {"calibrated_scores", calibrated_scores}};
}

NoiseConfig NoiseConfig::preset(std::string_view name) {
  if (name == "clean") return {0.0, 0.0, 0.0, 0.0, false};
  if (name == "default") return {};
  if (name == "hard") return {0.08, 0.5, 0.75, 0.1, true};
  throw std::invalid_argument("unknown noise preset '" + std::string(name) + "'");
}

namespace {

Box box_around(double cx, double cy, double w, double h) {
  return {std::clamp(cx - w / 2, 0.0, 1.0), std::clamp(cy - h / 2, 0.0, 1.0), std::clamp(cx + w / 2, 0.0, 1.0),
          std::clamp(cy + h / 2, 0.0, 1.0)};
}

template <typename T>
std::vector<T> pick_distinct(const std::vector<T>& pool, int n, Rng& rng) {
  std::vector<T> v = pool;
  std::shuffle(v.begin(), v.end(), rng.engine());
  v.resize(std::min<std::size_t>(v.size(), static_cast<std::size_t>(n)));
  return v;
}

struct Builder {
  std::vector<Constituent> nodes;
  std::vector<Relationship> edges;
  int blobs = 0, texts = 0, tails = 0, heads = 0;

  std::string add(CC cat, Box box, std::optional<std::string> text = std::nullopt) {
    std::string id;
    switch (cat) {
      case CC::Blob: id = "b" + std::to_string(++blobs); break;
      case CC::TextBox: id = "t" + std::to_string(++texts); break;
      case CC::ArrowTail: id = "a" + std::to_string(++tails); break;
      case CC::ArrowHead: id = "h" + std::to_string(++heads); break;
    }
    nodes.push_back({id, cat, box, 1.0, std::move(text)});
    return id;
  }
  void relate(RC cat, std::vector<std::string> members) {
    edges.push_back({"r" + std::to_string(edges.size() + 1), cat, std::move(members), 1.0});
  }

  std::string name_label(const Box& b, const std::string& name) {
    const double w = std::min(0.16, 0.03 + 0.012 * static_cast<double>(name.size()));
    return add(CC::TextBox, box_around(b.cx(), std::min(b.y1 + 0.025, 0.97), w, 0.03), name);
  }

  // Arrow from blob a to blob b; returns the tail id.
  std::string arrow(const Box& a, const Box& b, const std::string& ida, const std::string& idb) {
    const double dx = b.cx() - a.cx(), dy = b.cy() - a.cy();
    const double len = std::max(std::hypot(dx, dy), 1e-9);
    const double ux = dx / len, uy = dy / len;
    const double ra = 0.5 * std::max(a.width(), a.height()) + 0.01;
    const double rb = 0.5 * std::max(b.width(), b.height()) + 0.03;
    const double x0 = a.cx() + ra * ux, y0 = a.cy() + ra * uy;
    const double x1 = b.cx() - rb * ux, y1 = b.cy() - rb * uy;
    const Box tail{std::clamp(std::min(x0, x1) - 0.01, 0.0, 1.0), std::clamp(std::min(y0, y1) - 0.01, 0.0, 1.0),
                   std::clamp(std::max(x0, x1) + 0.01, 0.0, 1.0), std::clamp(std::max(y0, y1) + 0.01, 0.0, 1.0)};
    const std::string t = add(CC::ArrowTail, tail);
    const std::string h = add(CC::ArrowHead, box_around(b.cx() - (rb - 0.015) * ux, b.cy() - (rb - 0.015) * uy, 0.03, 0.03));
    relate(RC::ArrowHeadAssignment, {h, t});
    if (!ida.empty()) relate(RC::InterObjectLinkage, {ida, t, idb});
    return t;
  }
};

struct Layout {
  Builder b;
  std::vector<std::string> names;                    // per object
  std::vector<std::string> blob_ids;
  std::vector<std::pair<int, int>> links;            // R4 object pairs
  std::vector<std::pair<std::string, int>> pointed;  // R3 (part text, object)
};

Layout layout_scene(const SceneTemplate& tmpl, Rng& rng) {
  Layout L;
  Builder& b = L.b;
  const int n = rng.uniform_int(tmpl.min_objects, tmpl.max_objects);
  const std::string title = tmpl.titles[rng.uniform_int(0, static_cast<int>(tmpl.titles.size()) - 1)];
  const std::string title_id = b.add(CC::TextBox, box_around(0.5, 0.04, 0.3, 0.04), title);
  b.relate(RC::ImageTitle, {title_id});

  std::vector<Box> boxes;
  const double s = 0.09;
  auto place = [&](double cx, double cy, double w, double h) {
    const Box box = box_around(cx, cy, w, h);
    boxes.push_back(box);
    L.blob_ids.push_back(b.add(CC::Blob, box));
  };

  if (tmpl.kind == TemplateKind::FoodWeb) {
    // Layers: producers at the bottom, predators at the top. The lexicon
    // lists producers, herbivores and predators in equal thirds.
    std::vector<int> layer(n);
    for (int i = 0; i < n; ++i) layer[i] = std::min(2, i * 3 / n);
    std::array<int, 3> count{}, seen{};
    for (int l : layer) ++count[l];
    const std::size_t third = tmpl.lexicon.size() / 3;
    for (int l = 0; l < 3; ++l) {
      const auto first = tmpl.lexicon.begin() + static_cast<std::ptrdiff_t>(l * third);
      const auto names = pick_distinct(std::vector<std::string>(first, first + static_cast<std::ptrdiff_t>(third)), count[l], rng);
      L.names.insert(L.names.end(), names.begin(), names.end());
    }
    for (int i = 0; i < n; ++i) {
      const int l = layer[i];
      const double cx = (seen[l]++ + 1.0) / (count[l] + 1.0) + rng.uniform(-0.03, 0.03);
      place(cx, 0.8 - 0.3 * l + rng.uniform(-0.02, 0.02), s, s);
    }
    for (int i = 0; i < n; ++i) {
      if (layer[i] == 0) continue;
      std::vector<int> prey;
      for (int j = 0; j < n; ++j)
        if (layer[j] == layer[i] - 1) prey.push_back(j);
      const int k = std::min<int>(static_cast<int>(prey.size()), rng.uniform_int(1, 2));
      for (int j : pick_distinct(prey, k, rng)) L.links.push_back({j, i});
    }
  } else if (tmpl.kind == TemplateKind::Cycle) {
    L.names = pick_distinct(tmpl.lexicon, n, rng);
    const double phase = rng.uniform(0.0, 6.283185307179586);
    for (int i = 0; i < n; ++i) {
      const double a = phase + 6.283185307179586 * i / n;
      place(0.5 + 0.3 * std::cos(a), 0.55 + 0.3 * std::sin(a), s, s);
    }
    for (int i = 0; i < n; ++i) L.links.push_back({i, (i + 1) % n});
  } else {
    L.names = pick_distinct(tmpl.lexicon, 1, rng);
    place(0.5, 0.52, 0.3, 0.3);
  }

  for (std::size_t i = 0; i < boxes.size(); ++i)
    b.relate(RC::IntraObjectLabel, {b.name_label(boxes[i], L.names[i]), L.blob_ids[i]});

  for (const auto& [from, to] : L.links) {
    const std::string tail = b.arrow(boxes[from], boxes[to], L.blob_ids[from], L.blob_ids[to]);
    if (tmpl.kind == TemplateKind::FoodWeb && rng.bernoulli(0.25)) {
      const Box tail_box = b.nodes[b.nodes.size() - 2].box;  // the head follows the tail
      const std::string text = b.add(CC::TextBox, box_around(tail_box.cx() + 0.04, tail_box.cy(), 0.06, 0.03), "eaten by");
      b.relate(RC::ArrowDescriptor, {text, tail});
    }
  }

  if (tmpl.kind == TemplateKind::LabeledParts) {
    const Box center = boxes[0];
    const auto parts = pick_distinct(tmpl.part_lexicon, n, rng);
    for (int i = 0; i < n; ++i) {
      const double cy = 0.3 + 0.45 * (i / 2 + 0.5) / ((n + 1) / 2);
      const double cx = (i % 2 == 0) ? 0.14 : 0.86;
      const Box label = box_around(cx, cy, 0.14, 0.035);
      const std::string text = b.add(CC::TextBox, label, parts[i]);
      const double tx = center.cx() + rng.uniform(-0.08, 0.08), ty = center.cy() + rng.uniform(-0.08, 0.08);
      const Box target = box_around(tx, ty, 0.02, 0.02);
      const std::string tail = b.arrow(label, target, "", "");
      b.relate(RC::IntraObjectLinkage, {text, tail, L.blob_ids[0]});
      L.pointed.push_back({parts[i], 0});
    }
    if (rng.bernoulli(0.5)) {
      const std::string region = b.add(CC::TextBox, box_around(center.cx(), center.cy() + 0.1, 0.1, 0.03), "outer region");
      b.relate(RC::IntraObjectRegionLabel, {region, L.blob_ids[0]});
    }
  }

  if (rng.bernoulli(0.3)) b.relate(RC::ImageCaption, {b.add(CC::TextBox, box_around(0.5, 0.965, 0.4, 0.03), "figure shows " + title)});
  if (rng.bernoulli(0.2)) b.relate(RC::ImageSectionTitle, {b.add(CC::TextBox, box_around(0.12, 0.1, 0.16, 0.03), "section a")});
  if (rng.bernoulli(0.2)) b.relate(RC::ImageMisc, {b.add(CC::TextBox, box_around(0.92, 0.04, 0.08, 0.03), "fig 1")});
  return L;
}

std::vector<std::string> join_tokens(const std::string& s) { return tokenize(s); }

std::vector<DiagramQuestion> make_questions(const SceneTemplate& tmpl, const Layout& L, const std::string& id,
                                            Rng& rng) {
  std::vector<DiagramQuestion> out;
  auto emit = [&](std::vector<std::string> question, const std::string& gold,
                  std::vector<std::string> distractors) {
    DiagramQuestion q;
    q.diagram = id;
    q.question = std::move(question);
    q.gold = rng.uniform_int(1, kChoices);
    int d = 0;
    for (int k = 0; k < kChoices; ++k)
      q.choices[k] = join_tokens(k == q.gold - 1 ? gold : distractors[d++]);
    out.push_back(std::move(q));
  };
  auto fill = [&](std::vector<std::string> pool, const std::vector<std::string>& lexicon,
                  const std::set<std::string>& banned) {
    std::shuffle(pool.begin(), pool.end(), rng.engine());
    std::vector<std::string> extra;
    for (const auto& w : lexicon)
      if (!banned.count(w) && std::find(pool.begin(), pool.end(), w) == pool.end()) extra.push_back(w);
    std::shuffle(extra.begin(), extra.end(), rng.engine());
    pool.insert(pool.end(), extra.begin(), extra.end());
    pool.resize(kChoices - 1);
    return pool;
  };

  // Food-web distractors share the answer's layer; otherwise the question
  // text alone tells a herbivore answer from a producer or predator.
  auto group = [&](const std::string& w) -> std::size_t {
    if (tmpl.kind != TemplateKind::FoodWeb) return 0;
    const auto at = std::find(tmpl.lexicon.begin(), tmpl.lexicon.end(), w) - tmpl.lexicon.begin();
    return static_cast<std::size_t>(at) / (tmpl.lexicon.size() / 3);
  };
  const std::set<std::string> present(L.names.begin(), L.names.end());
  for (std::size_t e = 0; e < L.links.size(); ++e) {
    const auto [from, to] = L.links[e];
    const std::size_t g = group(L.names[to]);
    std::vector<std::string> pool, lexicon;
    for (int j = 0; j < static_cast<int>(L.names.size()); ++j) {
      bool target = false;
      for (const auto& [f, t] : L.links) target |= (f == from && t == j);
      if (j != from && !target && group(L.names[j]) == g) pool.push_back(L.names[j]);
    }
    for (const auto& w : tmpl.lexicon)
      if (group(w) == g) lexicon.push_back(w);
    const auto& a = L.names[from];
    std::vector<std::string> q = rng.bernoulli(0.5) ? tokenize("the " + a + " links to ___")
                                                     : tokenize("what does the " + a + " link to ?");
    emit(std::move(q), L.names[to], fill(pool, lexicon, present));
  }
  std::set<std::string> parts;
  for (const auto& [p, o] : L.pointed) parts.insert(p);
  for (const auto& [part, obj] : L.pointed) {
    std::vector<std::string> q = rng.bernoulli(0.5)
                                     ? tokenize("___ points to a region of the " + L.names[obj])
                                     : tokenize("which label points to a region of the " + L.names[obj] + " ?");
    emit(std::move(q), part, fill({}, tmpl.part_lexicon, parts));
  }
  return out;
}

Box jitter_box(const Box& b, double sigma, Rng& rng) {
  if (sigma == 0.0) return b;
  const double w = b.width(), h = b.height();
  Box j{b.x0 + rng.normal(0, sigma * w), b.y0 + rng.normal(0, sigma * h), b.x1 + rng.normal(0, sigma * w),
        b.y1 + rng.normal(0, sigma * h)};
  j.x0 = std::clamp(j.x0, 0.0, 1.0);
  j.y0 = std::clamp(j.y0, 0.0, 1.0);
  j.x1 = std::clamp(j.x1, 0.0, 1.0);
  j.y1 = std::clamp(j.y1, 0.0, 1.0);
  if (j.x1 - j.x0 < 0.005) j.x1 = std::min(1.0, j.x0 + 0.005), j.x0 = j.x1 - 0.005;
  if (j.y1 - j.y0 < 0.005) j.y1 = std::min(1.0, j.y0 + 0.005), j.y0 = j.y1 - 0.005;
  return j;
}

CandidateSet corrupt(const Dpg& truth, const SceneTemplate& tmpl, const NoiseConfig& noise, Rng& rng) {
  CandidateSet cs;
  cs.provenance = "synthetic";
  if (noise.noiseless()) {
    cs.constituents = truth.nodes();
    cs.relationships = truth.edges();
    return cs;
  }
  auto score = [&](double a, double b) { return noise.calibrated_scores ? rng.beta(a, b) : 1.0; };

  // Copies of truth constituents; index i of truth maps to copy i.
  for (const auto& n : truth.nodes()) {
    Constituent c = n;
    c.box = jitter_box(n.box, noise.jitter, rng);
    c.score = score(8, 2);
    cs.constituents.push_back(std::move(c));
  }
  std::map<int, int> duplicate_of;  // truth node index -> duplicate index
  const int n_fp = static_cast<int>(std::lround(noise.fp_constituent_rate * truth.nodes().size()));
  const std::vector<std::string>& words = tmpl.part_lexicon.empty() ? tmpl.lexicon : tmpl.part_lexicon;
  for (int k = 0; k < n_fp; ++k) {
    Constituent c;
    if (rng.bernoulli(0.5)) {
      const int src = rng.uniform_int(0, static_cast<int>(truth.nodes().size()) - 1);
      c = truth.nodes()[src];
      c.box = jitter_box(c.box, std::max(0.05, 1.5 * noise.jitter), rng);
      c.score = score(5, 3);
      if (!duplicate_of.count(src)) duplicate_of[src] = static_cast<int>(cs.constituents.size());
    } else {
      c.category = static_cast<CC>(rng.uniform_int(0, 3));
      const double w = rng.uniform(0.03, 0.12), h = rng.uniform(0.03, 0.12);
      c.box = box_around(rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9), w, h);
      c.score = score(2, 8);
      if (c.category == CC::TextBox) c.text = words[rng.uniform_int(0, static_cast<int>(words.size()) - 1)];
    }
    cs.constituents.push_back(std::move(c));
  }

  std::set<std::pair<RC, std::vector<int>>> taken;
  std::vector<std::pair<RC, std::vector<int>>> rels;
  std::vector<double> scores;
  for (const auto& e : truth.edges()) {
    std::vector<int> m;
    for (const auto& id : e.members) m.push_back(truth.node_index(id));
    taken.insert({e.category, m});
    if (rng.bernoulli(noise.drop_rate)) continue;
    rels.push_back({e.category, m});
    scores.push_back(score(8, 2));
  }

  const std::size_t n_true = truth.edges().size();
  const auto n_false = static_cast<std::size_t>(
      std::lround(static_cast<double>(n_true) * noise.false_rel_rate / (1.0 - noise.false_rel_rate)));
  std::vector<std::vector<int>> by_category(4);
  for (std::size_t i = 0; i < cs.constituents.size(); ++i)
    by_category[category_index(cs.constituents[i].category)].push_back(static_cast<int>(i));
  std::size_t made = 0;
  for (int attempt = 0; made < n_false && attempt < static_cast<int>(50 * n_false + 50); ++attempt) {
    const auto& src = truth.edges()[rng.uniform_int(0, static_cast<int>(n_true) - 1)];
    std::vector<int> m;
    for (const auto& id : src.members) m.push_back(truth.node_index(id));
    RC cat = src.category;
    double sc = 0.0;
    const double kind = rng.uniform();
    if (kind < 0.4) {
      // Same edge through a duplicated constituent.
      std::vector<int> slots;
      for (std::size_t k = 0; k < m.size(); ++k)
        if (duplicate_of.count(m[k])) slots.push_back(static_cast<int>(k));
      if (slots.empty()) continue;
      const int k = slots[rng.uniform_int(0, static_cast<int>(slots.size()) - 1)];
      m[k] = duplicate_of[m[k]];
      sc = score(5, 3);
    } else if (kind < 0.55) {
      // Category confusion over the same members.
      std::vector<RC> alts;
      for (RC c : kAllRelationshipCategories) {
        if (c == cat) continue;
        const auto sig = arity(c);
        if (sig.size() != m.size()) continue;
        bool ok = true;
        for (std::size_t k = 0; k < m.size(); ++k)
          ok &= !sig[k] || *sig[k] == cs.constituents[m[k]].category;
        if (ok) alts.push_back(c);
      }
      if (alts.empty()) continue;
      cat = alts[rng.uniform_int(0, static_cast<int>(alts.size()) - 1)];
      sc = score(2, 8);
    } else {
      // Random legal tuple of the same category.
      const auto sig = arity(cat);
      bool ok = true;
      for (std::size_t k = 0; k < sig.size() && ok; ++k) {
        const auto& pool = sig[k] ? by_category[category_index(*sig[k])] : by_category[rng.uniform_int(0, 3)];
        if (pool.empty()) {
          ok = false;
          break;
        }
        m[k] = pool[rng.uniform_int(0, static_cast<int>(pool.size()) - 1)];
      }
      std::set<int> distinct(m.begin(), m.end());
      if (!ok || distinct.size() != m.size()) continue;
      sc = score(2, 8);
    }
    if (!taken.insert({cat, m}).second) continue;
    rels.push_back({cat, m});
    scores.push_back(sc);
    ++made;
  }

  // Shuffle and rename so neither position nor id reveals the truth.
  std::vector<int> node_perm(cs.constituents.size());
  std::iota(node_perm.begin(), node_perm.end(), 0);
  std::shuffle(node_perm.begin(), node_perm.end(), rng.engine());
  std::vector<Constituent> nodes(cs.constituents.size());
  std::vector<int> new_pos(cs.constituents.size());
  for (std::size_t i = 0; i < node_perm.size(); ++i) {
    nodes[i] = cs.constituents[node_perm[i]];
    nodes[i].id = "c" + std::to_string(i);
    new_pos[node_perm[i]] = static_cast<int>(i);
  }
  std::vector<int> rel_perm(rels.size());
  std::iota(rel_perm.begin(), rel_perm.end(), 0);
  std::shuffle(rel_perm.begin(), rel_perm.end(), rng.engine());
  for (std::size_t i = 0; i < rel_perm.size(); ++i) {
    const auto& [cat, m] = rels[rel_perm[i]];
    Relationship r{"e" + std::to_string(i), cat, {}, scores[rel_perm[i]]};
    for (int k : m) r.members.push_back(nodes[new_pos[k]].id);
    cs.relationships.push_back(std::move(r));
  }
  cs.constituents = std::move(nodes);
  return cs;
}

}  // namespace

GeneratedDiagram gen_diagram(const SceneTemplate& tmpl, const NoiseConfig& noise, std::uint64_t seed,
                             const std::string& id) {
  noise.validate();
  Rng rng(seed);
  Layout L = layout_scene(tmpl, rng);
  GeneratedDiagram g;
  g.id = id;
  g.kind = tmpl.kind;
  g.truth = make_dpg(L.b.nodes, L.b.edges);
  g.questions = make_questions(tmpl, L, id, rng);
  Rng noise_rng(hash_combine(seed, 0x6e01));
  g.candidates = corrupt(g.truth, tmpl, noise, noise_rng);
  validate_candidates(g.candidates);
  return g;
}

json CorpusConfig::to_json() const {
  return {{"n_train", n_train}, {"n_test", n_test}, {"mix", mix},
          {"noise_preset", noise_name}, {"noise", noise.to_json()}, {"seed", seed}};
}

GeneratedCorpus generate_corpus(const CorpusConfig& cfg) {
  if (cfg.n_train < 1 || cfg.n_test < 1) throw std::invalid_argument("corpus counts must be >= 1");
  const double total = cfg.mix[0] + cfg.mix[1] + cfg.mix[2];
  if (!(total > 0.0) || *std::min_element(cfg.mix.begin(), cfg.mix.end()) < 0.0)
    throw std::invalid_argument("template mix must be non-negative with a positive sum");
  const std::array<SceneTemplate, 3> templates{SceneTemplate::food_web(), SceneTemplate::cycle(),
                                               SceneTemplate::labeled_parts()};
  const std::size_t n = static_cast<std::size_t>(cfg.n_train + cfg.n_test);
  std::vector<GeneratedDiagram> all(n);
  parallel_for(n, [&](std::size_t i) {
    const std::uint64_t seed = hash_combine(cfg.seed, i);
    Rng pick(hash_combine(seed, 0x71));
    const double u = pick.uniform() * total;
    const int t = u < cfg.mix[0] ? 0 : (u < cfg.mix[0] + cfg.mix[1] ? 1 : 2);
    const int kind = cfg.mix[t] > 0.0 ? t : (cfg.mix[2] > 0.0 ? 2 : (cfg.mix[1] > 0.0 ? 1 : 0));
    char id[16];
    std::snprintf(id, sizeof id, "d%04zu", i);
    all[i] = gen_diagram(templates[kind], cfg.noise, seed, id);
  });
  GeneratedCorpus c;
  c.train.assign(std::make_move_iterator(all.begin()), std::make_move_iterator(all.begin() + cfg.n_train));
  c.test.assign(std::make_move_iterator(all.begin() + cfg.n_train), std::make_move_iterator(all.end()));
  return c;
}

void gen_corpus(const CorpusConfig& cfg, const std::filesystem::path& out) {
  const GeneratedCorpus corpus = generate_corpus(cfg);
  json manifest;
  manifest["format"] = "dpgkit-corpus";
  manifest["version"] = 1;
  manifest["config"] = cfg.to_json();
  for (const auto& [split, items] : {std::pair<const char*, const std::vector<GeneratedDiagram>*>{"train", &corpus.train},
                                     {"test", &corpus.test}}) {
    json list = json::array();
    for (const auto& g : *items) {
      const auto dir = out / split;
      write_file(dir / (g.id + ".dpg.json"), write_annotation(g.truth));
      write_file(dir / (g.id + ".cand.json"), write_candidates(g.candidates));
      write_file(dir / (g.id + ".qa.json"), write_questions(g.questions));
      list.push_back({{"id", g.id}, {"template", to_string(g.kind)}, {"questions", g.questions.size()}});
    }
    manifest[split] = std::move(list);
  }
  write_file(out / "manifest.json", manifest.dump(1) + "\n");
}

CorpusSplit load_split(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw DataError("not a directory: " + dir.string());
  std::vector<std::string> ids;
  const std::string suffix = ".dpg.json";
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.size() > suffix.size() && name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0)
      ids.push_back(name.substr(0, name.size() - suffix.size()));
  }
  std::sort(ids.begin(), ids.end());
  CorpusSplit s;
  for (const auto& id : ids) {
    auto with_context = [&](const fs::path& p, auto&& fn) {
      try {
        return fn(read_file(p));
      } catch (const DataError& e) {
        throw DataError(p.string() + ": " + e.what());
      }
    };
    s.ids.push_back(id);
    s.truth.push_back(with_context(dir / (id + ".dpg.json"), [](const std::string& t) { return read_annotation(t); }));
    const auto cand = dir / (id + ".cand.json");
    s.candidates.push_back(fs::exists(cand) ? with_context(cand, [](const std::string& t) { return read_candidates(t); })
                                            : CandidateSet{});
    const auto qa = dir / (id + ".qa.json");
    if (fs::exists(qa)) {
      auto qs = with_context(qa, [](const std::string& t) { return read_questions(t); });
      s.questions.insert(s.questions.end(), qs.begin(), qs.end());
    }
  }
  return s;
}

}  // namespace dpgkit
