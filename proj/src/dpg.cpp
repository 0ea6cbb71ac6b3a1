#include "dpgkit/dpg.hpp"

#include <cmath>
#include <set>
#include <sstream>

#include "dpgkit/util.hpp"

namespace dpgkit {

namespace {

using Slot = std::optional<ConstituentCategory>;
constexpr auto kBlob = ConstituentCategory::Blob;
constexpr auto kText = ConstituentCategory::TextBox;
constexpr auto kTail = ConstituentCategory::ArrowTail;
constexpr auto kHead = ConstituentCategory::ArrowHead;

const std::array<Slot, 2> kTextBlob{kText, kBlob};
const std::array<Slot, 3> kTextTailBlob{kText, kTail, kBlob};
const std::array<Slot, 3> kBlobTailBlob{kBlob, kTail, kBlob};
const std::array<Slot, 2> kHeadTail{kHead, kTail};
const std::array<Slot, 2> kTextTail{kText, kTail};
const std::array<Slot, 1> kTextOnly{kText};
const std::array<Slot, 1> kAny{std::nullopt};

}  // namespace

std::string_view to_string(ConstituentCategory c) {
  switch (c) {
    case ConstituentCategory::Blob: return "Blob";
    case ConstituentCategory::TextBox: return "TextBox";
    case ConstituentCategory::ArrowTail: return "ArrowTail";
    case ConstituentCategory::ArrowHead: return "ArrowHead";
  }
  return "?";
}

std::string_view to_string(RelationshipCategory c) {
  static constexpr std::array<std::string_view, 10> names{"R1", "R2", "R3", "R4", "R5",
                                                          "R6", "R7", "R8", "R9", "R10"};
  return names[category_index(c)];
}

std::optional<ConstituentCategory> parse_constituent_category(std::string_view s) {
  for (auto c : {kBlob, kText, kTail, kHead})
    if (to_string(c) == s) return c;
  return std::nullopt;
}

std::optional<RelationshipCategory> parse_relationship_category(std::string_view s) {
  for (auto c : kAllRelationshipCategories)
    if (to_string(c) == s) return c;
  return std::nullopt;
}

std::span<const Slot> arity(RelationshipCategory c) {
  switch (c) {
    case RelationshipCategory::IntraObjectLabel:
    case RelationshipCategory::IntraObjectRegionLabel: return kTextBlob;
    case RelationshipCategory::IntraObjectLinkage: return kTextTailBlob;
    case RelationshipCategory::InterObjectLinkage: return kBlobTailBlob;
    case RelationshipCategory::ArrowHeadAssignment: return kHeadTail;
    case RelationshipCategory::ArrowDescriptor: return kTextTail;
    case RelationshipCategory::ImageTitle:
    case RelationshipCategory::ImageSectionTitle:
    case RelationshipCategory::ImageCaption: return kTextOnly;
    case RelationshipCategory::ImageMisc: return kAny;
  }
  return {};
}

bool is_canvas_relation(RelationshipCategory c) { return category_index(c) >= 6; }

std::string_view to_string(Violation::Rule r) {
  switch (r) {
    case Violation::Rule::DanglingId: return "dangling-id";
    case Violation::Rule::ArityMismatch: return "arity-mismatch";
    case Violation::Rule::CategoryMismatch: return "category-mismatch";
    case Violation::Rule::DuplicateEdge: return "duplicate-edge";
    case Violation::Rule::DuplicateId: return "duplicate-id";
    case Violation::Rule::InvalidGeometry: return "invalid-geometry";
    case Violation::Rule::InvalidScore: return "invalid-score";
  }
  return "?";
}

const Constituent* Dpg::find_node(std::string_view id) const {
  int i = node_index(id);
  return i < 0 ? nullptr : &nodes_[i];
}

int Dpg::node_index(std::string_view id) const {
  auto it = index_.find(std::string(id));
  return it == index_.end() ? -1 : it->second;
}

std::string ValidationResult::report() const {
  std::ostringstream os;
  for (const auto& v : violations)
    os << to_string(v.rule) << " [" << v.subject << "]: " << v.message << "\n";
  return os.str();
}

ValidationResult validate_dpg(std::vector<Constituent> nodes, std::vector<Relationship> edges) {
  ValidationResult result;
  auto fail = [&](Violation::Rule rule, const std::string& subject, std::string msg) {
    result.violations.push_back({rule, subject, std::move(msg)});
  };

  std::unordered_map<std::string, int> index;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const Constituent& n = nodes[i];
    if (!index.emplace(n.id, static_cast<int>(i)).second)
      fail(Violation::Rule::DuplicateId, n.id, "node id used more than once");
    const Box& b = n.box;
    if (!std::isfinite(b.x0) || !std::isfinite(b.y0) || !std::isfinite(b.x1) ||
        !std::isfinite(b.y1) || !b.well_formed())
      fail(Violation::Rule::InvalidGeometry, n.id, "box must satisfy x0 < x1 and y0 < y1");
    if (!(n.score >= 0.0 && n.score <= 1.0))
      fail(Violation::Rule::InvalidScore, n.id, "score outside [0,1]");
    const bool is_text = n.category == ConstituentCategory::TextBox;
    if (is_text != n.text.has_value())
      fail(Violation::Rule::CategoryMismatch, n.id,
           is_text ? "TextBox without text" : "text on a non-TextBox constituent");
  }

  std::set<std::string> edge_ids;
  std::set<std::pair<int, std::vector<std::string>>> tuples;
  for (const Relationship& e : edges) {
    const std::string cat{to_string(e.category)};
    if (!edge_ids.insert(e.id).second)
      fail(Violation::Rule::DuplicateId, e.id, "edge id used more than once");
    if (!(e.score >= 0.0 && e.score <= 1.0))
      fail(Violation::Rule::InvalidScore, e.id, "score outside [0,1]");
    auto sig = arity(e.category);
    if (e.members.size() != sig.size()) {
      fail(Violation::Rule::ArityMismatch, e.id,
           cat + " expects " + std::to_string(sig.size()) + " members, got " +
               std::to_string(e.members.size()));
    } else {
      for (std::size_t k = 0; k < sig.size(); ++k) {
        auto it = index.find(e.members[k]);
        if (it == index.end()) {
          fail(Violation::Rule::DanglingId, e.id,
               "member '" + e.members[k] + "' is not a node");
          continue;
        }
        const auto actual = nodes[it->second].category;
        if (sig[k] && *sig[k] != actual)
          fail(Violation::Rule::ArityMismatch, e.id,
               cat + " slot " + std::to_string(k) + " expects " + std::string(to_string(*sig[k])) +
                   ", got " + std::string(to_string(actual)));
      }
    }
    if (!tuples.emplace(category_index(e.category), e.members).second)
      fail(Violation::Rule::DuplicateEdge, e.id, "same category and member tuple as an earlier edge");
  }

  if (result.violations.empty()) {
    Dpg g;
    g.nodes_ = std::move(nodes);
    g.edges_ = std::move(edges);
    g.index_ = std::move(index);
    result.graph = std::move(g);
  }
  return result;
}

Dpg make_dpg(std::vector<Constituent> nodes, std::vector<Relationship> edges) {
  auto r = validate_dpg(std::move(nodes), std::move(edges));
  if (!r.ok()) throw DataError("invalid DPG:\n" + r.report());
  return std::move(*r.graph);
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    if (ch == ' ' || ch == '\t' || ch == '\n' || ch == '\r') {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::vector<RelationSentence> verbalize(const Dpg& dpg) {
  using RC = RelationshipCategory;
  std::unordered_map<std::string, std::vector<std::string>> names;
  std::unordered_map<std::string, const Relationship*> linkage_of_tail;
  for (const Relationship& e : dpg.edges()) {
    if (e.category == RC::IntraObjectLabel && !names.count(e.members[1]))
      names[e.members[1]] = split_words(*dpg.find_node(e.members[0])->text);
    if (e.category == RC::InterObjectLinkage && !linkage_of_tail.count(e.members[1]))
      linkage_of_tail[e.members[1]] = &e;
  }
  auto name_of = [&](const std::string& blob) {
    auto it = names.find(blob);
    if (it != names.end() && !it->second.empty()) return it->second;
    return std::vector<std::string>{"object-" + blob};
  };
  auto text_of = [&](const std::string& id) { return split_words(*dpg.find_node(id)->text); };

  std::vector<RelationSentence> out;
  for (const Relationship& e : dpg.edges()) {
    std::vector<std::string> t;
    auto put = [&t](const std::vector<std::string>& words) { t.insert(t.end(), words.begin(), words.end()); };
    auto word = [&t](std::string w) { t.push_back(std::move(w)); };
    const auto& m = e.members;
    switch (e.category) {
      case RC::IntraObjectLabel:
        put(text_of(m[0]));
        word("names");
        word("object-" + m[1]);
        break;
      case RC::IntraObjectRegionLabel:
        put(text_of(m[0]));
        for (auto w : {"names", "a", "region", "of"}) word(w);
        put(name_of(m[1]));
        break;
      case RC::IntraObjectLinkage:
        put(text_of(m[0]));
        for (auto w : {"points", "to", "a", "region", "of"}) word(w);
        put(name_of(m[2]));
        break;
      case RC::InterObjectLinkage:
        put(name_of(m[0]));
        word("links");
        word("to");
        put(name_of(m[2]));
        break;
      case RC::ArrowHeadAssignment:
        word("arrow-" + m[1]);
        word("has");
        word("head");
        word("arrowhead-" + m[0]);
        break;
      case RC::ArrowDescriptor: {
        put(text_of(m[0]));
        word("describes");
        auto it = linkage_of_tail.find(m[1]);
        if (it != linkage_of_tail.end()) {
          for (auto w : {"the", "arrow", "from"}) word(w);
          put(name_of(it->second->members[0]));
          word("to");
          put(name_of(it->second->members[2]));
        } else {
          word("arrow-" + m[1]);
        }
        break;
      }
      case RC::ImageTitle:
        for (auto w : {"image", "title", "is"}) word(w);
        put(text_of(m[0]));
        break;
      case RC::ImageSectionTitle:
        for (auto w : {"image", "section", "title", "is"}) word(w);
        put(text_of(m[0]));
        break;
      case RC::ImageCaption:
        for (auto w : {"image", "caption", "is"}) word(w);
        put(text_of(m[0]));
        break;
      case RC::ImageMisc:
        continue;
    }
    if (t.empty()) t.push_back("object-" + m[0]);
    out.push_back({std::move(t), e.id});
  }
  return out;
}

}  // namespace dpgkit
