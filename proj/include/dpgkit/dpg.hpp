#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "dpgkit/geometry.hpp"

namespace dpgkit {

enum class ConstituentCategory { Blob, TextBox, ArrowTail, ArrowHead };

inline constexpr int kNumConstituentCategories = 4;

enum class RelationshipCategory {
  IntraObjectLabel = 1,        // R1
  IntraObjectRegionLabel = 2,  // R2
  IntraObjectLinkage = 3,      // R3
  InterObjectLinkage = 4,      // R4
  ArrowHeadAssignment = 5,     // R5
  ArrowDescriptor = 6,         // R6
  ImageTitle = 7,              // R7
  ImageSectionTitle = 8,       // R8
  ImageCaption = 9,            // R9
  ImageMisc = 10,              // R10
};

inline constexpr int kNumRelationshipCategories = 10;

inline constexpr std::array<RelationshipCategory, kNumRelationshipCategories> kAllRelationshipCategories{
    RelationshipCategory::IntraObjectLabel,    RelationshipCategory::IntraObjectRegionLabel,
    RelationshipCategory::IntraObjectLinkage,  RelationshipCategory::InterObjectLinkage,
    RelationshipCategory::ArrowHeadAssignment, RelationshipCategory::ArrowDescriptor,
    RelationshipCategory::ImageTitle,          RelationshipCategory::ImageSectionTitle,
    RelationshipCategory::ImageCaption,        RelationshipCategory::ImageMisc};

/// 0-based index for one-hot encodings (R1 -> 0).
inline int category_index(RelationshipCategory c) { return static_cast<int>(c) - 1; }
inline int category_index(ConstituentCategory c) { return static_cast<int>(c); }

std::string_view to_string(ConstituentCategory c);
/// "R1".."R10"
std::string_view to_string(RelationshipCategory c);
std::optional<ConstituentCategory> parse_constituent_category(std::string_view s);
std::optional<RelationshipCategory> parse_relationship_category(std::string_view s);

/// Member signature of a relationship category. An empty optional means any
/// constituent category is accepted in that slot.
std::span<const std::optional<ConstituentCategory>> arity(RelationshipCategory c);

/// True for R7..R10, which relate one constituent to the whole canvas.
bool is_canvas_relation(RelationshipCategory c);

struct Constituent {
  std::string id;
  ConstituentCategory category = ConstituentCategory::Blob;
  Box box;
  double score = 1.0;
  std::optional<std::string> text;

  bool operator==(const Constituent&) const = default;
};

struct Relationship {
  std::string id;
  RelationshipCategory category = RelationshipCategory::IntraObjectLabel;
  std::vector<std::string> members;
  double score = 1.0;

  bool operator==(const Relationship&) const = default;
};

struct Violation {
  enum class Rule {
    DanglingId,
    ArityMismatch,
    CategoryMismatch,
    DuplicateEdge,
    DuplicateId,
    InvalidGeometry,
    InvalidScore,
  };
  Rule rule;
  std::string subject;  // offending node or edge id
  std::string message;
};

std::string_view to_string(Violation::Rule r);

struct ValidationResult;

/// Diagram parse graph. Immutable once built; only validate_dpg constructs one.
class Dpg {
 public:
  Dpg() = default;

  const std::vector<Constituent>& nodes() const { return nodes_; }
  const std::vector<Relationship>& edges() const { return edges_; }
  bool empty() const { return nodes_.empty() && edges_.empty(); }

  const Constituent* find_node(std::string_view id) const;
  /// Position of a node in nodes(), or -1.
  int node_index(std::string_view id) const;

  bool operator==(const Dpg& other) const {
    return nodes_ == other.nodes_ && edges_ == other.edges_;
  }

 private:
  friend ValidationResult validate_dpg(std::vector<Constituent>, std::vector<Relationship>);

  std::vector<Constituent> nodes_;
  std::vector<Relationship> edges_;
  std::unordered_map<std::string, int> index_;
};

struct ValidationResult {
  std::optional<Dpg> graph;
  std::vector<Violation> violations;

  bool ok() const { return graph.has_value(); }
  std::string report() const;
};

/// Checks every graph invariant and returns either the graph or all violations.
ValidationResult validate_dpg(std::vector<Constituent> nodes, std::vector<Relationship> edges);

/// Like validate_dpg but throws DataError carrying the report.
Dpg make_dpg(std::vector<Constituent> nodes, std::vector<Relationship> edges);

struct RelationSentence {
  std::vector<std::string> tokens;
  std::string source_edge;
};

/// One sentence per R1..R9 edge, in edge order.
///
/// Templates (<A>/<B> are object names; a blob is named by the text of its
/// first R1 label, otherwise "object-<id>"):
///   R1  <text> names object-<blob id>
///   R2  <text> names a region of <B>
///   R3  <text> points to a region of <B>
///   R4  <A> links to <B>
///   R5  arrow-<tail id> has head arrowhead-<head id>
///   R6  <text> describes the arrow from <A> to <B>   (or "... describes arrow-<id>"
///                                                    when the tail has no R4)
///   R7  image title is <text>
///   R8  image section title is <text>
///   R9  image caption is <text>
std::vector<RelationSentence> verbalize(const Dpg& dpg);

/// Whitespace split, no normalization.
std::vector<std::string> split_words(std::string_view text);

}  // namespace dpgkit
