#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "dpgkit/dpg.hpp"
#include "dpgkit/util.hpp"

namespace dpgkit {

/// Schema violation in a JSON document; path() is a JSON pointer.
class SchemaError : public DataError {
 public:
  SchemaError(std::string path, const std::string& what)
      : DataError(path + ": " + what), path_(std::move(path)) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

struct ImageSize {
  int width = 1;
  int height = 1;
  bool operator==(const ImageSize&) const = default;
};

/// Scored constituent and relationship proposals for one diagram.
struct CandidateSet {
  std::vector<Constituent> constituents;
  std::vector<Relationship> relationships;
  std::string provenance = "ingested";  // "synthetic" | "ingested"

  bool operator==(const CandidateSet&) const = default;
};

/// Raw annotation document, after schema checks and coordinate
/// normalization but before graph validation.
struct Annotation {
  ImageSize image;
  std::vector<Constituent> constituents;
  std::vector<Relationship> relationships;
  std::string provenance;
};

/// Parses the annotation JSON schema:
///
///   { "image": {"width": int, "height": int, "normalized"?: bool},
///     "constituents": [{"id", "category", "box": [x0,y0,x1,y1] | "polygon": [[x,y],...],
///                       "score"?, "text"?}],
///     "relationships": [{"id", "category": "R1".."R10", "members": [ids], "score"?}],
///     "provenance"?: str }
///
/// Boxes are pixel coordinates unless image.normalized is true; polygons are
/// reduced to their bounding box. Missing scores default to 1.
Annotation parse_annotation(std::string_view json_text);

Dpg read_annotation(std::string_view json_text);
CandidateSet read_candidates(std::string_view json_text);

/// Emits normalized coordinates with "normalized": true, so a read of the
/// output reproduces the graph exactly.
std::string write_annotation(const Dpg& dpg, ImageSize image = {});
std::string write_candidates(const CandidateSet& candidates, ImageSize image = {});

/// Checks candidate invariants (resolvable members, arity, scores).
void validate_candidates(const CandidateSet& candidates);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

}  // namespace dpgkit
