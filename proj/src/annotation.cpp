#include "dpgkit/annotation.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace dpgkit {

using nlohmann::json;

namespace {

const json& require(const json& obj, const std::string& key, const std::string& path) {
  if (!obj.is_object()) throw SchemaError(path, "expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) throw SchemaError(path + "/" + key, "missing required field");
  return *it;
}

double as_number(const json& v, const std::string& path) {
  if (!v.is_number()) throw SchemaError(path, "expected a number");
  return v.get<double>();
}

std::string as_string(const json& v, const std::string& path) {
  if (!v.is_string()) throw SchemaError(path, "expected a string");
  return v.get<std::string>();
}

const json& as_array(const json& v, const std::string& path) {
  if (!v.is_array()) throw SchemaError(path, "expected an array");
  return v;
}

Box parse_geometry(const json& c, const std::string& path, double sx, double sy) {
  Box b;
  if (c.contains("box")) {
    const auto& arr = as_array(c["box"], path + "/box");
    if (arr.size() != 4) throw SchemaError(path + "/box", "expected [x0,y0,x1,y1]");
    b = {as_number(arr[0], path + "/box/0"), as_number(arr[1], path + "/box/1"),
         as_number(arr[2], path + "/box/2"), as_number(arr[3], path + "/box/3")};
  } else if (c.contains("polygon")) {
    const auto& poly = as_array(c["polygon"], path + "/polygon");
    if (poly.empty()) throw SchemaError(path + "/polygon", "empty polygon");
    b = {1e300, 1e300, -1e300, -1e300};
    for (std::size_t i = 0; i < poly.size(); ++i) {
      const std::string p = path + "/polygon/" + std::to_string(i);
      const auto& pt = as_array(poly[i], p);
      if (pt.size() != 2) throw SchemaError(p, "expected [x,y]");
      const double x = as_number(pt[0], p + "/0"), y = as_number(pt[1], p + "/1");
      b.x0 = std::min(b.x0, x);
      b.y0 = std::min(b.y0, y);
      b.x1 = std::max(b.x1, x);
      b.y1 = std::max(b.y1, y);
    }
  } else {
    throw SchemaError(path + "/box", "missing required field");
  }
  b.x0 *= sx;
  b.x1 *= sx;
  b.y0 *= sy;
  b.y1 *= sy;
  return b;
}

json to_json(const Constituent& c) {
  json j;
  j["id"] = c.id;
  j["category"] = std::string(to_string(c.category));
  j["box"] = {c.box.x0, c.box.y0, c.box.x1, c.box.y1};
  j["score"] = c.score;
  if (c.text) j["text"] = *c.text;
  return j;
}

json to_json(const Relationship& r) {
  json j;
  j["id"] = r.id;
  j["category"] = std::string(to_string(r.category));
  j["members"] = r.members;
  j["score"] = r.score;
  return j;
}

std::string emit(ImageSize image, const std::vector<Constituent>& nodes,
                 const std::vector<Relationship>& edges, const std::string* provenance) {
  json doc;
  doc["image"] = {{"width", image.width}, {"height", image.height}, {"normalized", true}};
  doc["constituents"] = json::array();
  for (const auto& c : nodes) doc["constituents"].push_back(to_json(c));
  doc["relationships"] = json::array();
  for (const auto& r : edges) doc["relationships"].push_back(to_json(r));
  if (provenance) doc["provenance"] = *provenance;
  return doc.dump(1) + "\n";
}

}  // namespace

Annotation parse_annotation(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw SchemaError("", std::string("malformed JSON: ") + e.what());
  }
  if (!doc.is_object()) throw SchemaError("", "expected an object");

  Annotation a;
  const json& image = require(doc, "image", "");
  a.image.width = static_cast<int>(as_number(require(image, "width", "/image"), "/image/width"));
  a.image.height = static_cast<int>(as_number(require(image, "height", "/image"), "/image/height"));
  if (a.image.width <= 0 || a.image.height <= 0) throw SchemaError("/image", "non-positive size");
  bool normalized = false;
  if (image.contains("normalized")) {
    if (!image["normalized"].is_boolean()) throw SchemaError("/image/normalized", "expected a boolean");
    normalized = image["normalized"].get<bool>();
  }
  const double sx = normalized ? 1.0 : 1.0 / a.image.width;
  const double sy = normalized ? 1.0 : 1.0 / a.image.height;

  const json& cs = as_array(require(doc, "constituents", ""), "/constituents");
  for (std::size_t i = 0; i < cs.size(); ++i) {
    const std::string p = "/constituents/" + std::to_string(i);
    const json& c = cs[i];
    Constituent k;
    k.id = as_string(require(c, "id", p), p + "/id");
    const std::string cat = as_string(require(c, "category", p), p + "/category");
    auto parsed = parse_constituent_category(cat);
    if (!parsed) throw SchemaError(p + "/category", "unknown constituent category '" + cat + "'");
    k.category = *parsed;
    k.box = parse_geometry(c, p, sx, sy);
    if (c.contains("score")) k.score = as_number(c["score"], p + "/score");
    if (c.contains("text")) k.text = as_string(c["text"], p + "/text");
    a.constituents.push_back(std::move(k));
  }

  const json& rs = as_array(require(doc, "relationships", ""), "/relationships");
  for (std::size_t i = 0; i < rs.size(); ++i) {
    const std::string p = "/relationships/" + std::to_string(i);
    const json& r = rs[i];
    Relationship e;
    e.id = as_string(require(r, "id", p), p + "/id");
    const std::string cat = as_string(require(r, "category", p), p + "/category");
    auto parsed = parse_relationship_category(cat);
    if (!parsed) throw SchemaError(p + "/category", "unknown relationship category '" + cat + "'");
    e.category = *parsed;
    const json& ms = as_array(require(r, "members", p), p + "/members");
    for (std::size_t k = 0; k < ms.size(); ++k)
      e.members.push_back(as_string(ms[k], p + "/members/" + std::to_string(k)));
    if (r.contains("score")) e.score = as_number(r["score"], p + "/score");
    a.relationships.push_back(std::move(e));
  }
  if (doc.contains("provenance")) a.provenance = as_string(doc["provenance"], "/provenance");
  return a;
}

Dpg read_annotation(std::string_view json_text) {
  Annotation a = parse_annotation(json_text);
  return make_dpg(std::move(a.constituents), std::move(a.relationships));
}

CandidateSet read_candidates(std::string_view json_text) {
  Annotation a = parse_annotation(json_text);
  CandidateSet c{std::move(a.constituents), std::move(a.relationships),
                 a.provenance.empty() ? "ingested" : a.provenance};
  validate_candidates(c);
  return c;
}

std::string write_annotation(const Dpg& dpg, ImageSize image) {
  return emit(image, dpg.nodes(), dpg.edges(), nullptr);
}

std::string write_candidates(const CandidateSet& candidates, ImageSize image) {
  return emit(image, candidates.constituents, candidates.relationships, &candidates.provenance);
}

void validate_candidates(const CandidateSet& candidates) {
  auto r = validate_dpg(candidates.constituents, candidates.relationships);
  if (!r.ok()) throw DataError("invalid candidate set:\n" + r.report());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace dpgkit
