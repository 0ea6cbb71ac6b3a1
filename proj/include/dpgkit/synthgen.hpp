#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "dpgkit/annotation.hpp"
#include "dpgkit/dpg.hpp"
#include "dpgkit/dqa.hpp"

namespace dpgkit {

enum class TemplateKind { FoodWeb, Cycle, LabeledParts };

std::string_view to_string(TemplateKind k);

/// Layout family. FoodWeb arrows form a layered DAG, Cycle arrows a ring,
/// LabeledParts arrows a star of part labels around one object.
struct SceneTemplate {
  TemplateKind kind = TemplateKind::FoodWeb;
  int min_objects = 4;
  int max_objects = 7;
  std::vector<std::string> lexicon;        // object names
  std::vector<std::string> part_lexicon;   // LabeledParts only
  std::vector<std::string> titles;

  static SceneTemplate food_web();
  static SceneTemplate cycle();
  static SceneTemplate labeled_parts();
  static SceneTemplate of(TemplateKind k);
};

/// Candidate corruption. Rates lie in [0,1).
///   jitter               box noise, std dev relative to box size
///   fp_constituent_rate  false constituents per truth constituent
///   false_rel_rate       share of false relationships among candidates
///   drop_rate            chance a truth edge is missing from candidates
/// With calibrated scores, true candidates draw Beta(8,2) and false ones
/// Beta(2,8); otherwise every score is 1.
struct NoiseConfig {
  double jitter = 0.05;
  double fp_constituent_rate = 0.3;
  double false_rel_rate = 0.6;
  double drop_rate = 0.0;
  bool calibrated_scores = true;

  bool noiseless() const;
  void validate() const;
  nlohmann::json to_json() const;

  /// "clean", "default" or "hard"; throws std::invalid_argument otherwise.
  static NoiseConfig preset(std::string_view name);
};

struct GeneratedDiagram {
  std::string id;
  TemplateKind kind = TemplateKind::FoodWeb;
  Dpg truth;
  CandidateSet candidates;
  std::vector<DiagramQuestion> questions;
};

GeneratedDiagram gen_diagram(const SceneTemplate& tmpl, const NoiseConfig& noise, std::uint64_t seed,
                             const std::string& id = "d0");

struct CorpusConfig {
  int n_train = 200;
  int n_test = 50;
  std::array<double, 3> mix{1.0, 1.0, 1.0};  // FoodWeb, Cycle, LabeledParts
  std::string noise_name = "default";
  NoiseConfig noise;
  std::uint64_t seed = 7;

  nlohmann::json to_json() const;
};

struct GeneratedCorpus {
  std::vector<GeneratedDiagram> train;
  std::vector<GeneratedDiagram> test;
};

/// Diagram i (train first, then test) uses seed hash_combine(seed, i).
GeneratedCorpus generate_corpus(const CorpusConfig& cfg);

/// Writes <out>/{train,test}/<id>.dpg.json, <id>.cand.json, <id>.qa.json and
/// <out>/manifest.json.
void gen_corpus(const CorpusConfig& cfg, const std::filesystem::path& out);

/// Files of one split directory, sorted by diagram id. Missing candidate or
/// question files leave those entries empty.
struct CorpusSplit {
  std::vector<std::string> ids;
  std::vector<Dpg> truth;
  std::vector<CandidateSet> candidates;
  std::vector<DiagramQuestion> questions;
};

CorpusSplit load_split(const std::filesystem::path& dir);

}  // namespace dpgkit
