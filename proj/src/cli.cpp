#include "dpgkit/cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

#include "dpgkit/annotation.hpp"
#include "dpgkit/dqa.hpp"
#include "dpgkit/dsdp.hpp"
#include "dpgkit/metrics.hpp"
#include "dpgkit/proposals.hpp"
#include "dpgkit/render.hpp"
#include "dpgkit/search.hpp"
#include "dpgkit/synthgen.hpp"
#include "dpgkit/util.hpp"

namespace dpgkit::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

constexpr const char* kCandSuffix = ".cand.json";
constexpr const char* kDpgSuffix = ".dpg.json";

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::string strip_suffix(const std::string& name) {
  for (const char* suffix : {kCandSuffix, kDpgSuffix, ".json"})
    if (ends_with(name, suffix)) return name.substr(0, name.size() - std::string(suffix).size());
  return name;
}

// (id, path) for every file with the suffix in a directory, or the single file.
std::vector<std::pair<std::string, fs::path>> list_inputs(const fs::path& input, const std::string& suffix) {
  std::vector<std::pair<std::string, fs::path>> out;
  if (fs::is_directory(input)) {
    for (const auto& e : fs::directory_iterator(input)) {
      const std::string name = e.path().filename().string();
      if (ends_with(name, suffix)) out.emplace_back(name.substr(0, name.size() - suffix.size()), e.path());
    }
    std::sort(out.begin(), out.end());
  } else if (fs::exists(input)) {
    out.emplace_back(strip_suffix(input.filename().string()), input);
  } else {
    throw DataError("no such file or directory: " + input.string());
  }
  return out;
}

json read_json(const fs::path& p) {
  try {
    return json::parse(read_file(p));
  } catch (const json::parse_error& e) {
    throw DataError(p.string() + ": malformed JSON: " + e.what());
  }
}

template <typename F>
auto with_path(const fs::path& p, F&& fn) {
  try {
    return fn(read_file(p));
  } catch (const SchemaError& e) {
    throw DataError(p.string() + ": " + e.what());
  }
}

std::vector<ParserExample> load_parser_corpus(const fs::path& dir) {
  std::vector<ParserExample> corpus;
  for (const auto& [id, cand] : list_inputs(dir, kCandSuffix)) {
    const fs::path truth = dir / (id + kDpgSuffix);
    if (!fs::exists(truth)) throw DataError("missing truth file " + truth.string());
    corpus.push_back({with_path(cand, [](const std::string& t) { return read_candidates(t); }),
                      with_path(truth, [](const std::string& t) { return read_annotation(t); })});
  }
  if (corpus.empty()) throw DataError("no *.cand.json files in " + dir.string());
  return corpus;
}

std::map<std::string, Dpg> load_dpgs(const fs::path& dir) {
  std::map<std::string, Dpg> out;
  for (const auto& [id, path] : list_inputs(dir, kDpgSuffix))
    out.emplace(id, with_path(path, [](const std::string& t) { return read_annotation(t); }));
  return out;
}

std::vector<DiagramQuestion> load_questions(const fs::path& input) {
  std::vector<DiagramQuestion> out;
  for (const auto& [id, path] : list_inputs(input, ".qa.json")) {
    auto qs = with_path(path, [](const std::string& t) { return read_questions(t); });
    out.insert(out.end(), qs.begin(), qs.end());
  }
  return out;
}

std::string fmt(double v) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(6) << v;
  return s.str();
}

void write_model(const fs::path& out, json model, const json& config) {
  model["run"] = config;
  write_file(out, model.dump() + "\n");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Diagram parse graph toolkit: synthetic corpora, parsing, JIG evaluation and diagram QA", "dpgkit"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  // gen
  CorpusConfig gen_cfg;
  std::string gen_mix = "1,1,1", gen_out;
  auto* gen = app.add_subcommand("gen", "Generate a synthetic corpus");
  gen->add_option("--n-train", gen_cfg.n_train, "Training diagrams")->check(CLI::PositiveNumber);
  gen->add_option("--n-test", gen_cfg.n_test, "Test diagrams")->check(CLI::PositiveNumber);
  gen->add_option("--mix", gen_mix, "Template weights FoodWeb,Cycle,LabeledParts");
  gen->add_option("--noise", gen_cfg.noise_name, "Noise preset")->check(CLI::IsMember({"clean", "default", "hard"}));
  gen->add_option("--seed", gen_cfg.seed, "Corpus seed");
  gen->add_option("--out", gen_out, "Output directory")->required();

  // train-proposals
  std::string tp_corpus, tp_out;
  ProposalTrainingConfig tp_cfg;
  auto* tp = app.add_subcommand("train-proposals", "Fit relationship proposal forests and KDEs");
  tp->add_option("--corpus", tp_corpus, "Directory of <id>.cand.json + <id>.dpg.json")->required();
  tp->add_option("--radius", tp_cfg.radius, "Proximity pruning radius");
  tp->add_option("--trees", tp_cfg.forest.n_trees, "Trees per forest");
  tp->add_option("--seed", tp_cfg.seed, "Seed");
  tp->add_option("--out", tp_out, "Model file")->required();

  // propose
  std::string pr_model, pr_input, pr_out;
  auto* pr = app.add_subcommand("propose", "Replace candidate relationships with scored proposals");
  pr->add_option("--model", pr_model, "Proposal model file")->required();
  pr->add_option("--input", pr_input, "Candidate file or directory")->required();
  pr->add_option("--out", pr_out, "Output file or directory")->required();

  // train-parser
  std::string tpa_method = "dsdp", tpa_corpus, tpa_out;
  ParserTrainConfig tpa_cfg;
  SearchTrainConfig tps_cfg;
  int tpa_hidden = 64;
  auto* tpa = app.add_subcommand("train-parser", "Train the sequential parser or the search models");
  tpa->add_option("--method", tpa_method, "dsdp or search")->check(CLI::IsMember({"dsdp", "search"}));
  tpa->add_option("--corpus", tpa_corpus, "Directory of <id>.cand.json + <id>.dpg.json")->required();
  tpa->add_option("--seq-per-image", tpa_cfg.seq_per_image, "Sampled sequences per diagram")
      ->check(CLI::PositiveNumber);
  tpa->add_option("--max-len", tpa_cfg.max_len, "Sequence length cap")->check(CLI::PositiveNumber);
  tpa->add_option("--hidden", tpa_hidden, "LSTM width of both layers")->check(CLI::PositiveNumber);
  tpa->add_option("--fc", tpa_cfg.net.fc_width, "Width of the input FC layers")->check(CLI::PositiveNumber);
  tpa->add_option("--lr", tpa_cfg.lr, "RMSProp learning rate");
  tpa->add_option("--epochs", tpa_cfg.epochs, "Epochs")->check(CLI::NonNegativeNumber);
  tpa->add_option("--batch", tpa_cfg.batch_size, "Sequences per update")->check(CLI::PositiveNumber);
  tpa->add_option("--trees", tps_cfg.forest.n_trees, "Trees per forest (search)");
  tpa->add_option("--search-rounds", tps_cfg.search_aware_rounds, "Search-aware exit refits (search)")
      ->check(CLI::NonNegativeNumber);
  bool tpa_no_tune = false;
  tpa->add_flag("--no-tune", tpa_no_tune, "Keep exit thresholds at 0.5 (search)");
  tpa->add_option("--seed", tpa_cfg.seed, "Seed");
  tpa->add_option("--out", tpa_out, "Model file")->required();

  // parse
  std::string pa_method = "dsdp", pa_model, pa_input, pa_out;
  AStarConfig pa_astar;
  std::optional<double> pa_threshold;
  auto* pa = app.add_subcommand("parse", "Parse candidate sets into DPGs");
  pa->add_option("--method", pa_method, "greedy, astar or dsdp")->check(CLI::IsMember({"greedy", "astar", "dsdp"}));
  pa->add_option("--model", pa_model, "Parser model (dsdp) or search model (greedy, astar)")->required();
  pa->add_option("--input", pa_input, "Candidate file or directory")->required();
  pa->add_option("--out", pa_out, "Output file or directory")->required();
  pa->add_option("--lambda", pa_astar.lambda, "A* rank/exit mix")->check(CLI::Range(0.0, 1.0));
  pa->add_option("--beam", pa_astar.beam, "A* frontier cap")->check(CLI::PositiveNumber);
  pa->add_option("--threshold", pa_threshold, "Exit-model stop threshold (default: the model's tuned value)");

  // eval-jig
  std::string ej_proposed, ej_truth;
  MatchConfig ej_match;
  auto* ej = app.add_subcommand("eval-jig", "JIG of proposed DPGs against truth (TSV)");
  ej->add_option("proposed", ej_proposed, "Proposed DPG file or directory")->required();
  ej->add_option("truth", ej_truth, "Truth DPG file or directory")->required();
  ej->add_option("--iou", ej_match.iou_threshold, "Node match IoU threshold")->check(CLI::Range(1e-9, 1.0));

  // train-qa
  std::string tq_corpus, tq_out, tq_embeddings;
  QaTrainConfig tq_cfg;
  auto* tq = app.add_subcommand("train-qa", "Train the diagram QA model");
  tq->add_option("--corpus", tq_corpus, "Directory of <id>.dpg.json + <id>.qa.json")->required();
  tq->add_option("--epochs", tq_cfg.epochs, "Epochs")->check(CLI::NonNegativeNumber);
  tq->add_option("--batch", tq_cfg.batch_size, "Questions per update")->check(CLI::PositiveNumber);
  tq->add_option("--lr", tq_cfg.lr, "Initial SGD learning rate");
  tq->add_option("--decay-every", tq_cfg.decay_every, "Epochs between halvings");
  tq->add_option("--embeddings", tq_embeddings, "Whitespace text embedding file (300-d)");
  tq->add_option("--seed", tq_cfg.seed, "Seed");
  tq->add_option("--out", tq_out, "Model file")->required();

  // answer
  std::string an_model, an_dpg, an_questions;
  auto* an = app.add_subcommand("answer", "Answer questions about one DPG (TSV)");
  an->add_option("--model", an_model, "QA model file")->required();
  an->add_option("--dpg", an_dpg, "DPG file")->required();
  an->add_option("--questions", an_questions, "Question file")->required();

  // eval-qa
  std::string eq_model, eq_corpus, eq_dpg_dir;
  auto* eq = app.add_subcommand("eval-qa", "QA accuracy over a split (TSV)");
  eq->add_option("--model", eq_model, "QA model file")->required();
  eq->add_option("--corpus", eq_corpus, "Directory with <id>.qa.json (and DPGs)")->required();
  eq->add_option("--dpg-dir", eq_dpg_dir, "Answer over these DPGs instead of the corpus truth");

  // render
  std::string rd_input, rd_out;
  auto* rd = app.add_subcommand("render", "Emit Graphviz DOT for a DPG");
  rd->add_option("--input", rd_input, "DPG file")->required();
  rd->add_option("--out", rd_out, "Output file (default stdout)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (gen->parsed()) {
      std::array<double, 3> mix{};
      std::stringstream ss(gen_mix);
      std::string part;
      int k = 0;
      while (std::getline(ss, part, ',')) {
        if (k >= 3) throw UsageError("--mix takes three comma-separated weights");
        try {
          mix[k++] = std::stod(part);
        } catch (const std::exception&) {
          throw UsageError("--mix: not a number: " + part);
        }
      }
      if (k != 3) throw UsageError("--mix takes three comma-separated weights");
      gen_cfg.mix = mix;
      gen_cfg.noise = NoiseConfig::preset(gen_cfg.noise_name);
      gen_corpus(gen_cfg, gen_out);
      out << "wrote\t" << gen_cfg.n_train << "\ttrain\t" << gen_cfg.n_test << "\ttest\t" << gen_out << "\n";
    } else if (tp->parsed()) {
      std::vector<ProposalExample> corpus;
      for (auto& ex : load_parser_corpus(tp_corpus)) corpus.push_back({ex.candidates.constituents, ex.truth});
      tp_cfg.forest.seed = tp_cfg.seed;
      const auto models = train_proposals(corpus, tp_cfg);
      write_model(tp_out, models.to_json(),
                  {{"corpus", tp_corpus}, {"radius", tp_cfg.radius}, {"trees", tp_cfg.forest.n_trees}, {"seed", tp_cfg.seed}});
      err << "trained proposal models on " << corpus.size() << " diagrams\n";
    } else if (pr->parsed()) {
      const auto models = ProposalModels::from_json(read_json(pr_model));
      const auto inputs = list_inputs(pr_input, kCandSuffix);
      const bool to_dir = fs::is_directory(pr_input);
      for (const auto& [id, path] : inputs) {
        const auto cands = with_path(path, [](const std::string& t) { return read_candidates(t); });
        const auto proposed = propose_relationships(cands.constituents, models.radius, models);
        write_file(to_dir ? fs::path(pr_out) / (id + kCandSuffix) : fs::path(pr_out), write_candidates(proposed));
        out << id << "\t" << proposed.relationships.size() << "\n";
      }
    } else if (tpa->parsed()) {
      const auto corpus = load_parser_corpus(tpa_corpus);
      if (tpa_method == "dsdp") {
        tpa_cfg.net.hidden1 = tpa_cfg.net.hidden2 = tpa_hidden;
        tpa_cfg.net.max_steps = tpa_cfg.max_len;
        ParserTrainReport report;
        const auto net = train_parser(corpus, tpa_cfg, &report);
        for (std::size_t e = 0; e < report.epoch_loss.size(); ++e)
          err << "epoch " << e + 1 << " loss " << fmt(report.epoch_loss[e]) << "\n";
        if (report.skipped_updates) err << "skipped " << report.skipped_updates << " non-finite updates\n";
        if (report.clamped_weight_sets) err << "clamped non-positive weights in " << report.clamped_weight_sets << " diagrams\n";
        write_model(tpa_out, net.to_json(),
                    {{"method", "dsdp"}, {"corpus", tpa_corpus}, {"seq_per_image", tpa_cfg.seq_per_image},
                     {"max_len", tpa_cfg.max_len}, {"hidden", tpa_hidden}, {"fc", tpa_cfg.net.fc_width},
                     {"lr", tpa_cfg.lr}, {"epochs", tpa_cfg.epochs}, {"batch", tpa_cfg.batch_size}, {"seed", tpa_cfg.seed}});
      } else {
        tps_cfg.seed = tpa_cfg.seed;
        tps_cfg.tune_thresholds = !tpa_no_tune;
        tps_cfg.max_len = tpa_cfg.max_len;
        const SearchModels models = train_search_models(corpus, tps_cfg);
        write_model(tpa_out, models.to_json(),
                    {{"method", "search"}, {"corpus", tpa_corpus}, {"trees", tps_cfg.forest.n_trees},
                     {"search_rounds", tps_cfg.search_aware_rounds}, {"tune", !tpa_no_tune}, {"seed", tpa_cfg.seed}});
      }
      err << "trained " << tpa_method << " models on " << corpus.size() << " diagrams\n";
    } else if (pa->parsed()) {
      const json model = read_json(pa_model);
      std::optional<DsdpNet> net;
      std::optional<SearchModels> search;
      if (pa_method == "dsdp")
        net = DsdpNet::from_json(model);
      else
        search = SearchModels::from_json(model);
      const auto inputs = list_inputs(pa_input, kCandSuffix);
      const bool to_dir = fs::is_directory(pa_input);
      for (const auto& [id, path] : inputs) {
        const auto cands = with_path(path, [](const std::string& t) { return read_candidates(t); });
        Dpg g;
        if (net) {
          DsdpPolicy policy(*net);
          g = infer_dpg(cands, policy);
        } else if (pa_method == "greedy") {
          g = greedy_parse(cands, search->exit.fn(), pa_threshold.value_or(search->greedy_threshold)).graph;
        } else {
          pa_astar.threshold = pa_threshold.value_or(search->astar_threshold);
          g = astar_parse(cands, search->rank.fn(), search->exit.fn(), pa_astar).graph;
        }
        write_file(to_dir ? fs::path(pa_out) / (id + kDpgSuffix) : fs::path(pa_out), write_annotation(g));
        out << id << "\t" << g.nodes().size() << "\t" << g.edges().size() << "\n";
      }
    } else if (ej->parsed()) {
      std::vector<std::pair<std::string, fs::path>> proposed, truth;
      if (fs::is_directory(ej_proposed) != fs::is_directory(ej_truth))
        throw UsageError("eval-jig takes two files or two directories");
      proposed = list_inputs(ej_proposed, kDpgSuffix);
      truth = list_inputs(ej_truth, kDpgSuffix);
      std::map<std::string, fs::path> proposed_by_id(proposed.begin(), proposed.end());
      if (!fs::is_directory(ej_truth)) proposed_by_id = {{truth[0].first, proposed[0].second}};
      out << "diagram\tnode\tedge\tcombined\n";
      double sum = 0.0, node_sum = 0.0, edge_sum = 0.0;
      std::size_t ni = 0, nu = 0, ei = 0, eu = 0;
      for (const auto& [id, tpath] : truth) {
        const auto t = with_path(tpath, [](const std::string& s) { return read_annotation(s); });
        auto it = proposed_by_id.find(id);
        const Dpg p = it == proposed_by_id.end() ? Dpg{}
                                                 : with_path(it->second, [](const std::string& s) { return read_annotation(s); });
        const auto s = jig(p, t, ej_match);
        out << id << "\t" << fmt(s.node_jaccard) << "\t" << fmt(s.edge_jaccard) << "\t" << fmt(s.combined) << "\n";
        sum += s.combined;
        node_sum += s.node_jaccard;
        edge_sum += s.edge_jaccard;
        ni += s.node_intersection, nu += s.node_union, ei += s.edge_intersection, eu += s.edge_union;
      }
      if (truth.empty()) throw DataError("no truth DPGs found");
      const double pooled = (nu + eu) == 0 ? 1.0 : static_cast<double>(ni + ei) / static_cast<double>(nu + eu);
      const double n = static_cast<double>(truth.size());
      out << "mean\t" << fmt(node_sum / n) << "\t" << fmt(edge_sum / n) << "\t" << fmt(sum / n) << "\n";
      out << "pooled\t" << fmt(nu ? static_cast<double>(ni) / nu : 1.0) << "\t" << fmt(eu ? static_cast<double>(ei) / eu : 1.0)
          << "\t" << fmt(pooled) << "\n";
    } else if (tq->parsed()) {
      const auto dpgs = load_dpgs(tq_corpus);
      const auto questions = load_questions(tq_corpus);
      std::vector<QaExample> corpus;
      for (const auto& q : questions) {
        auto it = dpgs.find(q.diagram);
        if (it == dpgs.end()) throw DataError("question refers to unknown diagram " + q.diagram);
        corpus.push_back({&it->second, &q});
      }
      std::optional<EmbeddingTable> table;
      if (!tq_embeddings.empty()) table = EmbeddingTable::load(tq_embeddings, tq_cfg.seed);
      QaTrainReport report;
      const auto model = train_qa(corpus, tq_cfg, &report, std::move(table));
      for (std::size_t e = 0; e < report.epoch_loss.size(); ++e)
        err << "epoch " << e + 1 << " loss " << fmt(report.epoch_loss[e]) << "\n";
      if (report.skipped_questions) err << "skipped " << report.skipped_questions << " questions on relation-free diagrams\n";
      write_model(tq_out, model.to_json(),
                  {{"corpus", tq_corpus}, {"epochs", tq_cfg.epochs}, {"batch", tq_cfg.batch_size}, {"lr", tq_cfg.lr},
                   {"decay_every", tq_cfg.decay_every}, {"embeddings", tq_embeddings}, {"seed", tq_cfg.seed}});
    } else if (an->parsed()) {
      const auto model = QaModel::from_json(read_json(an_model));
      const auto g = with_path(an_dpg, [](const std::string& t) { return read_annotation(t); });
      const auto questions = load_questions(an_questions);
      out << "question\tchoice\tfallback\tp1\tp2\tp3\tp4\n";
      for (std::size_t i = 0; i < questions.size(); ++i) {
        const auto a = answer(model, g, questions[i]);
        out << i << "\t" << a.choice << "\t" << (a.fallback ? 1 : 0);
        for (double p : a.attention.probs) out << "\t" << fmt(p);
        out << "\n";
      }
    } else if (eq->parsed()) {
      const auto model = QaModel::from_json(read_json(eq_model));
      const auto dpgs = load_dpgs(eq_dpg_dir.empty() ? eq_corpus : eq_dpg_dir);
      const auto questions = load_questions(eq_corpus);
      std::size_t correct = 0, fallback = 0;
      const Dpg empty;
      for (const auto& q : questions) {
        auto it = dpgs.find(q.diagram);
        const auto a = answer(model, it == dpgs.end() ? empty : it->second, q);
        correct += a.choice == q.gold;
        fallback += a.fallback;
      }
      out << "questions\tcorrect\taccuracy\tfallback\n";
      out << questions.size() << "\t" << correct << "\t"
          << fmt(questions.empty() ? 0.0 : static_cast<double>(correct) / questions.size()) << "\t" << fallback << "\n";
    } else if (rd->parsed()) {
      const auto g = with_path(rd_input, [](const std::string& t) { return read_annotation(t); });
      const std::string dot = render_dot(g);
      if (rd_out.empty())
        out << dot;
      else
        write_file(rd_out, dot);
    }
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitOk;
}

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace dpgkit::cli
