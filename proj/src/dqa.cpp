#include "dpgkit/dqa.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "dpgkit/annotation.hpp"
#include "dpgkit/util.hpp"

namespace dpgkit {

using nlohmann::json;
using nn::Matrix;
using nn::RowVector;

std::vector<std::string> tokenize(std::string_view text) {
  std::string cleaned;
  cleaned.reserve(text.size());
  for (char ch : text) {
    const auto u = static_cast<unsigned char>(ch);
    if (std::ispunct(u) && ch != '_' && ch != '-')
      cleaned.push_back(' ');
    else
      cleaned.push_back(static_cast<char>(std::tolower(u)));
  }
  return split_words(cleaned);
}

std::vector<std::string> statement_from_qa(std::span<const std::string> question, std::span<const std::string> choice) {
  std::vector<std::string> out;
  auto blank = std::find(question.begin(), question.end(), kBlankToken);
  if (blank != question.end()) {
    out.insert(out.end(), question.begin(), blank);
    out.insert(out.end(), choice.begin(), choice.end());
    out.insert(out.end(), blank + 1, question.end());
  } else {
    out.assign(question.begin(), question.end());
    out.push_back(kSepToken);
    out.insert(out.end(), choice.begin(), choice.end());
  }
  return out;
}

namespace {

std::string join(const std::vector<std::string>& words) {
  std::string s;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) s.push_back(' ');
    s += words[i];
  }
  return s;
}

}  // namespace

std::vector<DiagramQuestion> read_questions(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw SchemaError("", std::string("malformed JSON: ") + e.what());
  }
  if (!doc.is_array()) throw SchemaError("", "expected an array of questions");
  std::vector<DiagramQuestion> out;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const std::string p = "/" + std::to_string(i);
    const json& q = doc[i];
    if (!q.is_object()) throw SchemaError(p, "expected an object");
    for (const char* key : {"diagram", "question", "choices", "gold"})
      if (!q.contains(key)) throw SchemaError(p + "/" + key, "missing required field");
    if (!q["diagram"].is_string()) throw SchemaError(p + "/diagram", "expected a string");
    if (!q["question"].is_string()) throw SchemaError(p + "/question", "expected a string");
    if (!q["choices"].is_array() || q["choices"].size() != kChoices)
      throw SchemaError(p + "/choices", "expected exactly 4 choices");
    if (!q["gold"].is_number_integer()) throw SchemaError(p + "/gold", "expected an integer");
    DiagramQuestion dq;
    dq.diagram = q["diagram"].get<std::string>();
    dq.question = tokenize(q["question"].get<std::string>());
    if (dq.question.empty()) throw SchemaError(p + "/question", "empty question");
    for (int k = 0; k < kChoices; ++k) {
      const json& c = q["choices"][k];
      if (!c.is_string()) throw SchemaError(p + "/choices/" + std::to_string(k), "expected a string");
      dq.choices[k] = tokenize(c.get<std::string>());
      if (dq.choices[k].empty()) throw SchemaError(p + "/choices/" + std::to_string(k), "empty choice");
    }
    dq.gold = q["gold"].get<int>();
    if (dq.gold < 1 || dq.gold > kChoices) throw SchemaError(p + "/gold", "gold must be in 1..4");
    out.push_back(std::move(dq));
  }
  return out;
}

std::string write_questions(std::span<const DiagramQuestion> questions) {
  json doc = json::array();
  for (const auto& q : questions) {
    json j;
    j["diagram"] = q.diagram;
    j["question"] = join(q.question);
    j["choices"] = json::array();
    for (const auto& c : q.choices) j["choices"].push_back(join(c));
    j["gold"] = q.gold;
    doc.push_back(std::move(j));
  }
  return doc.dump(1) + "\n";
}

EmbeddingTable EmbeddingTable::load(const std::filesystem::path& path, std::uint64_t seed) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open embeddings " + path.string());
  EmbeddingTable t(seed);
  t.source_ = path.string();
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string word;
    if (!(ls >> word)) continue;
    Eigen::VectorXd v(kWordDim);
    for (int k = 0; k < kWordDim; ++k)
      if (!(ls >> v(k)))
        throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected " + std::to_string(kWordDim) +
                        " values");
    t.vectors_.emplace(std::move(word), std::move(v));
  }
  return t;
}

Eigen::VectorXd EmbeddingTable::random_vector(std::uint64_t key) const {
  Rng rng(hash_combine(seed_, key));
  Eigen::VectorXd v(kWordDim);
  for (int k = 0; k < kWordDim; ++k) v(k) = rng.normal(0.0, 0.1);
  return v;
}

Eigen::VectorXd EmbeddingTable::lookup(const std::string& token) const {
  if (!source_.empty()) {
    auto it = vectors_.find(token);
    if (it != vectors_.end()) return it->second;
    return random_vector(0xb0c7e7ULL + stable_hash(token) % kFallbackBuckets);
  }
  return random_vector(stable_hash(token));
}

SentenceEncoder::SentenceEncoder() : proj_(kWordDim, kSentenceDim), lstm_(kSentenceDim, kSentenceDim) {}

void SentenceEncoder::init(std::uint64_t seed, double forget_bias) {
  Rng rng(seed);
  proj_.init(rng);
  // Word vectors have std 0.1 per entry; scale the projection so the LSTM
  // sees unit-variance inputs (Xavier alone leaves them near 0.13).
  const double target = 1.0 / (0.1 * std::sqrt(static_cast<double>(kWordDim)));
  const double current = std::sqrt(2.0 / static_cast<double>(kWordDim + kSentenceDim));
  proj_.W *= target / current;
  lstm_.init(rng, forget_bias);
}

std::vector<nn::ParamRef> SentenceEncoder::params() {
  std::vector<nn::ParamRef> p;
  proj_.collect("proj", p);
  lstm_.collect("lstm", p);
  return p;
}

Eigen::VectorXd SentenceEncoder::encode(const EmbeddingTable& table, std::span<const std::string> tokens) const {
  if (tokens.empty()) throw DataError("cannot encode an empty sentence");
  auto state = lstm_.zero_state(1);
  for (const auto& tok : tokens) lstm_.step(proj_.forward(table.lookup(tok)), state);
  return state.h.col(0);
}

std::array<double, kChoices> softmax4(const std::array<double, kChoices>& gamma) {
  const double mx = *std::max_element(gamma.begin(), gamma.end());
  std::array<double, kChoices> p{};
  double sum = 0.0;
  for (int k = 0; k < kChoices; ++k) sum += p[k] = std::exp(gamma[k] - mx);
  for (double& v : p) v /= sum;
  return p;
}

AttentionOutput attend_and_score(std::span<const Eigen::VectorXd> statements,
                                 std::span<const Eigen::VectorXd> relations) {
  if (statements.size() != kChoices) throw std::invalid_argument("expected four statements");
  if (relations.empty()) throw DataError("diagram has no relations");
  AttentionOutput out;
  for (int k = 0; k < kChoices; ++k) {
    double best = statements[k].dot(relations[0]);
    int arg = 0;
    for (std::size_t i = 1; i < relations.size(); ++i) {
      const double v = statements[k].dot(relations[i]);
      if (v > best) {
        best = v;
        arg = static_cast<int>(i);
      }
    }
    out.gamma[k] = best;
    out.attended[k] = arg;
  }
  out.probs = softmax4(out.gamma);
  return out;
}

double qa_loss(const std::array<double, kChoices>& probs, int gold) {
  return -std::log(std::max(probs[gold - 1], 1e-12));
}

std::vector<std::vector<std::string>> relation_tokens(const Dpg& dpg) {
  std::vector<std::vector<std::string>> out;
  for (const auto& s : verbalize(dpg)) {
    std::string text;
    for (const auto& w : s.tokens) {
      text += w;
      text.push_back(' ');
    }
    auto toks = tokenize(text);
    if (!toks.empty()) out.push_back(std::move(toks));
  }
  return out;
}

namespace {

int argmax_first(const std::array<double, kChoices>& p) {
  int best = 0;
  for (int k = 1; k < kChoices; ++k)
    if (p[k] > p[best]) best = k;
  return best;
}

}  // namespace

QaAnswer answer(const QaModel& model, const Dpg& dpg, const DiagramQuestion& q) {
  QaAnswer a;
  std::vector<Eigen::VectorXd> statements;
  for (const auto& c : q.choices)
    statements.push_back(model.encoder.encode(model.table, statement_from_qa(q.question, c)));
  std::vector<Eigen::VectorXd> relations;
  for (const auto& r : relation_tokens(dpg)) relations.push_back(model.encoder.encode(model.table, r));
  if (relations.empty()) {
    a.fallback = true;
    a.attention.probs.fill(1.0 / kChoices);
    a.choice = 1;
    return a;
  }
  a.attention = attend_and_score(statements, relations);
  a.choice = argmax_first(a.attention.probs) + 1;
  return a;
}

namespace {

// Batched encoding of many sentences with a shared projection of the local
// vocabulary.
struct EncodedBatch {
  std::vector<std::string> vocab;
  Matrix embeddings;  // 300 x V
  Matrix projected;   // 50 x V
  std::vector<std::vector<int>> sentences;
  std::vector<Matrix> xs;
  std::vector<RowVector> mask;
  nn::LstmTrace trace;
  Matrix final_h;  // 50 x S
};

void encode_batch(const QaModel& model, EncodedBatch& eb) {
  const Eigen::Index V = static_cast<Eigen::Index>(eb.vocab.size());
  eb.embeddings.resize(kWordDim, V);
  for (Eigen::Index v = 0; v < V; ++v) eb.embeddings.col(v) = model.table.lookup(eb.vocab[v]);
  eb.projected = model.encoder.projection().forward(eb.embeddings);
  std::size_t T = 0;
  for (const auto& s : eb.sentences) T = std::max(T, s.size());
  const Eigen::Index S = static_cast<Eigen::Index>(eb.sentences.size());
  eb.xs.assign(T, Matrix::Zero(kSentenceDim, S));
  eb.mask.assign(T, RowVector::Zero(S));
  for (Eigen::Index s = 0; s < S; ++s)
    for (std::size_t t = 0; t < eb.sentences[s].size(); ++t) {
      eb.xs[t].col(s) = eb.projected.col(eb.sentences[s][t]);
      eb.mask[t](s) = 1.0;
    }
  const auto hs = model.encoder.lstm().forward(eb.xs, eb.trace, eb.mask);
  eb.final_h = T ? hs.back() : Matrix::Zero(kSentenceDim, S);
}

}  // namespace

double qa_batch_loss_and_gradients(QaModel& model, std::span<const QaExample> batch, bool sum_loss) {
  auto ps = model.encoder.params();
  nn::zero_grads(ps);

  EncodedBatch eb;
  std::unordered_map<std::string, int> vocab_index;
  auto add_sentence = [&](const std::vector<std::string>& tokens) {
    std::vector<int> ids;
    for (const auto& tok : tokens) {
      auto [it, inserted] = vocab_index.emplace(tok, static_cast<int>(eb.vocab.size()));
      if (inserted) eb.vocab.push_back(tok);
      ids.push_back(it->second);
    }
    eb.sentences.push_back(std::move(ids));
    return static_cast<int>(eb.sentences.size()) - 1;
  };

  struct Item {
    std::array<int, kChoices> statements;
    std::vector<int> relations;
    int gold;
  };
  std::vector<Item> items;
  std::unordered_map<const Dpg*, std::vector<int>> relation_cache;
  for (const auto& ex : batch) {
    auto it = relation_cache.find(ex.dpg);
    if (it == relation_cache.end()) {
      std::vector<int> ids;
      for (const auto& r : relation_tokens(*ex.dpg)) ids.push_back(add_sentence(r));
      it = relation_cache.emplace(ex.dpg, std::move(ids)).first;
    }
    if (it->second.empty()) continue;
    Item item;
    for (int k = 0; k < kChoices; ++k)
      item.statements[k] = add_sentence(statement_from_qa(ex.question->question, ex.question->choices[k]));
    item.relations = it->second;
    item.gold = ex.question->gold;
    items.push_back(std::move(item));
  }
  if (items.empty()) return 0.0;

  encode_batch(model, eb);
  const Matrix& H = eb.final_h;
  Matrix dH = Matrix::Zero(H.rows(), H.cols());
  double loss = 0.0;
  const double scale = sum_loss ? 1.0 : 1.0 / static_cast<double>(items.size());
  for (const auto& item : items) {
    AttentionOutput att;
    for (int k = 0; k < kChoices; ++k) {
      const auto s = H.col(item.statements[k]);
      double best = s.dot(H.col(item.relations[0]));
      int arg = item.relations[0];
      for (std::size_t i = 1; i < item.relations.size(); ++i) {
        const double v = s.dot(H.col(item.relations[i]));
        if (v > best) {
          best = v;
          arg = item.relations[i];
        }
      }
      att.gamma[k] = best;
      att.attended[k] = arg;
    }
    att.probs = softmax4(att.gamma);
    loss += qa_loss(att.probs, item.gold);
    for (int k = 0; k < kChoices; ++k) {
      const double dg = scale * (att.probs[k] - (k == item.gold - 1 ? 1.0 : 0.0));
      dH.col(item.statements[k]) += dg * H.col(att.attended[k]);
      dH.col(att.attended[k]) += dg * H.col(item.statements[k]);
    }
  }

  const std::size_t T = eb.xs.size();
  std::vector<Matrix> dhs(T, Matrix::Zero(kSentenceDim, H.cols()));
  dhs[T - 1] = dH;
  auto& lstm = model.encoder.lstm();
  const auto dxs = lstm.backward(dhs, eb.trace);
  Matrix dP = Matrix::Zero(kSentenceDim, static_cast<Eigen::Index>(eb.vocab.size()));
  for (std::size_t s = 0; s < eb.sentences.size(); ++s)
    for (std::size_t t = 0; t < eb.sentences[s].size(); ++t)
      dP.col(eb.sentences[s][t]) += dxs[t].col(static_cast<Eigen::Index>(s));
  model.encoder.projection().backward(eb.embeddings, dP);
  return loss / static_cast<double>(items.size());
}

QaModel train_qa(std::span<const QaExample> corpus, const QaTrainConfig& cfg, QaTrainReport* report,
                 std::optional<EmbeddingTable> table) {
  QaModel model{table ? std::move(*table) : EmbeddingTable(cfg.seed), SentenceEncoder()};
  model.encoder.init(hash_combine(cfg.seed, 0xd9a));
  QaTrainReport local;
  QaTrainReport& rep = report ? *report : local;
  for (const auto& ex : corpus)
    if (relation_tokens(*ex.dpg).empty()) ++rep.skipped_questions;

  nn::Sgd opt(cfg.lr);
  auto ps = model.encoder.params();
  Rng rng(hash_combine(cfg.seed, 0x5a9d));
  std::vector<std::size_t> perm(corpus.size());
  std::iota(perm.begin(), perm.end(), 0);
  const std::size_t bs = static_cast<std::size_t>(std::max(1, cfg.batch_size));
  std::vector<QaExample> batch;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cfg.decay_every > 0) opt.set_lr(cfg.lr * std::pow(cfg.decay, epoch / cfg.decay_every));
    std::shuffle(perm.begin(), perm.end(), rng.engine());
    double loss_sum = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < perm.size(); start += bs) {
      batch.clear();
      for (std::size_t k = start; k < std::min(perm.size(), start + bs); ++k) batch.push_back(corpus[perm[k]]);
      const double loss = qa_batch_loss_and_gradients(model, batch, cfg.sum_batch_loss);
      if (!std::isfinite(loss)) throw NumericError("non-finite QA training loss");
      if (!opt.step(ps)) ++rep.skipped_updates;
      loss_sum += loss;
      ++batches;
    }
    rep.epoch_loss.push_back(batches ? loss_sum / batches : 0.0);
  }
  rep.skipped_updates += 0;
  return model;
}

double qa_accuracy(const QaModel& model, std::span<const QaExample> corpus) {
  if (corpus.empty()) return 0.0;
  std::size_t correct = 0;
  for (const auto& ex : corpus)
    if (answer(model, *ex.dpg, *ex.question).choice == ex.question->gold) ++correct;
  return static_cast<double>(correct) / static_cast<double>(corpus.size());
}

json QaModel::to_json() const {
  json j;
  j["format"] = "dpgkit-qa";
  j["version"] = 1;
  j["embedding_seed"] = table.seed();
  j["embedding_file"] = table.source();
  auto ps = const_cast<SentenceEncoder&>(encoder).params();
  j["params"] = nn::params_to_json(ps);
  return j;
}

QaModel QaModel::from_json(const json& j) {
  if (j.value("format", "") != "dpgkit-qa" || j.value("version", 0) != 1)
    throw DataError("not a version-1 dpgkit QA model");
  const auto seed = j.at("embedding_seed").get<std::uint64_t>();
  const auto file = j.value("embedding_file", std::string());
  QaModel m{file.empty() ? EmbeddingTable(seed) : EmbeddingTable::load(file, seed), SentenceEncoder()};
  auto ps = m.encoder.params();
  nn::params_from_json(j.at("params"), ps);
  return m;
}

}  // namespace dpgkit
