#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "dpgkit/dpg.hpp"
#include "dpgkit/nn.hpp"

namespace dpgkit {

inline constexpr int kWordDim = 300;
inline constexpr int kSentenceDim = 50;
inline constexpr int kChoices = 4;
inline constexpr int kFallbackBuckets = 1024;
inline const std::string kBlankToken = "___";
inline const std::string kSepToken = "[SEP]";

struct DiagramQuestion {
  std::string diagram;
  std::vector<std::string> question;
  std::array<std::vector<std::string>, kChoices> choices;
  int gold = 1;  // 1..4

  bool operator==(const DiagramQuestion&) const = default;
};

/// Lowercases, strips punctuation other than '_' and '-', splits on whitespace.
std::vector<std::string> tokenize(std::string_view text);

/// Substitutes the choice for the first "___" in the question, otherwise
/// appends "[SEP]" and the choice.
std::vector<std::string> statement_from_qa(std::span<const std::string> question, std::span<const std::string> choice);

/// Questions file: a JSON array of
///   { "diagram": id, "question": str, "choices": [4 strings], "gold": 1..4 }
std::vector<DiagramQuestion> read_questions(std::string_view json_text);
std::string write_questions(std::span<const DiagramQuestion> questions);

/// 300-d word vectors. Tokens found in a loaded embedding file use their
/// vector; without a file every token gets its own N(0, 0.1^2) vector seeded
/// by its hash; with a file, tokens missing from it share one of 1024
/// hashed fallback vectors.
class EmbeddingTable {
 public:
  explicit EmbeddingTable(std::uint64_t seed = 0) : seed_(seed) {}

  /// Whitespace text format: "<word> v1 ... v300" per line.
  static EmbeddingTable load(const std::filesystem::path& path, std::uint64_t seed = 0);

  Eigen::VectorXd lookup(const std::string& token) const;
  bool has_file() const { return !source_.empty(); }
  const std::string& source() const { return source_; }
  std::uint64_t seed() const { return seed_; }

 private:
  Eigen::VectorXd random_vector(std::uint64_t key) const;

  std::uint64_t seed_;
  std::string source_;
  std::unordered_map<std::string, Eigen::VectorXd> vectors_;
};

/// Shared sentence encoder: a 50x300 projection of each word vector fed to a
/// single-layer 50-unit LSTM (forget bias initialized to 2.5); the
/// embedding is the final hidden state.
class SentenceEncoder {
 public:
  SentenceEncoder();
  void init(std::uint64_t seed, double forget_bias = 2.5);

  Eigen::VectorXd encode(const EmbeddingTable& table, std::span<const std::string> tokens) const;

  std::vector<nn::ParamRef> params();
  nn::Dense& projection() { return proj_; }
  nn::LstmLayer& lstm() { return lstm_; }
  const nn::Dense& projection() const { return proj_; }
  const nn::LstmLayer& lstm() const { return lstm_; }

 private:
  nn::Dense proj_;
  nn::LstmLayer lstm_;
};

struct AttentionOutput {
  std::array<double, kChoices> gamma{};
  std::array<double, kChoices> probs{};
  std::array<int, kChoices> attended{};  // argmax relation per choice
};

/// gamma_k = max_i <s_k, m_i>, probs = softmax(gamma). Throws DataError
/// "diagram has no relations" when relations is empty.
AttentionOutput attend_and_score(std::span<const Eigen::VectorXd> statements,
                                 std::span<const Eigen::VectorXd> relations);

/// Stable softmax over four scores.
std::array<double, kChoices> softmax4(const std::array<double, kChoices>& gamma);

/// -log probs[gold - 1], with the probability clamped at 1e-12.
double qa_loss(const std::array<double, kChoices>& probs, int gold);

struct QaModel {
  EmbeddingTable table;
  SentenceEncoder encoder;

  nlohmann::json to_json() const;
  static QaModel from_json(const nlohmann::json& j);
};

struct QaAnswer {
  int choice = 1;          // 1..4
  bool fallback = false;   // no relations; uniform distribution used
  AttentionOutput attention;
};

/// Tokenized relation sentences of a DPG (verbalize + tokenize).
std::vector<std::vector<std::string>> relation_tokens(const Dpg& dpg);

QaAnswer answer(const QaModel& model, const Dpg& dpg, const DiagramQuestion& q);

struct QaExample {
  const Dpg* dpg;
  const DiagramQuestion* question;
};

struct QaTrainConfig {
  int epochs = 100;
  int batch_size = 100;
  double lr = 0.01;
  double decay = 0.5;
  int decay_every = 25;
  bool sum_batch_loss = true;  // gradient of the summed, not averaged, batch loss
  std::uint64_t seed = 1;
};

struct QaTrainReport {
  std::vector<double> epoch_loss;
  std::size_t skipped_updates = 0;
  std::size_t skipped_questions = 0;  // diagrams without relations
};

/// Mean cross-entropy of a batch; gradients of the (mean or summed) loss are
/// written to the encoder's gradient buffers.
double qa_batch_loss_and_gradients(QaModel& model, std::span<const QaExample> batch, bool sum_loss);

QaModel train_qa(std::span<const QaExample> corpus, const QaTrainConfig& cfg, QaTrainReport* report = nullptr,
                 std::optional<EmbeddingTable> table = std::nullopt);

double qa_accuracy(const QaModel& model, std::span<const QaExample> corpus);

}  // namespace dpgkit
