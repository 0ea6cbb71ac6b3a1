#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include <json.hpp>

#include "dpgkit/annotation.hpp"
#include "dpgkit/dpg.hpp"
#include "dpgkit/metrics.hpp"
#include "dpgkit/nn.hpp"
#include "dpgkit/parse_state.hpp"

namespace dpgkit {

inline constexpr int kStepFeatureSize = 92;
inline constexpr int kSlotCount = 4;
inline constexpr int kSlotWidth = 18;
inline constexpr int kRelationBlockOffset = kSlotCount * kSlotWidth;  // 72

/// Input vector for one parser step.
///
/// Four constituent slots of 18 entries (member order; unused slots are zero):
///    0 center x          1 center y          2 width            3 height
///    4 detection score   5 max IoU with present same-category nodes of
///                          equal or higher score
///    6 already present   7 valid-slot mask   8 seen in an earlier step
///    9..12 constituent category one-hot     13 max IoU with any present
///                                              same-category node
///   14 accepted-edge degree / 10            15 accepted edges of this category
///                                              holding it in this slot
///   16 box area         17 distance of the center from the canvas center
/// Relationship block at offset 72 (20 entries):
///   72 proposal score   73..82 category one-hot   83 member set seen earlier
///   84 step / max_steps 85 accepted count / max_steps   86 coverage
///   87..91 reserved (0)
using StepFeature = std::array<double, kStepFeatureSize>;

StepFeature step_feature(const ParseState& state, int rel, int step, int max_steps);

struct SampledSequences {
  std::vector<std::vector<int>> orders;  // indices into the relationship list
  bool clamped_weights = false;          // some weight was <= 0 and raised to 1e-6
};

/// Weighted sampling without replacement by exponential races: each item
/// draws key = -ln(u) / w and a sequence is the items in ascending key
/// order, truncated to min(max_len, n).
SampledSequences sample_sequences(std::span<const double> weights, int n_sequences, int max_len, std::uint64_t seed);
SampledSequences sample_sequences(const CandidateSet& candidates, int n_sequences, int max_len, std::uint64_t seed);

/// Accept iff adding the relationship strictly increases combined JIG
/// against the truth the evaluator was built with.
bool label_step(const JigEvaluator& evaluator, const ParseState& state, int rel);
/// Same rule over explicit graphs; cand_members are the candidate's member
/// constituents in order.
bool label_step(const Relationship& candidate, std::span<const Constituent> cand_members, const Dpg& accepted,
                const Dpg& truth, const MatchConfig& cfg = {});

struct DsdpConfig {
  int input = kStepFeatureSize;
  int fc_width = 32;
  int hidden1 = 64;
  int hidden2 = 64;
  int max_steps = 60;  // normalizer for the step features
};

/// FC(relu) -> FC(relu) -> LSTM -> LSTM -> FC -> softmax over {reject, accept}.
class DsdpNet {
 public:
  explicit DsdpNet(const DsdpConfig& cfg = {});

  void init(std::uint64_t seed);
  const DsdpConfig& config() const { return cfg_; }

  /// xs[t] is input x batch; returns per-step 2 x batch probabilities
  /// (row 1 = accept).
  std::vector<nn::Matrix> forward(const std::vector<nn::Matrix>& xs) const;

  /// Mean cross-entropy over steps with mask 1; gradients are overwritten.
  /// labels[t](b) is 1 for accept.
  double loss_and_gradients(const std::vector<nn::Matrix>& xs, const std::vector<Eigen::VectorXi>& labels,
                            const std::vector<nn::RowVector>& mask);

  std::vector<nn::ParamRef> params();

  nlohmann::json to_json() const;
  static DsdpNet from_json(const nlohmann::json& j);

  /// Incremental single-sequence evaluation for inference.
  class Stepper {
   public:
    explicit Stepper(const DsdpNet& net);
    double accept_probability(std::span<const double> feature);

   private:
    const DsdpNet* net_;
    nn::LstmLayer::State s1_, s2_;
  };

 private:
  DsdpConfig cfg_;
  nn::Dense fc1_, fc2_, out_;
  nn::LstmLayer lstm1_, lstm2_;
};

/// Accept/reject decision source for sequential inference.
class StepPolicy {
 public:
  virtual ~StepPolicy() = default;
  virtual void begin(const ParseState& /*state*/) {}
  virtual double accept_probability(const ParseState& state, int rel, int step) = 0;
};

class DsdpPolicy : public StepPolicy {
 public:
  explicit DsdpPolicy(const DsdpNet& net) : net_(net) {}
  void begin(const ParseState&) override { stepper_ = std::make_unique<DsdpNet::Stepper>(net_); }
  double accept_probability(const ParseState& state, int rel, int step) override;

 private:
  const DsdpNet& net_;
  std::unique_ptr<DsdpNet::Stepper> stepper_;
};

/// Accepts exactly what label_step would accept against a known truth.
class OraclePolicy : public StepPolicy {
 public:
  OraclePolicy(const Dpg& truth, MatchConfig cfg = {}) : truth_(truth), cfg_(cfg) {}
  void begin(const ParseState& state) override;
  double accept_probability(const ParseState& state, int rel, int step) override;

 private:
  const Dpg& truth_;
  MatchConfig cfg_;
  std::unique_ptr<JigEvaluator> evaluator_;
};

class ConstantPolicy : public StepPolicy {
 public:
  explicit ConstantPolicy(double p) : p_(p) {}
  double accept_probability(const ParseState&, int, int) override { return p_; }

 private:
  double p_;
};

/// Candidate indices by proposal score descending, ties by id.
std::vector<int> score_order(const CandidateSet& candidates);

/// Presents every candidate once in score order and keeps those whose
/// accept probability exceeds 0.5.
Dpg infer_dpg(const CandidateSet& candidates, StepPolicy& policy);

struct ParserExample {
  CandidateSet candidates;
  Dpg truth;
};

struct ParserTrainConfig {
  DsdpConfig net;
  int seq_per_image = 100;
  int max_len = 60;
  int epochs = 10;
  int batch_size = 32;
  double lr = 2e-4;
  std::uint64_t seed = 1;
};

struct ParserTrainReport {
  std::vector<double> epoch_loss;
  std::size_t skipped_updates = 0;
  std::size_t clamped_weight_sets = 0;
};

/// One labeled training sequence built by replaying an order against the truth.
struct TrainSequence {
  std::vector<int> relationships;
  std::vector<StepFeature> features;
  std::vector<int> labels;  // 1 = accept
};

TrainSequence build_train_sequence(const CandidateSet& pool, const JigEvaluator& evaluator,
                                   std::span<const int> order, int max_steps);

DsdpNet train_parser(std::span<const ParserExample> corpus, const ParserTrainConfig& cfg,
                     ParserTrainReport* report = nullptr);

}  // namespace dpgkit
