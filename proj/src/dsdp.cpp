#include "dpgkit/dsdp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dpgkit/util.hpp"

namespace dpgkit {

using nlohmann::json;
using nn::Matrix;
using nn::RowVector;

StepFeature step_feature(const ParseState& state, int rel, int step, int max_steps) {
  StepFeature f{};
  const Relationship& r = state.relationship(rel);
  const auto members = state.members(rel);
  const double denom = static_cast<double>(std::max(1, max_steps));

  for (std::size_t k = 0; k < members.size() && k < static_cast<std::size_t>(kSlotCount); ++k) {
    const int c = members[k];
    const Constituent& node = state.constituent(c);
    double* s = f.data() + k * kSlotWidth;
    double higher = 0.0, any = 0.0;
    for (std::size_t o = 0; o < state.pool().constituents.size(); ++o) {
      if (static_cast<int>(o) == c || !state.node_present(static_cast<int>(o))) continue;
      const Constituent& other = state.constituent(static_cast<int>(o));
      if (other.category != node.category) continue;
      const double v = iou(node.box, other.box);
      any = std::max(any, v);
      if (other.score >= node.score) higher = std::max(higher, v);
    }
    s[0] = node.box.cx();
    s[1] = node.box.cy();
    s[2] = node.box.width();
    s[3] = node.box.height();
    s[4] = node.score;
    s[5] = higher;
    s[6] = state.node_present(c) ? 1.0 : 0.0;
    s[7] = 1.0;
    s[8] = state.node_presented(c) ? 1.0 : 0.0;
    s[9 + category_index(node.category)] = 1.0;
    s[13] = any;
    s[14] = state.degree(c) / 10.0;
    s[15] = state.role_count(r.category, k, c);
    s[16] = node.box.area();
    s[17] = std::hypot(node.box.cx() - 0.5, node.box.cy() - 0.5);
  }
  double* b = f.data() + kRelationBlockOffset;
  b[0] = r.score;
  b[1 + category_index(r.category)] = 1.0;
  b[11] = state.tuple_presented(rel) ? 1.0 : 0.0;
  b[12] = step / denom;
  b[13] = static_cast<double>(state.accepted().size()) / denom;
  b[14] = state.coverage();
  return f;
}

SampledSequences sample_sequences(std::span<const double> weights, int n_sequences, int max_len, std::uint64_t seed) {
  SampledSequences out;
  if (weights.empty() || n_sequences < 1) return out;
  std::vector<double> w(weights.begin(), weights.end());
  for (double& x : w)
    if (!(x > 0.0)) {
      x = 1e-6;
      out.clamped_weights = true;
    }
  const std::size_t n = w.size();
  const std::size_t len = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, max_len)));
  Rng rng(seed);
  std::vector<double> key(n);
  std::vector<int> idx(n);
  for (int s = 0; s < n_sequences; ++s) {
    for (std::size_t i = 0; i < n; ++i) key[i] = -std::log(rng.uniform_open()) / w[i];
    std::iota(idx.begin(), idx.end(), 0);
    std::partial_sort(idx.begin(), idx.begin() + static_cast<long>(len), idx.end(),
                      [&](int a, int b) { return key[a] != key[b] ? key[a] < key[b] : a < b; });
    out.orders.emplace_back(idx.begin(), idx.begin() + static_cast<long>(len));
  }
  return out;
}

SampledSequences sample_sequences(const CandidateSet& candidates, int n_sequences, int max_len, std::uint64_t seed) {
  std::vector<double> w;
  for (const auto& r : candidates.relationships) w.push_back(r.score);
  return sample_sequences(w, n_sequences, max_len, seed);
}

bool label_step(const JigEvaluator& evaluator, const ParseState& state, int rel) {
  if (state.is_accepted(rel)) return false;
  std::vector<int> with(state.accepted());
  const double before = evaluator.score(with).combined;
  with.push_back(rel);
  return evaluator.score(with).combined > before;
}

bool label_step(const Relationship& candidate, std::span<const Constituent> cand_members, const Dpg& accepted,
                const Dpg& truth, const MatchConfig& cfg) {
  std::vector<Constituent> nodes = accepted.nodes();
  for (const auto& m : cand_members)
    if (!accepted.find_node(m.id)) nodes.push_back(m);
  std::vector<Relationship> edges = accepted.edges();
  edges.push_back(candidate);
  auto grown = validate_dpg(std::move(nodes), std::move(edges));
  if (!grown.ok()) return false;  // duplicate edge or inconsistent members
  return jig(*grown.graph, truth, cfg).combined > jig(accepted, truth, cfg).combined;
}

DsdpNet::DsdpNet(const DsdpConfig& cfg)
    : cfg_(cfg),
      fc1_(cfg.input, cfg.fc_width),
      fc2_(cfg.fc_width, cfg.fc_width),
      out_(cfg.hidden2, 2),
      lstm1_(cfg.fc_width, cfg.hidden1),
      lstm2_(cfg.hidden1, cfg.hidden2) {}

void DsdpNet::init(std::uint64_t seed) {
  Rng rng(seed);
  fc1_.init(rng);
  fc2_.init(rng);
  lstm1_.init(rng, 1.0);
  lstm2_.init(rng, 1.0);
  out_.init(rng);
}

std::vector<nn::ParamRef> DsdpNet::params() {
  std::vector<nn::ParamRef> p;
  fc1_.collect("fc1", p);
  fc2_.collect("fc2", p);
  lstm1_.collect("lstm1", p);
  lstm2_.collect("lstm2", p);
  out_.collect("out", p);
  return p;
}

std::vector<Matrix> DsdpNet::forward(const std::vector<Matrix>& xs) const {
  std::vector<Matrix> a2(xs.size());
  for (std::size_t t = 0; t < xs.size(); ++t) {
    if (!xs[t].allFinite()) throw NumericError("non-finite parser input at step " + std::to_string(t));
    a2[t] = nn::relu(fc2_.forward(nn::relu(fc1_.forward(xs[t]))));
  }
  nn::LstmTrace t1, t2;
  const auto h1 = lstm1_.forward(a2, t1);
  const auto h2 = lstm2_.forward(h1, t2);
  std::vector<Matrix> probs;
  for (const auto& h : h2) probs.push_back(nn::softmax_columns(out_.forward(h)));
  return probs;
}

double DsdpNet::loss_and_gradients(const std::vector<Matrix>& xs, const std::vector<Eigen::VectorXi>& labels,
                                   const std::vector<RowVector>& mask) {
  auto ps = params();
  nn::zero_grads(ps);
  const std::size_t T = xs.size();
  std::vector<Matrix> z1(T), z2(T), a1(T), a2(T);
  for (std::size_t t = 0; t < T; ++t) {
    if (!xs[t].allFinite()) throw NumericError("non-finite parser input at step " + std::to_string(t));
    z1[t] = fc1_.forward(xs[t]);
    a1[t] = nn::relu(z1[t]);
    z2[t] = fc2_.forward(a1[t]);
    a2[t] = nn::relu(z2[t]);
  }
  nn::LstmTrace t1, t2;
  const auto h1 = lstm1_.forward(a2, t1);
  const auto h2 = lstm2_.forward(h1, t2);

  double count = 0.0;
  for (const auto& m : mask) count += m.sum();
  if (count <= 0.0) return 0.0;

  double loss = 0.0;
  std::vector<Matrix> dh2(T);
  for (std::size_t t = 0; t < T; ++t) {
    Matrix p = nn::softmax_columns(out_.forward(h2[t]));
    Matrix dlogits = p;
    for (Eigen::Index b = 0; b < p.cols(); ++b) {
      const double m = mask[t](b);
      const int y = labels[t](b);
      if (m > 0.0) loss -= std::log(std::max(p(y, b), 1e-300));
      dlogits(y, b) -= 1.0;
      dlogits.col(b) *= m / count;
    }
    dh2[t] = out_.backward(h2[t], dlogits);
  }
  const auto dh1 = lstm2_.backward(dh2, t2);
  const auto da2 = lstm1_.backward(dh1, t1);
  for (std::size_t t = 0; t < T; ++t) {
    const Matrix dz2 = nn::relu_backward(z2[t], da2[t]);
    const Matrix da1 = fc2_.backward(a1[t], dz2);
    fc1_.backward(xs[t], nn::relu_backward(z1[t], da1));
  }
  return loss / count;
}

json DsdpNet::to_json() const {
  json j;
  j["format"] = "dpgkit-dsdp";
  j["version"] = 1;
  j["config"] = {{"input", cfg_.input},     {"fc_width", cfg_.fc_width}, {"hidden1", cfg_.hidden1},
                 {"hidden2", cfg_.hidden2}, {"max_steps", cfg_.max_steps}};
  auto ps = const_cast<DsdpNet*>(this)->params();
  j["params"] = nn::params_to_json(ps);
  return j;
}

DsdpNet DsdpNet::from_json(const json& j) {
  if (j.value("format", "") != "dpgkit-dsdp" || j.value("version", 0) != 1)
    throw DataError("not a version-1 dpgkit parser model");
  const auto& c = j.at("config");
  DsdpConfig cfg;
  cfg.input = c.at("input").get<int>();
  cfg.fc_width = c.at("fc_width").get<int>();
  cfg.hidden1 = c.at("hidden1").get<int>();
  cfg.hidden2 = c.at("hidden2").get<int>();
  cfg.max_steps = c.at("max_steps").get<int>();
  DsdpNet net(cfg);
  auto ps = net.params();
  nn::params_from_json(j.at("params"), ps);
  return net;
}

DsdpNet::Stepper::Stepper(const DsdpNet& net)
    : net_(&net), s1_(net.lstm1_.zero_state(1)), s2_(net.lstm2_.zero_state(1)) {}

double DsdpNet::Stepper::accept_probability(std::span<const double> feature) {
  Matrix x = Eigen::Map<const Matrix>(feature.data(), static_cast<Eigen::Index>(feature.size()), 1);
  if (!x.allFinite()) throw NumericError("non-finite parser input");
  const Matrix a = nn::relu(net_->fc2_.forward(nn::relu(net_->fc1_.forward(x))));
  const Matrix h1 = net_->lstm1_.step(a, s1_);
  const Matrix h2 = net_->lstm2_.step(h1, s2_);
  return nn::softmax_columns(net_->out_.forward(h2))(1, 0);
}

double DsdpPolicy::accept_probability(const ParseState& state, int rel, int step) {
  const StepFeature f = step_feature(state, rel, step, net_.config().max_steps);
  return stepper_->accept_probability(f);
}

void OraclePolicy::begin(const ParseState& state) {
  evaluator_ = std::make_unique<JigEvaluator>(state.pool(), truth_, cfg_);
}

double OraclePolicy::accept_probability(const ParseState& state, int rel, int) {
  return label_step(*evaluator_, state, rel) ? 1.0 : 0.0;
}

std::vector<int> score_order(const CandidateSet& candidates) {
  std::vector<int> order(candidates.relationships.size());
  std::iota(order.begin(), order.end(), 0);
  const auto& rs = candidates.relationships;
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return rs[a].score != rs[b].score ? rs[a].score > rs[b].score : rs[a].id < rs[b].id;
  });
  return order;
}

Dpg infer_dpg(const CandidateSet& candidates, StepPolicy& policy) {
  ParseState state(candidates);
  policy.begin(state);
  int step = 0;
  for (int rel : score_order(candidates)) {
    const double p = policy.accept_probability(state, rel, step++);
    if (p > 0.5) state.accept(rel);
    state.mark_presented(rel);
  }
  return state.to_dpg();
}

TrainSequence build_train_sequence(const CandidateSet& pool, const JigEvaluator& evaluator, std::span<const int> order,
                                   int max_steps) {
  TrainSequence seq;
  ParseState state(pool);
  double current = evaluator.score(std::vector<int>{}).combined;
  std::vector<int> with;
  int step = 0;
  for (int rel : order) {
    seq.relationships.push_back(rel);
    seq.features.push_back(step_feature(state, rel, step++, max_steps));
    bool accept = false;
    if (!state.is_accepted(rel)) {
      with = state.accepted();
      with.push_back(rel);
      const double next = evaluator.score(with).combined;
      accept = next > current;
      if (accept) current = next;
    }
    seq.labels.push_back(accept ? 1 : 0);
    if (accept) state.accept(rel);
    state.mark_presented(rel);
  }
  return seq;
}

DsdpNet train_parser(std::span<const ParserExample> corpus, const ParserTrainConfig& cfg, ParserTrainReport* report) {
  DsdpConfig net_cfg = cfg.net;
  net_cfg.max_steps = cfg.max_len;
  DsdpNet net(net_cfg);
  net.init(hash_combine(cfg.seed, 0x5eed));
  ParserTrainReport local;
  ParserTrainReport& rep = report ? *report : local;

  std::vector<std::unique_ptr<JigEvaluator>> evaluators;
  struct SeqRef {
    int example;
    std::vector<int> order;
  };
  std::vector<SeqRef> refs;
  for (std::size_t e = 0; e < corpus.size(); ++e) {
    evaluators.push_back(std::make_unique<JigEvaluator>(corpus[e].candidates, corpus[e].truth));
    if (corpus[e].candidates.relationships.empty()) continue;
    auto sampled = sample_sequences(corpus[e].candidates, cfg.seq_per_image, cfg.max_len, hash_combine(cfg.seed, e));
    if (sampled.clamped_weights) ++rep.clamped_weight_sets;
    for (auto& o : sampled.orders) refs.push_back({static_cast<int>(e), std::move(o)});
  }
  if (refs.empty()) return net;

  nn::RmsProp opt(cfg.lr);
  auto ps = net.params();
  Rng rng(hash_combine(cfg.seed, 0xe90c));
  std::vector<std::size_t> perm(refs.size());
  std::iota(perm.begin(), perm.end(), 0);
  const std::size_t bs = static_cast<std::size_t>(std::max(1, cfg.batch_size));

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(perm.begin(), perm.end(), rng.engine());
    double loss_sum = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < perm.size(); start += bs) {
      const std::size_t B = std::min(bs, perm.size() - start);
      std::vector<TrainSequence> seqs(B);
      parallel_for(B, [&](std::size_t k) {
        const SeqRef& ref = refs[perm[start + k]];
        seqs[k] = build_train_sequence(corpus[ref.example].candidates, *evaluators[ref.example], ref.order,
                                       cfg.max_len);
      });
      std::size_t T = 0;
      for (const auto& s : seqs) T = std::max(T, s.labels.size());
      std::vector<Matrix> xs(T, Matrix::Zero(net_cfg.input, static_cast<Eigen::Index>(B)));
      std::vector<Eigen::VectorXi> ys(T, Eigen::VectorXi::Zero(static_cast<Eigen::Index>(B)));
      std::vector<RowVector> mask(T, RowVector::Zero(static_cast<Eigen::Index>(B)));
      for (std::size_t k = 0; k < B; ++k)
        for (std::size_t t = 0; t < seqs[k].labels.size(); ++t) {
          xs[t].col(static_cast<Eigen::Index>(k)) =
              Eigen::Map<const Eigen::VectorXd>(seqs[k].features[t].data(), kStepFeatureSize);
          ys[t](static_cast<Eigen::Index>(k)) = seqs[k].labels[t];
          mask[t](static_cast<Eigen::Index>(k)) = 1.0;
        }
      const double loss = net.loss_and_gradients(xs, ys, mask);
      if (!std::isfinite(loss)) throw NumericError("non-finite parser training loss");
      if (!opt.step(ps)) ++rep.skipped_updates;
      loss_sum += loss;
      ++batches;
    }
    rep.epoch_loss.push_back(batches ? loss_sum / batches : 0.0);
  }
  return net;
}

}  // namespace dpgkit
