#include "fse/ranking.hpp"

#include <algorithm>
#include <numeric>

#include <nlohmann/json.hpp>

namespace fse {

const char* task_name(Task t) {
  switch (t) {
    case Task::t1: return "t1";
    case Task::t2: return "t2";
    case Task::t3: return "t3";
  }
  return "?";
}

RankTexts prepare_rank_texts(const Corpus& corpus, const Vocab& vocab, const StopWords& stops) {
  RankTexts t;
  for (const auto& e : corpus.exercises()) {
    t.stem.push_back(tokenize(stem_side(e), vocab, stops).ids);
    t.analysis.push_back(e.analysis.empty() ? std::vector<int>{} : tokenize(analysis_side(e), vocab, stops).ids);
  }
  return t;
}

double mean_stem_length(const RankTexts& texts) {
  if (texts.stem.empty()) return 1.0;
  double n = 0.0;
  for (const auto& s : texts.stem) n += static_cast<double>(s.size());
  return n / static_cast<double>(texts.stem.size());
}

std::vector<TaskInstance> build_task_instances(const LabeledPair& pair, const Corpus& corpus, const RankTexts& texts,
                                               Rng& rng, InstanceLog* log) {
  const auto a = corpus.index_of(pair.a_id), b = corpus.index_of(pair.b_id);
  const int y = pair.y();
  std::vector<TaskInstance> out;
  out.push_back({Task::t1, texts.stem[a], texts.stem[b], y});
  if (texts.analysis[a].empty() || texts.analysis[b].empty()) {
    if (log) ++log->skipped_no_analysis;
    return out;
  }
  out.push_back({Task::t2, texts.analysis[a], texts.analysis[b], y});
  out.push_back({Task::t3, texts.stem[a], texts.analysis[a], 1});
  out.push_back({Task::t3, texts.stem[b], texts.analysis[b], 1});
  if (y == 0) {
    out.push_back({Task::t3, texts.stem[a], texts.analysis[b], 0});
    return out;
  }
  std::vector<std::size_t> related, any;
  const auto& kc = corpus[a].metadata.knowledge_concepts;
  for (std::size_t j = 0; j < corpus.size(); ++j) {
    if (j == a || j == b || texts.analysis[j].empty()) continue;
    any.push_back(j);
    for (int c : corpus[j].metadata.knowledge_concepts)
      if (std::find(kc.begin(), kc.end(), c) != kc.end()) {
        related.push_back(j);
        break;
      }
  }
  if (related.empty()) {
    if (log) ++log->t3_fallback_uniform;
    if (any.empty()) return out;
    related = std::move(any);
  }
  out.push_back({Task::t3, texts.stem[a], texts.analysis[related[rng.below(related.size())]], 0});
  return out;
}

std::vector<TaskInstance> build_task_instances(const std::vector<LabeledPair>& pairs, const Corpus& corpus,
                                               const RankTexts& texts, std::uint64_t seed, InstanceLog* log) {
  Rng rng(seed);
  std::vector<TaskInstance> out;
  for (const auto& p : pairs)
    for (auto& inst : build_task_instances(p, corpus, texts, rng, log)) out.push_back(std::move(inst));
  return out;
}

// ---------------------------------------------------------------------------
// Parameters

RankerParams RankerParams::init(const TextEncoder& encoder, std::uint64_t seed, double length_scale) {
  const int d = encoder.dim();
  if (d < 1) throw ValidationError("ranker needs a non-empty encoder");
  RankerParams p;
  p.seed = seed;
  p.encoder = encoder;
  p.encoder.transform *= length_scale;
  for (auto& tp : p.tasks) {
    tp.proj = Mat::Zero(d, 2 * d);
    tp.proj_bias = Vec::Zero(d);
    tp.head = Mat::Zero(2, d);
    tp.head_bias = Vec::Zero(2);
    tp.gate1 = Mat::Zero(d, d);
    tp.gate1_bias = Vec::Zero(d);
    tp.gate2 = Mat::Zero(d, d);
    tp.gate2_bias = Vec::Zero(d);
    tp.gate3 = Mat::Zero(1, d);
    tp.gate3_bias = Vec::Zero(1);
  }
  Rng rng(seed);
  std::size_t k = 0;
  p.for_each([&](const char*, double* x, Eigen::Index r, Eigen::Index c) {
    if (k++ < 3) return;  // encoder tensors are copied, not drawn
    for (Eigen::Index i = 0; i < r * c; ++i) x[i] = rng.uniform(-0.05, 0.05);
  });
  return p;
}

RankerParams RankerParams::zeros_like() const {
  RankerParams g = *this;
  g.set_zero();
  return g;
}

void RankerParams::set_zero() {
  for_each([](const char*, double* x, Eigen::Index r, Eigen::Index c) { std::fill(x, x + r * c, 0.0); });
}

void RankerParams::axpy(double a, const RankerParams& g) {
  std::vector<const double*> src;
  g.for_each([&](const char*, const double* x, Eigen::Index, Eigen::Index) { src.push_back(x); });
  std::size_t k = 0;
  for_each([&](const char*, double* x, Eigen::Index r, Eigen::Index c) {
    const double* s = src[k++];
    for (Eigen::Index i = 0; i < r * c; ++i) x[i] += a * s[i];
  });
}

bool RankerParams::all_finite() const {
  bool ok = true;
  for_each([&](const char*, const double* x, Eigen::Index r, Eigen::Index c) {
    for (Eigen::Index i = 0; i < r * c && ok; ++i) ok = std::isfinite(x[i]);
  });
  return ok;
}

bool RankerParams::operator==(const RankerParams& o) const {
  return to_archive().serialize() == o.to_archive().serialize();
}

TensorArchive RankerParams::to_archive() const {
  if (!trained()) throw ConfigError("ranker parameters are empty");
  TensorArchive a;
  a.kind = "ranker";
  a.metadata = nlohmann::json{{"seed", seed}, {"d", dim()}, {"vocab", encoder.vocab_size()}}.dump();
  for_each([&](const char* name, const double* x, Eigen::Index r, Eigen::Index c) {
    a.put(name, Mat(Eigen::Map<const Mat>(x, r, c)));
  });
  return a;
}

RankerParams RankerParams::from_archive(const TensorArchive& a) {
  if (a.kind != "ranker") throw VersionError("expected a ranker archive, got '" + a.kind + "'");
  int d = 0, vocab = 0;
  RankerParams p;
  try {
    const auto meta = nlohmann::json::parse(a.metadata);
    p.seed = meta.at("seed").get<std::uint64_t>();
    d = meta.at("d").get<int>();
    vocab = meta.at("vocab").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw CorruptionError(std::string("ranker archive metadata: ") + e.what());
  }
  p = init(TextEncoder::zeros(vocab, d), p.seed);  // shapes
  p.for_each([&](const char* name, double* x, Eigen::Index r, Eigen::Index c) {
    const Mat& m = a.mat(name);
    if (m.rows() != r || m.cols() != c) throw CorruptionError(std::string("ranker tensor '") + name + "' has wrong shape");
    std::copy(m.data(), m.data() + r * c, x);
  });
  return p;
}

// ---------------------------------------------------------------------------
// Forward / backward

namespace {

Vec softmax(const Vec& x) {
  Vec p = (x.array() - x.maxCoeff()).exp();
  return p / p.sum();
}

struct PairPass {
  EncodeCache left, right;
  Vec x;   // [u*v ; (u-v)^2]
  Vec fe;  // tanh(proj x + b)
  Vec prob;
};

// Unit-norm inputs have coordinates of order 1/sqrt(d); scaling by d keeps
// the features of order one.
Vec pair_features(const Vec& u, const Vec& v) {
  const auto d = u.size();
  const double scale = static_cast<double>(d);
  Vec x(2 * d);
  x.head(d) = scale * u.cwiseProduct(v);
  x.tail(d) = scale * (u - v).array().square();
  return x;
}

void pair_forward(const RankerParams& p, const TaskParams& tp, std::span<const int> l, std::span<const int> r,
                  PairPass& s) {
  const Vec u = p.encoder.encode(l, Pooling::mean, &s.left);
  const Vec v = p.encoder.encode(r, Pooling::mean, &s.right);
  s.x = pair_features(u, v);
  s.fe = (tp.proj * s.x + tp.proj_bias).array().tanh();
  s.prob = softmax(tp.head * s.fe + tp.head_bias);
}

// Backward from dL/dlogits and an extra dL/dfe.
void pair_backward(const RankerParams& p, const TaskParams& tp, const PairPass& s, const Vec& d_logits,
                   const Vec& d_fe_extra, TaskParams& g, RankerParams& grad) {
  g.head.noalias() += d_logits * s.fe.transpose();
  g.head_bias += d_logits;
  const Vec d_fe = tp.head.transpose() * d_logits + d_fe_extra;
  const Vec d_pre = d_fe.array() * (1.0 - s.fe.array().square());
  g.proj.noalias() += d_pre * s.x.transpose();
  g.proj_bias += d_pre;
  const auto d = s.left.out.size();
  const Vec dx = static_cast<double>(d) * (tp.proj.transpose() * d_pre);
  const Vec& u = s.left.out;
  const Vec& v = s.right.out;
  const Vec diff2 = 2.0 * (u - v);
  const Vec du = dx.head(d).cwiseProduct(v) + dx.tail(d).cwiseProduct(diff2);
  const Vec dv = dx.head(d).cwiseProduct(u) - dx.tail(d).cwiseProduct(diff2);
  p.encoder.backward(s.left, du, grad.encoder);
  p.encoder.backward(s.right, dv, grad.encoder);
}

struct GatePass {
  Vec in, h1, h2;
  double z = 0.0;
};

double gate_forward(const TaskParams& tp, const Vec& m, GatePass* s) {
  Vec h1 = (tp.gate1 * m + tp.gate1_bias).array().tanh();
  Vec h2 = (tp.gate2 * h1 + tp.gate2_bias).array().tanh();
  const double z = tp.gate3.row(0).dot(h2) + tp.gate3_bias[0];
  if (s) {
    s->in = m;
    s->h1 = std::move(h1);
    s->h2 = std::move(h2);
    s->z = z;
  }
  return z;
}

// Returns dL/dm given dL/dz.
Vec gate_backward(const TaskParams& tp, const GatePass& s, double dz, TaskParams& g) {
  g.gate3.row(0) += dz * s.h2.transpose();
  g.gate3_bias[0] += dz;
  const Vec d2 = (tp.gate3.row(0).transpose() * dz).array() * (1.0 - s.h2.array().square());
  g.gate2.noalias() += d2 * s.h1.transpose();
  g.gate2_bias += d2;
  const Vec d1 = (tp.gate2.transpose() * d2).array() * (1.0 - s.h1.array().square());
  g.gate1.noalias() += d1 * s.in.transpose();
  g.gate1_bias += d1;
  return tp.gate1.transpose() * d1;
}

std::array<double, kTasks> masked_softmax(const std::array<double, kTasks>& z, const std::array<bool, kTasks>& on) {
  double mx = -std::numeric_limits<double>::infinity();
  for (int t = 0; t < kTasks; ++t)
    if (on[t]) mx = std::max(mx, z[t]);
  std::array<double, kTasks> a{};
  double sum = 0.0;
  for (int t = 0; t < kTasks; ++t)
    if (on[t]) sum += (a[t] = std::exp(z[t] - mx));
  if (sum > 0)
    for (auto& x : a) x /= sum;
  return a;
}

}  // namespace

double gate_logit(const TaskParams& tp, const Vec& feature) { return gate_forward(tp, feature, nullptr); }

std::array<double, kTasks> moe_coefficients(const std::array<Vec, kTasks>& features, const RankerParams& params,
                                            const std::array<bool, kTasks>& active) {
  std::array<double, kTasks> z{};
  for (int t = 0; t < kTasks; ++t) {
    if (!active[t]) continue;
    if (features[t].size() != params.dim()) throw ValidationError("gate feature has the wrong dimension");
    z[t] = gate_logit(params.tasks[t], features[t]);
  }
  return masked_softmax(z, active);
}

MultitaskLoss multitask_loss(const RankerParams& params, std::span<const TaskInstance> batch,
                             const RankConfig& cfg, RankerParams* grad) {
  if (!params.trained()) throw ConfigError("ranker parameters are empty");
  MultitaskLoss out;
  const int d = params.dim();
  std::vector<PairPass> passes(batch.size());
  std::array<Vec, kTasks> mean_fe;
  for (auto& m : mean_fe) m = Vec::Zero(d);
  std::array<double, kTasks> sum_ce{};
  std::vector<char> used(batch.size(), 0);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const int t = static_cast<int>(batch[i].task);
    if (!cfg.tasks[t]) continue;
    used[i] = 1;
    pair_forward(params, params.tasks[t], batch[i].left, batch[i].right, passes[i]);
    sum_ce[t] -= std::log(std::max(passes[i].prob[batch[i].label], 1e-300));
    mean_fe[t] += passes[i].fe;
    ++out.count[t];
  }
  std::array<bool, kTasks> present{};
  for (int t = 0; t < kTasks; ++t) {
    present[t] = out.count[t] > 0;
    if (present[t]) {
      out.task_loss[t] = sum_ce[t] / static_cast<double>(out.count[t]);
      mean_fe[t] /= static_cast<double>(out.count[t]);
    }
  }
  if (std::none_of(present.begin(), present.end(), [](bool b) { return b; })) return out;

  std::array<GatePass, kTasks> gates;
  if (cfg.moe) {
    std::array<double, kTasks> z{};
    for (int t = 0; t < kTasks; ++t)
      if (present[t]) z[t] = gate_forward(params.tasks[t], mean_fe[t], &gates[t]);
    out.alpha = masked_softmax(z, present);
  } else {
    double s = 0.0;
    for (int t = 0; t < kTasks; ++t)
      if (present[t]) s += cfg.alpha[t];
    if (s <= 0.0) throw ConfigError("fixed task weights are zero for every task in the batch");
    for (int t = 0; t < kTasks; ++t) out.alpha[t] = present[t] ? cfg.alpha[t] / s : 0.0;
  }
  for (int t = 0; t < kTasks; ++t) out.total += out.alpha[t] * out.task_loss[t];
  if (!grad) return out;

  // dL/dm_t through the gate, spread over the task's instances
  std::array<Vec, kTasks> d_mean;
  for (int t = 0; t < kTasks; ++t) {
    d_mean[t] = Vec::Zero(d);
    if (cfg.moe && present[t]) {
      const double dz = out.alpha[t] * (out.task_loss[t] - out.total);
      d_mean[t] = gate_backward(params.tasks[t], gates[t], dz, grad->tasks[t]) / static_cast<double>(out.count[t]);
    }
  }
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (!used[i]) continue;
    const int t = static_cast<int>(batch[i].task);
    Vec d_logits = passes[i].prob;
    d_logits[batch[i].label] -= 1.0;
    d_logits *= out.alpha[t] / static_cast<double>(out.count[t]);
    pair_backward(params, params.tasks[t], passes[i], d_logits, d_mean[t], grad->tasks[t], *grad);
  }
  return out;
}

RankTrainResult train_ranker(const std::vector<LabeledPair>& pairs, const Corpus& corpus, const RankTexts& texts,
                             RankerParams init, const RankConfig& cfg) {
  if (cfg.batch < 1 || cfg.epochs < 0 || !(cfg.lr > 0)) throw ConfigError("invalid ranker training config");
  RankTrainResult res{std::move(init), {}};
  if (cfg.epochs == 0) return res;
  std::vector<TaskInstance> all = build_task_instances(pairs, corpus, texts, cfg.seed);
  std::erase_if(all, [&](const TaskInstance& x) { return !cfg.tasks[static_cast<int>(x.task)]; });
  if (all.empty()) throw TrainingError("no ranking instances for the enabled tasks");
  Rng rng(cfg.seed ^ 0x5bd1e995ULL);
  RankerParams grad = res.params.zeros_like();
  const auto bs = static_cast<std::size_t>(cfg.batch);
  for (int ep = 0; ep < cfg.epochs; ++ep) {
    rng.shuffle(all);
    MultitaskLoss mean;
    std::size_t batches = 0;
    for (std::size_t s = 0; s < all.size(); s += bs) {
      const std::span<const TaskInstance> batch(all.data() + s, std::min(bs, all.size() - s));
      grad.set_zero();
      const auto l = multitask_loss(res.params, batch, cfg, &grad);
      res.params.axpy(-cfg.lr, grad);
      if (!std::isfinite(l.total) || !res.params.all_finite()) throw TrainingError("ranker training diverged");
      mean.total += l.total;
      for (int t = 0; t < kTasks; ++t) {
        mean.task_loss[t] += l.task_loss[t];
        mean.alpha[t] += l.alpha[t];
        mean.count[t] += l.count[t];
      }
      ++batches;
    }
    const double nb = static_cast<double>(batches);
    mean.total /= nb;
    for (int t = 0; t < kTasks; ++t) {
      mean.task_loss[t] /= nb;
      mean.alpha[t] /= nb;
    }
    res.history.push_back(mean);
  }
  return res;
}

double score_pair(std::span<const int> a, std::span<const int> b, const RankerParams& params) {
  if (!params.trained()) throw ConfigError("ranker is not trained");
  PairPass s;
  pair_forward(params, params.tasks[0], a, b, s);
  return s.prob[1];
}

CandidateList rank(std::span<const int> query, const CandidateList& candidates, const RankTexts& texts,
                   const RankerParams& params) {
  CandidateList out = candidates;
  for (auto& c : out) c.score = score_pair(query, texts.stem.at(c.index), params);
  std::stable_sort(out.begin(), out.end(), [](const Candidate& a, const Candidate& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.id < b.id;
  });
  return out;
}

}  // namespace fse
