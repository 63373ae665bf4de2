#include "fse/esrm.hpp"

#include <algorithm>
#include <cstdio>
#include <set>
#include <thread>

#include <nlohmann/json.hpp>

namespace fse {

namespace {

double logsumexp(const Vec& x) {
  const double m = x.maxCoeff();
  return m + std::log((x.array() - m).exp().sum());
}

Vec softmax(const Vec& x) {
  Vec p = (x.array() - x.maxCoeff()).exp();
  return p / p.sum();
}

// d(h/|h|)/dh applied to g.
Vec normalize_backward(const Vec& out, double norm, const Vec& g) { return (g - out * out.dot(g)) / norm; }

}  // namespace

Vec TextEncoder::encode(std::span<const int> ids, Pooling pooling, EncodeCache* cache) const {
  if (ids.empty()) throw ValidationError("cannot encode an empty token sequence");
  const int d = dim();
  Vec pooled = Vec::Zero(d);
  for (int id : ids) {
    if (id < 0 || id >= vocab_size()) throw ValidationError("token id " + std::to_string(id) + " outside vocabulary");
    pooled += embedding.row(id).transpose();
  }
  const double scale = pooling == Pooling::mean ? 1.0 / static_cast<double>(ids.size()) : 1.0;
  pooled *= scale;
  Vec act = (transform * pooled + bias).array().tanh();
  Vec out;
  double norm = 0.0;
  const bool ok = normalize_into(act, out, norm);
  if (cache) {
    cache->ids.assign(ids.begin(), ids.end());
    cache->pool_scale = scale;
    cache->pooled = std::move(pooled);
    cache->activated = std::move(act);
    cache->out = out;
    cache->norm = norm;
    cache->degenerate = !ok;
  }
  return out;
}

void TextEncoder::backward(const EncodeCache& c, const Vec& grad_out, TextEncoder& grad) const {
  if (c.degenerate) return;  // constant output, zero gradient
  const Vec d_act = normalize_backward(c.out, c.norm, grad_out);
  const Vec d_pre = d_act.array() * (1.0 - c.activated.array().square());
  grad.transform.noalias() += d_pre * c.pooled.transpose();
  grad.bias += d_pre;
  const Vec d_pooled = (transform.transpose() * d_pre) * c.pool_scale;
  for (int id : c.ids) grad.embedding.row(id) += d_pooled.transpose();
}

TextEncoder TextEncoder::zeros(int vocab, int d) {
  return {Mat::Zero(vocab, d), Mat::Zero(d, d), Vec::Zero(d)};
}

TextEncoder TextEncoder::random(int vocab, int d, Rng& rng, double scale) {
  auto e = zeros(vocab, d);
  init_uniform(e.embedding, rng, scale);
  init_uniform(e.transform, rng, scale);
  init_uniform(e.bias, rng, scale);
  return e;
}

void TextEncoder::set_zero() {
  embedding.setZero();
  transform.setZero();
  bias.setZero();
}

EsrmParams EsrmParams::init(int vocab, int d, const MetadataSchema& schema, std::uint64_t seed) {
  if (vocab < 1 || d < 1) throw ValidationError("vocab and d must be positive");
  if (schema.n_concepts < 1 || schema.d_img < 1) throw ValidationError("schema needs n_concepts and d_img");
  EsrmParams p;
  p.seed = seed;
  p.encoder = TextEncoder::zeros(vocab, d);
  p.image_proj = Mat::Zero(d, schema.d_img);
  p.image_bias = Vec::Zero(d);
  p.type_head = Mat::Zero(static_cast<Eigen::Index>(schema.types.size()), d);
  p.type_bias = Vec::Zero(static_cast<Eigen::Index>(schema.types.size()));
  p.difficulty_head = Mat::Zero(schema.difficulty_levels, d);
  p.difficulty_bias = Vec::Zero(schema.difficulty_levels);
  p.concept_head = Mat::Zero(schema.n_concepts, d);
  p.concept_bias = Vec::Zero(schema.n_concepts);
  Rng rng(seed);
  p.for_each([&](const char*, double* x, Eigen::Index r, Eigen::Index c) {
    for (Eigen::Index i = 0; i < r * c; ++i) x[i] = rng.uniform(-0.05, 0.05);
  });
  return p;
}

EsrmParams EsrmParams::zeros_like() const {
  EsrmParams g = *this;
  g.set_zero();
  return g;
}

void EsrmParams::set_zero() {
  for_each([](const char*, double* x, Eigen::Index r, Eigen::Index c) { std::fill(x, x + r * c, 0.0); });
}

void EsrmParams::axpy(double a, const EsrmParams& g) {
  std::vector<const double*> src;
  g.for_each([&](const char*, const double* x, Eigen::Index, Eigen::Index) { src.push_back(x); });
  std::size_t k = 0;
  for_each([&](const char*, double* x, Eigen::Index r, Eigen::Index c) {
    const double* s = src[k++];
    for (Eigen::Index i = 0; i < r * c; ++i) x[i] += a * s[i];
  });
}

bool EsrmParams::all_finite() const {
  bool ok = true;
  for_each([&](const char*, const double* x, Eigen::Index r, Eigen::Index c) {
    for (Eigen::Index i = 0; i < r * c && ok; ++i) ok = std::isfinite(x[i]);
  });
  return ok;
}

bool EsrmParams::operator==(const EsrmParams& o) const { return to_archive().serialize() == o.to_archive().serialize(); }

TensorArchive EsrmParams::to_archive() const {
  TensorArchive a;
  a.kind = "esrm";
  a.metadata = nlohmann::json{{"seed", seed}, {"d", dim()}, {"vocab", encoder.vocab_size()}}.dump();
  for_each([&](const char* name, const double* x, Eigen::Index r, Eigen::Index c) {
    a.tensors[name] = Eigen::Map<const Mat>(x, r, c);
  });
  return a;
}

EsrmParams EsrmParams::from_archive(const TensorArchive& a) {
  if (a.kind != "esrm") throw VersionError("expected an esrm archive, got '" + a.kind + "'");
  EsrmParams p;
  try {
    p.seed = nlohmann::json::parse(a.metadata).at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw CorruptionError(std::string("esrm archive metadata: ") + e.what());
  }
  p.encoder.embedding = a.mat("embedding");
  p.encoder.transform = a.mat("transform");
  p.encoder.bias = a.vec("transform_bias");
  p.image_proj = a.mat("image_proj");
  p.image_bias = a.vec("image_bias");
  p.type_head = a.mat("type_head");
  p.type_bias = a.vec("type_bias");
  p.difficulty_head = a.mat("difficulty_head");
  p.difficulty_bias = a.vec("difficulty_bias");
  p.concept_head = a.mat("concept_head");
  p.concept_bias = a.vec("concept_bias");
  const auto d = p.encoder.embedding.cols();
  if (p.encoder.transform.rows() != d || p.encoder.transform.cols() != d || p.encoder.bias.size() != d ||
      p.image_proj.rows() != d || p.image_bias.size() != d || p.type_head.cols() != d ||
      p.difficulty_head.cols() != d || p.concept_head.cols() != d)
    throw CorruptionError("esrm archive has inconsistent tensor shapes");
  return p;
}

Vec embed_text(const TokenSequence& tokens, const EsrmParams& params) {
  return params.encoder.encode(tokens.ids, Pooling::sum);
}

Vec project_image(const Vec& feat, const EsrmParams& params, ImageCache* cache) {
  if (feat.size() != params.image_dim())
    throw ValidationError("image feature dimension " + std::to_string(feat.size()) + ", expected " +
                          std::to_string(params.image_dim()));
  Vec lin = params.image_proj * feat + params.image_bias;
  Vec out;
  double norm = 0.0;
  const bool ok = normalize_into(lin, out, norm);
  if (cache) {
    cache->feat = feat;
    cache->linear = std::move(lin);
    cache->out = out;
    cache->norm = norm;
    cache->degenerate = !ok;
  }
  return out;
}

void project_image_backward(const ImageCache& c, const Vec& grad_out, const EsrmParams&, EsrmParams& grad) {
  if (c.degenerate) return;
  const Vec d_lin = normalize_backward(c.out, c.norm, grad_out);
  grad.image_proj.noalias() += d_lin * c.feat.transpose();
  grad.image_bias += d_lin;
}

ContrastiveResult contrastive_loss(const std::vector<Vec>& anchors, const std::vector<Vec>& positives, double tau) {
  if (!(tau > 0.0)) throw ValidationError("temperature must be positive");
  if (anchors.size() != positives.size()) throw ValidationError("anchors and positives differ in length");
  const std::size_t n = anchors.size();
  if (n < 2) throw ValidationError("contrastive loss needs a batch of at least 2");
  ContrastiveResult r;
  r.per_anchor.resize(n);
  r.grad_anchors.assign(n, Vec::Zero(anchors[0].size()));
  r.grad_positives.assign(n, Vec::Zero(anchors[0].size()));
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    Vec s(n);
    for (std::size_t j = 0; j < n; ++j) s[j] = anchors[i].dot(positives[j]) / tau;
    r.per_anchor[i] = logsumexp(s) - s[i];
    r.loss += r.per_anchor[i] * inv_n;
    Vec ds = softmax(s);
    ds[i] -= 1.0;
    ds *= inv_n / tau;
    for (std::size_t j = 0; j < n; ++j) {
      r.grad_anchors[i] += ds[j] * positives[j];
      r.grad_positives[j] += ds[j] * anchors[i];
    }
  }
  return r;
}

MetadataLoss metadata_task_loss(const Vec& e, const MetadataTargets& t, const EsrmParams& p, EsrmParams* grad,
                                double w_type, double w_difficulty, double w_concept) {
  MetadataLoss out;
  out.grad_embedding = Vec::Zero(e.size());
  auto head = [&](const Mat& W, const Vec& b, const Vec& target, double w, Mat* gW, Vec* gb) {
    const Vec z = W * e + b;
    const double lse = logsumexp(z);
    const double loss = -(target.array() * (z.array() - lse)).sum();
    const Vec dz = w * (softmax(z) - target);  // target sums to 1
    out.grad_embedding.noalias() += W.transpose() * dz;
    if (gW) {
      gW->noalias() += dz * e.transpose();
      *gb += dz;
    }
    return loss;
  };
  if (t.type < 0 || t.type >= p.type_head.rows()) throw ValidationError("type target out of range");
  if (t.difficulty < 0 || t.difficulty >= p.difficulty_head.rows())
    throw ValidationError("difficulty target out of range");
  if (t.concepts.size() != p.concept_head.rows()) throw ValidationError("concept target has the wrong size");
  Vec type_target = Vec::Zero(p.type_head.rows());
  type_target[t.type] = 1.0;
  Vec diff_target = Vec::Zero(p.difficulty_head.rows());
  diff_target[t.difficulty] = 1.0;
  out.type = head(p.type_head, p.type_bias, type_target, w_type, grad ? &grad->type_head : nullptr,
                  grad ? &grad->type_bias : nullptr);
  out.difficulty = head(p.difficulty_head, p.difficulty_bias, diff_target, w_difficulty,
                        grad ? &grad->difficulty_head : nullptr, grad ? &grad->difficulty_bias : nullptr);
  out.concepts = head(p.concept_head, p.concept_bias, t.concepts, w_concept, grad ? &grad->concept_head : nullptr,
                     grad ? &grad->concept_bias : nullptr);
  return out;
}

std::vector<PreparedExercise> prepare_corpus(const Corpus& corpus, const Vocab& vocab, const StopWords& stop_words) {
  std::vector<PreparedExercise> out;
  out.reserve(corpus.size());
  for (const auto& e : corpus.exercises()) {
    PreparedExercise p;
    p.stem = tokenize(stem_side(e), vocab, stop_words).ids;
    p.analysis = tokenize(analysis_side(e), vocab, stop_words).ids;
    const auto enc = encode_metadata(e.metadata, corpus.schema());
    p.targets = {enc.type_index, enc.difficulty_index, enc.concepts};
    if (!e.image_features.empty())
      p.image = Eigen::Map<const Vec>(e.image_features[0].data(), static_cast<Eigen::Index>(e.image_features[0].size()));
    out.push_back(std::move(p));
  }
  return out;
}

PretrainLoss pretrain_batch_loss(const EsrmParams& params, const std::vector<const PreparedExercise*>& batch,
                                 const PretrainConfig& cfg, EsrmParams* grad) {
  const std::size_t n = batch.size();
  PretrainLoss loss;
  if (n == 0) return loss;
  std::vector<EncodeCache> stem_cache(n);
  std::vector<Vec> stems(n), stem_grad(n, Vec::Zero(params.dim()));
  for (std::size_t i = 0; i < n; ++i) stems[i] = params.encoder.encode(batch[i]->stem, Pooling::sum, &stem_cache[i]);

  std::vector<std::size_t> with_analysis, with_image;
  for (std::size_t i = 0; i < n; ++i) {
    if (!batch[i]->analysis.empty()) with_analysis.push_back(i);
    if (batch[i]->image) with_image.push_back(i);
  }

  if (with_analysis.size() >= 2 && cfg.w_contrastive != 0.0) {
    std::vector<EncodeCache> cache(with_analysis.size());
    std::vector<Vec> anchors, positives;
    for (std::size_t k = 0; k < with_analysis.size(); ++k) {
      anchors.push_back(stems[with_analysis[k]]);
      positives.push_back(params.encoder.encode(batch[with_analysis[k]]->analysis, Pooling::sum, &cache[k]));
    }
    const auto r = contrastive_loss(anchors, positives, cfg.tau);
    loss.contrastive = r.loss;
    if (grad) {
      for (std::size_t k = 0; k < with_analysis.size(); ++k) {
        stem_grad[with_analysis[k]] += cfg.w_contrastive * r.grad_anchors[k];
        params.encoder.backward(cache[k], cfg.w_contrastive * r.grad_positives[k], grad->encoder);
      }
    }
  }

  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto m = metadata_task_loss(stems[i], batch[i]->targets, params, grad, cfg.w_type * inv_n,
                                      cfg.w_difficulty * inv_n, cfg.w_concept * inv_n);
    loss.type += m.type * inv_n;
    loss.difficulty += m.difficulty * inv_n;
    loss.concepts += m.concepts * inv_n;
    if (grad) stem_grad[i] += m.grad_embedding;
  }

  if (with_image.size() >= 2 && cfg.w_image != 0.0) {
    std::vector<ImageCache> cache(with_image.size());
    std::vector<Vec> anchors, images;
    for (std::size_t k = 0; k < with_image.size(); ++k) {
      anchors.push_back(stems[with_image[k]]);
      images.push_back(project_image(*batch[with_image[k]]->image, params, &cache[k]));
    }
    const auto r = contrastive_loss(anchors, images, cfg.tau);
    loss.image = r.loss;
    if (grad) {
      for (std::size_t k = 0; k < with_image.size(); ++k) {
        stem_grad[with_image[k]] += cfg.w_image * r.grad_anchors[k];
        project_image_backward(cache[k], cfg.w_image * r.grad_positives[k], params, *grad);
      }
    }
  }

  if (grad)
    for (std::size_t i = 0; i < n; ++i) params.encoder.backward(stem_cache[i], stem_grad[i], grad->encoder);

  loss.total = cfg.w_contrastive * loss.contrastive + cfg.w_type * loss.type + cfg.w_difficulty * loss.difficulty +
               cfg.w_concept * loss.concepts + cfg.w_image * loss.image;
  return loss;
}

PretrainResult pretrain(const std::vector<PreparedExercise>& data, EsrmParams params, const PretrainConfig& cfg) {
  if (data.empty()) throw ValidationError("pretraining needs a non-empty corpus");
  if (cfg.batch < 2) throw ValidationError("pretraining batch must be at least 2");
  PretrainResult result;
  Rng rng(cfg.seed);
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  EsrmParams grad = params.zeros_like();
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    PretrainLoss sum;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch));
      if (end - start < 2) continue;  // a trailing singleton has no negatives
      std::vector<const PreparedExercise*> batch;
      for (std::size_t k = start; k < end; ++k) batch.push_back(&data[order[k]]);
      grad.set_zero();
      const auto l = pretrain_batch_loss(params, batch, cfg, &grad);
      if (!std::isfinite(l.total))
        throw TrainingError("pretraining diverged in epoch " + std::to_string(epoch) + " (loss is not finite)");
      params.axpy(-cfg.lr, grad);
      sum.total += l.total;
      sum.contrastive += l.contrastive;
      sum.type += l.type;
      sum.difficulty += l.difficulty;
      sum.concepts += l.concepts;
      sum.image += l.image;
      ++batches;
    }
    if (!params.all_finite()) throw TrainingError("pretraining produced non-finite parameters");
    const double k = batches ? 1.0 / batches : 0.0;
    result.history.push_back({sum.total * k, sum.contrastive * k, sum.type * k, sum.difficulty * k,
                              sum.concepts * k, sum.image * k});
  }
  result.params = std::move(params);
  return result;
}

double finetune_batch_loss(const EsrmParams& params, const std::vector<PreparedExercise>& data,
                           std::span<const FineTuneExample> batch, double tau, EsrmParams* grad) {
  if (!(tau > 0.0)) throw ValidationError("temperature must be positive");
  if (batch.empty()) return 0.0;
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  for (const auto& ex : batch) {
    EncodeCache anchor_cache;
    const Vec a = params.encoder.encode(data[ex.anchor].stem, Pooling::sum, &anchor_cache);
    std::vector<std::size_t> others{ex.positive};
    others.insert(others.end(), ex.negatives.begin(), ex.negatives.end());
    std::vector<EncodeCache> cache(others.size());
    std::vector<Vec> c(others.size());
    Vec s(static_cast<Eigen::Index>(others.size()));
    for (std::size_t k = 0; k < others.size(); ++k) {
      c[k] = params.encoder.encode(data[others[k]].stem, Pooling::sum, &cache[k]);
      s[static_cast<Eigen::Index>(k)] = a.dot(c[k]) / tau;
    }
    total += (logsumexp(s) - s[0]) * inv_n;
    if (grad) {
      Vec ds = softmax(s);
      ds[0] -= 1.0;
      ds *= inv_n / tau;
      Vec ga = Vec::Zero(a.size());
      for (std::size_t k = 0; k < others.size(); ++k) {
        ga += ds[static_cast<Eigen::Index>(k)] * c[k];
        params.encoder.backward(cache[k], ds[static_cast<Eigen::Index>(k)] * a, grad->encoder);
      }
      params.encoder.backward(anchor_cache, ga, grad->encoder);
    }
  }
  return total;
}

std::vector<FineTuneExample> sample_finetune_examples(const Corpus& corpus, const std::vector<LabeledPair>& pairs,
                                                      int negatives, Rng& rng) {
  std::vector<std::set<std::size_t>> similar(corpus.size());
  std::vector<std::pair<std::size_t, std::size_t>> positives;
  for (const auto& p : pairs) {
    if (p.label != PairLabel::similar) continue;
    const auto a = corpus.index_of(p.a_id), b = corpus.index_of(p.b_id);
    similar[a].insert(b);
    similar[b].insert(a);
    positives.emplace_back(a, b);
  }
  if (positives.empty()) throw TrainingError("fine-tuning needs at least one similar pair");
  std::vector<FineTuneExample> out;
  out.reserve(positives.size());
  for (const auto& [a, b] : positives) {
    std::vector<std::size_t> pool;
    for (std::size_t i = 0; i < corpus.size(); ++i)
      if (i != a && !similar[a].count(i)) pool.push_back(i);
    const auto k = std::min(pool.size(), static_cast<std::size_t>(std::max(negatives, 0)));
    FineTuneExample ex{a, b, {}};
    for (auto idx : rng.sample(pool.size(), k)) ex.negatives.push_back(pool[idx]);
    out.push_back(std::move(ex));
  }
  return out;
}

FineTuneResult fine_tune(const std::vector<PreparedExercise>& data, const Corpus& corpus,
                         const std::vector<LabeledPair>& pairs, EsrmParams params, const FineTuneConfig& cfg) {
  if (cfg.batch < 1) throw ValidationError("fine-tuning batch must be at least 1");
  FineTuneResult result;
  Rng rng(cfg.seed);
  EsrmParams grad = params.zeros_like();
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    auto examples = sample_finetune_examples(corpus, pairs, cfg.negatives, rng);
    rng.shuffle(examples);
    for (std::size_t start = 0; start < examples.size(); start += static_cast<std::size_t>(cfg.batch)) {
      const std::size_t len = std::min(examples.size() - start, static_cast<std::size_t>(cfg.batch));
      grad.set_zero();
      const double l = finetune_batch_loss(params, data, std::span(examples).subspan(start, len), cfg.tau, &grad);
      if (!std::isfinite(l)) throw TrainingError("fine-tuning diverged (loss is not finite)");
      result.batch_losses.push_back(l);
      params.axpy(-cfg.lr, grad);
    }
  }
  if (!params.all_finite()) throw TrainingError("fine-tuning produced non-finite parameters");
  result.params = std::move(params);
  return result;
}

Mat embed_corpus(const std::vector<PreparedExercise>& data, const EsrmParams& params, int threads) {
  Mat out(static_cast<Eigen::Index>(data.size()), params.dim());
  auto work = [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i)
      out.row(static_cast<Eigen::Index>(i)) = params.encoder.encode(data[i].stem, Pooling::sum).transpose();
  };
  const std::size_t t = static_cast<std::size_t>(std::max(1, threads));
  if (t == 1 || data.size() < 2 * t) {
    work(0, data.size());
    return out;
  }
  std::vector<std::jthread> pool;
  const std::size_t chunk = (data.size() + t - 1) / t;
  for (std::size_t lo = 0; lo < data.size(); lo += chunk) pool.emplace_back(work, lo, std::min(data.size(), lo + chunk));
  pool.clear();  // joins
  return out;
}

std::string format_embeddings(const Corpus& corpus, const Mat& embeddings) {
  if (static_cast<std::size_t>(embeddings.rows()) != corpus.size())
    throw ValidationError("embedding rows do not match the corpus");
  std::string out;
  char buf[40];
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    out += corpus[i].id;
    for (Eigen::Index k = 0; k < embeddings.cols(); ++k) {
      std::snprintf(buf, sizeof buf, " %.17g", embeddings(static_cast<Eigen::Index>(i), k));
      out += buf;
    }
    out += '\n';
  }
  return out;
}

void export_embeddings(const Corpus& corpus, const Mat& embeddings, const std::string& path) {
  write_file(path, format_embeddings(corpus, embeddings));
}

}  // namespace fse
