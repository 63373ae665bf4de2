#include "fse/pipeline.hpp"

#include <algorithm>
#include <filesystem>

namespace fse {

namespace {

StopWords stop_words(const Config& c) { return engine_config(c).stop_words; }

Task parse_task(const std::string& s) {
  if (s == "t1") return Task::t1;
  if (s == "t2") return Task::t2;
  if (s == "t3") return Task::t3;
  throw ConfigError("unknown ranking task '" + s + "' (expected t1, t2 or t3)");
}

void write_json(const Workspace& ws, const char* name, const nlohmann::json& j) {
  write_file(ws.path(name), j.dump(2) + "\n");
}

std::vector<LabeledPair> load_workspace_pairs(const Workspace& ws) {
  require_files(ws, {Workspace::pairs});
  return load_pairs(ws.path(Workspace::pairs));
}

}  // namespace

SyntheticSpec synthetic_spec(const Config& c) {
  SyntheticSpec s;
  s.n_templates = c.get_int("synth.templates");
  s.per_template = c.get_int("synth.per_template");
  s.noise_rate = c.get_double("synth.noise");
  s.vocab_size = c.get_int("synth.vocab");
  s.n_pairs = c.get_int("synth.pairs");
  s.seed = c.get_u64("synth.seed");
  return s;
}

PretrainConfig pretrain_config(const Config& c) {
  PretrainConfig p;
  p.epochs = c.get_int("pretrain.epochs");
  p.lr = c.get_double("pretrain.lr");
  p.batch = c.get_int("pretrain.batch");
  p.tau = c.get_double("pretrain.tau");
  p.seed = c.get_u64("esrm.seed");
  return p;
}

FineTuneConfig finetune_config(const Config& c) {
  FineTuneConfig f;
  f.epochs = c.get_int("finetune.epochs");
  f.lr = c.get_double("finetune.lr");
  f.batch = c.get_int("finetune.batch");
  f.negatives = c.get_int("finetune.negatives");
  f.tau = c.get_double("pretrain.tau");
  f.seed = c.get_u64("esrm.seed");
  return f;
}

Bm25Params bm25_params(const Config& c) {
  return {c.get_double("bm25.k1"), c.get_double("bm25.b"), c.get_double("bm25.concept_bonus")};
}

RankConfig rank_config(const Config& c) {
  RankConfig r;
  r.lr = c.get_double("rank.lr");
  r.epochs = c.get_int("rank.epochs");
  r.batch = c.get_int("rank.batch");
  r.moe = c.get_bool("rank.moe");
  r.seed = c.get_u64("rank.seed");
  r.tasks = {false, false, false};
  for (const auto& t : c.get_list("rank.tasks")) r.tasks[static_cast<std::size_t>(parse_task(t))] = true;
  const auto alpha = c.get_doubles("rank.alpha");
  if (alpha.size() != kTasks) throw ConfigError("rank.alpha needs three comma-separated weights");
  std::copy(alpha.begin(), alpha.end(), r.alpha.begin());
  return r;
}

ConfLearnConfig conflearn_config(const Config& c) {
  ConfLearnConfig l;
  l.folds = c.get_int("cl.folds");
  l.oof_epochs = c.get_int("cl.oof_epochs");
  l.strategy = parse_prune_strategy(c.get("cl.strategy"));
  l.seed = c.get_u64("cl.seed");
  l.threads = std::max(1, c.get_int("cl.threads"));
  return l;
}

std::vector<LabeledPair> training_split(const Config& c, const std::vector<LabeledPair>& pairs) {
  return split_by_seed(pairs, c.get_double("eval.test_fraction"), c.get_u64("eval.seed")).train;
}

SyntheticData stage_synth(const Config& c, const Workspace& ws) {
  std::filesystem::create_directories(ws.dir);
  auto data = generate_synthetic(synthetic_spec(c));
  save_snapshot(data.corpus, ws.path(Workspace::corpus));
  save_pairs(data.pairs, ws.path(Workspace::pairs));
  write_json(ws, Workspace::truth, synthetic_manifest(data));
  return data;
}

Corpus stage_ingest(const std::string& corpus_path, const std::string& pairs_path, const Workspace& ws) {
  auto corpus = load_corpus(corpus_path);
  std::vector<LabeledPair> pairs;
  if (!pairs_path.empty()) {
    pairs = load_pairs(pairs_path);
    validate_pairs(corpus, pairs);
  }
  std::filesystem::create_directories(ws.dir);
  save_snapshot(corpus, ws.path(Workspace::corpus));
  if (!pairs_path.empty()) save_pairs(pairs, ws.path(Workspace::pairs));
  // ground truth of an earlier synthetic run no longer applies
  std::filesystem::remove(ws.path(Workspace::truth));
  return corpus;
}

PretrainResult stage_pretrain(const Config& c, const Workspace& ws) {
  require_files(ws, {Workspace::corpus});
  const auto corpus = load_snapshot(ws.path(Workspace::corpus));
  const auto stops = stop_words(c);
  const auto vocab = build_vocab(corpus, stops);
  const auto prep = prepare_corpus(corpus, vocab, stops);
  auto init = EsrmParams::init(vocab.size(), c.get_int("esrm.dim"), corpus.schema(), c.get_u64("esrm.seed"));
  auto result = pretrain(prep, std::move(init), pretrain_config(c));
  vocab.save(ws.path(Workspace::vocab));
  result.params.save(ws.path(Workspace::esrm_pretrained));
  return result;
}

FineTuneResult stage_finetune(const Config& c, const Workspace& ws) {
  require_files(ws, {Workspace::corpus, Workspace::vocab, Workspace::esrm_pretrained, Workspace::pairs});
  const auto corpus = load_snapshot(ws.path(Workspace::corpus));
  const auto vocab = Vocab::load(ws.path(Workspace::vocab));
  const auto pairs = training_split(c, load_workspace_pairs(ws));
  const auto prep = prepare_corpus(corpus, vocab, stop_words(c));
  auto result = fine_tune(prep, corpus, pairs, EsrmParams::load(ws.path(Workspace::esrm_pretrained)), finetune_config(c));
  result.params.save(ws.path(Workspace::esrm));
  return result;
}

std::vector<std::string> stage_index(const Config& c, const Workspace& ws) {
  require_files(ws, {Workspace::corpus, Workspace::vocab, Workspace::esrm});
  std::vector<std::string> warnings;
  const auto corpus_bytes = read_file(ws.path(Workspace::corpus));
  const auto vocab_bytes = read_file(ws.path(Workspace::vocab));
  const auto esrm_bytes = read_file(ws.path(Workspace::esrm));
  const auto corpus = deserialize_snapshot(corpus_bytes);
  const auto vocab = Vocab::deserialize(vocab_bytes);
  const auto esrm = EsrmParams::from_archive(TensorArchive::deserialize(esrm_bytes, "esrm"));
  const auto stops = stop_words(c);
  const int threads = std::max(1, c.get_int("threads"));

  const auto rows = embed_corpus(prepare_corpus(corpus, vocab, stops), esrm, threads);
  std::vector<std::string> ids;
  for (const auto& e : corpus.exercises()) ids.push_back(e.id);
  VectorIndex(ids, rows).to_archive().save(ws.path(Workspace::vectors));
  write_file(ws.path(Workspace::lexical), LexicalIndex::build(corpus, stops, bm25_params(c)).serialize());

  const PairFeaturizer feat(vocab, esrm, stops);
  Rng rng(c.get_u64("esrm.seed"));
  const auto anchors = std::min<std::size_t>(c.get_u64("dedup.anchors"), corpus.size());
  PairClassifier dedup("dedup", true);
  dedup.fit(feat, make_dedup_examples(corpus, anchors, rng));
  dedup.save(ws.path(Workspace::dedup));

  std::filesystem::remove(ws.path(Workspace::variant));
  if (ws.has(Workspace::pairs)) {
    const auto examples = make_variant_examples(corpus, training_split(c, load_workspace_pairs(ws)));
    std::size_t positives = 0;
    for (const auto& e : examples) positives += static_cast<std::size_t>(e.y);
    if (positives > 0 && positives < examples.size()) {
      PairClassifier variant("variant", false);
      variant.fit(feat, examples);
      variant.save(ws.path(Workspace::variant));
    } else {
      warnings.emplace_back("no variant-flagged pairs of both kinds; variant.bin not written");
    }
  } else {
    warnings.emplace_back("no pairs.jsonl; variant.bin not written");
  }

  write_json(ws, Workspace::index_manifest,
             {{Workspace::corpus, snapshot_version(corpus_bytes)},
              {Workspace::vocab, snapshot_version(vocab_bytes)},
              {Workspace::esrm, snapshot_version(esrm_bytes)}});
  return warnings;
}

RankInputs load_rank_inputs(const Config& c, const Workspace& ws) {
  require_files(ws, {Workspace::corpus, Workspace::vocab, Workspace::esrm, Workspace::pairs});
  RankInputs in;
  in.corpus = load_snapshot(ws.path(Workspace::corpus));
  const auto vocab = Vocab::load(ws.path(Workspace::vocab));
  in.texts = prepare_rank_texts(in.corpus, vocab, stop_words(c));
  in.pairs = load_workspace_pairs(ws);
  validate_pairs(in.corpus, in.pairs);
  in.train_pairs = training_split(c, in.pairs);
  const auto esrm = EsrmParams::load(ws.path(Workspace::esrm));
  in.init = RankerParams::init(esrm.encoder, c.get_u64("rank.seed"), mean_stem_length(in.texts));
  return in;
}

RankTrainResult stage_train_rank(const Config& c, const Workspace& ws) {
  const auto in = load_rank_inputs(c, ws);
  auto result = train_ranker(in.train_pairs, in.corpus, in.texts, in.init, rank_config(c));
  result.params.save(ws.path(Workspace::ranker));
  return result;
}

EvalSet load_eval_set(const Config& c, const Workspace& ws, const Corpus& corpus) {
  const auto pairs = load_workspace_pairs(ws);
  const auto train = training_split(c, pairs);
  if (!ws.has(Workspace::truth)) return make_eval_set(corpus, pairs, train);
  const auto truth = nlohmann::json::parse(read_file(ws.path(Workspace::truth)));
  const auto groups = truth.at("group").get<std::vector<int>>();
  return make_eval_set(corpus, pairs, train, &groups);
}

CleanResult stage_clean(const Config& c, const Workspace& ws) {
  const auto in = load_rank_inputs(c, ws);
  const auto engine = Engine::open(ws, c, false);
  const int threads = std::max(1, c.get_int("threads"));
  const Evaluator eval(engine, load_eval_set(c, ws, engine.corpus()), threads);
  auto result = clean_and_retrain(in.train_pairs, in.corpus, in.texts, in.init, rank_config(c), conflearn_config(c),
                                  [&](const RankerParams& r) { return eval.precision(r).at(5); });
  save_pairs(result.cleaned, ws.path(Workspace::cleaned_pairs));
  result.after.save(ws.path(Workspace::ranker));
  auto report = result.report.to_json();
  report["config_hash"] = c.hash();
  write_json(ws, Workspace::clean_report, report);
  return result;
}

EvalReport stage_eval(const Config& c, const Workspace& ws) {
  const auto engine = Engine::open(ws, c);
  const Evaluator eval(engine, load_eval_set(c, ws, engine.corpus()), std::max(1, c.get_int("threads")));
  auto report = eval.report(engine.ranker(), c.get_u64("eval.recall_k"), c.hash());
  write_json(ws, Workspace::eval_report, report.to_json());
  return report;
}

void stage_export_embeddings(const Config& c, const Workspace& ws, const std::string& out_path) {
  require_files(ws, {Workspace::corpus, Workspace::vocab, Workspace::esrm});
  const auto corpus = load_snapshot(ws.path(Workspace::corpus));
  const auto vocab = Vocab::load(ws.path(Workspace::vocab));
  const auto esrm = EsrmParams::load(ws.path(Workspace::esrm));
  const auto rows = embed_corpus(prepare_corpus(corpus, vocab, stop_words(c)), esrm, std::max(1, c.get_int("threads")));
  export_embeddings(corpus, rows, out_path);
}

EvalReport run_synthetic_pipeline(const Config& c, const Workspace& ws, bool clean) {
  stage_synth(c, ws);
  stage_pretrain(c, ws);
  stage_finetune(c, ws);
  stage_index(c, ws);
  stage_train_rank(c, ws);
  if (clean) stage_clean(c, ws);
  return stage_eval(c, ws);
}

}  // namespace fse
