#pragma once

#include <string>
#include <vector>

#include "fse/config.hpp"
#include "fse/conflearn.hpp"
#include "fse/engine.hpp"

namespace fse {

// Typed views of the flat configuration.
SyntheticSpec synthetic_spec(const Config& c);
PretrainConfig pretrain_config(const Config& c);
FineTuneConfig finetune_config(const Config& c);
Bm25Params bm25_params(const Config& c);
RankConfig rank_config(const Config& c);
ConfLearnConfig conflearn_config(const Config& c);

// Pipeline stages over a workspace directory. Each reads the snapshots of
// the previous stages and writes its own; see Workspace for file names.

// corpus.snap, pairs.jsonl and truth.json (ground-truth groups and flip log).
SyntheticData stage_synth(const Config& c, const Workspace& ws);
// corpus.snap from JSONL, plus pairs.jsonl when pairs_path is non-empty.
Corpus stage_ingest(const std::string& corpus_path, const std::string& pairs_path, const Workspace& ws);
// vocab.txt and esrm_pretrain.bin.
PretrainResult stage_pretrain(const Config& c, const Workspace& ws);
// esrm.bin, fine-tuned on the training split of the pairs.
FineTuneResult stage_finetune(const Config& c, const Workspace& ws);
// lexical.idx, vectors.bin, dedup.bin, variant.bin (when the training split
// has variant-flagged pairs of both kinds) and index.json. Returns warnings.
std::vector<std::string> stage_index(const Config& c, const Workspace& ws);
// ranker.bin.
RankTrainResult stage_train_rank(const Config& c, const Workspace& ws);
// pairs.clean.jsonl, clean_report.json and ranker.bin retrained on the
// cleaned pairs.
CleanResult stage_clean(const Config& c, const Workspace& ws);
// eval.json.
EvalReport stage_eval(const Config& c, const Workspace& ws);
void stage_export_embeddings(const Config& c, const Workspace& ws, const std::string& out_path);

// synth, pretrain, finetune, index, train-rank, optionally clean, then eval.
EvalReport run_synthetic_pipeline(const Config& c, const Workspace& ws, bool clean = false);

// Everything a ranker is trained from.
struct RankInputs {
  Corpus corpus;
  RankTexts texts;
  std::vector<LabeledPair> pairs;        // all labeled pairs
  std::vector<LabeledPair> train_pairs;  // training split
  RankerParams init;
};
RankInputs load_rank_inputs(const Config& c, const Workspace& ws);

std::vector<LabeledPair> training_split(const Config& c, const std::vector<LabeledPair>& pairs);

// Evaluation queries of the workspace: ground-truth groups from truth.json
// when present, else the similar-labeled pairs.
EvalSet load_eval_set(const Config& c, const Workspace& ws, const Corpus& corpus);

}  // namespace fse
