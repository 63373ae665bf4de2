// fse: command-line driver for the pipeline stages, queries and the service.

#include <CLI11.hpp>

#include <csignal>
#include <iostream>
#include <thread>

#include "fse/pipeline.hpp"
#include "fse/service.hpp"

using namespace fse;

namespace {

struct Options {
  std::string workspace = ".";
  std::string config_path;
  std::vector<std::string> overrides;

  Config config() const {
    auto c = config_path.empty() ? Config() : Config::load(config_path);
    for (const auto& o : overrides) c.assign(o);
    return c;
  }
};

void print_warnings(const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
}

volatile std::sig_atomic_t g_stop = 0;

extern "C" void on_signal(int) { g_stop = 1; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Find-similar-exercises engine: recall, ranking and re-rank over an exercise corpus."};
  app.require_subcommand(1);
  Options opt;
  app.add_option("-w,--workspace", opt.workspace, "Directory holding the pipeline snapshots")->capture_default_str();
  app.add_option("-c,--config", opt.config_path, "Flat key = value config file");
  app.add_option("--set", opt.overrides, "Override one config key (key=value); repeatable");

  std::string corpus_path, pairs_path;
  auto* ingest = app.add_subcommand("ingest", "Load a JSONL corpus (and optional pairs) into the workspace");
  ingest->add_option("--corpus", corpus_path, "Exercise JSONL file")->required();
  ingest->add_option("--pairs", pairs_path, "Labeled pair JSONL file");

  auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus with ground truth and noisy pairs");
  auto* pretrain_cmd = app.add_subcommand("pretrain", "Build the vocabulary and pre-train the representation model");
  auto* finetune = app.add_subcommand("finetune", "Fine-tune the representation model on similar pairs");
  auto* index = app.add_subcommand("index", "Build the lexical and vector indexes and the pair classifiers");
  auto* train_rank = app.add_subcommand("train-rank", "Train the multi-task ranker");
  auto* clean = app.add_subcommand("clean", "Prune noisy pair labels and retrain the ranker");

  std::string query_id, query_file, profile_json;
  auto* query = app.add_subcommand("query", "Find similar exercises for one query");
  auto* qid = query->add_option("--id", query_id, "Corpus exercise id");
  auto* qfile = query->add_option("--exercise", query_file, "File holding one exercise as JSON");
  qid->excludes(qfile);
  query->add_option("--profile", profile_json, "Student profile as JSON");

  bool eval_json = false;
  auto* eval = app.add_subcommand("eval", "Recall@K and Precision@K on held-out queries; writes eval.json");
  eval->add_flag("--json", eval_json, "Print the JSON report instead of the table");

  std::string host = "127.0.0.1";
  int port = -1;
  auto* serve = app.add_subcommand("serve", "Serve POST /similar, POST /duplicate and GET /healthz");
  serve->add_option("--host", host, "Bind address")->capture_default_str();
  serve->add_option("--port", port, "Port (default: service.port; 0 picks a free port)");

  std::string out_path;
  auto* export_cmd = app.add_subcommand("export-embeddings", "Write one line per exercise: id and embedding");
  export_cmd->add_option("-o,--out", out_path, "Output file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    const auto cfg = opt.config();
    const Workspace ws(opt.workspace);
    if (*ingest) {
      const auto c = stage_ingest(corpus_path, pairs_path, ws);
      std::cout << "ingested " << c.size() << " exercises into " << ws.path(Workspace::corpus) << "\n";
    } else if (*synth) {
      const auto d = stage_synth(cfg, ws);
      std::cout << "generated " << d.corpus.size() << " exercises, " << d.pairs.size() << " pairs ("
                << d.flipped.size() << " labels flipped)\n";
    } else if (*pretrain_cmd) {
      const auto r = stage_pretrain(cfg, ws);
      std::cout << "pre-trained " << r.history.size() << " epochs, final loss "
                << (r.history.empty() ? 0.0 : r.history.back().total) << "\n";
    } else if (*finetune) {
      const auto r = stage_finetune(cfg, ws);
      std::cout << "fine-tuned over " << r.batch_losses.size() << " batches, last batch loss "
                << (r.batch_losses.empty() ? 0.0 : r.batch_losses.back()) << "\n";
    } else if (*index) {
      print_warnings(stage_index(cfg, ws));
      std::cout << "indexes written to " << ws.dir << "\n";
    } else if (*train_rank) {
      const auto r = stage_train_rank(cfg, ws);
      std::cout << "trained ranker " << r.history.size() << " epochs, final loss "
                << (r.history.empty() ? 0.0 : r.history.back().total) << "\n";
    } else if (*clean) {
      const auto r = stage_clean(cfg, ws);
      std::cout << r.report.to_json().dump(2) << "\n";
    } else if (*query) {
      const auto engine = Engine::open(ws, cfg);
      std::optional<StudentProfile> profile;
      if (!profile_json.empty()) profile = profile_from_json(nlohmann::json::parse(profile_json));
      if (query_id.empty() == query_file.empty()) throw ValidationError("give exactly one of --id or --exercise");
      const auto result = query_id.empty()
                              ? engine.query(exercise_from_json(nlohmann::json::parse(read_file(query_file))), profile)
                              : engine.query(query_id, profile);
      std::cout << result.to_json().dump(2) << "\n";
    } else if (*eval) {
      const auto r = stage_eval(cfg, ws);
      print_warnings(r.recall.warnings);
      print_warnings(r.ranked.warnings);
      if (eval_json) std::cout << r.to_json().dump(2) << "\n";
      else std::cout << r.table();
    } else if (*serve) {
      const auto engine = Engine::open(ws, cfg);
      Service service(engine, service_config(cfg));
      const int bound = service.start(host, port >= 0 ? port : cfg.get_int("service.port"));
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cout << "listening on " << host << ":" << bound << std::endl;
      while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
      service.stop();
    } else if (*export_cmd) {
      stage_export_embeddings(cfg, ws, out_path);
      std::cout << "embeddings written to " << out_path << "\n";
    }
  } catch (const NotFoundError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: malformed JSON: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
