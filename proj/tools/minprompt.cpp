// minprompt: sentence-graph selection and prompt-style QA augmentation.
//
//   minprompt run --config <path> [--seed N] [--out DIR]
//   minprompt ingest|graph|select|generate|stats --config <path> [--from DIR]
//   minprompt eval --pred <file> --gold <file>

#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "minprompt/pipeline.hpp"

namespace mp = minprompt;
namespace fs = std::filesystem;

namespace {

struct CommonOptions {
  std::string config;
  std::string from;
  std::vector<std::string> overrides;  // key=value
  std::map<std::string, std::string> flags;
};

void add_config_options(CLI::App* cmd, CommonOptions& opts) {
  cmd->add_option("--config", opts.config, "configuration file (key = value per line)");
  cmd->add_option("--set", opts.overrides, "override a config key: --set key=value")->take_all();
  for (const auto& key : mp::config_keys()) {
    std::string name(key.name);
    std::string dashed = name;
    std::replace(dashed.begin(), dashed.end(), '_', '-');
    std::string spec = "--" + name;
    if (dashed != name) spec += ",--" + dashed;
    cmd->add_option_function<std::string>(
        spec, [&opts, name](const std::string& v) { opts.flags[name] = v; }, std::string(key.help));
  }
}

mp::PipelineConfig load_config(const CommonOptions& opts) {
  mp::PipelineConfig cfg = opts.config.empty() ? mp::PipelineConfig{} : mp::PipelineConfig::from_file(opts.config);
  for (const auto& kv : opts.overrides) {
    auto eq = kv.find('=');
    if (eq == std::string::npos) throw mp::ValidationError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  for (const auto& [k, v] : opts.flags) cfg.set(k, v);
  return cfg;
}

fs::path stage_dir(const CommonOptions& opts, const mp::PipelineConfig& cfg) {
  return opts.from.empty() ? cfg.out_dir() : fs::path(opts.from);
}

mp::SentenceGraph graph_from_dir(const mp::PipelineConfig& cfg, const mp::CorpusState& st) {
  return mp::build_corpus_graph(cfg, st);
}

int cmd_ingest(const CommonOptions& opts) {
  auto cfg = load_config(opts);
  cfg.validate();
  mp::PipelineStats stats;
  auto st = mp::build_corpus(cfg, stats);
  fs::create_directories(cfg.out_dir());
  mp::write_corpus(cfg.out_dir(), st);
  std::cout << "ingested " << st.documents.size() << " documents, " << st.sentences.size() << " sentences\n";
  return 0;
}

int cmd_graph(const CommonOptions& opts) {
  auto cfg = load_config(opts);
  auto st = mp::read_corpus(stage_dir(opts, cfg));
  auto graph = graph_from_dir(cfg, st);
  fs::create_directories(cfg.out_dir());
  std::ofstream dump(cfg.out_dir() / "graph.jsonl", std::ios::binary);
  graph.dump_jsonl(dump);
  auto gs = graph.stats();
  nlohmann::ordered_json j{{"nodes", gs.nodes},
                           {"edges", gs.edges},
                           {"entities", gs.entities},
                           {"max_degree", gs.max_degree},
                           {"isolated_nodes", gs.isolated_nodes}};
  mp::detail::write_text(cfg.out_dir() / "graph_stats.json", j.dump(2) + "\n");
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_select(const CommonOptions& opts) {
  auto cfg = load_config(opts);
  auto st = mp::read_corpus(stage_dir(opts, cfg));
  auto graph = graph_from_dir(cfg, st);
  mp::GreedyOptions go;
  go.mode = mp::parse_degree_mode(cfg.get("degree_mode"));
  auto ds = mp::approx_dominating_set(graph, go);
  fs::create_directories(cfg.out_dir());
  mp::detail::write_text(cfg.out_dir() / "dominating_set.json", mp::to_json(ds).dump() + "\n");
  std::cout << "selected " << ds.selected.size() << " of " << graph.node_count() << " sentences (max degree "
            << ds.max_degree << ", bound " << mp::approximation_bound(ds.max_degree) << ")\n";
  return 0;
}

int cmd_generate(const CommonOptions& opts) {
  auto cfg = load_config(opts);
  auto dir = stage_dir(opts, cfg);
  auto st = mp::read_corpus(dir);
  auto selected = mp::read_selection(dir / "dominating_set.json");
  mp::GenerationReport report;
  auto samples = mp::generate_samples(cfg, st, selected, &report);
  std::vector<nlohmann::ordered_json> rows;
  for (const auto& s : samples) rows.push_back(mp::to_json(s));
  fs::create_directories(cfg.out_dir());
  mp::detail::write_text(cfg.out_dir() / "samples.jsonl", mp::detail::jsonl(rows));
  for (const auto& r : report.skipped) std::cerr << "[generate] skipped " << r << "\n";
  std::cout << "wrote " << samples.size() << " samples (" << report.duplicates << " duplicates dropped)\n";
  return 0;
}

int cmd_stats(const CommonOptions& opts) {
  auto cfg = load_config(opts);
  auto dir = stage_dir(opts, cfg);
  auto st = mp::read_corpus(dir);
  auto graph = graph_from_dir(cfg, st);
  auto selected = mp::read_selection(dir / "dominating_set.json");
  mp::PipelineStats s;
  auto gs = graph.stats();
  s.nodes = gs.nodes;
  s.edges = gs.edges;
  s.entities = gs.entities;
  s.max_degree = gs.max_degree;
  s.bound = mp::approximation_bound(gs.max_degree);
  s.dominating_set_size = selected.size();
  s.training_samples = mp::detail::read_lines(dir / "samples.jsonl").size();
  if (s.training_samples == 0) std::cerr << "warning: no training samples\n";
  fs::create_directories(cfg.out_dir());
  mp::stats_report(s, cfg.out_dir(), false, std::cout);
  return 0;
}

int cmd_run(const CommonOptions& opts) {
  auto cfg = load_config(opts);
  mp::run_pipeline(cfg, std::cout, std::cerr);
  return 0;
}

int cmd_eval(const std::string& pred, const std::string& gold) {
  auto r = mp::evaluate_files(pred, gold);
  nlohmann::ordered_json j{{"count", r.count}, {"f1", r.mean_f1}};
  std::cout << j.dump() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"minprompt: minimal sentence selection and prompt-style QA augmentation"};
  app.require_subcommand(1);

  CommonOptions opts;
  std::map<std::string, CLI::App*> stages;
  for (const char* name : {"run", "ingest", "graph", "select", "generate", "stats"}) {
    auto* cmd = app.add_subcommand(name);
    add_config_options(cmd, opts);
    if (std::string(name) != "run" && std::string(name) != "ingest")
      cmd->add_option("--from", opts.from, "directory holding the previous stage's output (default: out)");
    stages[name] = cmd;
  }
  stages["run"]->description("full pipeline: ingest, graph, select, generate, stats");
  stages["ingest"]->description("ingest, segment, recognize and (optionally) retrieve");
  stages["graph"]->description("build the sentence graph and dump it");
  stages["select"]->description("greedy dominating set over the sentence graph");
  stages["generate"]->description("turn selected sentences into prompt-style samples");
  stages["stats"]->description("summary statistics of a finished run");

  std::string pred, gold;
  auto* eval = app.add_subcommand("eval", "token-level F1 of predictions against gold answers");
  eval->add_option("--pred", pred, "JSONL of {\"prediction\": str}")->required();
  eval->add_option("--gold", gold, "JSONL of {\"answers\": [str]}")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*eval) return cmd_eval(pred, gold);
    if (*stages["run"]) return cmd_run(opts);
    if (*stages["ingest"]) return cmd_ingest(opts);
    if (*stages["graph"]) return cmd_graph(opts);
    if (*stages["select"]) return cmd_select(opts);
    if (*stages["generate"]) return cmd_generate(opts);
    if (*stages["stats"]) return cmd_stats(opts);
  } catch (const mp::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const mp::ArgumentError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const mp::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
