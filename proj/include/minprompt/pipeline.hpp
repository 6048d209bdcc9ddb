#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <type_traits>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "minprompt/corpus.hpp"
#include "minprompt/domset.hpp"
#include "minprompt/entities.hpp"
#include "minprompt/qgen.hpp"
#include "minprompt/retrieval.hpp"
#include "minprompt/sentgraph.hpp"
#include "minprompt/service.hpp"

namespace minprompt {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Configuration

struct ConfigKey {
  std::string_view name;
  std::string_view default_value;
  std::string_view help;
  bool is_path;  // resolved against the config file's directory
};

inline const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = {
      {"input", "", "comma-separated input files or directories", true},
      {"format", "plain_text", "input format: plain_text | mrqa_jsonl", false},
      {"dataset_id", "", "dataset label (default: derived from the input)", false},
      {"dedup_contexts", "false", "drop repeated MRQA contexts", false},
      {"abbreviations", "", "abbreviation list for sentence splitting (one per line)", true},
      {"recognizer", "builtin", "entity recognizer: builtin | sidecar | service", false},
      {"gazetteer", "", "comma-separated gazetteer files (term<TAB>TYPE)", true},
      {"sidecar", "", "mention sidecar JSONL for the input corpus", true},
      {"support_sidecar", "", "mention sidecar JSONL for the support corpus", true},
      {"service_endpoint", "", "recognizer service URL (http://host:port/path)", false},
      {"service_timeout_ms", "10000", "recognizer service timeout", false},
      {"service_batch_size", "64", "sentences per service request", false},
      {"service_max_in_flight", "4", "concurrent service requests", false},
      {"stoplist", "", "entity keys excluded from the graph (one per line)", true},
      {"graph_scope", "corpus", "edge scope: corpus | document", false},
      {"retrieval", "false", "retrieve support sentences before graph construction", false},
      {"support_corpus", "", "comma-separated support corpus files or directories", true},
      {"support_format", "plain_text", "support corpus format", false},
      {"retrieval_top_k", "50", "BM25 candidates examined per query (0 = all)", false},
      {"require_answer_entity", "true", "support sentence must mention the answer", false},
      {"exclude_source_context", "true", "support sentence must come from another document", false},
      {"min_extra_shared_entities", "1", "additional entities shared with the query or its context", false},
      {"degree_mode", "residual", "greedy priority: residual | static", false},
      {"style", "wh", "question style: wh | cloze | both", false},
      {"wh_order", "wh_b_a", "wh template order: wh_b_a | wh_a_b", false},
      {"priors", "", "wh-bigram priors (TYPE<TAB>bigram<TAB>probability)", true},
      {"mask_token", "<mask>", "mask token used in prompts", false},
      {"lambda", "1.0", "augmented-loss weight recorded on every sample (> 0)", false},
      {"seed", "0", "global random seed", false},
      {"workers", "0", "worker threads (0 = MINPROMPT_WORKERS or CPU count)", false},
      {"record_timings", "false", "write stage wall times into stats.json", false},
      {"out", "out", "output directory", true},
  };
  return keys;
}

inline const ConfigKey* find_config_key(std::string_view name) {
  for (const auto& k : config_keys())
    if (k.name == name) return &k;
  return nullptr;
}

// Flat key = value configuration. Values stay strings; typed accessors parse
// them and report the key on failure.
class PipelineConfig {
 public:
  PipelineConfig() {
    for (const auto& k : config_keys()) values_[std::string(k.name)] = std::string(k.default_value);
  }

  static PipelineConfig from_file(const fs::path& path) {
    PipelineConfig cfg;
    std::ifstream in(path);
    if (!in) throw IoError("cannot read config '" + path.string() + "'");
    fs::path base = fs::absolute(path).parent_path();
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      auto t = text::trim(line);
      if (t.empty() || t.front() == '#') continue;
      auto eq = t.find('=');
      if (eq == std::string_view::npos)
        throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": expected key = value");
      std::string key(text::trim(t.substr(0, eq)));
      std::string value(text::trim(t.substr(eq + 1)));
      try {
        cfg.set(key, value, base);
      } catch (const ValidationError& e) {
        throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
      }
    }
    return cfg;
  }

  // Path-valued keys are resolved against `base` when relative.
  void set(const std::string& key, const std::string& value, const fs::path& base = fs::current_path()) {
    const ConfigKey* k = find_config_key(key);
    if (!k) throw ValidationError("unknown config key '" + key + "'");
    if (k->is_path && !value.empty()) {
      std::vector<std::string> parts;
      for (auto& p : text::split(value, ',')) {
        std::string item(text::trim(p));
        if (item.empty()) continue;
        fs::path pp(item);
        parts.push_back((pp.is_absolute() ? pp : (base / pp)).lexically_normal().string());
      }
      std::string joined;
      for (std::size_t i = 0; i < parts.size(); ++i) joined += (i ? "," : "") + parts[i];
      values_[key] = joined;
    } else {
      values_[key] = value;
    }
  }

  const std::string& get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ValidationError("unknown config key '" + key + "'");
    return it->second;
  }

  bool get_bool(const std::string& key) const {
    const auto& v = get(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ValidationError("config key '" + key + "' expects a boolean, got '" + v + "'");
  }

  std::int64_t get_int(const std::string& key) const {
    const auto& v = get(key);
    try {
      std::size_t used = 0;
      auto x = std::stoll(v, &used);
      if (used == v.size()) return x;
    } catch (const std::exception&) {
    }
    throw ValidationError("config key '" + key + "' expects an integer, got '" + v + "'");
  }

  std::uint64_t get_u64(const std::string& key) const {
    const auto& v = get(key);
    try {
      std::size_t used = 0;
      if (!v.empty() && v[0] != '-') {
        auto x = std::stoull(v, &used);
        if (used == v.size()) return x;
      }
    } catch (const std::exception&) {
    }
    throw ValidationError("config key '" + key + "' expects a non-negative integer, got '" + v + "'");
  }

  double get_double(const std::string& key) const {
    const auto& v = get(key);
    try {
      std::size_t used = 0;
      double x = std::stod(v, &used);
      if (used == v.size()) return x;
    } catch (const std::exception&) {
    }
    throw ValidationError("config key '" + key + "' expects a number, got '" + v + "'");
  }

  std::vector<fs::path> get_paths(const std::string& key) const {
    std::vector<fs::path> out;
    for (auto& p : text::split(get(key), ','))
      if (!text::trim(p).empty()) out.emplace_back(std::string(text::trim(p)));
    return out;
  }

  fs::path out_dir() const { return fs::path(get("out")); }

  unsigned workers() const {
    auto w = get_int("workers");
    return w > 0 ? static_cast<unsigned>(w) : default_workers();
  }

  // Checks types, enumerations and that every referenced path exists.
  void validate() const {
    parse_input_format(get("format"));
    parse_input_format(get("support_format"));
    parse_degree_mode(get("degree_mode"));
    parse_style_selection(get("style"));
    parse_wh_order(get("wh_order"));
    for (const char* b : {"dedup_contexts", "retrieval", "require_answer_entity", "exclude_source_context",
                          "record_timings"})
      get_bool(b);
    get_u64("seed");
    get_int("workers");
    if (get_int("service_timeout_ms") <= 0) throw ValidationError("service_timeout_ms must be positive");
    if (get_int("service_batch_size") <= 0) throw ValidationError("service_batch_size must be positive");
    if (get_int("service_max_in_flight") <= 0) throw ValidationError("service_max_in_flight must be positive");
    if (get_int("retrieval_top_k") < 0) throw ValidationError("retrieval_top_k must be >= 0");
    if (get_int("min_extra_shared_entities") < 0) throw ValidationError("min_extra_shared_entities must be >= 0");
    if (!(get_double("lambda") > 0.0)) throw ValidationError("lambda must be > 0");
    if (get("mask_token").empty()) throw ValidationError("mask_token must not be empty");
    auto scope = get("graph_scope");
    if (scope != "corpus" && scope != "document") throw ValidationError("graph_scope must be corpus or document");

    if (get("input").empty()) throw ValidationError("no input configured");
    for (const auto& key : {"input", "abbreviations", "gazetteer", "stoplist", "priors", "support_corpus"})
      for (const auto& p : get_paths(key))
        if (!fs::exists(p)) throw ValidationError(std::string(key) + ": path does not exist: " + p.string());

    const auto& mode = get("recognizer");
    if (mode == "builtin") {
      // gazetteers optional: patterns and capitalization still apply
    } else if (mode == "sidecar") {
      if (get("sidecar").empty()) throw ValidationError("recognizer=sidecar requires 'sidecar'");
      if (!fs::exists(get("sidecar"))) throw ValidationError("sidecar: path does not exist: " + get("sidecar"));
      if (get_bool("retrieval") && get("support_sidecar").empty())
        throw ValidationError("recognizer=sidecar with retrieval requires 'support_sidecar'");
    } else if (mode == "service") {
      if (get("service_endpoint").empty()) throw ValidationError("recognizer=service requires 'service_endpoint'");
      detail::parse_endpoint(get("service_endpoint"));
    } else {
      throw ValidationError("recognizer must be builtin, sidecar or service");
    }
    if (get_bool("retrieval") && get("support_corpus").empty())
      throw ValidationError("retrieval=true requires 'support_corpus'");
  }

  // Effective configuration, every key with its resolved value, in registry order.
  std::string echo() const {
    std::ostringstream out;
    out << "# effective minprompt configuration\n";
    for (const auto& k : config_keys()) out << k.name << " = " << values_.at(std::string(k.name)) << "\n";
    return out.str();
  }

 private:
  std::map<std::string, std::string> values_;
};

// ---------------------------------------------------------------------------
// Corpus state shared by the stages

struct CorpusState {
  std::vector<Document> documents;
  std::vector<Sentence> sentences;
  MentionTable mentions;
  // Index into `documents` of the context each sentence is answered from.
  std::vector<std::size_t> context_doc;
  // Answer anchors inside the context document (retrieved sentences only).
  std::vector<std::map<std::string, std::size_t>> anchors;
};

struct PipelineStats {
  std::uint64_t nodes = 0;
  std::uint64_t edges = 0;
  std::uint64_t dominating_set_size = 0;
  std::uint64_t training_samples = 0;
  std::uint64_t entities = 0;
  std::uint64_t max_degree = 0;
  double bound = 0.0;
  std::uint64_t uncovered_entities = 0;
  std::vector<std::pair<std::string, std::int64_t>> timings_ms;
};

namespace detail {

// Regular files under each path (directories recursively), sorted.
inline std::vector<fs::path> expand_inputs(const std::vector<fs::path>& paths) {
  std::vector<fs::path> files;
  for (const auto& p : paths) {
    if (fs::is_directory(p)) {
      std::vector<fs::path> found;
      for (const auto& e : fs::recursive_directory_iterator(p))
        if (e.is_regular_file()) found.push_back(e.path());
      std::sort(found.begin(), found.end());
      files.insert(files.end(), found.begin(), found.end());
    } else if (fs::exists(p)) {
      files.push_back(p);
    } else {
      throw IoError("cannot read '" + p.string() + "'");
    }
  }
  return files;
}

inline void write_text(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << content;
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

inline std::vector<std::string> read_lines(const fs::path& path) {
  std::istringstream in(read_file(path));
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line))
    if (!text::trim(line).empty()) lines.push_back(line);
  return lines;
}

template <typename Json>
std::string jsonl(const std::vector<Json>& rows) {
  std::string out;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (i) out += '\n';
    out += rows[i].dump();
  }
  return out;
}

}  // namespace detail

// Runs the configured recognizer over `sentences`.
inline MentionTable recognize(const PipelineConfig& cfg, const std::vector<Sentence>& sentences,
                              const std::string& sidecar_key, unsigned workers) {
  const auto& mode = cfg.get("recognizer");
  if (mode == "sidecar") return load_sidecar(cfg.get(sidecar_key), sentences);
  if (mode == "service") {
    ServiceOptions opts;
    opts.endpoint = cfg.get("service_endpoint");
    opts.timeout = std::chrono::milliseconds(cfg.get_int("service_timeout_ms"));
    opts.batch_size = static_cast<std::size_t>(cfg.get_int("service_batch_size"));
    opts.max_in_flight = static_cast<unsigned>(cfg.get_int("service_max_in_flight"));
    return ServiceRecognizer(opts).recognize(sentences);
  }
  auto gaz = Gazetteer::load(cfg.get_paths("gazetteer"));
  return recognize_all_builtin(sentences, gaz, workers);
}

class StageTimer {
 public:
  explicit StageTimer(PipelineStats& stats) : stats_(stats) {}
  template <typename Fn>
  auto run(const std::string& stage, Fn&& fn) {
    auto t0 = std::chrono::steady_clock::now();
    auto record = [&] {
      auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0).count();
      stats_.timings_ms.emplace_back(stage, static_cast<std::int64_t>(ms));
    };
    try {
      if constexpr (std::is_void_v<decltype(fn())>) {
        fn();
        record();
      } else {
        auto r = fn();
        record();
        return r;
      }
    } catch (const ValidationError& e) {
      throw ValidationError("[" + stage + "] " + e.what());
    } catch (const ArgumentError& e) {
      throw ArgumentError("[" + stage + "] " + e.what());
    } catch (const IoError& e) {
      throw IoError("[" + stage + "] " + e.what());
    } catch (const ParseError& e) {
      throw ParseError("[" + stage + "] " + e.what());
    } catch (const Error& e) {
      throw PipelineError("[" + stage + "] " + e.what());
    }
  }

 private:
  PipelineStats& stats_;
};

// ingest -> segment -> recognize -> (optional) retrieve.
inline CorpusState build_corpus(const PipelineConfig& cfg, PipelineStats& stats) {
  StageTimer timer(stats);
  const unsigned workers = cfg.workers();
  CorpusState st;
  auto abbrevs = cfg.get("abbreviations").empty() ? default_abbreviations()
                                                  : load_abbreviations(cfg.get("abbreviations"));

  st.documents = timer.run("ingest", [&] {
    auto files = detail::expand_inputs(cfg.get_paths("input"));
    if (files.empty()) throw ValidationError("no input files found");
    IngestOptions opts{cfg.get("dataset_id"), cfg.get_bool("dedup_contexts")};
    return ingest(files, parse_input_format(cfg.get("format")), opts);
  });
  st.sentences = timer.run("segment", [&] { return segment_corpus(st.documents, abbrevs, workers); });
  st.mentions = timer.run("recognize", [&] { return recognize(cfg, st.sentences, "sidecar", workers); });

  std::unordered_map<std::string, std::size_t> doc_index;
  for (std::size_t i = 0; i < st.documents.size(); ++i) doc_index[st.documents[i].doc_id] = i;
  st.context_doc.resize(st.sentences.size());
  for (std::size_t i = 0; i < st.sentences.size(); ++i) st.context_doc[i] = doc_index.at(st.sentences[i].doc_id);
  st.anchors.resize(st.sentences.size());

  if (!cfg.get_bool("retrieval")) return st;

  timer.run("retrieve", [&] {
    auto files = detail::expand_inputs(cfg.get_paths("support_corpus"));
    IngestOptions opts{"support", false};
    auto sdocs = ingest(files, parse_input_format(cfg.get("support_format")), opts);
    auto ssents = segment_corpus(sdocs, abbrevs, workers);
    auto smentions = recognize(cfg, ssents, "support_sidecar", workers);
    auto support = SupportCorpus::build(std::move(sdocs), std::move(ssents), std::move(smentions));

    RetrievalConstraints rc;
    rc.require_answer_entity = cfg.get_bool("require_answer_entity");
    rc.exclude_source_context = cfg.get_bool("exclude_source_context");
    rc.min_extra_shared_entities = static_cast<int>(cfg.get_int("min_extra_shared_entities"));
    rc.top_k = static_cast<std::size_t>(cfg.get_int("retrieval_top_k"));

    // context keys per document
    std::vector<std::set<std::string>> doc_keys(st.documents.size());
    for (std::size_t i = 0; i < st.sentences.size(); ++i)
      for (const auto& m : st.mentions[i]) doc_keys[st.context_doc[i]].insert(m.key);

    const std::size_t corpus_n = st.sentences.size();
    std::vector<std::vector<std::pair<std::uint32_t, std::size_t>>> hits(corpus_n);  // (support idx, mention idx)
    parallel_for(corpus_n, workers, [&](std::size_t i) {
      SupportQuery q;
      q.sentence = &st.sentences[i];
      for (const auto& m : st.mentions[i]) q.sentence_keys.push_back(m.key);
      q.context_keys = doc_keys[st.context_doc[i]];
      for (std::size_t a = 0; a < st.mentions[i].size(); ++a) {
        q.answer = &st.mentions[i][a];
        if (auto j = retrieve_support_sentence(support, q, rc)) hits[i].emplace_back(*j, a);
      }
    });

    std::unordered_map<std::uint32_t, std::size_t> added;  // support idx -> sentence id
    for (std::size_t i = 0; i < corpus_n; ++i) {
      for (auto [j, a] : hits[i]) {
        const auto& answer = st.mentions[i][a];
        std::size_t anchor = st.sentences[i].span.start + answer.span.start;
        auto it = added.find(j);
        if (it != added.end()) {
          // already introduced for an earlier query; only add anchors for the same context
          if (st.context_doc[it->second] == st.context_doc[i]) st.anchors[it->second].try_emplace(answer.key, anchor);
          continue;
        }
        Sentence s = support.sentences[j];
        s.id = static_cast<SentenceId>(st.sentences.size());
        s.origin = Origin::retrieved;
        added.emplace(j, s.id);
        st.sentences.push_back(std::move(s));
        st.mentions.push_back(support.mentions[j]);
        st.context_doc.push_back(st.context_doc[i]);
        st.anchors.push_back({{answer.key, anchor}});
      }
    }
  });
  return st;
}

inline SentenceGraph build_corpus_graph(const PipelineConfig& cfg, const CorpusState& st) {
  std::unordered_set<std::string> stoplist;
  if (!cfg.get("stoplist").empty()) stoplist = load_stoplist(cfg.get("stoplist"));
  if (cfg.get("graph_scope") == "document") {
    std::vector<std::string> scope(st.sentences.size());
    for (std::size_t i = 0; i < scope.size(); ++i) scope[i] = st.documents[st.context_doc[i]].doc_id;
    return build_graph(st.mentions, stoplist, &scope, cfg.workers());
  }
  return build_graph(st.mentions, stoplist, nullptr, cfg.workers());
}

inline std::vector<AugmentedSample> generate_samples(const PipelineConfig& cfg, const CorpusState& st,
                                                     const std::vector<SentenceId>& selected,
                                                     GenerationReport* report = nullptr) {
  WhPriors priors = cfg.get("priors").empty() ? WhPriors::defaults() : WhPriors::load(cfg.get("priors"));
  GenerationConfig gc;
  gc.styles = parse_style_selection(cfg.get("style"));
  gc.order = parse_wh_order(cfg.get("wh_order"));
  gc.mask_token = cfg.get("mask_token");
  gc.lambda_weight = cfg.get_double("lambda");
  gc.seed = cfg.get_u64("seed");
  gc.workers = cfg.workers();

  std::vector<GenerationSource> sources;
  sources.reserve(selected.size());
  for (auto id : selected) {
    if (id >= st.sentences.size()) throw ValidationError("selected sentence " + std::to_string(id) + " unknown");
    const auto& doc = st.documents[st.context_doc[id]];
    GenerationSource src;
    src.sentence = &st.sentences[id];
    src.mentions = &st.mentions[id];
    src.context = doc.text;
    src.dataset_id = doc.dataset_id;
    if (st.sentences[id].origin == Origin::corpus) src.sentence_offset = st.sentences[id].span.start;
    src.anchors = st.anchors[id];
    sources.push_back(std::move(src));
  }
  return assemble_dataset(sources, priors, gc, report);
}

// ---------------------------------------------------------------------------
// Persisted stage outputs

inline void write_corpus(const fs::path& dir, const CorpusState& st) {
  std::vector<nlohmann::ordered_json> docs, sents;
  for (const auto& d : st.documents) {
    nlohmann::ordered_json j;
    j["doc_id"] = d.doc_id;
    j["dataset_id"] = d.dataset_id;
    j["source_path"] = d.source_path;
    j["text"] = d.text;
    docs.push_back(std::move(j));
  }
  for (std::size_t i = 0; i < st.sentences.size(); ++i) {
    const auto& s = st.sentences[i];
    nlohmann::ordered_json j;
    j["sentence_id"] = s.id;
    j["doc_id"] = s.doc_id;
    j["start"] = s.span.start;
    j["end"] = s.span.end;
    j["text"] = s.text;
    j["origin"] = std::string(to_string(s.origin));
    j["context_doc_id"] = st.documents[st.context_doc[i]].doc_id;
    auto ms = nlohmann::ordered_json::array();
    for (const auto& m : st.mentions[i]) {
      nlohmann::ordered_json mj;
      mj["start"] = m.span.start;
      mj["end"] = m.span.end;
      mj["surface"] = m.surface;
      mj["type"] = std::string(to_string(m.type));
      ms.push_back(std::move(mj));
    }
    j["mentions"] = std::move(ms);
    nlohmann::ordered_json anchors = nlohmann::ordered_json::object();
    for (const auto& [k, v] : st.anchors[i]) anchors[k] = v;
    j["anchors"] = std::move(anchors);
    sents.push_back(std::move(j));
  }
  detail::write_text(dir / "documents.jsonl", detail::jsonl(docs));
  detail::write_text(dir / "sentences.jsonl", detail::jsonl(sents));
}

inline CorpusState read_corpus(const fs::path& dir) {
  CorpusState st;
  std::unordered_map<std::string, std::size_t> doc_index;
  auto parse = [](const std::string& line, const fs::path& file, std::size_t no) {
    try {
      return nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(file.string() + ":" + std::to_string(no) + ": " + e.what());
    }
  };
  std::size_t no = 0;
  for (const auto& line : detail::read_lines(dir / "documents.jsonl")) {
    auto j = parse(line, dir / "documents.jsonl", ++no);
    Document d{j.at("doc_id"), j.at("dataset_id"), j.at("text"), j.at("source_path")};
    doc_index[d.doc_id] = st.documents.size();
    st.documents.push_back(std::move(d));
  }
  no = 0;
  for (const auto& line : detail::read_lines(dir / "sentences.jsonl")) {
    auto j = parse(line, dir / "sentences.jsonl", ++no);
    Sentence s;
    s.id = j.at("sentence_id");
    if (s.id != st.sentences.size()) throw ValidationError("sentences.jsonl: ids are not dense");
    s.doc_id = j.at("doc_id");
    s.span = {j.at("start"), j.at("end")};
    s.text = j.at("text");
    s.origin = parse_origin(j.at("origin").get<std::string>());
    auto ctx = doc_index.find(j.at("context_doc_id").get<std::string>());
    if (ctx == doc_index.end()) throw ValidationError("sentences.jsonl: unknown context document");
    std::vector<EntityMention> ms;
    for (const auto& mj : j.at("mentions"))
      ms.push_back(make_mention(s.text, mj.at("start"), mj.at("end"), mj.at("surface").get<std::string>(),
                                mj.at("type").get<std::string>(), "sentences.jsonl:" + std::to_string(no)));
    std::map<std::string, std::size_t> anchors;
    for (const auto& [k, v] : j.at("anchors").items()) anchors[k] = v.get<std::size_t>();
    st.sentences.push_back(std::move(s));
    st.mentions.push_back(std::move(ms));
    st.context_doc.push_back(ctx->second);
    st.anchors.push_back(std::move(anchors));
  }
  return st;
}

inline std::vector<SentenceId> read_selection(const fs::path& file) {
  auto j = nlohmann::json::parse(detail::read_file(file));
  return j.at("selected").get<std::vector<SentenceId>>();
}

inline nlohmann::ordered_json stats_json(const PipelineStats& s, bool with_timings) {
  nlohmann::ordered_json j;
  j["nodes"] = s.nodes;
  j["edges"] = s.edges;
  j["dominating_set"] = s.dominating_set_size;
  j["training_samples"] = s.training_samples;
  j["entities"] = s.entities;
  j["max_degree"] = s.max_degree;
  j["bound"] = s.bound;
  nlohmann::ordered_json t = nlohmann::ordered_json::object();
  if (with_timings)
    for (const auto& [stage, ms] : s.timings_ms) t[stage] = ms;
  j["timings_ms"] = std::move(t);
  return j;
}

inline PipelineStats stats_from_json(const nlohmann::ordered_json& j) {
  PipelineStats s;
  s.nodes = j.at("nodes");
  s.edges = j.at("edges");
  s.dominating_set_size = j.at("dominating_set");
  s.training_samples = j.at("training_samples");
  s.entities = j.at("entities");
  s.max_degree = j.at("max_degree");
  s.bound = j.at("bound");
  for (const auto& [k, v] : j.at("timings_ms").items()) s.timings_ms.emplace_back(k, v.get<std::int64_t>());
  return s;
}

// Human-readable summary table.
inline std::string format_stats_table(const PipelineStats& s) {
  std::ostringstream out;
  auto row = [&](const std::string& label, const std::string& value) {
    out << std::left << std::setw(22) << label << std::right << std::setw(14) << value << "\n";
  };
  row("# nodes", std::to_string(s.nodes));
  row("# edges", std::to_string(s.edges));
  row("# dominating set", std::to_string(s.dominating_set_size));
  row("# training samples", std::to_string(s.training_samples));
  out << std::string(36, '-') << "\n";
  row("entities", std::to_string(s.entities));
  row("max degree", std::to_string(s.max_degree));
  std::ostringstream b;
  b << std::fixed << std::setprecision(4) << s.bound;
  row("bound (ln D + 2)", b.str());
  row("uncovered entities", std::to_string(s.uncovered_entities));
  for (const auto& [stage, ms] : s.timings_ms) row("time " + stage + " (ms)", std::to_string(ms));
  return out.str();
}

// Prints the table to `out` and writes stats.json (plus timings.json) into `dir`.
inline void stats_report(const PipelineStats& s, const fs::path& dir, bool with_timings, std::ostream& out) {
  out << format_stats_table(s);
  detail::write_text(dir / "stats.json", stats_json(s, with_timings).dump(2) + "\n");
  nlohmann::ordered_json t = nlohmann::ordered_json::object();
  for (const auto& [stage, ms] : s.timings_ms) t[stage] = ms;
  detail::write_text(dir / "timings.json", nlohmann::ordered_json{{"timings_ms", t}}.dump(2) + "\n");
}

struct PipelineResult {
  PipelineStats stats;
  GenerationReport generation;
};

// The whole pipeline; writes documents/sentences, graph dump, selection,
// samples, stats and the effective config into the output directory.
inline PipelineResult run_pipeline(const PipelineConfig& cfg, std::ostream& out = std::cout,
                                   std::ostream& log = std::cerr) {
  PipelineResult result;
  PipelineStats& stats = result.stats;
  StageTimer timer(stats);
  timer.run("config", [&] { cfg.validate(); });
  stats.timings_ms.clear();

  fs::path dir = cfg.out_dir();
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("[write] cannot create output directory '" + dir.string() + "': " + ec.message());
  CorpusState st = build_corpus(cfg, stats);

  SentenceGraph graph = timer.run("graph", [&] { return build_corpus_graph(cfg, st); });
  GreedyOptions go;
  go.mode = parse_degree_mode(cfg.get("degree_mode"));
  DominatingSetResult ds = timer.run("select", [&] { return approx_dominating_set(graph, go); });
  auto samples = timer.run("generate", [&] { return generate_samples(cfg, st, ds.selected, &result.generation); });

  auto gs = graph.stats();
  stats.nodes = gs.nodes;
  stats.edges = gs.edges;
  stats.entities = gs.entities;
  stats.max_degree = gs.max_degree;
  stats.dominating_set_size = ds.selected.size();
  stats.training_samples = samples.size();
  stats.bound = approximation_bound(gs.max_degree);
  stats.uncovered_entities = ds.uncovered_entities;

  timer.run("write", [&] {
    write_corpus(dir, st);
    std::ofstream g(dir / "graph.jsonl", std::ios::binary);
    graph.dump_jsonl(g);
    detail::write_text(dir / "dominating_set.json", to_json(ds).dump() + "\n");
    std::vector<nlohmann::ordered_json> rows;
    rows.reserve(samples.size());
    for (const auto& s : samples) rows.push_back(to_json(s));
    detail::write_text(dir / "samples.jsonl", detail::jsonl(rows));
    detail::write_text(dir / "config.effective", cfg.echo());
  });
  for (const auto& r : result.generation.skipped) log << "[generate] skipped " << r << "\n";
  if (samples.empty()) log << "[generate] warning: no training samples were generated\n";
  stats_report(stats, dir, cfg.get_bool("record_timings"), out);
  return result;
}

// ---------------------------------------------------------------------------
// Evaluation

// Bag-of-words F1 (lowercase, split on non-alphanumerics), maximised over the
// gold answers. Zero token overlap scores 0.
inline double token_f1(std::string_view prediction, const std::vector<std::string>& gold_answers) {
  if (gold_answers.empty()) throw ArgumentError("token_f1 needs at least one gold answer");
  auto pred = text::simple_tokens(prediction);
  std::map<std::string, int> pred_counts;
  for (const auto& t : pred) ++pred_counts[t];
  double best = 0.0;
  for (const auto& gold : gold_answers) {
    auto g = text::simple_tokens(gold);
    std::map<std::string, int> gold_counts;
    for (const auto& t : g) ++gold_counts[t];
    int common = 0;
    for (const auto& [t, c] : pred_counts) {
      auto it = gold_counts.find(t);
      if (it != gold_counts.end()) common += std::min(c, it->second);
    }
    if (common == 0) continue;
    double p = static_cast<double>(common) / static_cast<double>(pred.size());
    double r = static_cast<double>(common) / static_cast<double>(g.size());
    best = std::max(best, 2.0 * p * r / (p + r));
  }
  return best;
}

struct EvalResult {
  std::size_t count = 0;
  double mean_f1 = 0.0;
  std::vector<double> per_example;
};

// Pairs {"prediction": str} lines with {"answers": [str...]} lines.
inline EvalResult evaluate_files(const fs::path& pred_file, const fs::path& gold_file) {
  auto preds = detail::read_lines(pred_file);
  auto golds = detail::read_lines(gold_file);
  if (preds.size() != golds.size())
    throw ValidationError("prediction and gold files differ in length (" + std::to_string(preds.size()) + " vs " +
                          std::to_string(golds.size()) + ")");
  EvalResult r;
  double sum = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    nlohmann::json p, g;
    try {
      p = nlohmann::json::parse(preds[i]);
      g = nlohmann::json::parse(golds[i]);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError("line " + std::to_string(i + 1) + ": " + e.what());
    }
    if (!p.contains("prediction") || !p["prediction"].is_string())
      throw ValidationError(pred_file.string() + ":" + std::to_string(i + 1) + ": missing \"prediction\"");
    if (!g.contains("answers") || !g["answers"].is_array())
      throw ValidationError(gold_file.string() + ":" + std::to_string(i + 1) + ": missing \"answers\"");
    double f = token_f1(p["prediction"].get<std::string>(), g["answers"].get<std::vector<std::string>>());
    r.per_example.push_back(f);
    sum += f;
  }
  r.count = preds.size();
  r.mean_f1 = r.count ? sum / static_cast<double>(r.count) : 0.0;
  return r;
}

}  // namespace minprompt
