#pragma once

#include <zlib.h>

#include <cstdio>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "minprompt/common.hpp"

namespace minprompt {

enum class InputFormat { plain_text, mrqa_jsonl };

inline std::string_view to_string(InputFormat f) {
  return f == InputFormat::plain_text ? "plain_text" : "mrqa_jsonl";
}

inline InputFormat parse_input_format(std::string_view s) {
  if (s == "plain_text") return InputFormat::plain_text;
  if (s == "mrqa_jsonl") return InputFormat::mrqa_jsonl;
  throw ArgumentError("unknown input format '" + std::string(s) + "'");
}

enum class Origin { corpus, retrieved };

inline std::string_view to_string(Origin o) { return o == Origin::corpus ? "corpus" : "retrieved"; }

inline Origin parse_origin(std::string_view s) {
  if (s == "corpus") return Origin::corpus;
  if (s == "retrieved") return Origin::retrieved;
  throw ParseError("unknown sentence origin '" + std::string(s) + "'");
}

struct Document {
  std::string doc_id;
  std::string dataset_id;
  std::string text;
  std::string source_path;

  bool operator==(const Document&) const = default;
};

struct Sentence {
  SentenceId id = 0;
  std::string doc_id;
  Span span;  // byte offsets into the owning document's text
  std::string text;
  Origin origin = Origin::corpus;

  bool operator==(const Sentence&) const = default;
};

struct IngestOptions {
  // Used for plain_text inputs and for MRQA files without a header record.
  std::string dataset_id;
  // Drop MRQA context records whose text repeats an earlier one.
  bool dedup_contexts = false;
};

namespace detail {

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read '" + path.string() + "'");
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("error while reading '" + path.string() + "'");
  return data;
}

// gzread passes uncompressed input through unchanged, so plain .jsonl files
// work as well.
inline std::string read_gzip_file(const std::filesystem::path& path) {
  if (!std::filesystem::is_regular_file(path)) throw IoError("cannot read '" + path.string() + "'");
  gzFile f = gzopen(path.c_str(), "rb");
  if (f == nullptr) throw IoError("cannot read '" + path.string() + "'");
  std::string data;
  char buf[1 << 16];
  int n = 0;
  while ((n = gzread(f, buf, sizeof(buf))) > 0) data.append(buf, static_cast<std::size_t>(n));
  int err = 0;
  const char* msg = gzerror(f, &err);
  std::string message = msg ? msg : "";
  gzclose(f);
  if (n < 0 || (err != Z_OK && err != Z_STREAM_END))
    throw IoError("cannot decompress '" + path.string() + "': " + message);
  return data;
}

inline bool blank(std::string_view s) { return text::trim(s).empty(); }

inline std::string file_stem(const std::filesystem::path& p) {
  std::string name = p.filename().string();
  for (std::string_view ext : {".gz", ".jsonl", ".json", ".txt"}) {
    if (name.size() > ext.size() && name.ends_with(ext)) name.resize(name.size() - ext.size());
  }
  return name;
}

}  // namespace detail

// Reads documents from `paths`. plain_text: one document per file, doc_id is
// the file name. mrqa_jsonl: one document per context record, doc_id is
// "<file stem>#<line number>" zero-padded so lexicographic order follows file
// order. The result is sorted by doc_id.
inline std::vector<Document> ingest(const std::vector<std::filesystem::path>& paths, InputFormat format,
                                    const IngestOptions& options = {}) {
  std::vector<Document> docs;
  for (const auto& path : paths) {
    if (format == InputFormat::plain_text) {
      Document d;
      d.doc_id = path.filename().string();
      d.dataset_id = options.dataset_id.empty() ? "corpus" : options.dataset_id;
      d.text = detail::read_file(path);
      d.source_path = path.string();
      if (detail::blank(d.text)) throw ValidationError("document '" + d.doc_id + "' is empty");
      docs.push_back(std::move(d));
      continue;
    }

    std::string data = detail::read_gzip_file(path);
    std::string dataset = options.dataset_id.empty() ? detail::file_stem(path) : options.dataset_id;
    std::string stem = detail::file_stem(path);
    std::unordered_set<std::string> seen_contexts;
    std::istringstream lines(data);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(lines, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (detail::blank(line)) continue;
      nlohmann::json record;
      try {
        record = nlohmann::json::parse(line);
      } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(path.string() + ":" + std::to_string(line_no) + ": malformed JSON: " + e.what());
      }
      if (line_no == 1 && record.is_object() && record.contains("header")) {
        const auto& header = record["header"];
        if (options.dataset_id.empty() && header.is_object() && header.contains("dataset") &&
            header["dataset"].is_string())
          dataset = header["dataset"].get<std::string>();
        continue;
      }
      if (!record.is_object() || !record.contains("context") || !record["context"].is_string())
        throw ParseError(path.string() + ":" + std::to_string(line_no) + ": missing string field \"context\"");
      Document d;
      char suffix[16];
      std::snprintf(suffix, sizeof(suffix), "#%08zu", line_no);
      d.doc_id = stem + suffix;
      d.dataset_id = dataset;
      d.text = record["context"].get<std::string>();
      d.source_path = path.string();
      if (detail::blank(d.text))
        throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": empty context");
      if (options.dedup_contexts && !seen_contexts.insert(d.text).second) continue;
      docs.push_back(std::move(d));
    }
  }

  std::sort(docs.begin(), docs.end(), [](const Document& a, const Document& b) { return a.doc_id < b.doc_id; });
  for (std::size_t i = 1; i < docs.size(); ++i) {
    if (docs[i].doc_id == docs[i - 1].doc_id)
      throw ValidationError("duplicate doc_id '" + docs[i].doc_id + "' (" + docs[i - 1].source_path + ", " +
                            docs[i].source_path + ")");
  }
  return docs;
}

inline const std::set<std::string, std::less<>>& default_abbreviations() {
  static const std::set<std::string, std::less<>> abbrevs = {
      "Mr.",   "Mrs.", "Ms.",  "Dr.",  "Prof.", "Sr.",   "Jr.",  "St.",   "Mt.",  "Ft.",  "Gen.", "Col.",
      "Lt.",   "Sgt.", "Capt.", "Gov.", "Sen.", "Rep.",  "Rev.", "Hon.",  "Inc.", "Ltd.", "Co.",  "Corp.",
      "Bros.", "vs.",  "etc.", "e.g.", "i.e.", "cf.",   "al.",  "approx.", "No.", "Nos.", "Vol.", "pp.",
      "U.S.",  "U.K.", "U.N.", "Jan.", "Feb.", "Mar.",  "Apr.", "Aug.",  "Sep.", "Sept.", "Oct.", "Nov.",
      "Dec.",  "a.m.", "p.m.", "Ave.", "Blvd.", "Dept.", "Univ.", "est."};
  return abbrevs;
}

inline std::set<std::string, std::less<>> load_abbreviations(const std::filesystem::path& path) {
  std::set<std::string, std::less<>> out;
  std::istringstream in(detail::read_file(path));
  std::string line;
  while (std::getline(in, line)) {
    auto t = text::trim(line);
    if (t.empty() || t.front() == '#') continue;
    out.emplace(t);
  }
  return out;
}

// Splits at . ! ? (optionally followed by closing quotes or brackets) when the
// next non-space character is an uppercase ASCII letter or a digit, unless the
// word ending at the punctuation is a listed abbreviation. Sentence ids are
// left at 0; assign_sentence_ids numbers them corpus-wide.
inline std::vector<Sentence> segment_sentences(const Document& doc,
                                               const std::set<std::string, std::less<>>& abbreviations =
                                                   default_abbreviations()) {
  const std::string& s = doc.text;
  std::vector<Sentence> out;
  auto emit = [&](std::size_t lo, std::size_t hi) {
    while (lo < hi && text::is_space(s[lo])) ++lo;
    while (hi > lo && text::is_space(s[hi - 1])) --hi;
    if (lo == hi) return;
    Sentence sent;
    sent.doc_id = doc.doc_id;
    sent.span = {lo, hi};
    sent.text = s.substr(lo, hi - lo);
    sent.origin = Origin::corpus;
    out.push_back(std::move(sent));
  };

  std::size_t start = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    char c = s[i];
    if (c != '.' && c != '!' && c != '?') continue;
    std::size_t end = i + 1;
    while (end < s.size() && (s[end] == '"' || s[end] == '\'' || s[end] == ')' || s[end] == ']')) ++end;
    std::size_t next = end;
    while (next < s.size() && text::is_space(s[next])) ++next;
    if (next == end || next >= s.size()) continue;
    if (!text::is_upper(s[next]) && !text::is_digit(s[next])) continue;
    if (c == '.') {
      std::size_t w = i;
      while (w > start && !text::is_space(s[w - 1])) --w;
      std::string_view word(s.data() + w, i + 1 - w);
      while (!word.empty() && (word.front() == '"' || word.front() == '(' || word.front() == '\''))
        word.remove_prefix(1);
      if (abbreviations.find(word) != abbreviations.end()) continue;
    }
    emit(start, end);
    start = end;
    i = end - 1;
  }
  emit(start, s.size());
  if (out.empty() && !s.empty()) {
    // whitespace-only text still yields a single (degenerate) sentence
    Sentence sent;
    sent.doc_id = doc.doc_id;
    sent.span = {0, s.size()};
    sent.text = s;
    out.push_back(std::move(sent));
  }
  return out;
}

// Segments every document (documents are expected in doc_id order) and numbers
// the sentences 0..V-1.
inline std::vector<Sentence> segment_corpus(const std::vector<Document>& docs,
                                            const std::set<std::string, std::less<>>& abbreviations =
                                                default_abbreviations(),
                                            unsigned workers = 1) {
  std::vector<std::vector<Sentence>> per_doc(docs.size());
  parallel_for(docs.size(), workers, [&](std::size_t i) { per_doc[i] = segment_sentences(docs[i], abbreviations); });
  std::vector<Sentence> all;
  for (auto& v : per_doc)
    for (auto& s : v) {
      s.id = static_cast<SentenceId>(all.size());
      all.push_back(std::move(s));
    }
  return all;
}

}  // namespace minprompt
