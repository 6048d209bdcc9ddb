#pragma once

#include <chrono>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "minprompt/entities.hpp"

namespace minprompt {

struct ServiceOptions {
  std::string endpoint;  // http://host[:port]/path
  std::chrono::milliseconds timeout{10000};
  std::size_t batch_size = 64;
  unsigned max_in_flight = 4;
  int attempts = 3;
  std::chrono::milliseconds initial_backoff{200};
};

namespace detail {

struct Endpoint {
  std::string base;  // scheme://host:port
  std::string path;
};

inline Endpoint parse_endpoint(const std::string& url) {
  const std::string scheme = "http://";
  if (url.rfind(scheme, 0) != 0) throw ArgumentError("service endpoint must be an http:// URL: '" + url + "'");
  auto slash = url.find('/', scheme.size());
  Endpoint ep;
  ep.base = url.substr(0, slash);
  ep.path = slash == std::string::npos ? "/" : url.substr(slash);
  if (ep.base.size() == scheme.size()) throw ArgumentError("service endpoint has no host: '" + url + "'");
  return ep;
}

}  // namespace detail

// Remote recognizer: POST {"sentences":[{"id","text"}]} and expect
// {"mentions":[sidecar records]}. Every record goes through the sidecar
// validator. A batch is retried with exponential backoff; once the attempts
// are exhausted the whole call fails.
class ServiceRecognizer {
 public:
  explicit ServiceRecognizer(ServiceOptions options)
      : options_(std::move(options)), endpoint_(detail::parse_endpoint(options_.endpoint)) {
    if (options_.batch_size == 0) throw ArgumentError("service batch size must be positive");
    if (options_.attempts < 1) throw ArgumentError("service attempts must be at least 1");
  }

  MentionTable recognize(const std::vector<Sentence>& sentences) const {
    std::size_t batches = (sentences.size() + options_.batch_size - 1) / options_.batch_size;
    std::vector<std::vector<std::pair<SentenceId, EntityMention>>> results(batches);
    parallel_for(batches, std::max(1u, options_.max_in_flight), [&](std::size_t b) {
      std::size_t lo = b * options_.batch_size;
      std::size_t hi = std::min(sentences.size(), lo + options_.batch_size);
      results[b] = run_batch(sentences, lo, hi);
    });
    std::vector<std::pair<SentenceId, EntityMention>> all;
    for (auto& r : results)
      for (auto& rec : r) all.push_back(std::move(rec));
    return group_mentions(std::move(all), sentences.size());
  }

 private:
  std::vector<std::pair<SentenceId, EntityMention>> run_batch(const std::vector<Sentence>& sentences,
                                                              std::size_t lo, std::size_t hi) const {
    nlohmann::json body;
    body["sentences"] = nlohmann::json::array();
    for (std::size_t i = lo; i < hi; ++i)
      body["sentences"].push_back({{"id", sentences[i].id}, {"text", sentences[i].text}});
    std::string payload = body.dump();

    std::string last_error;
    auto backoff = options_.initial_backoff;
    for (int attempt = 0; attempt < options_.attempts; ++attempt) {
      if (attempt > 0) {
        std::this_thread::sleep_for(backoff);
        backoff *= 2;
      }
      httplib::Client client(endpoint_.base);
      auto secs = std::chrono::duration_cast<std::chrono::seconds>(options_.timeout);
      auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(options_.timeout - secs);
      client.set_connection_timeout(secs.count(), usecs.count());
      client.set_read_timeout(secs.count(), usecs.count());
      client.set_write_timeout(secs.count(), usecs.count());
      auto res = client.Post(endpoint_.path, payload, "application/json");
      if (!res) {
        last_error = httplib::to_string(res.error());
        continue;
      }
      if (res->status != 200) {
        last_error = "HTTP " + std::to_string(res->status);
        continue;
      }
      return parse_response(res->body, sentences, lo, hi);
    }
    throw PipelineError("recognizer service " + options_.endpoint + " failed after " +
                        std::to_string(options_.attempts) + " attempts: " + last_error);
  }

  std::vector<std::pair<SentenceId, EntityMention>> parse_response(const std::string& body,
                                                                   const std::vector<Sentence>& sentences,
                                                                   std::size_t lo, std::size_t hi) const {
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(body);
    } catch (const nlohmann::json::parse_error& e) {
      throw ValidationError("recognizer service returned malformed JSON: " + std::string(e.what()));
    }
    if (!doc.is_object() || !doc.contains("mentions") || !doc["mentions"].is_array())
      throw ValidationError("recognizer service response lacks a \"mentions\" array");
    std::vector<std::pair<SentenceId, EntityMention>> out;
    std::size_t idx = 0;
    for (const auto& rec : doc["mentions"]) {
      std::string where = "service response (batch " + std::to_string(lo / options_.batch_size) + ", record " +
                          std::to_string(idx++) + ")";
      auto parsed = parse_mention_record(rec, sentences, where);
      if (parsed.first < sentences[lo].id || parsed.first > sentences[hi - 1].id)
        throw ValidationError(where + ": sentence_id " + std::to_string(parsed.first) + " is not in the batch");
      out.push_back(std::move(parsed));
    }
    return out;
  }

  ServiceOptions options_;
  detail::Endpoint endpoint_;
};

}  // namespace minprompt
