#include <gtest/gtest.h>

#include <atomic>
#include <thread>

#include "minprompt/entities.hpp"
#include "minprompt/service.hpp"
#include "test_util.hpp"

namespace mp = minprompt;
using testutil::TempDir;

namespace {

struct Expect {
  std::string surface;
  mp::EntityType type;
};

void expect_mentions(const std::vector<mp::EntityMention>& got, const std::vector<Expect>& want) {
  ASSERT_EQ(got.size(), want.size());
  for (std::size_t i = 0; i < want.size(); ++i) {
    EXPECT_EQ(got[i].surface, want[i].surface) << i;
    EXPECT_EQ(got[i].type, want[i].type) << got[i].surface;
  }
}

mp::Gazetteer lakers_gazetteer() {
  mp::Gazetteer g;
  g.add("Lakers", mp::EntityType::ORG);
  g.add("Los Angeles", mp::EntityType::GPE);
  return g;
}

std::vector<mp::Sentence> sentences(const std::vector<std::string>& texts) {
  std::vector<mp::Sentence> out;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    mp::Sentence s;
    s.id = static_cast<mp::SentenceId>(i);
    s.doc_id = "d";
    s.text = texts[i];
    s.span = {0, texts[i].size()};
    out.push_back(s);
  }
  return out;
}

}  // namespace

TEST(Builtin, GazetteerPatternAndDate) {
  auto m = mp::recognize_builtin("The Lakers moved to Los Angeles in 1960.", lakers_gazetteer());
  expect_mentions(m, {{"Lakers", mp::EntityType::ORG}, {"Los Angeles", mp::EntityType::GPE},
                      {"1960", mp::EntityType::DATE}});
  EXPECT_EQ(m[1].span, (mp::Span{20, 31}));
  EXPECT_EQ(m[1].key, "los angeles");
}

TEST(Builtin, Currency) {
  expect_mentions(mp::recognize_builtin("It costs $5.", {}), {{"$5", mp::EntityType::MONEY}});
}

TEST(Builtin, NothingFires) { EXPECT_TRUE(mp::recognize_builtin("the the the", {}).empty()); }

TEST(Builtin, Patterns) {
  expect_mentions(mp::recognize_builtin("Sales rose 12% on 4 March 2021.", {}),
                  {{"12%", mp::EntityType::PERCENT}, {"4 March 2021", mp::EntityType::DATE}});
  expect_mentions(mp::recognize_builtin("they paid $3.5 million for twenty five horses", {}),
                  {{"$3.5 million", mp::EntityType::MONEY}, {"twenty five", mp::EntityType::CARDINAL}});
  expect_mentions(mp::recognize_builtin("about 1,200 people and 40 percent", {}),
                  {{"1,200", mp::EntityType::CARDINAL}, {"40 percent", mp::EntityType::PERCENT}});
}

TEST(Builtin, CapitalizedRunsSkipSentenceInitialWord) {
  expect_mentions(mp::recognize_builtin("Yesterday Ada Lovelace met Charles Babbage.", {}),
                  {{"Ada Lovelace", mp::EntityType::MISC}, {"Charles Babbage", mp::EntityType::MISC}});
  EXPECT_TRUE(mp::recognize_builtin("They left early.", {}).empty());
}

TEST(Builtin, GazetteerBeatsCapitalizationOnEqualSpan) {
  mp::Gazetteer g;
  g.add("Boston", mp::EntityType::GPE);
  expect_mentions(mp::recognize_builtin("We saw Boston today.", g), {{"Boston", mp::EntityType::GPE}});
}

TEST(Builtin, LongerSpanWinsOverSource) {
  mp::Gazetteer g;
  g.add("New York", mp::EntityType::GPE);
  // The capitalized run is longer than the gazetteer hit.
  expect_mentions(mp::recognize_builtin("we like New York Knicks games", g),
                  {{"New York Knicks", mp::EntityType::MISC}});
}

TEST(Builtin, GazetteerRespectsWordBoundaries) {
  mp::Gazetteer g;
  g.add("Art", mp::EntityType::ORG);
  EXPECT_TRUE(mp::recognize_builtin("we like Artistry here", g).size() == 1);
  EXPECT_EQ(mp::recognize_builtin("we like Artistry here", g)[0].surface, "Artistry");
}

TEST(Builtin, MentionsAreValidAndDisjoint) {
  auto g = lakers_gazetteer();
  for (const char* s : {"The Lakers moved to Los Angeles in 1960.", "In 2020, 5 Lakers fans paid €30 to see it.",
                        "Crypto.com Arena hosted 18,997 fans on March 3, 2021 in Los Angeles."}) {
    auto ms = mp::recognize_builtin(s, g);
    std::string_view sv(s);
    for (std::size_t i = 0; i < ms.size(); ++i) {
      EXPECT_EQ(sv.substr(ms[i].span.start, ms[i].span.size()), ms[i].surface);
      EXPECT_EQ(ms[i].key, mp::normalize_key(ms[i].surface));
      if (i) {
        EXPECT_LE(ms[i - 1].span.end, ms[i].span.start);
      }
    }
  }
}

TEST(Normalize, FoldsCaseAndCollapsesWhitespace) {
  EXPECT_EQ(mp::normalize_key("  Los   Angeles\t"), "los angeles");
  for (const char* s : {"Crypto.com  Arena", "ABC def", " x "})
    EXPECT_EQ(mp::normalize_key(mp::normalize_key(s)), mp::normalize_key(s));
}

TEST(Overlaps, LongestThenLeftmost) {
  std::string s = "New York City";
  std::vector<mp::EntityMention> in = {mp::make_mention(s, 0, 8, "New York", "GPE"),
                                       mp::make_mention(s, 4, 13, "York City", "GPE"),
                                       mp::make_mention(s, 0, 3, "New", "MISC")};
  auto out = mp::resolve_overlaps(in);
  ASSERT_EQ(out.size(), 2u);  // "New" does not touch the winning "York City"
  EXPECT_EQ(out[0].surface, "New");
  EXPECT_EQ(out[1].surface, "York City");
  in.push_back(mp::make_mention(s, 0, 13, "New York City", "GPE"));
  out = mp::resolve_overlaps(in);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].surface, "New York City");
}

TEST(WhFamily, Mapping) {
  EXPECT_EQ(mp::wh_family(mp::EntityType::PERSON), mp::WhFamily::who);
  EXPECT_EQ(mp::wh_family(mp::EntityType::GPE), mp::WhFamily::where);
  EXPECT_EQ(mp::wh_family(mp::EntityType::PRODUCT), mp::WhFamily::what);
  EXPECT_EQ(mp::wh_family(mp::EntityType::NORP), mp::WhFamily::who);
  EXPECT_EQ(mp::wh_family(mp::EntityType::FAC), mp::WhFamily::where);
  EXPECT_EQ(mp::wh_family(mp::EntityType::TIME), mp::WhFamily::when);
  EXPECT_EQ(mp::wh_family(mp::EntityType::MONEY), mp::WhFamily::how_many);
  EXPECT_EQ(mp::wh_family(mp::EntityType::MISC), mp::WhFamily::what);
  for (auto name : mp::kEntityTypeNames) EXPECT_EQ(mp::to_string(mp::parse_entity_type(name)), name);
  EXPECT_THROW(mp::parse_entity_type("PERSONS"), mp::ValidationError);
}

class Sidecar : public ::testing::Test {
 protected:
  TempDir tmp;
  std::vector<mp::Sentence> sents = sentences({"The Lakers won.", "a", "b", "c", "d", "e", "f", "g", "h", "i"});

  mp::MentionTable load(const std::string& line) {
    return mp::load_sidecar(testutil::write_file(tmp / "side.jsonl", line + "\n"), sents);
  }
};

TEST_F(Sidecar, ConsistentRecordAccepted) {
  auto t = load(R"({"sentence_id":0,"start":4,"end":10,"surface":"Lakers","type":"ORG"})");
  ASSERT_EQ(t.size(), 10u);
  ASSERT_EQ(t[0].size(), 1u);
  EXPECT_EQ(t[0][0].key, "lakers");
  EXPECT_EQ(t[0][0].type, mp::EntityType::ORG);
}

TEST_F(Sidecar, SurfaceMismatchRejected) {
  EXPECT_THROW(load(R"({"sentence_id":0,"start":4,"end":10,"surface":"Laker","type":"ORG"})"), mp::ValidationError);
}

TEST_F(Sidecar, UnknownSentenceRejected) {
  try {
    load(R"({"sentence_id":9999,"start":4,"end":10,"surface":"Lakers","type":"ORG"})");
    FAIL();
  } catch (const mp::ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("side.jsonl:1"), std::string::npos) << e.what();
  }
}

TEST_F(Sidecar, OutOfBoundsAndBadTypeRejected) {
  EXPECT_THROW(load(R"({"sentence_id":0,"start":4,"end":40,"surface":"Lakers","type":"ORG"})"), mp::ValidationError);
  EXPECT_THROW(load(R"({"sentence_id":0,"start":4,"end":10,"surface":"Lakers","type":"TEAM"})"), mp::ValidationError);
  EXPECT_THROW(load(R"({"sentence_id":0,"start":4,"surface":"Lakers","type":"ORG"})"), mp::ValidationError);
  EXPECT_THROW(load("{oops"), mp::ParseError);
}

TEST_F(Sidecar, RoundTripsThroughRecordWriter) {
  auto m = mp::make_mention(sents[0].text, 4, 10, "Lakers", "ORG");
  auto t = load(mp::mention_record(0, m).dump());
  EXPECT_EQ(t[0][0], m);
}

TEST(Stoplist, DropsKeys) {
  mp::MentionTable t = {{mp::make_mention("The Lakers won.", 4, 10, "Lakers", "ORG")}};
  mp::apply_stoplist(t, {"lakers"});
  EXPECT_TRUE(t[0].empty());
}

// ---------------------------------------------------------------------------
// Service recognizer against a local HTTP server

class ServiceTest : public ::testing::Test {
 protected:
  httplib::Server server;
  std::thread thread;
  int port = 0;
  std::atomic<int> calls{0};

  void start(std::function<void(const nlohmann::json&, httplib::Response&)> handler) {
    server.Post("/ner", [this, handler](const httplib::Request& req, httplib::Response& res) {
      ++calls;
      handler(nlohmann::json::parse(req.body), res);
    });
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }

  void TearDown() override {
    server.stop();
    if (thread.joinable()) thread.join();
  }

  mp::ServiceOptions options(std::size_t batch = 64) const {
    mp::ServiceOptions o;
    o.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/ner";
    o.batch_size = batch;
    o.initial_backoff = std::chrono::milliseconds(1);
    o.timeout = std::chrono::milliseconds(2000);
    return o;
  }
};

TEST_F(ServiceTest, EmptyResponseLeavesSentencesBare) {
  start([](const nlohmann::json&, httplib::Response& res) {
    res.set_content(R"({"mentions":[]})", "application/json");
  });
  auto sents = sentences({"The Lakers won.", "Nothing here.", "Still nothing."});
  auto t = mp::ServiceRecognizer(options(2)).recognize(sents);
  ASSERT_EQ(t.size(), 3u);
  for (const auto& v : t) EXPECT_TRUE(v.empty());
  EXPECT_EQ(calls.load(), 2);
}

TEST_F(ServiceTest, ValidRecordMatchesSidecar) {
  start([](const nlohmann::json& req, httplib::Response& res) {
    nlohmann::json out{{"mentions", nlohmann::json::array()}};
    for (const auto& s : req["sentences"])
      if (s["text"] == "The Lakers won.")
        out["mentions"].push_back(
            {{"sentence_id", s["id"]}, {"start", 4}, {"end", 10}, {"surface", "Lakers"}, {"type", "ORG"}});
    res.set_content(out.dump(), "application/json");
  });
  auto sents = sentences({"x", "The Lakers won."});
  auto t = mp::ServiceRecognizer(options()).recognize(sents);
  ASSERT_EQ(t[1].size(), 1u);
  EXPECT_EQ(t[1][0], mp::make_mention("The Lakers won.", 4, 10, "Lakers", "ORG"));
}

TEST_F(ServiceTest, OverlapsResolvedLongestFirst) {
  start([](const nlohmann::json&, httplib::Response& res) {
    res.set_content(
        R"({"mentions":[{"sentence_id":0,"start":0,"end":3,"surface":"New","type":"MISC"},
                        {"sentence_id":0,"start":0,"end":8,"surface":"New York","type":"GPE"}]})",
        "application/json");
  });
  auto t = mp::ServiceRecognizer(options()).recognize(sentences({"New York is big."}));
  ASSERT_EQ(t[0].size(), 1u);
  EXPECT_EQ(t[0][0].surface, "New York");
}

TEST_F(ServiceTest, InvalidRecordIsValidationError) {
  start([](const nlohmann::json&, httplib::Response& res) {
    res.set_content(R"({"mentions":[{"sentence_id":0,"start":0,"end":3,"surface":"Xyz","type":"MISC"}]})",
                    "application/json");
  });
  EXPECT_THROW(mp::ServiceRecognizer(options()).recognize(sentences({"New York is big."})), mp::ValidationError);
}

TEST_F(ServiceTest, RetriesThenFails) {
  start([](const nlohmann::json&, httplib::Response& res) { res.status = 503; });
  EXPECT_THROW(mp::ServiceRecognizer(options()).recognize(sentences({"a"})), mp::PipelineError);
  EXPECT_EQ(calls.load(), 3);
}

TEST_F(ServiceTest, RecoversWithinRetryBudget) {
  start([this](const nlohmann::json&, httplib::Response& res) {
    if (calls.load() < 3) {
      res.status = 500;
      return;
    }
    res.set_content(R"({"mentions":[]})", "application/json");
  });
  EXPECT_NO_THROW(mp::ServiceRecognizer(options()).recognize(sentences({"a"})));
  EXPECT_EQ(calls.load(), 3);
}

TEST(ServiceEndpoint, RejectsNonHttp) {
  mp::ServiceOptions o;
  o.endpoint = "https://example.org/ner";
  EXPECT_THROW(mp::ServiceRecognizer{o}, mp::ArgumentError);
}
