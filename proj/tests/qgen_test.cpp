#include <gtest/gtest.h>

#include "minprompt/qgen.hpp"
#include "test_util.hpp"

namespace mp = minprompt;

namespace {

const std::string kLakers = "The Lakers moved to Los Angeles in 1960.";

mp::EntityMention la() { return mp::make_mention(kLakers, 20, 31, "Los Angeles", "GPE"); }

mp::Sentence sentence(mp::SentenceId id, const std::string& text, const std::string& doc = "d") {
  mp::Sentence s;
  s.id = id;
  s.doc_id = doc;
  s.text = text;
  s.span = {0, text.size()};
  return s;
}

}  // namespace

TEST(Fragments, Split) {
  auto [a, b] = mp::split_fragments(kLakers, la());
  EXPECT_EQ(a, "The Lakers moved to");
  EXPECT_EQ(b, "in 1960");
  auto lead = mp::split_fragments(kLakers, mp::make_mention(kLakers, 0, 3, "The", "MISC"));
  EXPECT_EQ(lead.first, "");
  auto tail = mp::split_fragments(kLakers, mp::make_mention(kLakers, 35, 39, "1960", "DATE"));
  EXPECT_EQ(tail.second, "");
  mp::EntityMention bad = la();
  bad.span = {20, 99};
  EXPECT_THROW(mp::split_fragments(kLakers, bad), mp::ArgumentError);
}

TEST(Cloze, MasksTheAnswerSpan) {
  auto qa = mp::generate_cloze(kLakers, la());
  EXPECT_EQ(qa.question, "The Lakers moved to [MASK] in 1960.");
  EXPECT_EQ(qa.answer, "Los Angeles");
  EXPECT_EQ(qa.style, mp::QuestionStyle::cloze);
  EXPECT_EQ(mp::qa_violation(qa, kLakers), "");
}

TEST(Cloze, WholeSentenceAnswer) {
  std::string s = "Boston";
  EXPECT_EQ(mp::generate_cloze(s, mp::make_mention(s, 0, 6, "Boston", "GPE")).question, "[MASK]");
}

TEST(Cloze, OnlyChosenOccurrenceMasked) {
  std::string s = "Boston beat Boston again.";
  auto qa = mp::generate_cloze(s, mp::make_mention(s, 12, 18, "Boston", "GPE"));
  EXPECT_EQ(qa.question, "Boston beat [MASK] again.");
}

TEST(WhBigram, Sampling) {
  mp::WhPriors p;
  p.set(mp::EntityType::GPE, {{"where did", 1.0}});
  EXPECT_EQ(mp::sample_wh_bigram(p, mp::EntityType::GPE, 1), "where did");
  EXPECT_EQ(mp::sample_wh_bigram(p, mp::EntityType::LOC, 1), "where");
  EXPECT_EQ(mp::sample_wh_bigram(p, mp::EntityType::MONEY, 1), "how many");
  mp::WhPriors mixed;
  mixed.set(mp::EntityType::PERSON, {{"who was", 0.5}, {"who is", 0.25}, {"who did", 0.25}});
  std::map<std::string, int> counts;
  for (std::uint64_t seed = 0; seed < 4000; ++seed) {
    auto a = mp::sample_wh_bigram(mixed, mp::EntityType::PERSON, seed);
    EXPECT_EQ(a, mp::sample_wh_bigram(mixed, mp::EntityType::PERSON, seed));
    ++counts[a];
  }
  EXPECT_NEAR(counts["who was"] / 4000.0, 0.5, 0.05);
  EXPECT_NEAR(counts["who is"] / 4000.0, 0.25, 0.05);
}

TEST(WhPriors, Validation) {
  testutil::TempDir tmp;
  auto good = testutil::write_file(tmp / "good.tsv", "# priors\nPERSON\twho was\t0.7\nPERSON\twho is\t0.3\n");
  auto p = mp::WhPriors::load(good);
  ASSERT_NE(p.find(mp::EntityType::PERSON), nullptr);
  EXPECT_EQ(p.find(mp::EntityType::PERSON)->size(), 2u);
  auto bad_sum = testutil::write_file(tmp / "sum.tsv", "PERSON\twho was\t0.7\n");
  EXPECT_THROW(mp::WhPriors::load(bad_sum), mp::ValidationError);
  auto negative = testutil::write_file(tmp / "neg.tsv", "PERSON\twho was\t1.5\nPERSON\twho\t-0.5\n");
  EXPECT_THROW(mp::WhPriors::load(negative), mp::ValidationError);
  auto bad_type = testutil::write_file(tmp / "type.tsv", "HUMAN\twho was\t1\n");
  EXPECT_THROW(mp::WhPriors::load(bad_type), mp::ParseError);
  EXPECT_NO_THROW(mp::WhPriors::defaults().validate());
}

TEST(Wh, Template) {
  auto q = mp::generate_wh(kLakers, la(), "where");
  EXPECT_EQ(q.question, "where in 1960 The Lakers moved to?");
  EXPECT_EQ(mp::qa_violation(q, kLakers), "");
  std::string no_b = "The Lakers moved to Los Angeles.";
  EXPECT_EQ(mp::generate_wh(no_b, mp::make_mention(no_b, 20, 31, "Los Angeles", "GPE"), "where").question,
            "where The Lakers moved to?");
  std::string only = "Los Angeles.";
  EXPECT_EQ(mp::generate_wh(only, mp::make_mention(only, 0, 11, "Los Angeles", "GPE"), "where did").question,
            "where did?");
  EXPECT_EQ(mp::generate_wh(kLakers, la(), "where", {}, 0, mp::WhOrder::wh_a_b).question,
            "where The Lakers moved to in 1960?");
  std::string spaced = "The  Lakers   moved to Los Angeles \t in  1960 .";
  EXPECT_EQ(mp::generate_wh(spaced, mp::make_mention(spaced, 23, 34, "Los Angeles", "GPE"), "where").question,
            "where in 1960 The Lakers moved to?");
}

TEST(Wh, QuestionFromPriors) {
  EXPECT_EQ(mp::generate_wh_question(kLakers, la(), mp::WhPriors::defaults(), 9),
            "where did in 1960 The Lakers moved to?");
}

TEST(Prompt, TemplateStrings) {
  mp::QaPair qa;
  qa.question = "where in 1960 The Lakers moved to?";
  qa.answer = "Los Angeles";
  qa.context = kLakers;
  auto s = mp::format_prompt(qa);
  ASSERT_TRUE(s);
  EXPECT_EQ(s->input, "Question: where in 1960 The Lakers moved to? Answer: <mask> Context: The Lakers moved to <mask> "
                      "in 1960.");
  EXPECT_EQ(s->target,
            "Question: where in 1960 The Lakers moved to? Answer: Los Angeles Context: The Lakers moved to Los "
            "Angeles in 1960.");
}

TEST(Prompt, EmptyContext) {
  mp::QaPair qa;
  qa.question = "where?";
  qa.answer = "Boston";
  auto s = mp::format_prompt(qa);
  ASSERT_TRUE(s);
  EXPECT_EQ(s->input, "Question: where? Answer: <mask> Context: ");
  EXPECT_EQ(s->target, "Question: where? Answer: Boston Context: ");
}

TEST(Prompt, CustomMaskToken) {
  mp::QaPair qa;
  qa.question = "q?";
  qa.answer = "Boston";
  qa.context = "Go to Boston now.";
  auto s = mp::format_prompt(qa, "[MASK]");
  ASSERT_TRUE(s);
  EXPECT_EQ(s->input, "Question: q? Answer: [MASK] Context: Go to [MASK] now.");
}

TEST(Prompt, AnswerMissingFromContextIsSkipped) {
  mp::QaPair qa;
  qa.question = "q?";
  qa.answer = "Boston";
  qa.context = "Bostonian pride.";
  std::string reason;
  EXPECT_FALSE(mp::format_prompt(qa, "<mask>", &reason));
  EXPECT_NE(reason.find("Boston"), std::string::npos);
}

TEST(Prompt, OffsetSelectsOccurrence) {
  mp::QaPair qa;
  qa.question = "q?";
  qa.answer = "Boston";
  qa.context = "Boston beat Boston.";
  qa.context_offset = 12;
  EXPECT_EQ(mp::format_prompt(qa)->input, "Question: q? Answer: <mask> Context: Boston beat <mask>.");
  qa.context_offset = 3;  // stale offset falls back to the first occurrence
  EXPECT_EQ(mp::format_prompt(qa)->input, "Question: q? Answer: <mask> Context: <mask> beat Boston.");
}

TEST(Prompt, JsonKeyOrder) {
  mp::QaPair qa = mp::generate_cloze(kLakers, la(), {kLakers, 20}, 4);
  auto s = mp::format_prompt(qa);
  s->provenance = {"ds", "doc", 4, mp::Origin::corpus};
  s->lambda_weight = 0.5;
  auto j = mp::to_json(*s);
  std::vector<std::string> keys;
  for (const auto& [k, v] : j.items()) keys.push_back(k);
  EXPECT_EQ(keys, (std::vector<std::string>{"input", "target", "question", "answer", "context", "style", "dataset_id",
                                            "doc_id", "sentence_id", "lambda"}));
}

class Assemble : public ::testing::Test {
 protected:
  mp::Gazetteer gaz;
  std::vector<mp::Sentence> sents;
  mp::MentionTable mentions;

  void add(const std::string& text, const std::string& doc = "d") {
    sents.push_back(sentence(static_cast<mp::SentenceId>(sents.size()), text, doc));
  }

  std::vector<mp::GenerationSource> sources() {
    mentions.clear();
    for (const auto& s : sents) mentions.push_back(mp::recognize_builtin(s.text, gaz));
    std::vector<mp::GenerationSource> out;
    for (std::size_t i = 0; i < sents.size(); ++i)
      out.push_back({&sents[i], &mentions[i], sents[i].text, "ds", 0, {}});
    return out;
  }
};

TEST_F(Assemble, OneSamplePerMention) {
  gaz.add("Lakers", mp::EntityType::ORG);
  gaz.add("Los Angeles", mp::EntityType::GPE);
  add(kLakers);
  auto src = sources();
  ASSERT_EQ(mentions[0].size(), 3u);
  mp::GenerationConfig cfg;
  auto out = mp::assemble_dataset(src, mp::WhPriors::defaults(), cfg);
  ASSERT_EQ(out.size(), 3u);
  EXPECT_EQ(out[0].qa.answer, "Lakers");
  EXPECT_EQ(out[1].qa.answer, "Los Angeles");
  EXPECT_EQ(out[2].qa.answer, "1960");
  EXPECT_EQ(out[1].qa.question, "where did in 1960 The Lakers moved to?");
  cfg.styles = mp::StyleSelection::both;
  EXPECT_EQ(mp::assemble_dataset(src, mp::WhPriors::defaults(), cfg).size(), 6u);
}

TEST_F(Assemble, NothingSelectedIsEmpty) {
  EXPECT_TRUE(mp::assemble_dataset({}, mp::WhPriors::defaults(), {}).empty());
}

TEST_F(Assemble, DuplicatesCollapse) {
  add("Boston won in 1960.", "a");
  add("Boston won in 1960.", "b");
  auto src = sources();
  mp::GenerationReport report;
  auto out = mp::assemble_dataset(src, mp::WhPriors::defaults(), {}, &report);
  EXPECT_EQ(out.size(), mentions[0].size());
  EXPECT_EQ(report.duplicates, mentions[1].size());
}

TEST_F(Assemble, ParallelMatchesSerial) {
  gaz.add("Lakers", mp::EntityType::ORG);
  for (int i = 0; i < 40; ++i) add("The Lakers won " + std::to_string(1950 + i) + " games in Ohio.");
  auto src = sources();
  mp::WhPriors p;
  p.set(mp::EntityType::ORG, {{"what is", 0.5}, {"what was", 0.5}});
  p.set(mp::EntityType::DATE, {{"when did", 0.3}, {"when was", 0.7}});
  mp::GenerationConfig cfg;
  cfg.seed = 99;
  cfg.styles = mp::StyleSelection::both;
  auto serial = mp::assemble_dataset(src, p, cfg);
  cfg.workers = 4;
  auto parallel = mp::assemble_dataset(src, p, cfg);
  ASSERT_EQ(serial.size(), parallel.size());
  for (std::size_t i = 0; i < serial.size(); ++i) EXPECT_EQ(mp::to_json(serial[i]), mp::to_json(parallel[i]));
}
