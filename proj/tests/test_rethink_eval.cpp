#include <doctest.h>

#include <fstream>
#include <random>

#include <json.hpp>

#include "kgr4/error.hpp"
#include "kgr4/rethink_eval.hpp"
#include "support/oracles.hpp"
#include "support/temp_dir.hpp"

using namespace kgr4;

namespace {

std::vector<Sentence> sentences(std::initializer_list<const char*> texts) {
  std::vector<Sentence> out;
  for (const char* t : texts) out.push_back(analyze(t));
  return out;
}

}  // namespace

TEST_CASE("select_best breaks ties by lambda then index") {
  const std::vector<double> lambdas{0.5, 0.1, 0.9, 0.1};
  CHECK(select_best(std::vector<double>{0.2, 0.8, 0.3, 0.1}, lambdas) == 1);
  CHECK(select_best(std::vector<double>{0.7, 0.7, 0.7, 0.7}, lambdas) == 1);
  CHECK(select_best(std::vector<double>{0.7, 0.1, 0.7, 0.1}, lambdas) == 0);
  CHECK_THROWS_AS(select_best(std::vector<double>{}, std::vector<double>{}), Error);
  CHECK_THROWS_AS(select_best(std::vector<double>{1.0}, lambdas), Error);
}

TEST_CASE("rethink picks the argmax and ignores monotone rescaling") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto x = ConceptSet::parse("dog,run");
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng() % 6;
    std::vector<Candidate> cands;
    std::map<std::string, double> score_of;
    for (std::size_t i = 0; i < n; ++i) {
      const std::string text = "candidate " + std::to_string(i);
      cands.push_back({analyze(text), 0.1 * static_cast<double>(i)});
      score_of[analyze(text).text] = u(rng);
    }
    RelevanceFn f = [&](const ConceptSet&, const Sentence& s) { return score_of.at(s.text); };
    const auto pick = rethink_select(x, cands, f);
    double best = -1.0;
    for (const auto& [k, v] : score_of) best = std::max(best, v);
    CHECK(pick.score == best);
    CHECK(pick.sentence == cands[pick.index].sentence);
    CHECK(pick.lambda_source == cands[pick.index].lambda);
    RelevanceFn g = [&](const ConceptSet& q, const Sentence& s) { return std::exp(3.0 * f(q, s)) - 7.0; };
    CHECK(rethink_select(x, cands, g).index == pick.index);
  }
}

TEST_CASE("coverage counts lemma matches") {
  const auto x = ConceptSet::parse("dog,frisbee,catch,throw");
  CHECK(coverage(x, analyze("The dog caught the frisbee.")) == doctest::Approx(75.0));
  CHECK(coverage(x, analyze("Dogs catch frisbees that men throw.")) == doctest::Approx(100.0));
  CHECK(coverage(x, analyze("A cat sleeps.")) == 0.0);
  CHECK(coverage(x, Sentence{}) == 0.0);
}

TEST_CASE("repeated n-grams") {
  const auto s = analyze("A man washes his hands in a sink a sink.");
  CHECK(has_repeated_ngram(s.words(), 2));  // "a sink"
  CHECK_FALSE(has_repeated_ngram(s.words(), 3));
  CHECK(has_repeated_ngram(s.words(), 1));
  CHECK_FALSE(has_repeated_ngram(analyze("A dog runs.").words(), 1));
  CHECK(rep_ngram(sentences({"a b a b", "a b c", "x y x y x y"}), 2) == 2);
  CHECK(rep_ngram(sentences({"a b a b", "a b c", "x y x y x y"}), 4) == 1);
  CHECK_THROWS(has_repeated_ngram({"a"}, 0));
}

TEST_CASE("unknown words are case-folded and skip punctuation") {
  const std::set<std::string> known{"bearded", "man", "in", "white", "shirt", "a"};
  CHECK(unk_words(sentences({"Bearded man in white shirt.", "Bearded manin white shirt.", "A man!"}), known) == 1);
  CHECK(unk_words(sentences({"Zzz", "yyy qqq"}), known) == 2);
}

TEST_CASE("BLEU-4 on simple cases") {
  const auto refs = sentences({"the cat is on the mat"});
  CHECK(bleu4({refs[0]}, {refs}) == doctest::Approx(1.0));
  CHECK(bleu4(sentences({"the the the the"}), {refs}) == 0.0);
  // Shorter hypothesis: brevity penalty exp(1 - 6/5) on perfect precisions.
  const auto hyp = sentences({"the cat is on the"});
  CHECK(bleu4(hyp, {refs}) == doctest::Approx(std::exp(1.0 - 6.0 / 5.0)));
  CHECK_THROWS_AS(bleu4(hyp, {}), Error);
}

TEST_CASE("BLEU-4 agrees with an independent implementation") {
  std::mt19937_64 rng(7);
  const std::vector<std::string> words{"a", "dog", "runs", "in", "the", "park", "cat", "sits", "on", "mat"};
  std::uniform_int_distribution<std::size_t> w(0, words.size() - 1), len(3, 12), nref(1, 4);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Sentence> hyps;
    std::vector<std::vector<Sentence>> refs;
    std::vector<std::vector<std::string>> hyp_words;
    std::vector<std::vector<std::vector<std::string>>> ref_words;
    const std::size_t n = 1 + rng() % 8;
    auto random_sentence = [&] {
      std::string t;
      const auto l = len(rng);
      for (std::size_t i = 0; i < l; ++i) t += (i ? " " : "") + words[w(rng)];
      return analyze(t);
    };
    for (std::size_t i = 0; i < n; ++i) {
      hyps.push_back(random_sentence());
      hyp_words.push_back(hyps.back().words());
      refs.emplace_back();
      ref_words.emplace_back();
      const auto k = nref(rng);
      for (std::size_t j = 0; j < k; ++j) {
        refs.back().push_back(random_sentence());
        ref_words.back().push_back(refs.back().back().words());
      }
    }
    CHECK(bleu4(hyps, refs) == doctest::Approx(kgr4::testing::reference_bleu4(hyp_words, ref_words)).epsilon(1e-12));
  }
}

TEST_CASE("difficulty buckets follow the connection count") {
  for (int c = 0; c <= 10; ++c) {
    const auto b = bucket_for_connections(c);
    CHECK(b == (c <= 2 ? Difficulty::Hard : c <= 5 ? Difficulty::Normal : Difficulty::Easy));
  }
  CHECK_THROWS_AS(bucket_for_connections(11), Error);
  CHECK_THROWS_AS(bucket_for_connections(-1), Error);

  ConceptGraph g;
  g.connect("dog", "frisbee");
  g.connect("frisbee", "dog");
  g.connect("dog", "catch");
  g.connect("catch", "frisbee");
  CHECK(g.size() == 3);
  const auto x = ConceptSet::parse("dog,frisbee,catch,park,man");
  CHECK(count_connections(x, g) == 3);
  CHECK(difficulty_bucket(x, g) == Difficulty::Normal);
  CHECK_THROWS_AS(difficulty_bucket(ConceptSet::parse("dog,frisbee"), g), Error);

  kgr4::testing::TempDir dir;
  g.save(dir / "graph.tsv");
  CHECK(ConceptGraph::load(dir / "graph.tsv").pairs() == g.pairs());
  std::ofstream(dir / "bad.tsv") << "dog\tcat\nonlyone\n";
  CHECK_THROWS_AS(ConceptGraph::load(dir / "bad.tsv"), ParseError);
}

TEST_CASE("evaluation report aggregates overall and per bucket") {
  ConceptGraph g;
  for (const char* a : {"dog", "frisbee", "catch", "park"}) {
    for (const char* b : {"dog", "frisbee", "catch", "park"}) g.connect(a, b);
  }
  std::vector<EvalItem> items{
      {ConceptSet::parse("dog,frisbee,catch,park,man"), analyze("The dog catches a frisbee in the park."),
       sentences({"A man watches the dog catch a frisbee in the park."})},
      {ConceptSet::parse("cat,mat,sit"), analyze("The cat sits on the mat mat mat."), sentences({"A cat sits on a mat."})}};
  const std::set<std::string> known{"the", "dog", "catches", "a", "frisbee", "in", "park", "cat", "sits", "on"};
  auto report = evaluate(items, known, &g);
  CHECK(report.overall.count == 2);
  CHECK(report.overall.coverage == doctest::Approx((80.0 + 100.0) / 2));
  CHECK(report.overall.rep_ngram.at(2) == 1);
  CHECK(report.overall.unk_words == 1);
  REQUIRE(report.per_bucket.count("easy") == 1);
  CHECK(report.per_bucket.at("easy").count == 1);

  kgr4::testing::TempDir dir;
  std::ofstream(dir / "ext.json") << R"({"SPICE": 0.25, "CIDEr": 1.5})";
  attach_external_scores(report, dir / "ext.json");
  const auto j = nlohmann::json::parse(report.to_json());
  CHECK(j["overall"]["count"] == 2);
  CHECK(report.overall.external.at("SPICE") == 0.25);
  CHECK(report.to_csv().rfind("bucket,metric,value\n", 0) == 0);
  CHECK(report.to_text().find("overall") != std::string::npos);
}
