#include <doctest.h>

#include <map>
#include <random>

#include "kgr4/error.hpp"
#include "kgr4/refiner.hpp"
#include "support/micro.hpp"
#include "support/grad_check.hpp"
#include "support/temp_dir.hpp"

using namespace kgr4;

namespace {

bool is_subsequence(const std::string& small, const std::string& big) {
  std::size_t j = 0;
  for (char c : big) {
    if (j < small.size() && small[j] == c) ++j;
  }
  return j == small.size();
}

Corpus sample_corpus(std::size_t n, std::uint64_t seed) {
  const char* subjects[] = {"A man", "The woman", "Two dogs", "A child", "The old farmer"};
  const char* verbs[] = {"washes his hands", "throws a red ball", "eats an apple", "reads the newspaper",
                         "rides a bike"};
  const char* places[] = {"in the sink.", "in the park.", "at the table.", "on the street.", "near the river."};
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick(0, 4);
  Corpus c;
  for (std::size_t i = 0; i < n; ++i) {
    c.add(analyze(std::string(subjects[pick(rng)]) + " " + verbs[pick(rng)] + " " + places[pick(rng)], i));
  }
  return c;
}

}  // namespace

TEST_CASE("repetition and deletion helpers reproduce typical errors") {
  const auto s = analyze("A man washes his hands in a sink");
  CHECK(detokenize(repeat_span(s.tokens, 6, 2)) == "A man washes his hands in a sink a sink");
  const std::string text = "Bearded man in white shirt";
  CHECK(delete_positions(text, {11}) == "Bearded manin white shirt");
  CHECK(delete_positions(text, {0, 1}) == "arded man in white shirt");
  CHECK_THROWS(repeat_span(s.tokens, 7, 2));
}

TEST_CASE("repetition duplicates a punctuation-free span in place") {
  const auto s = analyze("The old farmer, tired, washes his hands in the sink.");
  PerturbationSpec spec;
  Rng rng(8);
  for (int i = 0; i < 300; ++i) {
    const auto p = perturb(s, ErrorKind::Repetition, spec, rng);
    REQUIRE(p.kind == ErrorKind::Repetition);
    CHECK(p.span_len >= 1);
    CHECK(p.span_len <= 4);
    for (std::size_t j = p.span_start; j < p.span_start + p.span_len; ++j) CHECK_FALSE(is_punctuation(s.tokens[j]));
    CHECK(p.corrupted.tokens == repeat_span(s.tokens, p.span_start, p.span_len));
    CHECK(p.corrupted.tokens.size() == s.tokens.size() + p.span_len);
    CHECK(p.clean == s);
  }
}

TEST_CASE("misspelling only deletes characters") {
  const auto s = analyze("Bearded man in a white shirt plays the guitar on the street.");
  PerturbationSpec spec;
  Rng rng(4);
  std::size_t chars = 0, spaces = 0;
  for (int i = 0; i < 500; ++i) {
    const auto p = perturb(s, ErrorKind::Misspelling, spec, rng);
    CHECK(p.chars_deleted + p.spaces_deleted >= 1);
    CHECK(p.corrupted.text.size() == s.text.size() - p.chars_deleted - p.spaces_deleted);
    CHECK(is_subsequence(p.corrupted.text, s.text));
    chars += p.chars_deleted;
    spaces += p.spaces_deleted;
  }
  CHECK(chars > 0);
  CHECK(spaces > 0);
}

TEST_CASE("zero rates without the guarantee leave the sentence unchanged") {
  const auto s = analyze("A dog runs in the park.");
  PerturbationSpec spec;
  spec.char_removal_rate = 0.0;
  spec.space_removal_rate = 0.0;
  spec.guarantee_deletion = false;
  Rng rng(1);
  const auto p = perturb(s, ErrorKind::Misspelling, spec, rng);
  CHECK(p.corrupted.text == s.text);
  CHECK(p.chars_deleted == 0);
  CHECK(perturb(s, ErrorKind::Identity, spec, rng).corrupted == s);
}

TEST_CASE("invalid perturbation settings are rejected") {
  PerturbationSpec spec;
  spec.instance_rate = 1.5;
  CHECK_THROWS_AS(spec.validate(), Error);
  spec = {};
  spec.rep_span_min = 3;
  spec.rep_span_max = 2;
  CHECK_THROWS_AS(spec.validate(), Error);
  PerturbationSpec ok;
  Rng rng(1);
  CHECK_THROWS_AS(perturb(analyze("."), ErrorKind::Repetition, ok, rng), Error);
}

TEST_CASE("refiner dataset covers every sentence and is reproducible") {
  const auto c = sample_corpus(2000, 3);
  PerturbationSpec spec;
  spec.instance_rate = 0.3;
  const auto pairs = build_refiner_dataset(c, spec);
  REQUIRE(pairs.size() == c.size());
  std::map<ErrorKind, std::size_t> kinds;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& p = pairs[i];
    CHECK(p.clean == c.at(i));
    ++kinds[p.kind];
    if (p.kind == ErrorKind::Identity) CHECK(p.corrupted.text == p.clean.text);
    if (p.kind == ErrorKind::Misspelling) {
      CHECK(p.chars_deleted + p.spaces_deleted >= 1);
      CHECK(is_subsequence(p.corrupted.text, p.clean.text));
    }
    if (p.kind == ErrorKind::Repetition) {
      CHECK(p.corrupted.tokens == repeat_span(p.clean.tokens, p.span_start, p.span_len));
    }
  }
  CHECK(kinds[ErrorKind::Misspelling] > 200);
  CHECK(kinds[ErrorKind::Repetition] > 200);

  const auto again = build_refiner_dataset(c, spec);
  for (std::size_t i = 0; i < pairs.size(); ++i) CHECK(again[i].corrupted.text == pairs[i].corrupted.text);

  kgr4::testing::TempDir dir;
  write_perturbed(dir / "pairs.jsonl", pairs);
  const auto back = read_perturbed(dir / "pairs.jsonl");
  REQUIRE(back.size() == pairs.size());
  for (std::size_t i = 0; i < pairs.size(); i += 97) {
    CHECK(back[i].kind == pairs[i].kind);
    CHECK(back[i].corrupted.text == pairs[i].corrupted.text);
    CHECK(back[i].clean.text == pairs[i].clean.text);
  }
}

TEST_CASE("refiner loss gradients match finite differences") {
  auto cfg = kgr4::testing::micro_config();
  cfg.max_segments = 1;
  cfg.max_src_len = 16;
  cfg.max_tgt_len = 10;
  Seq2SeqModel m(cfg, Vocab::build({"a", "dog", "runs", "in", "the", "park", "."}));
  const auto corrupted = analyze("A dgo runs runs in thepark.");
  const auto clean = analyze("A dog runs in the park.");
  const auto check = kgr4::testing::check_gradients(
      m.params(), [&] { return refiner_loss(m, corrupted, clean); },
      [&](nn::Gradients& g) { refiner_loss(m, corrupted, clean, &g); });
  CHECK(check.relative_error < 1e-4);
}

TEST_CASE("refiner source is one segment and spells unknown words") {
  const auto v = Vocab::build({"a", "dog", "runs", "."});
  const auto src = encode_refiner_source(v, analyze("A dgo runs."), 32);
  for (int s : src.segments) CHECK(s == 0);
  CHECK(src.size() > 4);  // "dgo" is spelled out in pieces
  CHECK(v.decode(src.ids) == std::vector<std::string>{"a", "dgo", "runs", "."});
}
