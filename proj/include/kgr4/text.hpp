#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

namespace kgr4 {

enum class PosTag : std::uint8_t { Verb, Noun, PropNoun, Other };

std::string_view to_string(PosTag tag);

inline bool is_content_tag(PosTag tag) {
  return tag == PosTag::Verb || tag == PosTag::Noun || tag == PosTag::PropNoun;
}

inline constexpr std::size_t kSentinelId = std::numeric_limits<std::size_t>::max();

/// A tokenized, lemmatized and tagged sentence.
///
/// `tokens`, `lemmas` and `tags` are index-aligned. `id` is the position of the
/// sentence in its corpus; `key` carries the external identifier when the
/// source format has one. The reserved sentinel (see `sentinel_sentence()`)
/// is the only sentence allowed to be empty.
struct Sentence {
  std::size_t id = 0;
  std::string key;
  std::string text;
  std::vector<std::string> tokens;
  std::vector<std::string> lemmas;
  std::vector<PosTag> tags;

  bool is_sentinel() const { return id == kSentinelId; }
  bool empty() const { return tokens.empty(); }

  /// Lowercased surface tokens, the form the neural models consume.
  std::vector<std::string> words() const;

  friend bool operator==(const Sentence&, const Sentence&) = default;
};

/// Splits on whitespace and peels leading/trailing punctuation into separate
/// tokens. Internal apostrophes and hyphens stay inside the word.
std::vector<std::string> tokenize(std::string_view text);

/// Joins tokens with single spaces, attaching closing punctuation to the
/// preceding token.
std::string detokenize(const std::vector<std::string>& tokens);

bool is_punctuation(std::string_view token);

std::string to_lower(std::string_view s);

/// Rule-based English lemmatizer: irregular table, lexicon-validated suffix
/// stripping, then conservative unvalidated rules iterated to a fixpoint.
/// Idempotent: lemmatize(lemmatize(w)) == lemmatize(w).
std::string lemmatize(std::string_view word);

/// Coarse tag from the bundled lexicon. Unknown words fall back to OTHER,
/// except capitalized words that do not open the sentence (PROPN).
PosTag tag_word(std::string_view surface, bool sentence_initial);

/// Tokenizes, lemmatizes and tags `text`.
Sentence analyze(std::string_view text, std::size_t id = 0, std::string key = {});

/// Reserved empty sentence used to pad prototype slots.
Sentence sentinel_sentence();

namespace lexicon {

/// Base-form lookup. Returns nullptr when the word is not a known base form.
const PosTag* find_base(std::string_view lemma);

/// Irregular inflection lookup (e.g. "men" -> "man"). Empty when absent.
std::string_view find_irregular(std::string_view word);

}  // namespace lexicon

}  // namespace kgr4
