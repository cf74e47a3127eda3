#include "kgr4/text.hpp"

#include <algorithm>
#include <array>
#include <cctype>

namespace kgr4 {

std::string_view to_string(PosTag tag) {
  switch (tag) {
    case PosTag::Verb: return "VERB";
    case PosTag::Noun: return "NOUN";
    case PosTag::PropNoun: return "PROPN";
    case PosTag::Other: return "OTHER";
  }
  return "OTHER";
}

namespace {

constexpr std::string_view kPunct = ".,!?;:\"()[]{}";
constexpr std::string_view kClosing = ".,!?;:)]}";

bool is_punct_char(char c) { return kPunct.find(c) != std::string_view::npos; }

bool is_vowel(char c) {
  return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u';
}

bool has_vowel(std::string_view s) {
  return std::any_of(s.begin(), s.end(), [](char c) { return is_vowel(c) || c == 'y'; });
}

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

bool known(std::string_view w) { return lexicon::find_base(w) != nullptr; }

// Candidates for an inflected form, validated against the lexicon.
std::string validated_stem(const std::string& w) {
  std::vector<std::string> cands;
  auto strip = [&](std::string_view suffix) { return w.substr(0, w.size() - suffix.size()); };
  auto add_verbal = [&](std::string stem) {
    cands.push_back(stem);
    cands.push_back(stem + "e");
    if (stem.size() >= 2 && stem[stem.size() - 1] == stem[stem.size() - 2]) {
      cands.push_back(stem.substr(0, stem.size() - 1));
    }
  };
  if (ends_with(w, "ies")) cands.push_back(strip("ies") + "y");
  if (ends_with(w, "ves")) {
    cands.push_back(strip("ves") + "f");
    cands.push_back(strip("ves") + "fe");
  }
  if (ends_with(w, "es")) cands.push_back(strip("es"));
  if (ends_with(w, "s") && !ends_with(w, "ss")) cands.push_back(strip("s"));
  if (ends_with(w, "ied")) cands.push_back(strip("ied") + "y");
  if (ends_with(w, "ing") && w.size() > 4) add_verbal(strip("ing"));
  if (ends_with(w, "ed") && w.size() > 3) add_verbal(strip("ed"));
  for (const auto& c : cands) {
    if (c.size() >= 2 && known(c)) return c;
  }
  return {};
}

// One step of the unvalidated fallback rules; returns the input when no rule
// applies. Every rule strictly shortens the word.
std::string fallback_step(const std::string& w) {
  if (w.size() > 4 && ends_with(w, "ies")) return w.substr(0, w.size() - 3) + "y";
  if (ends_with(w, "sses")) return w.substr(0, w.size() - 2);
  for (std::string_view s : {"ches", "shes", "xes", "zes"}) {
    if (w.size() > s.size() + 1 && ends_with(w, s)) return w.substr(0, w.size() - 2);
  }
  if (w.size() > 3 && ends_with(w, "s") && !ends_with(w, "ss") && !ends_with(w, "us") &&
      !ends_with(w, "is")) {
    return w.substr(0, w.size() - 1);
  }
  auto verbal = [&](std::size_t cut) -> std::string {
    std::string stem = w.substr(0, w.size() - cut);
    if (stem.size() < 3 || !has_vowel(stem)) return w;
    const char last = stem.back();
    if (stem.size() >= 4 && last == stem[stem.size() - 2] && !is_vowel(last) && last != 'l' &&
        last != 's' && last != 'z') {
      stem.pop_back();
    }
    return stem;
  };
  if (ends_with(w, "ing")) return verbal(3);
  if (ends_with(w, "ed") && !ends_with(w, "eed")) return verbal(2);
  return w;
}

std::string lemma_step(const std::string& w) {
  if (auto irr = lexicon::find_irregular(w); !irr.empty()) return std::string(irr);
  if (known(w)) return w;
  if (auto v = validated_stem(w); !v.empty()) return v;
  return fallback_step(w);
}

bool all_alpha(std::string_view w) {
  return !w.empty() && std::all_of(w.begin(), w.end(), [](unsigned char c) {
    return std::isalpha(c) != 0;
  });
}

}  // namespace

bool is_punctuation(std::string_view token) {
  return !token.empty() &&
         std::all_of(token.begin(), token.end(), [](char c) { return is_punct_char(c); });
}

std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j == i) break;
    std::string_view chunk = text.substr(i, j - i);
    std::size_t lo = 0;
    std::size_t hi = chunk.size();
    while (lo < hi && is_punct_char(chunk[lo])) out.emplace_back(1, chunk[lo++]);
    std::vector<std::string> trailing;
    while (hi > lo && is_punct_char(chunk[hi - 1])) trailing.emplace_back(1, chunk[--hi]);
    if (hi > lo) out.emplace_back(chunk.substr(lo, hi - lo));
    out.insert(out.end(), trailing.rbegin(), trailing.rend());
    i = j;
  }
  return out;
}

std::string detokenize(const std::vector<std::string>& tokens) {
  std::string out;
  for (const auto& t : tokens) {
    const bool attach = t.size() == 1 && kClosing.find(t[0]) != std::string_view::npos;
    if (!out.empty() && !attach) out += ' ';
    out += t;
  }
  return out;
}

std::string lemmatize(std::string_view word) {
  std::string w = to_lower(word);
  if (!all_alpha(w)) return w;
  // Iterate to a fixpoint so the function is idempotent.
  for (int i = 0; i < 16; ++i) {
    std::string next = lemma_step(w);
    if (next == w) break;
    w = std::move(next);
  }
  return w;
}

PosTag tag_word(std::string_view surface, bool sentence_initial) {
  if (is_punctuation(surface)) return PosTag::Other;
  const std::string lower = to_lower(surface);
  if (const PosTag* t = lexicon::find_base(lower)) return *t;
  if (const PosTag* t = lexicon::find_base(lemmatize(lower))) return *t;
  if (!sentence_initial && !surface.empty() &&
      std::isupper(static_cast<unsigned char>(surface.front())) && all_alpha(surface)) {
    return PosTag::PropNoun;
  }
  return PosTag::Other;
}

std::vector<std::string> Sentence::words() const {
  std::vector<std::string> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(to_lower(t));
  return out;
}

Sentence analyze(std::string_view text, std::size_t id, std::string key) {
  Sentence s;
  s.id = id;
  s.key = std::move(key);
  s.text = std::string(text);
  s.tokens = tokenize(text);
  s.lemmas.reserve(s.tokens.size());
  s.tags.reserve(s.tokens.size());
  for (std::size_t i = 0; i < s.tokens.size(); ++i) {
    s.lemmas.push_back(is_punctuation(s.tokens[i]) ? s.tokens[i] : lemmatize(s.tokens[i]));
    s.tags.push_back(tag_word(s.tokens[i], i == 0));
  }
  return s;
}

Sentence sentinel_sentence() {
  Sentence s;
  s.id = kSentinelId;
  return s;
}

}  // namespace kgr4
