#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "kgr4/corpus.hpp"
#include "kgr4/text.hpp"

namespace kgr4::testing {

/// Linear scan over the corpus with the rough-search ranking rule.
inline std::vector<std::size_t> brute_force_rough_search(const Corpus& corpus, const ConceptSet& x,
                                                         std::size_t pool,
                                                         const std::vector<std::size_t>& excluded = {}) {
  std::vector<std::tuple<int, std::size_t, std::size_t>> hits;  // (-matched, length, id)
  for (const auto& s : corpus.sentences()) {
    if (std::find(excluded.begin(), excluded.end(), s.id) != excluded.end()) continue;
    const std::set<std::string> lemmas(s.lemmas.begin(), s.lemmas.end());
    int matched = 0;
    for (const auto& c : x) matched += static_cast<int>(lemmas.count(c));
    if (matched > 0) hits.emplace_back(-matched, s.tokens.size(), s.id);
  }
  std::sort(hits.begin(), hits.end());
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < hits.size() && i < pool; ++i) out.push_back(std::get<2>(hits[i]));
  return out;
}

/// Random corpus over a small inflected vocabulary, so concept sets hit often.
inline Corpus random_corpus(std::mt19937_64& rng, std::size_t max_sentences) {
  static const std::vector<std::string> words{
      "dog",    "dogs",    "cat",   "cats",  "man",    "men",    "run",     "runs",   "running",
      "ran",    "ball",    "balls", "throw", "throws", "threw",  "park",    "parks",  "child",
      "children", "eat",   "eats",  "eating", "apple", "apples", "the",     "a",      "in",
      "on",     "with",    "table", "tables", "wash",  "washes", "washing", "hand",   "hands",
      "sink",   "soap",    "red",   "big",   ".",      ","};
  std::uniform_int_distribution<std::size_t> n_sent(1, max_sentences), len(1, 12),
      pick(0, words.size() - 1);
  Corpus c;
  const std::size_t n = n_sent(rng);
  for (std::size_t i = 0; i < n; ++i) {
    std::string text;
    const std::size_t l = len(rng);
    for (std::size_t j = 0; j < l; ++j) text += (j ? " " : "") + words[pick(rng)];
    if (tokenize(text).empty()) text = "dog";
    c.add(analyze(text, i));
  }
  return c;
}

/// 1..5 concepts drawn from the corpus vocabulary of random_corpus, plus the
/// occasional lemma that never occurs.
inline ConceptSet random_concepts(std::mt19937_64& rng) {
  static const std::vector<std::string> lemmas{"dog", "cat",  "man",  "run",  "ball", "throw", "park",
                                               "child", "eat", "apple", "table", "wash", "hand", "sink",
                                               "soap", "zebra", "violin"};
  std::vector<std::string> pool(lemmas);
  std::shuffle(pool.begin(), pool.end(), rng);
  const std::size_t k = std::uniform_int_distribution<std::size_t>(1, 5)(rng);
  pool.resize(k);
  return ConceptSet::from(pool);
}

/// Corpus BLEU-4 computed directly from the definition: clipped n-gram
/// precisions pooled over the corpus, geometric mean with equal weights,
/// brevity penalty against the reference length closest to each hypothesis.
inline double reference_bleu4(const std::vector<std::vector<std::string>>& hyps,
                              const std::vector<std::vector<std::vector<std::string>>>& refs) {
  double match[4] = {0, 0, 0, 0}, total[4] = {0, 0, 0, 0};
  double hyp_len = 0, ref_len = 0;
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    const auto& h = hyps[i];
    hyp_len += static_cast<double>(h.size());
    std::size_t best = refs[i][0].size();
    for (const auto& r : refs[i]) {
      const auto d = [&](std::size_t len) { return std::abs(static_cast<long>(len) - static_cast<long>(h.size())); };
      if (d(r.size()) < d(best) || (d(r.size()) == d(best) && r.size() < best)) best = r.size();
    }
    ref_len += static_cast<double>(best);
    for (std::size_t n = 1; n <= 4; ++n) {
      std::map<std::vector<std::string>, int> hc;
      for (std::size_t j = 0; j + n <= h.size(); ++j) ++hc[{h.begin() + j, h.begin() + j + n}];
      std::map<std::vector<std::string>, int> max_ref;
      for (const auto& r : refs[i]) {
        std::map<std::vector<std::string>, int> rc;
        for (std::size_t j = 0; j + n <= r.size(); ++j) ++rc[{r.begin() + j, r.begin() + j + n}];
        for (const auto& [g, c] : rc) max_ref[g] = std::max(max_ref[g], c);
      }
      for (const auto& [g, c] : hc) {
        match[n - 1] += std::min(c, max_ref.count(g) ? max_ref[g] : 0);
        total[n - 1] += c;
      }
    }
  }
  double log_sum = 0;
  for (int n = 0; n < 4; ++n) {
    if (match[n] == 0 || total[n] == 0) return 0.0;
    log_sum += std::log(match[n] / total[n]) / 4.0;
  }
  const double bp = hyp_len >= ref_len ? 1.0 : std::exp(1.0 - ref_len / hyp_len);
  return bp * std::exp(log_sum);
}

}  // namespace kgr4::testing
