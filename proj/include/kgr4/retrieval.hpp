#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "kgr4/corpus.hpp"

namespace kgr4 {

/// Lemma -> sorted, duplicate-free ids of the sentences containing it.
struct InvertedIndex {
  static constexpr int kVersion = 1;

  std::map<std::string, std::vector<std::uint32_t>> postings;
  std::vector<std::uint32_t> lengths;  // token count per sentence id
  std::string corpus_hash;

  std::size_t doc_freq(const std::string& lemma) const;
  std::size_t num_sentences() const { return lengths.size(); }
  /// Hash of the full index contents; unchanged by queries.
  std::string structural_hash() const;
};

InvertedIndex build_index(const Corpus& corpus);

void save_index(const std::filesystem::path& path, const InvertedIndex& index);
/// Throws kgr4::Error when the stored corpus hash does not match `corpus`.
InvertedIndex load_index(const std::filesystem::path& path, const Corpus& corpus);

/// Candidates that must never be returned for a query: explicit ids, and any
/// sentence whose lowercased tokens equal `text`'s.
struct Exclusion {
  std::vector<std::size_t> ids;
  std::optional<std::vector<std::string>> words;

  static Exclusion none() { return {}; }
  static Exclusion self(const Sentence& target);
};

/// Up to `pool` sentence ids ranked by (matched concepts desc, length asc,
/// id asc). Sentences matching no concept are never returned.
std::vector<std::size_t> rough_search_ids(const InvertedIndex& index, const ConceptSet& x,
                                          std::size_t pool, const Exclusion& exclude = {});

std::vector<Sentence> rough_search(const InvertedIndex& index, const Corpus& corpus,
                                   const ConceptSet& x, std::size_t pool,
                                   const Exclusion& exclude = {});

struct PrototypeSet {
  PrototypeSlots prototypes;
  std::array<double, 3> scores{};
};

/// f(x, s) relevance used to re-rank candidates; higher is better.
using RelevanceFn = std::function<double(const ConceptSet&, const Sentence&)>;

/// Rough search for `pool` candidates, re-scored by `relevance`, top 3 kept in
/// descending score order (ties keep the rough order). Without a relevance
/// function (the pretraining path) the rough order is kept and the score is
/// the matched-concept fraction. Missing slots hold the sentinel with score 0.
PrototypeSet retrieve_prototypes(const InvertedIndex& index, const Corpus& corpus,
                                 const ConceptSet& x, const RelevanceFn* relevance,
                                 std::size_t pool, const Exclusion& exclude = {});

}  // namespace kgr4
