#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "kgr4/corpus.hpp"
#include "kgr4/retrieval.hpp"
#include "kgr4/scorer.hpp"

namespace kgr4 {

/// A refined candidate and the mixing weight of the generator behind it.
struct Candidate {
  Sentence sentence;
  double lambda = 0.0;
};

struct ScoredCandidate {
  Sentence sentence;
  double lambda_source = 0.0;
  double score = 0.0;
  std::size_t index = 0;  // position in the candidate list
};

/// Index of the highest score; ties go to the lower lambda, then the earlier
/// index. Throws on empty or mismatched input.
std::size_t select_best(std::span<const double> scores, std::span<const double> lambdas);

/// Scores every candidate and returns the one chosen by select_best.
ScoredCandidate rethink_select(const ConceptSet& x, const std::vector<Candidate>& candidates,
                               const RelevanceFn& score);
ScoredCandidate rethink_select(const ConceptSet& x, const std::vector<Candidate>& candidates,
                               const Scorer& scorer);

/// Percentage of concepts found among the sentence lemmas.
double coverage(const ConceptSet& x, const Sentence& s);

bool has_repeated_ngram(const std::vector<std::string>& tokens, std::size_t n);
/// Number of sentences in which some n-gram occurs at least twice.
std::size_t rep_ngram(const std::vector<Sentence>& sentences, std::size_t n);

/// Number of sentences with a word (case-folded, punctuation ignored) missing
/// from `known_vocab`.
std::size_t unk_words(const std::vector<Sentence>& sentences, const std::set<std::string>& known_vocab);

/// Corpus-level BLEU-4 over lowercased tokens: uniform weights, clipped counts
/// against the most generous reference, no smoothing, brevity penalty from the
/// closest reference length (shorter wins ties).
double bleu4(const std::vector<Sentence>& predictions,
             const std::vector<std::vector<Sentence>>& references);

/// Unordered one-hop connections between lemmas.
class ConceptGraph {
 public:
  void connect(const std::string& a, const std::string& b);
  bool connected(const std::string& a, const std::string& b) const;
  std::size_t size() const { return pairs_.size(); }
  const std::set<std::pair<std::string, std::string>>& pairs() const { return pairs_; }

  /// One "lemma_a<TAB>lemma_b" pair per line; blank lines are skipped.
  static ConceptGraph load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

 private:
  std::set<std::pair<std::string, std::string>> pairs_;
};

enum class Difficulty { Easy, Normal, Hard };

std::string_view to_string(Difficulty d);

/// [0,2] -> hard, [3,5] -> normal, [6,10] -> easy.
Difficulty bucket_for_connections(int connections);
int count_connections(const ConceptSet& x, const ConceptGraph& g);
/// Requires exactly five concepts.
Difficulty difficulty_bucket(const ConceptSet& x, const ConceptGraph& g);

struct EvalItem {
  ConceptSet concepts;
  Sentence prediction;
  std::vector<Sentence> references;
};

struct MetricSet {
  std::size_t count = 0;
  double coverage = 0.0;
  double bleu4 = 0.0;
  std::map<std::size_t, std::size_t> rep_ngram;  // n -> sentences
  std::size_t unk_words = 0;
  std::map<std::string, double> external;  // e.g. SPICE, CIDEr from outside tools
};

struct EvalReport {
  MetricSet overall;
  std::map<std::string, MetricSet> per_bucket;  // only 5-concept items are bucketed

  std::string to_json() const;
  std::string to_text() const;
  /// bucket,metric,value rows for plotting.
  std::string to_csv() const;
};

MetricSet compute_metrics(const std::vector<EvalItem>& items, const std::set<std::string>& known_vocab,
                          const std::vector<std::size_t>& rep_ns = {2, 3, 4});

EvalReport evaluate(const std::vector<EvalItem>& items, const std::set<std::string>& known_vocab,
                    const ConceptGraph* graph = nullptr,
                    const std::vector<std::size_t>& rep_ns = {2, 3, 4});

/// Merges externally computed overall scores from a JSON object of
/// name -> number into the report.
void attach_external_scores(EvalReport& report, const std::filesystem::path& path);

}  // namespace kgr4
