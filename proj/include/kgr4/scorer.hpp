#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "kgr4/corpus.hpp"
#include "kgr4/nn/parameters.hpp"
#include "kgr4/nn/trainer.hpp"

namespace kgr4 {

struct ScorerConfig {
  int embed_dim = 32;
  int hidden_dim = 64;
  int max_len = 48;
  std::uint64_t seed = 1;

  long steps = 600;
  int batch_size = 32;
  int eval_every = 50;
  int patience = 3;
  double lr = 3e-3;
  double holdout_fraction = 0.1;
};

struct ScorerExample {
  ConceptSet concepts;
  Sentence sentence;
  bool positive = false;
};

/// Relevance classifier f(x, s) over (concept set, sentence) pairs.
///
/// Input is the sorted concepts joined by a delimiter token, a separator
/// token, then the sentence lemmas. Both sides are mean-pooled embeddings; the
/// pooled vectors and their elementwise product and squared difference feed a
/// ReLU layer; the logit adds a linear term over the same features. Both
/// heads start at zero, so an untrained scorer returns exactly 0.5.
class Scorer {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kSep = 2;
  static constexpr int kDelim = 3;

  Scorer(ScorerConfig config, std::vector<std::string> vocab);

  /// Probability in (0, 1). Throws kgr4::Error on an empty concept set.
  double score(const ConceptSet& x, const Sentence& s) const;
  double logit(const ConceptSet& x, const Sentence& s) const;
  /// Binary cross-entropy of one example; adds gradients when `grads` is set.
  double loss(const ScorerExample& ex, nn::Gradients* grads) const;

  /// Token ids: concepts (delimited), separator, sentence; the sentence side
  /// is truncated first when the total exceeds max_len.
  std::vector<int> serialize(const ConceptSet& x, const Sentence& s) const;

  const ScorerConfig& config() const { return config_; }
  const std::vector<std::string>& vocab() const { return vocab_; }
  std::string vocab_hash() const;
  nn::ParameterSet& params() { return params_; }
  const nn::ParameterSet& params() const { return params_; }

  /// Writes `<stem>.params` and `<stem>.json`.
  void save(const std::filesystem::path& stem, const std::string& train_data_hash = {}) const;
  static Scorer load(const std::filesystem::path& stem);

 private:
  friend Scorer train_scorer(const std::vector<ScorerExample>&, const ScorerConfig&, Rng&,
                             nn::TrainStats*);

  double forward(const std::vector<int>& ids, nn::Gradients* grads, double label) const;
  int lookup(const std::string& w) const;

  ScorerConfig config_;
  std::vector<std::string> vocab_;
  std::unordered_map<std::string, int> index_;
  nn::ParameterSet params_;
  std::size_t emb_, w1_, b1_, w2_, b2_, skip_;
};

/// One positive per pair plus `neg_ratio` negatives drawn uniformly from
/// `ext`, never textually equal to the positive.
std::vector<ScorerExample> build_scorer_dataset(const std::vector<ConceptPair>& train,
                                                const Corpus& ext, std::size_t neg_ratio, Rng& rng);

/// Builds the vocabulary from `data`, then minimizes BCE with early stopping
/// on a held-out split. Throws when `data` lacks either label.
Scorer train_scorer(const std::vector<ScorerExample>& data, const ScorerConfig& config, Rng& rng,
                    nn::TrainStats* stats = nullptr);

double scorer_accuracy(const Scorer& scorer, const std::vector<ScorerExample>& data);

std::string hash_examples(const std::vector<ScorerExample>& data);

}  // namespace kgr4
