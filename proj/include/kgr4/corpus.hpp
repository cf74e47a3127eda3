#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "kgr4/text.hpp"

namespace kgr4 {

using Rng = std::mt19937_64;

/// Order-insensitive set of 1..5 lemmatized, distinct concepts.
class ConceptSet {
 public:
  static constexpr std::size_t kMaxSize = 5;

  enum class Provenance { Given, Pseudo };

  ConceptSet() = default;

  /// Lemmatizes, deduplicates and sorts. Throws kgr4::Error when the result
  /// is empty or holds more than kMaxSize concepts.
  static ConceptSet from(const std::vector<std::string>& raw,
                         Provenance provenance = Provenance::Given);

  /// Parses a comma-separated list ("hand,sink,wash").
  static ConceptSet parse(std::string_view csv);

  const std::vector<std::string>& items() const { return items_; }
  std::size_t size() const { return items_.size(); }
  bool empty() const { return items_.empty(); }
  bool contains(std::string_view lemma) const;
  Provenance provenance() const { return provenance_; }
  std::string join(std::string_view sep = ",") const;

  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }

  friend bool operator==(const ConceptSet& a, const ConceptSet& b) { return a.items_ == b.items_; }
  friend bool operator<(const ConceptSet& a, const ConceptSet& b) { return a.items_ < b.items_; }

 private:
  std::vector<std::string> items_;
  Provenance provenance_ = Provenance::Given;
};

using PrototypeSlots = std::array<Sentence, 3>;

enum class InstanceKind { Pretrain, Augmented, Edit, Copy };

std::string_view to_string(InstanceKind kind);
InstanceKind parse_instance_kind(std::string_view s);

struct TrainingInstance {
  ConceptSet concepts;
  PrototypeSlots prototypes;
  Sentence target;
  InstanceKind kind = InstanceKind::Edit;
};

/// A (concept set, reference sentence) pair from a CommonGen-style dataset.
struct ConceptPair {
  ConceptSet concepts;
  Sentence target;
};

class Corpus {
 public:
  /// Appends a sentence, assigning it the next id.
  const Sentence& add(Sentence s);

  const std::vector<Sentence>& sentences() const { return sentences_; }
  const Sentence& at(std::size_t id) const { return sentences_.at(id); }
  std::size_t size() const { return sentences_.size(); }
  bool empty() const { return sentences_.empty(); }

  /// Lowercased surface word forms.
  const std::set<std::string>& vocab() const { return vocab_; }

  /// Hash over (key, text) of every sentence in order.
  std::string content_hash() const;

 private:
  std::vector<Sentence> sentences_;
  std::set<std::string> vocab_;
};

enum class CorpusFormat { Jsonl, PlainLines, CommonGenPairs };

CorpusFormat parse_corpus_format(std::string_view name);

/// Reads a corpus file. Blank lines are skipped; every other line becomes one
/// sentence with ids assigned in file order. For commongen-pairs the corpus
/// holds the target sentences.
Corpus ingest(const std::filesystem::path& path, CorpusFormat format);

std::vector<ConceptPair> ingest_pairs(const std::filesystem::path& path);
void write_pairs(const std::filesystem::path& path, const std::vector<ConceptPair>& pairs);
/// Writes the JSONL corpus format; sentences without a key get their id.
void write_corpus(const std::filesystem::path& path, const Corpus& corpus);

/// Samples min(k, available) distinct VERB/NOUN/PROPN lemmas uniformly
/// without replacement. Throws kgr4::Error("no content words") when the
/// sentence has none.
ConceptSet extract_pseudo_concepts(const Sentence& s, std::size_t k, Rng& rng);

/// Supplies the three prototype slots for a (concepts, target) instance.
using PrototypeProvider =
    std::function<PrototypeSlots(const ConceptSet& concepts, const Sentence& target)>;

/// One PRETRAIN instance per usable corpus sentence.
std::vector<TrainingInstance> build_pretrain_set(const Corpus& ext, std::size_t k, Rng& rng,
                                                 const PrototypeProvider& prototypes);

/// The training pairs as EDIT instances followed by one AUGMENTED instance
/// per pair whose third prototype has content words. Augmented instances take
/// their prototypes from `augmented_prototypes`.
std::vector<TrainingInstance> build_retrospective_augmentation(
    const std::vector<ConceptPair>& train, const std::vector<PrototypeSlots>& prototypes_of,
    std::size_t k, Rng& rng, const PrototypeProvider& augmented_prototypes);

/// EDIT instances only (no augmentation).
std::vector<TrainingInstance> as_edit_instances(const std::vector<ConceptPair>& train,
                                                const std::vector<PrototypeSlots>& prototypes_of);

std::string serialize_instance(const TrainingInstance& inst);
TrainingInstance deserialize_instance(std::string_view line, std::size_t line_no = 0);
void write_dataset(const std::filesystem::path& path, const std::vector<TrainingInstance>& data);
std::vector<TrainingInstance> read_dataset(const std::filesystem::path& path);

}  // namespace kgr4
