#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "kgr4/corpus.hpp"
#include "kgr4/rethink_eval.hpp"

namespace kgr4 {

/// Parameters of the bundled toy world: people doing things to objects at
/// places, optionally with a tool.
struct ToyWorldConfig {
  std::size_t corpus_size = 4000;
  std::size_t train_sets = 600;
  std::size_t test_sets = 100;
  double held_out_fraction = 0.2;  // share of (verb, object, place) triples kept for testing
  double graph_edge_prob = 0.6;
  std::uint64_t seed = 13;
};

struct ToyTestItem {
  ConceptSet concepts;
  std::vector<Sentence> references;
};

struct ToyWorld {
  Corpus corpus;                    // external corpus
  std::vector<ConceptPair> train;   // one pair per reference
  std::vector<ToyTestItem> test;    // concept sets over held-out triples
  ConceptGraph graph;
};

/// Deterministic for a fixed config. Neither the corpus nor the training
/// pairs mention a held-out triple, so test concept sets are unseen
/// combinations.
ToyWorld make_toy_world(const ToyWorldConfig& config);

/// `n` fresh sentences from the training part of the world, for held-out
/// measurements that must not overlap a built corpus.
std::vector<Sentence> sample_toy_sentences(const ToyWorldConfig& config, std::size_t n,
                                           std::uint64_t seed);

/// Writes corpus.txt, train.jsonl, test.jsonl and graph.tsv under `dir`.
void write_toy_world(const std::filesystem::path& dir, const ToyWorld& world);

}  // namespace kgr4
