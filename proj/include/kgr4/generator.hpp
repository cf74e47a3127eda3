#pragma once

#include <span>
#include <string>
#include <vector>

#include "kgr4/corpus.hpp"
#include "kgr4/nn/trainer.hpp"
#include "kgr4/seq2seq.hpp"

namespace kgr4 {

/// Concept set plus three prototype slots (sentinels allowed).
struct GeneratorInput {
  ConceptSet concepts;
  PrototypeSlots prototypes;

  /// Compares concepts and prototype tokens.
  friend bool operator==(const GeneratorInput& a, const GeneratorInput& b);
};

/// "[CONCEPTS] x1 .. xN [PROTO] p1 [PROTO] p2 [PROTO] p3" as string tokens.
/// A sentinel prototype contributes no tokens after its marker.
std::vector<std::string> serialize_input(const GeneratorInput& input);
GeneratorInput deserialize_input(std::span<const std::string> tokens);

/// Encoder ids for `input`. Segment 0 holds the concepts, segments 1..3 the
/// prototypes, each truncated to an equal share of the remaining length.
SourceSeq encode_input(const Vocab& vocab, const GeneratorInput& input, int max_src_len);
/// Target ids followed by <eos>.
std::vector<int> encode_target(const Vocab& vocab, const Sentence& target);

/// Shared generator/refiner vocabulary over the external corpus, the
/// training targets and the training concepts.
Vocab build_vocab(const Corpus& ext, const std::vector<ConceptPair>& train);

/// Teacher-forced token-sum NLL of `target`. Throws on an empty target.
double nll_loss(const Seq2SeqModel& m, const GeneratorInput& input, const Sentence& target,
                nn::Gradients* grads = nullptr, double weight = 1.0);

/// `input` with prototype slot `slot` replaced by `target`.
GeneratorInput make_copy(const GeneratorInput& input, const Sentence& target, std::size_t slot);
/// Uniform draw over the three prototype slots.
std::size_t draw_copy_slot(Rng& rng);

/// (1 - lam) * L_edit + lam * L_copy. The copy slot is always drawn from
/// `rng`; a term whose weight is zero is not evaluated, so the endpoints equal
/// the single losses exactly.
double retrospective_loss(const Seq2SeqModel& m, const ConceptSet& x, const PrototypeSlots& protos,
                          const Sentence& y, double lam, Rng& rng, nn::Gradients* grads = nullptr);

struct FitConfig {
  long steps = 1500;
  int batch_size = 16;
  int eval_every = 100;
  int patience = 3;
  double lr = 1e-3;
  double holdout_fraction = 0.05;
  std::size_t max_holdout = 200;  // cap on held-out instances per evaluation
};

/// Minimizes the pretraining NLL over PRETRAIN instances.
nn::TrainStats pretrain(Seq2SeqModel& m, const std::vector<TrainingInstance>& data,
                        const FitConfig& config, Rng& rng);

/// Minimizes the retrospective loss over D_ft. The copy slot is re-drawn every
/// time an instance is visited.
nn::TrainStats finetune(Seq2SeqModel& m, const std::vector<TrainingInstance>& data, double lam,
                        const FitConfig& config, Rng& rng);

struct DecodeConfig {
  int beam_size = 4;
  int max_len = 32;
};

struct Generation {
  Sentence sentence;
  bool degenerate = false;  // the model produced no tokens
};

/// Beam-decodes a sentence (lowercased surface forms).
Generation generate(const Seq2SeqModel& m, const GeneratorInput& input, const DecodeConfig& decode = {});

/// Turns decoded ids back into an analyzed sentence.
Sentence decode_sentence(const Vocab& vocab, std::span<const int> ids);

}  // namespace kgr4
