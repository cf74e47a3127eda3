#include "kgr4/generator.hpp"

#include <algorithm>
#include <set>

#include <spdlog/spdlog.h>

#include "kgr4/error.hpp"

namespace kgr4 {

namespace {

const std::string kConceptsMarker = "[CONCEPTS]";
const std::string kProtoMarker = "[PROTO]";

Sentence sentence_from_tokens(const std::vector<std::string>& tokens) {
  if (tokens.empty()) return sentinel_sentence();
  return analyze(detokenize(tokens));
}

nn::TrainConfig train_config(const FitConfig& c) {
  nn::TrainConfig t;
  t.steps = c.steps;
  t.batch_size = c.batch_size;
  t.eval_every = c.eval_every;
  t.patience = c.patience;
  t.adam.lr = c.lr;
  return t;
}

// Splits `data` into training and held-out index lists for a fit.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> fit_split(std::size_t n,
                                                                         const FitConfig& c,
                                                                         Rng& rng) {
  auto [train, hold] = nn::split_indices(n, c.holdout_fraction, rng);
  if (hold.size() > c.max_holdout) hold.resize(c.max_holdout);
  if (train.empty()) train = hold;
  return {train, hold};
}

}  // namespace

bool operator==(const GeneratorInput& a, const GeneratorInput& b) {
  if (!(a.concepts == b.concepts)) return false;
  for (std::size_t i = 0; i < a.prototypes.size(); ++i) {
    if (a.prototypes[i].tokens != b.prototypes[i].tokens) return false;
  }
  return true;
}

std::vector<std::string> serialize_input(const GeneratorInput& input) {
  std::vector<std::string> out{kConceptsMarker};
  out.insert(out.end(), input.concepts.begin(), input.concepts.end());
  for (const auto& p : input.prototypes) {
    out.push_back(kProtoMarker);
    out.insert(out.end(), p.tokens.begin(), p.tokens.end());
  }
  return out;
}

GeneratorInput deserialize_input(std::span<const std::string> tokens) {
  if (tokens.empty() || tokens.front() != kConceptsMarker) {
    throw ParseError("generator input must start with " + kConceptsMarker, 0);
  }
  std::vector<std::vector<std::string>> segments(1);
  for (std::size_t i = 1; i < tokens.size(); ++i) {
    if (tokens[i] == kProtoMarker) {
      segments.emplace_back();
    } else if (tokens[i] == kConceptsMarker) {
      throw ParseError("repeated " + kConceptsMarker + " marker", 0);
    } else {
      segments.back().push_back(tokens[i]);
    }
  }
  if (segments.size() != 4) throw ParseError("generator input needs exactly 3 prototypes", 0);
  GeneratorInput out;
  out.concepts = ConceptSet::from(segments[0]);
  for (std::size_t s = 0; s < 3; ++s) out.prototypes[s] = sentence_from_tokens(segments[s + 1]);
  return out;
}

SourceSeq encode_input(const Vocab& vocab, const GeneratorInput& input, int max_src_len) {
  std::vector<int> concepts{Vocab::kConcepts};
  for (const auto& c : input.concepts) {
    auto ids = vocab.encode_word(c);
    concepts.insert(concepts.end(), ids.begin(), ids.end());
  }
  const int budget = max_src_len - static_cast<int>(concepts.size()) - 3;
  if (budget < 0) throw Error("concepts exceed the source length");
  const auto cap = static_cast<std::size_t>(budget / 3);

  SourceSeq src;
  src.append_segment(0, concepts);
  for (std::size_t s = 0; s < input.prototypes.size(); ++s) {
    const Sentence& p = input.prototypes[s];
    const auto words = p.words();
    std::vector<int> ids{Vocab::kProto}, flags{0};
    std::set<std::string> covered;
    for (std::size_t w = 0; w < words.size(); ++w) {
      const bool match = w < p.lemmas.size() && input.concepts.contains(p.lemmas[w]);
      if (match) covered.insert(p.lemmas[w]);
      for (int id : vocab.encode_word(words[w])) {
        ids.push_back(id);
        flags.push_back(match ? 1 : 0);
      }
    }
    if (ids.size() > cap + 1) {
      ids.resize(cap + 1);
      flags.resize(cap + 1);
    }
    src.append_segment(static_cast<int>(s) + 1, ids, flags, static_cast<int>(input.concepts.size() - covered.size()));
  }
  return src;
}

std::vector<int> encode_target(const Vocab& vocab, const Sentence& target) {
  std::vector<int> ids = vocab.encode(target.words());
  ids.push_back(Vocab::kEos);
  return ids;
}

Vocab build_vocab(const Corpus& ext, const std::vector<ConceptPair>& train) {
  std::set<std::string> words = ext.vocab();
  for (const auto& p : train) {
    for (const auto& w : p.target.words()) words.insert(w);
    words.insert(p.concepts.begin(), p.concepts.end());
  }
  return Vocab::build(words);
}

double nll_loss(const Seq2SeqModel& m, const GeneratorInput& input, const Sentence& target,
                nn::Gradients* grads, double weight) {
  if (target.empty()) throw Error("empty target sentence");
  return m.nll(encode_input(m.vocab(), input, m.config().max_src_len),
               encode_target(m.vocab(), target), grads, weight);
}

GeneratorInput make_copy(const GeneratorInput& input, const Sentence& target, std::size_t slot) {
  if (slot >= input.prototypes.size()) throw Error("copy slot out of range");
  GeneratorInput out = input;
  out.prototypes[slot] = target;
  return out;
}

std::size_t draw_copy_slot(Rng& rng) {
  return std::uniform_int_distribution<std::size_t>(0, 2)(rng);
}

double retrospective_loss(const Seq2SeqModel& m, const ConceptSet& x, const PrototypeSlots& protos,
                          const Sentence& y, double lam, Rng& rng, nn::Gradients* grads) {
  if (!(lam >= 0.0 && lam <= 1.0)) throw Error("lambda must lie in [0, 1]");
  const std::size_t slot = draw_copy_slot(rng);
  const GeneratorInput edit{x, protos};
  if (lam == 0.0) return nll_loss(m, edit, y, grads);
  const GeneratorInput copy = make_copy(edit, y, slot);
  if (lam == 1.0) return nll_loss(m, copy, y, grads);
  const double l_edit = nll_loss(m, edit, y, grads, 1.0 - lam);
  const double l_copy = nll_loss(m, copy, y, grads, lam);
  return (1.0 - lam) * l_edit + lam * l_copy;
}

nn::TrainStats pretrain(Seq2SeqModel& m, const std::vector<TrainingInstance>& data,
                        const FitConfig& config, Rng& rng) {
  if (data.empty()) throw Error("empty pretraining dataset");
  for (const auto& inst : data) {
    if (inst.kind != InstanceKind::Pretrain) throw Error("pretraining expects PRETRAIN instances");
  }
  auto [train, hold] = fit_split(data.size(), config, rng);
  auto loss = [&](std::size_t i, nn::Gradients& g, Rng&) {
    const auto& inst = data[train[i]];
    return nll_loss(m, {inst.concepts, inst.prototypes}, inst.target, &g);
  };
  nn::HoldoutLoss holdout;
  if (!hold.empty()) {
    holdout = [&] {
      double total = 0.0;
      for (auto i : hold) total += nll_loss(m, {data[i].concepts, data[i].prototypes}, data[i].target);
      return total / static_cast<double>(hold.size());
    };
  }
  auto stats = nn::train(m.params(), train.size(), loss, holdout, train_config(config), rng);
  spdlog::debug("pretrain: {} steps, best held-out {:.4f} at step {}", stats.steps_run,
                stats.best_holdout, stats.best_step);
  return stats;
}

nn::TrainStats finetune(Seq2SeqModel& m, const std::vector<TrainingInstance>& data, double lam,
                        const FitConfig& config, Rng& rng) {
  if (data.empty()) throw Error("empty finetuning dataset");
  if (!(lam >= 0.0 && lam <= 1.0)) throw Error("lambda must lie in [0, 1]");
  auto [train, hold] = fit_split(data.size(), config, rng);
  auto loss = [&](std::size_t i, nn::Gradients& g, Rng& r) {
    const auto& inst = data[train[i]];
    return retrospective_loss(m, inst.concepts, inst.prototypes, inst.target, lam, r, &g);
  };
  nn::HoldoutLoss holdout;
  if (!hold.empty()) {
    holdout = [&] {
      Rng fixed(0x5eed);  // same copy slots at every evaluation
      double total = 0.0;
      for (auto i : hold) {
        total += retrospective_loss(m, data[i].concepts, data[i].prototypes, data[i].target, lam, fixed);
      }
      return total / static_cast<double>(hold.size());
    };
  }
  auto stats = nn::train(m.params(), train.size(), loss, holdout, train_config(config), rng);
  spdlog::debug("finetune(lambda={}): {} steps, best held-out {:.4f} at step {}", lam,
                stats.steps_run, stats.best_holdout, stats.best_step);
  return stats;
}

Sentence decode_sentence(const Vocab& vocab, std::span<const int> ids) {
  const auto words = vocab.decode(ids);
  if (words.empty()) return Sentence{};
  return analyze(detokenize(words));
}

Generation generate(const Seq2SeqModel& m, const GeneratorInput& input, const DecodeConfig& decode) {
  if (decode.beam_size < 1) throw Error("beam size must be at least 1");
  const SourceSeq src = encode_input(m.vocab(), input, m.config().max_src_len);
  const auto ids = m.beam_search(src, decode.beam_size, decode.max_len);
  Generation g;
  g.sentence = decode_sentence(m.vocab(), ids);
  if (g.sentence.empty()) {
    g.degenerate = true;
    spdlog::warn("generator produced an empty sentence for concepts {}", input.concepts.join());
  }
  return g;
}

}  // namespace kgr4
