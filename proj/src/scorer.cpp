#include "kgr4/scorer.hpp"

#include <algorithm>
#include <fstream>
#include <json.hpp>
#include <set>

#include "kgr4/error.hpp"
#include "kgr4/hash.hpp"
#include "kgr4/nn/tape.hpp"

namespace kgr4 {

using nlohmann::json;
using nn::Matrix;
using nn::Tape;
using nn::Var;

namespace {

const std::vector<std::string> kSpecials = {"<pad>", "<unk>", "[SEP]", "[DELIM]"};

json config_json(const ScorerConfig& c) {
  return json{{"embed_dim", c.embed_dim},   {"hidden_dim", c.hidden_dim},
              {"max_len", c.max_len},       {"seed", c.seed},
              {"steps", c.steps},           {"batch_size", c.batch_size},
              {"eval_every", c.eval_every}, {"patience", c.patience},
              {"lr", c.lr},                 {"holdout_fraction", c.holdout_fraction}};
}

ScorerConfig config_from_json(const json& j) {
  ScorerConfig c;
  c.embed_dim = j.at("embed_dim");
  c.hidden_dim = j.at("hidden_dim");
  c.max_len = j.at("max_len");
  c.seed = j.at("seed");
  c.steps = j.at("steps");
  c.batch_size = j.at("batch_size");
  c.eval_every = j.at("eval_every");
  c.patience = j.at("patience");
  c.lr = j.at("lr");
  c.holdout_fraction = j.at("holdout_fraction");
  return c;
}

}  // namespace

Scorer::Scorer(ScorerConfig config, std::vector<std::string> vocab)
    : config_(config), vocab_(kSpecials) {
  for (auto& w : vocab) {
    if (std::find(kSpecials.begin(), kSpecials.end(), w) == kSpecials.end()) {
      vocab_.push_back(std::move(w));
    }
  }
  for (std::size_t i = 0; i < vocab_.size(); ++i) index_.emplace(vocab_[i], static_cast<int>(i));
  std::mt19937_64 rng(config_.seed);
  const auto v = static_cast<Eigen::Index>(vocab_.size());
  const int d = config_.embed_dim;
  emb_ = params_.add("embed", nn::init::normal(v, d, 1.0 / std::sqrt(double(d)), rng));
  w1_ = params_.add("ff.w", nn::init::xavier(4 * d, config_.hidden_dim, rng));
  b1_ = params_.add("ff.b", nn::init::zeros(1, config_.hidden_dim));
  w2_ = params_.add("head.w", nn::init::zeros(config_.hidden_dim, 1));
  b2_ = params_.add("head.b", nn::init::zeros(1, 1));
  skip_ = params_.add("skip.w", nn::init::zeros(4 * d, 1));
}

int Scorer::lookup(const std::string& w) const {
  auto it = index_.find(w);
  return it == index_.end() ? kUnk : it->second;
}

std::vector<int> Scorer::serialize(const ConceptSet& x, const Sentence& s) const {
  if (x.empty()) throw Error("scorer: empty concept set");
  std::vector<int> concept_ids;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (i) concept_ids.push_back(kDelim);
    concept_ids.push_back(lookup(x.items()[i]));
  }
  std::vector<int> sentence_ids;
  for (std::size_t i = 0; i < s.lemmas.size(); ++i) {
    if (!is_punctuation(s.tokens[i])) sentence_ids.push_back(lookup(s.lemmas[i]));
  }
  const auto max_len = static_cast<std::size_t>(config_.max_len);
  const std::size_t room = max_len > concept_ids.size() + 1 ? max_len - concept_ids.size() - 1 : 0;
  if (sentence_ids.size() > room) sentence_ids.resize(room);
  if (concept_ids.size() + 1 > max_len) concept_ids.resize(max_len - 1);
  std::vector<int> ids = std::move(concept_ids);
  ids.push_back(kSep);
  ids.insert(ids.end(), sentence_ids.begin(), sentence_ids.end());
  return ids;
}

double Scorer::forward(const std::vector<int>& ids, nn::Gradients* grads, double label) const {
  Tape t(params_, grads);
  std::vector<int> concepts;
  std::vector<int> sentence;
  bool after_sep = false;
  for (int id : ids) {
    if (id == kSep) {
      after_sep = true;
    } else if (id != kDelim) {
      (after_sep ? sentence : concepts).push_back(id);
    }
  }
  const int d = config_.embed_dim;
  Var emb = t.param(emb_);
  Var u = concepts.empty() ? t.constant(Matrix::Zero(1, d)) : t.mean_rows(t.gather_rows(emb, concepts));
  Var v = sentence.empty() ? t.constant(Matrix::Zero(1, d)) : t.mean_rows(t.gather_rows(emb, sentence));
  Var diff = t.sub(u, v);
  const Var parts[] = {u, v, t.mul(u, v), t.mul(diff, diff)};
  Var features = t.concat_cols(parts);
  Var h = t.relu(t.add_row(t.matmul(features, t.param(w1_)), t.param(b1_)));
  // The linear skip keeps scores graded where every hidden unit is off.
  Var logit = t.add(t.add(t.matmul(h, t.param(w2_)), t.matmul(features, t.param(skip_))), t.param(b2_));
  if (label < 0.0) return t.scalar(logit);
  Var loss = t.bce_with_logits(logit, label);
  if (grads) t.backward(loss);
  return t.scalar(loss);
}

double Scorer::logit(const ConceptSet& x, const Sentence& s) const {
  return forward(serialize(x, s), nullptr, -1.0);
}

double Scorer::score(const ConceptSet& x, const Sentence& s) const {
  return 1.0 / (1.0 + std::exp(-logit(x, s)));
}

double Scorer::loss(const ScorerExample& ex, nn::Gradients* grads) const {
  return forward(serialize(ex.concepts, ex.sentence), grads, ex.positive ? 1.0 : 0.0);
}

std::string Scorer::vocab_hash() const {
  Sha256 h;
  for (const auto& w : vocab_) h.update(w).update("\n");
  return h.hex();
}

void Scorer::save(const std::filesystem::path& stem, const std::string& train_data_hash) const {
  params_.save(stem.string() + ".params");
  json meta{{"kind", "scorer"},
            {"config", config_json(config_)},
            {"vocab", vocab_},
            {"vocab_hash", vocab_hash()},
            {"train_data_hash", train_data_hash},
            {"params_hash", params_.hash()}};
  std::ofstream out(stem.string() + ".json");
  if (!out) throw IoError("cannot write " + stem.string() + ".json");
  out << meta.dump(2) << '\n';
}

Scorer Scorer::load(const std::filesystem::path& stem) {
  std::ifstream in(stem.string() + ".json");
  if (!in) throw IoError("cannot read " + stem.string() + ".json");
  json meta = json::parse(in);
  if (meta.value("kind", "") != "scorer") throw Error("not a scorer checkpoint");
  Scorer s(config_from_json(meta.at("config")), meta.at("vocab").get<std::vector<std::string>>());
  if (s.vocab_hash() != meta.at("vocab_hash").get<std::string>()) {
    throw Error("scorer checkpoint: vocabulary hash mismatch");
  }
  s.params_.load(stem.string() + ".params");
  return s;
}

std::vector<ScorerExample> build_scorer_dataset(const std::vector<ConceptPair>& train,
                                                const Corpus& ext, std::size_t neg_ratio, Rng& rng) {
  if (neg_ratio < 1) throw Error("neg_ratio must be at least 1");
  if (ext.size() < neg_ratio) throw Error("external corpus smaller than neg_ratio");
  std::vector<ScorerExample> out;
  out.reserve(train.size() * (neg_ratio + 1));
  std::uniform_int_distribution<std::size_t> pick(0, ext.size() - 1);
  for (const auto& pair : train) {
    out.push_back({pair.concepts, pair.target, true});
    const auto positive = pair.target.words();
    std::size_t drawn = 0;
    std::size_t attempts = 0;
    while (drawn < neg_ratio) {
      if (++attempts > 100 * neg_ratio + 1000) {
        throw Error("cannot draw negatives distinct from the positive");
      }
      const Sentence& s = ext.at(pick(rng));
      if (s.words() == positive) continue;
      out.push_back({pair.concepts, s, false});
      ++drawn;
    }
  }
  return out;
}

Scorer train_scorer(const std::vector<ScorerExample>& data, const ScorerConfig& config, Rng& rng,
                    nn::TrainStats* stats) {
  const bool has_pos = std::any_of(data.begin(), data.end(), [](const auto& e) { return e.positive; });
  const bool has_neg = std::any_of(data.begin(), data.end(), [](const auto& e) { return !e.positive; });
  if (!has_pos || !has_neg) throw Error("scorer training data must contain both labels");

  std::set<std::string> words;
  for (const auto& ex : data) {
    for (const auto& c : ex.concepts) words.insert(c);
    for (std::size_t i = 0; i < ex.sentence.lemmas.size(); ++i) {
      if (!is_punctuation(ex.sentence.tokens[i])) words.insert(ex.sentence.lemmas[i]);
    }
  }
  Scorer scorer(config, std::vector<std::string>(words.begin(), words.end()));

  auto [train_idx, hold_idx] = nn::split_indices(data.size(), config.holdout_fraction, rng);
  std::vector<std::vector<int>> encoded(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    encoded[i] = scorer.serialize(data[i].concepts, data[i].sentence);
  }
  nn::ExampleLoss loss = [&](std::size_t i, nn::Gradients& g, std::mt19937_64&) {
    const std::size_t idx = train_idx[i];
    return scorer.forward(encoded[idx], &g, data[idx].positive ? 1.0 : 0.0);
  };
  nn::HoldoutLoss holdout;
  if (!hold_idx.empty()) {
    holdout = [&] {
      double total = 0.0;
      for (auto idx : hold_idx) total += scorer.forward(encoded[idx], nullptr, data[idx].positive ? 1.0 : 0.0);
      return total / static_cast<double>(hold_idx.size());
    };
  }
  nn::TrainConfig tc;
  tc.steps = config.steps;
  tc.batch_size = config.batch_size;
  tc.eval_every = config.eval_every;
  tc.patience = config.patience;
  tc.adam.lr = config.lr;
  auto st = nn::train(scorer.params_, train_idx.size(), loss, holdout, tc, rng);
  if (stats) *stats = std::move(st);
  return scorer;
}

double scorer_accuracy(const Scorer& scorer, const std::vector<ScorerExample>& data) {
  if (data.empty()) return 0.0;
  std::size_t correct = 0;
  for (const auto& ex : data) {
    correct += (scorer.score(ex.concepts, ex.sentence) > 0.5) == ex.positive;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

std::string hash_examples(const std::vector<ScorerExample>& data) {
  Sha256 h;
  for (const auto& ex : data) {
    h.update(ex.concepts.join()).update("\t").update(ex.sentence.text).update(ex.positive ? "\t1\n" : "\t0\n");
  }
  return h.hex();
}

}  // namespace kgr4
