#include "kgr4/refiner.hpp"

#include <algorithm>
#include <fstream>
#include <json.hpp>

#include <spdlog/spdlog.h>

#include "kgr4/error.hpp"

namespace kgr4 {

using nlohmann::json;

namespace {

// Deletion mask of one sentence, split by position type.
struct Mask {
  std::vector<std::size_t> chars;   // all non-space positions
  std::vector<std::size_t> spaces;  // all space positions
  std::vector<std::size_t> del_chars;
  std::vector<std::size_t> del_spaces;

  std::size_t deleted() const { return del_chars.size() + del_spaces.size(); }
};

Mask positions_of(std::string_view text) {
  Mask m;
  for (std::size_t i = 0; i < text.size(); ++i) (text[i] == ' ' ? m.spaces : m.chars).push_back(i);
  return m;
}

void draw_mask(Mask& m, const PerturbationSpec& spec, Rng& rng) {
  std::bernoulli_distribution del_char(spec.char_removal_rate);
  std::bernoulli_distribution del_space(spec.space_removal_rate);
  m.del_chars.clear();
  m.del_spaces.clear();
  // One draw per position, in text order.
  std::size_t c = 0, s = 0;
  while (c < m.chars.size() || s < m.spaces.size()) {
    const bool next_is_char =
        s == m.spaces.size() || (c < m.chars.size() && m.chars[c] < m.spaces[s]);
    if (next_is_char) {
      if (del_char(rng)) m.del_chars.push_back(m.chars[c]);
      ++c;
    } else {
      if (del_space(rng)) m.del_spaces.push_back(m.spaces[s]);
      ++s;
    }
  }
}

template <typename T>
T pick(const std::vector<T>& v, Rng& rng) {
  return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
}

void force_deletion(Mask& m, const PerturbationSpec& spec, Rng& rng) {
  // Prefer the type with the larger rate; fall back to whatever exists.
  const bool spaces_first = spec.space_removal_rate > spec.char_removal_rate;
  auto& first = spaces_first ? m.spaces : m.chars;
  auto& first_del = spaces_first ? m.del_spaces : m.del_chars;
  auto& second = spaces_first ? m.chars : m.spaces;
  auto& second_del = spaces_first ? m.del_chars : m.del_spaces;
  if (!first.empty()) {
    first_del.push_back(pick(first, rng));
  } else {
    second_del.push_back(pick(second, rng));
  }
}

PerturbedPair misspelled_pair(const Sentence& s, const Mask& m) {
  std::vector<std::size_t> all(m.del_chars);
  all.insert(all.end(), m.del_spaces.begin(), m.del_spaces.end());
  PerturbedPair p;
  p.clean = s;
  p.kind = ErrorKind::Misspelling;
  p.corrupted = analyze(delete_positions(s.text, all), s.id, s.key);
  p.chars_deleted = m.del_chars.size();
  p.spaces_deleted = m.del_spaces.size();
  return p;
}

void check_misspell_pre(const Sentence& s) {
  if (s.text.size() < 2) throw Error("misspelling needs a text of at least 2 characters");
}

// Moves one deletion from `donor` into `recipient`, keeping its type.
bool move_deletion(Mask& donor, Mask& recipient, Rng& rng) {
  auto try_type = [&](std::vector<std::size_t>& from, std::vector<std::size_t>& to,
                      const std::vector<std::size_t>& slots) {
    if (from.empty() || slots.empty()) return false;
    const auto k = std::uniform_int_distribution<std::size_t>(0, from.size() - 1)(rng);
    from.erase(from.begin() + static_cast<long>(k));
    to.push_back(pick(slots, rng));
    return true;
  };
  const bool chars_first = std::bernoulli_distribution(
      double(donor.del_chars.size()) / double(donor.deleted()))(rng);
  if (chars_first) {
    return try_type(donor.del_chars, recipient.del_chars, recipient.chars) ||
           try_type(donor.del_spaces, recipient.del_spaces, recipient.spaces);
  }
  return try_type(donor.del_spaces, recipient.del_spaces, recipient.spaces) ||
         try_type(donor.del_chars, recipient.del_chars, recipient.chars);
}

}  // namespace

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Identity: return "identity";
    case ErrorKind::Repetition: return "repetition";
    case ErrorKind::Misspelling: return "misspelling";
  }
  return "identity";
}

ErrorKind parse_error_kind(std::string_view s) {
  if (s == "identity") return ErrorKind::Identity;
  if (s == "repetition") return ErrorKind::Repetition;
  if (s == "misspelling") return ErrorKind::Misspelling;
  throw Error("unknown error kind '" + std::string(s) + "'");
}

void PerturbationSpec::validate() const {
  for (double r : {instance_rate, misspell_share, char_removal_rate, space_removal_rate}) {
    if (!(r >= 0.0 && r <= 1.0)) throw Error("perturbation rates must lie in [0, 1]");
  }
  if (rep_span_min < 1 || rep_span_max < rep_span_min) throw Error("invalid repetition span range");
}

std::vector<std::string> repeat_span(const std::vector<std::string>& tokens, std::size_t start,
                                     std::size_t len) {
  if (len == 0 || start + len > tokens.size()) throw Error("repetition span out of range");
  std::vector<std::string> out(tokens.begin(), tokens.begin() + static_cast<long>(start + len));
  out.insert(out.end(), tokens.begin() + static_cast<long>(start),
             tokens.begin() + static_cast<long>(start + len));
  out.insert(out.end(), tokens.begin() + static_cast<long>(start + len), tokens.end());
  return out;
}

std::string delete_positions(std::string_view text, const std::vector<std::size_t>& positions) {
  std::vector<bool> drop(text.size(), false);
  for (auto p : positions) {
    if (p >= text.size()) throw Error("deletion position out of range");
    drop[p] = true;
  }
  std::string out;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (!drop[i]) out.push_back(text[i]);
  }
  return out;
}

PerturbedPair perturb(const Sentence& s, ErrorKind kind, const PerturbationSpec& spec, Rng& rng) {
  spec.validate();
  if (kind == ErrorKind::Identity) return {s, s, ErrorKind::Identity};

  if (kind == ErrorKind::Repetition) {
    const auto n = s.tokens.size();
    if (n < static_cast<std::size_t>(spec.rep_span_min)) {
      throw Error("sentence is shorter than the minimum repetition span");
    }
    // Longest run of word tokens bounds the feasible span lengths.
    std::size_t longest = 0, run = 0;
    for (const auto& t : s.tokens) {
      run = is_punctuation(t) ? 0 : run + 1;
      longest = std::max(longest, run);
    }
    const auto lo = static_cast<std::size_t>(spec.rep_span_min);
    const auto hi = std::min(static_cast<std::size_t>(spec.rep_span_max), longest);
    if (hi < lo) throw Error("no repeatable word span in sentence");
    const auto len = std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
    std::vector<std::size_t> starts;
    for (std::size_t i = 0; i + len <= n; ++i) {
      bool words_only = true;
      for (std::size_t j = i; j < i + len && words_only; ++j) words_only = !is_punctuation(s.tokens[j]);
      if (words_only) starts.push_back(i);
    }
    const auto start = pick(starts, rng);
    PerturbedPair p;
    p.clean = s;
    p.kind = ErrorKind::Repetition;
    p.corrupted = analyze(detokenize(repeat_span(s.tokens, start, len)), s.id, s.key);
    p.span_start = start;
    p.span_len = len;
    return p;
  }

  check_misspell_pre(s);
  Mask m = positions_of(s.text);
  draw_mask(m, spec, rng);
  if (spec.guarantee_deletion) {
    for (int attempt = 0; m.deleted() == 0 && attempt < 1000; ++attempt) draw_mask(m, spec, rng);
    if (m.deleted() == 0) force_deletion(m, spec, rng);
  }
  return misspelled_pair(s, m);
}

std::vector<PerturbedPair> build_refiner_dataset(const Corpus& ext, const PerturbationSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const auto& sents = ext.sentences();
  std::vector<ErrorKind> kinds(sents.size(), ErrorKind::Identity);
  std::bernoulli_distribution sampled(spec.instance_rate);
  std::bernoulli_distribution misspelled(spec.misspell_share);
  for (std::size_t i = 0; i < sents.size(); ++i) {
    if (sampled(rng)) kinds[i] = misspelled(rng) ? ErrorKind::Misspelling : ErrorKind::Repetition;
  }

  // Misspellings: joint draw, then repair sentences left without a deletion.
  std::vector<std::size_t> miss;
  std::vector<Mask> masks;
  for (std::size_t i = 0; i < sents.size(); ++i) {
    if (kinds[i] != ErrorKind::Misspelling) continue;
    if (sents[i].text.size() < 2) {
      kinds[i] = ErrorKind::Identity;
      continue;
    }
    miss.push_back(i);
    masks.push_back(positions_of(sents[i].text));
    draw_mask(masks.back(), spec, rng);
  }
  if (spec.guarantee_deletion) {
    for (auto& recipient : masks) {
      if (recipient.deleted() > 0) continue;
      std::vector<std::size_t> donors;
      for (std::size_t j = 0; j < masks.size(); ++j) {
        if (masks[j].deleted() >= 2) donors.push_back(j);
      }
      bool moved = false;
      while (!donors.empty() && !moved) {
        const auto k = std::uniform_int_distribution<std::size_t>(0, donors.size() - 1)(rng);
        moved = move_deletion(masks[donors[k]], recipient, rng);
        donors.erase(donors.begin() + static_cast<long>(k));
      }
      if (!moved) force_deletion(recipient, spec, rng);
    }
  }

  std::vector<PerturbedPair> out;
  out.reserve(sents.size());
  std::size_t next_miss = 0;
  for (std::size_t i = 0; i < sents.size(); ++i) {
    switch (kinds[i]) {
      case ErrorKind::Identity:
        out.push_back({sents[i], sents[i], ErrorKind::Identity});
        break;
      case ErrorKind::Misspelling:
        out.push_back(misspelled_pair(sents[i], masks[next_miss++]));
        break;
      case ErrorKind::Repetition:
        try {
          out.push_back(perturb(sents[i], ErrorKind::Repetition, spec, rng));
        } catch (const Error& e) {
          spdlog::debug("sentence {} kept clean: {}", sents[i].id, e.what());
          out.push_back({sents[i], sents[i], ErrorKind::Identity});
        }
        break;
    }
  }
  return out;
}

void write_perturbed(const std::filesystem::path& path, const std::vector<PerturbedPair>& pairs) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& p : pairs) {
    out << json{{"clean", p.clean.text}, {"corrupted", p.corrupted.text}, {"kind", to_string(p.kind)}}
               .dump()
        << '\n';
  }
}

std::vector<PerturbedPair> read_perturbed(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<PerturbedPair> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      PerturbedPair p;
      p.clean = analyze(j.at("clean").get<std::string>(), out.size());
      p.corrupted = analyze(j.at("corrupted").get<std::string>(), out.size());
      p.kind = parse_error_kind(j.at("kind").get<std::string>());
      out.push_back(std::move(p));
    } catch (const json::exception& e) {
      throw ParseError(e.what(), line_no);
    } catch (const ParseError&) {
      throw;
    } catch (const Error& e) {
      throw ParseError(e.what(), line_no);
    }
  }
  return out;
}

SourceSeq encode_refiner_source(const Vocab& vocab, const Sentence& s, int max_src_len) {
  auto ids = vocab.encode(s.words());
  if (ids.size() > static_cast<std::size_t>(max_src_len)) ids.resize(static_cast<std::size_t>(max_src_len));
  if (ids.empty()) ids.push_back(Vocab::kEos);
  SourceSeq src;
  src.append_segment(0, ids);
  return src;
}

double refiner_loss(const Seq2SeqModel& m, const Sentence& corrupted, const Sentence& clean,
                    nn::Gradients* grads) {
  if (clean.empty()) throw Error("empty clean sentence");
  return m.nll(encode_refiner_source(m.vocab(), corrupted, m.config().max_src_len),
               encode_target(m.vocab(), clean), grads);
}

Seq2SeqModel train_refiner(const std::vector<PerturbedPair>& data, const Seq2SeqConfig& model,
                           const Vocab& vocab, const FitConfig& fit, Rng& rng, nn::TrainStats* stats) {
  if (data.empty()) throw Error("empty refiner dataset");
  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!data[i].clean.empty()) usable.push_back(i);
  }
  if (usable.empty()) throw Error("refiner dataset has no usable pairs");
  Seq2SeqModel m(model, vocab);
  auto [train_idx, hold_idx] = nn::split_indices(usable.size(), fit.holdout_fraction, rng);
  if (hold_idx.size() > fit.max_holdout) hold_idx.resize(fit.max_holdout);
  if (train_idx.empty()) train_idx = hold_idx;

  auto loss = [&](std::size_t i, nn::Gradients& g, Rng&) {
    const auto& p = data[usable[train_idx[i]]];
    return refiner_loss(m, p.corrupted, p.clean, &g);
  };
  nn::HoldoutLoss holdout;
  if (!hold_idx.empty()) {
    holdout = [&] {
      double total = 0.0;
      for (auto i : hold_idx) total += refiner_loss(m, data[usable[i]].corrupted, data[usable[i]].clean);
      return total / static_cast<double>(hold_idx.size());
    };
  }
  nn::TrainConfig tc;
  tc.steps = fit.steps;
  tc.batch_size = fit.batch_size;
  tc.eval_every = fit.eval_every;
  tc.patience = fit.patience;
  tc.adam.lr = fit.lr;
  auto st = nn::train(m.params(), train_idx.size(), loss, holdout, tc, rng);
  spdlog::debug("refiner: {} steps, best held-out {:.4f} at step {}", st.steps_run, st.best_holdout,
                st.best_step);
  if (stats) *stats = st;
  return m;
}

Sentence refine(const Seq2SeqModel& m, const Sentence& s, const DecodeConfig& decode) {
  if (s.empty()) return s;
  const auto src = encode_refiner_source(m.vocab(), s, m.config().max_src_len);
  return decode_sentence(m.vocab(), m.beam_search(src, decode.beam_size, decode.max_len));
}

}  // namespace kgr4
