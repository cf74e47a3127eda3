#include "kgr4/seq2seq.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <limits>

#include "kgr4/error.hpp"

namespace kgr4 {

namespace {

constexpr int kCopyOffsetRange = 8;  // offsets beyond +-8 share a bias

}  // namespace

using nlohmann::json;
using nn::Matrix;
using nn::Tape;
using nn::Var;

void SourceSeq::append_segment(int segment, std::span<const int> tokens, std::span<const int> token_flags,
                               int level) {
  level = std::clamp(level, 0, kMaxLevel);
  if (!token_flags.empty() && token_flags.size() != tokens.size()) throw Error("one flag per token required");
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    ids.push_back(tokens[i]);
    segments.push_back(segment);
    positions.push_back(static_cast<int>(i));
    flags.push_back(token_flags.empty() ? 0 : (token_flags[i] != 0 ? 1 : 0));
    levels.push_back(level);
  }
}

Seq2SeqModel::Seq2SeqModel(Seq2SeqConfig config, Vocab vocab)
    : config_(config), vocab_(std::move(vocab)) {
  if (config_.dim % config_.heads != 0) throw Error("model dim must be divisible by heads");
  std::mt19937_64 rng(config_.seed);
  const int d = config_.dim;
  const auto v = static_cast<Eigen::Index>(vocab_.size());
  auto norm_params = [&](const std::string& name) {
    return NormParams{params_.add(name + ".gain", nn::init::ones(1, d)),
                      params_.add(name + ".bias", nn::init::zeros(1, d))};
  };
  auto attn_params = [&](const std::string& name) {
    return AttnParams{params_.add(name + ".q", nn::init::xavier(d, d, rng)),
                      params_.add(name + ".k", nn::init::xavier(d, d, rng)),
                      params_.add(name + ".v", nn::init::xavier(d, d, rng)),
                      params_.add(name + ".o", nn::init::xavier(d, d, rng))};
  };
  auto ff_params = [&](const std::string& name) {
    return FfParams{params_.add(name + ".w1", nn::init::xavier(d, config_.ff_dim, rng)),
                    params_.add(name + ".b1", nn::init::zeros(1, config_.ff_dim)),
                    params_.add(name + ".w2", nn::init::xavier(config_.ff_dim, d, rng)),
                    params_.add(name + ".b2", nn::init::zeros(1, d))};
  };

  tok_emb_ = params_.add("embed.tokens", nn::init::normal(v, d, 1.0 / std::sqrt(double(d)), rng));
  src_pos_ = params_.add("embed.src_pos", nn::init::normal(config_.max_src_len, d, 0.3, rng));
  src_seg_ = params_.add("embed.src_seg", nn::init::normal(config_.max_segments, d, 0.3, rng));
  src_flag_ = params_.add("embed.src_flag", nn::init::normal(2, d, 0.3, rng));
  src_level_ = params_.add("embed.src_level", nn::init::normal(SourceSeq::kMaxLevel + 1, d, 0.3, rng));
  tgt_pos_ = params_.add("embed.tgt_pos", nn::init::normal(config_.max_tgt_len, d, 0.3, rng));
  for (int l = 0; l < config_.encoder_layers; ++l) {
    const std::string p = "enc." + std::to_string(l);
    EncoderLayer layer;
    layer.ln1 = norm_params(p + ".ln1");
    layer.self = attn_params(p + ".self");
    layer.ln2 = norm_params(p + ".ln2");
    layer.ff = ff_params(p + ".ff");
    enc_.push_back(layer);
  }
  enc_final_ = norm_params("enc.final");
  for (int l = 0; l < config_.decoder_layers; ++l) {
    const std::string p = "dec." + std::to_string(l);
    DecoderLayer layer;
    layer.ln1 = norm_params(p + ".ln1");
    layer.self = attn_params(p + ".self");
    layer.ln2 = norm_params(p + ".ln2");
    layer.cross = attn_params(p + ".cross");
    layer.ln3 = norm_params(p + ".ln3");
    layer.ff = ff_params(p + ".ff");
    dec_.push_back(layer);
  }
  dec_final_ = norm_params("dec.final");
  if (!config_.tied_output) out_w_ = params_.add("out.w", nn::init::xavier(d, v, rng));
  out_b_ = params_.add("out.b", nn::init::zeros(1, v));
  if (config_.copy_attention) {
    copy_q_ = params_.add("copy.q", nn::init::xavier(d, d, rng));
    copy_k_ = params_.add("copy.k", nn::init::xavier(d, d, rng));
    copy_rel_ = params_.add("copy.rel", nn::init::zeros(1, 2 * kCopyOffsetRange + 1));
    gate_w_ = params_.add("copy.gate.w", nn::init::zeros(d, 1));
    gate_b_ = params_.add("copy.gate.b", nn::init::zeros(1, 1));
  }
}

Var Seq2SeqModel::norm(Tape& t, const NormParams& p, Var x) const {
  return t.layer_norm(x, t.param(p.gain), t.param(p.bias));
}

Var Seq2SeqModel::attend(Tape& t, const AttnParams& p, Var query_in, Var kv_in, bool causal) const {
  Var q = t.matmul(query_in, t.param(p.q));
  Var k = t.matmul(kv_in, t.param(p.k));
  Var v = t.matmul(kv_in, t.param(p.v));
  return t.matmul(t.attention(q, k, v, config_.heads, causal), t.param(p.o));
}

Var Seq2SeqModel::feed_forward(Tape& t, const FfParams& p, Var x) const {
  Var h = t.relu(t.add_row(t.matmul(x, t.param(p.w1)), t.param(p.b1)));
  return t.add_row(t.matmul(h, t.param(p.w2)), t.param(p.b2));
}

Var Seq2SeqModel::encode(Tape& t, const SourceSeq& src) const {
  if (src.ids.empty()) throw Error("empty source sequence");
  std::vector<int> pos(src.positions);
  std::vector<int> seg(src.segments);
  for (auto& p : pos) p = std::min(p, config_.max_src_len - 1);
  for (auto& s : seg) s = std::min(s, config_.max_segments - 1);
  const double scale = std::sqrt(static_cast<double>(config_.dim));
  Var x = t.scale(t.gather_rows(t.param(tok_emb_), src.ids), scale);
  x = t.add(x, t.gather_rows(t.param(src_pos_), pos));
  x = t.add(x, t.gather_rows(t.param(src_seg_), seg));
  x = t.add(x, t.gather_rows(t.param(src_flag_), src.flags));
  x = t.add(x, t.gather_rows(t.param(src_level_), src.levels));
  for (const auto& layer : enc_) {
    Var h = norm(t, layer.ln1, x);
    x = t.add(x, attend(t, layer.self, h, h, false));
    x = t.add(x, feed_forward(t, layer.ff, norm(t, layer.ln2, x)));
  }
  return norm(t, enc_final_, x);
}

Seq2SeqModel::DecoderOut Seq2SeqModel::decode(Tape& t, Var memory, std::span<const int> source_positions,
                                              std::span<const int> inputs) const {
  std::vector<int> pos(inputs.size());
  for (std::size_t i = 0; i < pos.size(); ++i) {
    pos[i] = std::min(static_cast<int>(i), config_.max_tgt_len - 1);
  }
  const double scale = std::sqrt(static_cast<double>(config_.dim));
  Var y = t.scale(t.gather_rows(t.param(tok_emb_), inputs), scale);
  y = t.add(y, t.gather_rows(t.param(tgt_pos_), pos));
  for (const auto& layer : dec_) {
    Var h = norm(t, layer.ln1, y);
    y = t.add(y, attend(t, layer.self, h, h, true));
    y = t.add(y, attend(t, layer.cross, norm(t, layer.ln2, y), memory, false));
    y = t.add(y, feed_forward(t, layer.ff, norm(t, layer.ln3, y)));
  }
  Var h = norm(t, dec_final_, y);
  Var logits = config_.tied_output ? t.matmul_bt(h, t.param(tok_emb_)) : t.matmul(h, t.param(out_w_));
  DecoderOut out{t.add_row(logits, t.param(out_b_)), {}, {}};
  if (config_.copy_attention) {
    const Var q = t.matmul(h, t.param(copy_q_));
    const Var k = t.matmul(memory, t.param(copy_k_));
    std::vector<int> offsets;
    offsets.reserve(inputs.size() * source_positions.size());
    for (std::size_t step = 0; step < inputs.size(); ++step) {
      for (int p : source_positions) {
        const int off = std::clamp(p - static_cast<int>(step), -kCopyOffsetRange, kCopyOffsetRange);
        offsets.push_back(off + kCopyOffsetRange);
      }
    }
    const Var bias = t.gather_entries(t.param(copy_rel_), offsets, static_cast<Eigen::Index>(inputs.size()),
                                      static_cast<Eigen::Index>(source_positions.size()));
    out.copy_scores = t.add(t.scale(t.matmul_bt(q, k), 1.0 / scale), bias);
    out.gate = t.add_row(t.matmul(h, t.param(gate_w_)), t.param(gate_b_));
  }
  return out;
}

Matrix Seq2SeqModel::step_probs(const Tape& t, const DecoderOut& out, std::span<const int> source_ids) const {
  if (!config_.copy_attention) return nn::softmax_rows(t.value(out.logits));
  return nn::copy_mixture_probs(t.value(out.logits), t.value(out.copy_scores), t.value(out.gate), source_ids);
}

std::vector<int> Seq2SeqModel::clamp_target(std::span<const int> target) const {
  std::vector<int> out(target.begin(), target.end());
  const auto cap = static_cast<std::size_t>(config_.max_tgt_len);
  if (out.size() > cap) {
    out.resize(cap);
    out.back() = Vocab::kEos;
  }
  return out;
}

double Seq2SeqModel::nll(const SourceSeq& src, std::span<const int> target, nn::Gradients* grads,
                         double weight, std::vector<double>* token_losses) const {
  if (target.empty()) throw Error("empty target");
  const std::vector<int> tgt = clamp_target(target);
  std::vector<int> inputs;
  inputs.reserve(tgt.size());
  inputs.push_back(Vocab::kBos);
  inputs.insert(inputs.end(), tgt.begin(), tgt.end() - 1);
  Tape t(params_, grads);
  Var memory = encode(t, src);
  const DecoderOut out = decode(t, memory, src.positions, inputs);
  Var loss = config_.copy_attention
                 ? t.copy_mixture_nll(out.logits, out.copy_scores, out.gate, src.ids, tgt, token_losses)
                 : t.cross_entropy(out.logits, tgt, token_losses);
  if (grads) t.backward(weight == 1.0 ? loss : t.scale(loss, weight));
  return t.scalar(loss);
}

Matrix Seq2SeqModel::step_distributions(const SourceSeq& src, std::span<const int> target) const {
  const std::vector<int> tgt = clamp_target(target);
  std::vector<int> inputs{Vocab::kBos};
  inputs.insert(inputs.end(), tgt.begin(), tgt.end() - 1);
  Tape t(params_);
  return step_probs(t, decode(t, encode(t, src), src.positions, inputs), src.ids);
}

Matrix Seq2SeqModel::encode_memory(const SourceSeq& src) const {
  Tape t(params_);
  return t.value(encode(t, src));
}

Eigen::RowVectorXd Seq2SeqModel::next_log_probs(const Matrix& memory, const SourceSeq& src,
                                                std::span<const int> prefix) const {
  Tape t(params_);
  const Matrix p = step_probs(t, decode(t, t.constant(memory), src.positions, prefix), src.ids);
  Eigen::RowVectorXd last = p.row(p.rows() - 1).array().log();
  for (int banned : {Vocab::kPad, Vocab::kBos, Vocab::kUnk, Vocab::kConcepts, Vocab::kProto}) {
    last(banned) = -std::numeric_limits<double>::infinity();
  }
  return last;
}

std::vector<int> Seq2SeqModel::greedy(const SourceSeq& src, int max_len) const {
  const Matrix memory = encode_memory(src);
  max_len = std::min(max_len, config_.max_tgt_len - 1);
  std::vector<int> prefix{Vocab::kBos};
  for (int step = 0; step < max_len; ++step) {
    Eigen::RowVectorXd lp = next_log_probs(memory, src, prefix);
    Eigen::Index best = 0;
    lp.maxCoeff(&best);  // first maximal index
    if (best == Vocab::kEos) break;
    prefix.push_back(static_cast<int>(best));
  }
  return {prefix.begin() + 1, prefix.end()};
}

std::vector<int> Seq2SeqModel::beam_search(const SourceSeq& src, int beam_size, int max_len) const {
  if (beam_size < 1) throw Error("beam size must be at least 1");
  const Matrix memory = encode_memory(src);
  max_len = std::min(max_len, config_.max_tgt_len - 1);

  struct Hyp {
    std::vector<int> tokens;  // after <bos>
    double logprob = 0.0;
  };
  struct Cand {
    std::size_t parent;
    int token;
    double logprob;
  };
  auto normalized = [](double lp, std::size_t n) { return lp / static_cast<double>(std::max<std::size_t>(n, 1)); };

  std::vector<Hyp> beams{Hyp{}};
  std::vector<std::pair<double, std::vector<int>>> finished;
  for (int step = 0; step <= max_len && !beams.empty(); ++step) {
    std::vector<Cand> cands;
    for (std::size_t b = 0; b < beams.size(); ++b) {
      std::vector<int> prefix{Vocab::kBos};
      prefix.insert(prefix.end(), beams[b].tokens.begin(), beams[b].tokens.end());
      Eigen::RowVectorXd lp = next_log_probs(memory, src, prefix);
      if (step == max_len) {
        // Out of room: the only continuation is <eos>.
        cands.push_back({b, Vocab::kEos, beams[b].logprob + lp(Vocab::kEos)});
        continue;
      }
      std::vector<int> order(static_cast<std::size_t>(lp.size()));
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
      const auto keep = std::min<std::size_t>(static_cast<std::size_t>(beam_size), order.size());
      std::partial_sort(order.begin(), order.begin() + static_cast<long>(keep), order.end(),
                        [&](int a, int c) { return lp(a) > lp(c) || (lp(a) == lp(c) && a < c); });
      for (std::size_t i = 0; i < keep; ++i) {
        if (std::isinf(lp(order[i]))) continue;
        cands.push_back({b, order[i], beams[b].logprob + lp(order[i])});
      }
    }
    std::stable_sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& c) {
      return a.logprob > c.logprob;
    });
    std::vector<Hyp> next;
    for (const auto& c : cands) {
      if (next.size() + finished.size() >= static_cast<std::size_t>(beam_size) &&
          next.size() >= static_cast<std::size_t>(beam_size)) {
        break;
      }
      const Hyp& parent = beams[c.parent];
      if (c.token == Vocab::kEos) {
        finished.emplace_back(normalized(c.logprob, parent.tokens.size() + 1), parent.tokens);
      } else if (next.size() < static_cast<std::size_t>(beam_size)) {
        Hyp h{parent.tokens, c.logprob};
        h.tokens.push_back(c.token);
        next.push_back(std::move(h));
      }
    }
    if (finished.size() >= static_cast<std::size_t>(beam_size)) break;
    beams = std::move(next);
  }
  if (finished.empty()) return {};
  auto best = std::max_element(finished.begin(), finished.end(), [](const auto& a, const auto& b) {
    return a.first < b.first;
  });
  return best->second;
}

namespace {

json config_json(const Seq2SeqConfig& c) {
  return json{{"encoder_layers", c.encoder_layers}, {"decoder_layers", c.decoder_layers},
              {"heads", c.heads},                   {"dim", c.dim},
              {"ff_dim", c.ff_dim},                 {"max_src_len", c.max_src_len},
              {"max_tgt_len", c.max_tgt_len},       {"max_segments", c.max_segments},
              {"tied_output", c.tied_output},       {"copy_attention", c.copy_attention},
              {"seed", c.seed}};
}

Seq2SeqConfig config_from_json(const json& j) {
  Seq2SeqConfig c;
  c.encoder_layers = j.at("encoder_layers");
  c.decoder_layers = j.at("decoder_layers");
  c.heads = j.at("heads");
  c.dim = j.at("dim");
  c.ff_dim = j.at("ff_dim");
  c.max_src_len = j.at("max_src_len");
  c.max_tgt_len = j.at("max_tgt_len");
  c.max_segments = j.at("max_segments");
  c.tied_output = j.at("tied_output");
  c.copy_attention = j.at("copy_attention");
  c.seed = j.at("seed");
  return c;
}

}  // namespace

void Seq2SeqModel::save(const std::filesystem::path& stem, const std::string& kind,
                        const std::string& train_data_hash) const {
  params_.save(stem.string() + ".params");
  json meta{{"kind", kind},
            {"config", config_json(config_)},
            {"vocab", vocab_.tokens()},
            {"vocab_hash", vocab_.hash()},
            {"train_data_hash", train_data_hash},
            {"params_hash", params_.hash()}};
  std::ofstream out(stem.string() + ".json");
  if (!out) throw IoError("cannot write " + stem.string() + ".json");
  out << meta.dump(2) << '\n';
}

Seq2SeqModel Seq2SeqModel::load(const std::filesystem::path& stem, const std::string& kind) {
  std::ifstream in(stem.string() + ".json");
  if (!in) throw IoError("cannot read " + stem.string() + ".json");
  json meta = json::parse(in);
  if (meta.value("kind", "") != kind) {
    throw Error("checkpoint " + stem.string() + " is not a " + kind + " model");
  }
  Seq2SeqModel m(config_from_json(meta.at("config")),
                 Vocab::from_tokens(meta.at("vocab").get<std::vector<std::string>>()));
  if (m.vocab_.hash() != meta.at("vocab_hash").get<std::string>()) {
    throw Error("checkpoint vocabulary hash mismatch");
  }
  m.params_.load(stem.string() + ".params");
  return m;
}

}  // namespace kgr4
