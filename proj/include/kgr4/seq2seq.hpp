#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "kgr4/nn/parameters.hpp"
#include "kgr4/nn/tape.hpp"
#include "kgr4/vocab.hpp"

namespace kgr4 {

struct Seq2SeqConfig {
  int encoder_layers = 2;
  int decoder_layers = 2;
  int heads = 4;
  int dim = 64;
  int ff_dim = 128;
  int max_src_len = 96;
  int max_tgt_len = 32;  // target tokens including <eos>
  int max_segments = 4;
  bool tied_output = true;
  bool copy_attention = true;  // gated copy distribution over source tokens
  std::uint64_t seed = 1;
};

/// Encoder input. Positions restart at 0 in every segment and each segment
/// has its own learned embedding, so the decoder can address "token i of
/// segment s" directly. Two optional token features have their own learned
/// embeddings: `flags` (0/1) and a per-segment `level` (0..kMaxLevel). The
/// generator flags prototype words that match a concept and sets the level to
/// the number of concepts the prototype misses.
struct SourceSeq {
  static constexpr int kMaxLevel = 7;

  std::vector<int> ids;
  std::vector<int> segments;
  std::vector<int> positions;
  std::vector<int> flags;
  std::vector<int> levels;

  /// Appends `tokens` as segment `segment` (positions from 0). `flags` is
  /// either empty (all 0) or one entry per token; `level` is clamped.
  void append_segment(int segment, std::span<const int> tokens, std::span<const int> flags = {},
                      int level = 0);
  std::size_t size() const { return ids.size(); }
};

/// Pre-LN transformer encoder-decoder with learned positions, a causal
/// decoder with cross-attention, and an output projection tied to the token
/// embedding (or untied per config).
///
/// With `copy_attention` the output distribution is a gated mixture of the
/// vocabulary softmax and a single-head attention over the source positions,
/// scattered onto their token ids. The copy scores carry a learned bias per
/// offset between source position and decoder step.
class Seq2SeqModel {
 public:
  Seq2SeqModel(Seq2SeqConfig config, Vocab vocab);

  const Seq2SeqConfig& config() const { return config_; }
  const Vocab& vocab() const { return vocab_; }
  nn::ParameterSet& params() { return params_; }
  const nn::ParameterSet& params() const { return params_; }

  /// Teacher-forced -sum_t log p(target_t | source, target_<t). `target`
  /// excludes <bos> and should end with <eos>; it is truncated to
  /// max_tgt_len. Gradients of `weight * loss` are added to `grads` when set.
  double nll(const SourceSeq& src, std::span<const int> target, nn::Gradients* grads = nullptr,
             double weight = 1.0, std::vector<double>* token_losses = nullptr) const;

  /// Softmax distribution at every teacher-forced step (rows sum to 1).
  nn::Matrix step_distributions(const SourceSeq& src, std::span<const int> target) const;

  /// Beam search with length-normalized log-probability. Returns the tokens
  /// before <eos>; at most `max_len` tokens.
  std::vector<int> beam_search(const SourceSeq& src, int beam_size, int max_len) const;
  std::vector<int> greedy(const SourceSeq& src, int max_len) const;

  /// Writes `<stem>.params` and `<stem>.json`.
  void save(const std::filesystem::path& stem, const std::string& kind,
            const std::string& train_data_hash = {}) const;
  /// Loads a checkpoint; `kind` must match the saved kind.
  static Seq2SeqModel load(const std::filesystem::path& stem, const std::string& kind);

  /// Clamps the target to max_tgt_len, keeping a final <eos>.
  std::vector<int> clamp_target(std::span<const int> target) const;

 private:
  struct AttnParams {
    std::size_t q, k, v, o;
  };
  struct NormParams {
    std::size_t gain, bias;
  };
  struct FfParams {
    std::size_t w1, b1, w2, b2;
  };
  struct EncoderLayer {
    NormParams ln1, ln2;
    AttnParams self;
    FfParams ff;
  };
  struct DecoderLayer {
    NormParams ln1, ln2, ln3;
    AttnParams self, cross;
    FfParams ff;
  };

  nn::Var encode(nn::Tape& t, const SourceSeq& src) const;
  struct DecoderOut {
    nn::Var logits, copy_scores, gate;  // copy terms unset without copy_attention
  };
  DecoderOut decode(nn::Tape& t, nn::Var memory, std::span<const int> source_positions,
                    std::span<const int> inputs) const;
  /// Next-token probabilities for every decoder step.
  nn::Matrix step_probs(const nn::Tape& t, const DecoderOut& out, std::span<const int> source_ids) const;
  nn::Var attend(nn::Tape& t, const AttnParams& p, nn::Var query_in, nn::Var kv_in, bool causal) const;
  nn::Var feed_forward(nn::Tape& t, const FfParams& p, nn::Var x) const;
  nn::Var norm(nn::Tape& t, const NormParams& p, nn::Var x) const;
  /// Log-probabilities for the token after `prefix` (which starts with <bos>).
  Eigen::RowVectorXd next_log_probs(const nn::Matrix& memory, const SourceSeq& src,
                                    std::span<const int> prefix) const;
  nn::Matrix encode_memory(const SourceSeq& src) const;

  Seq2SeqConfig config_;
  Vocab vocab_;
  nn::ParameterSet params_;
  std::size_t tok_emb_, src_pos_, src_seg_, src_flag_, src_level_, tgt_pos_, out_w_ = 0, out_b_;
  std::size_t copy_q_ = 0, copy_k_ = 0, copy_rel_ = 0, gate_w_ = 0, gate_b_ = 0;
  NormParams enc_final_, dec_final_;
  std::vector<EncoderLayer> enc_;
  std::vector<DecoderLayer> dec_;
};

}  // namespace kgr4
