#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "kgr4/corpus.hpp"
#include "kgr4/generator.hpp"
#include "kgr4/seq2seq.hpp"

namespace kgr4 {

/// Identity marks an unperturbed (clean, clean) training pair.
enum class ErrorKind { Identity, Repetition, Misspelling };

std::string_view to_string(ErrorKind kind);
ErrorKind parse_error_kind(std::string_view s);

struct PerturbationSpec {
  double instance_rate = 0.05;
  double misspell_share = 0.5;
  double char_removal_rate = 0.01;
  double space_removal_rate = 0.10;
  int rep_span_min = 1;
  int rep_span_max = 4;
  std::uint64_t seed = 1;
  /// Misspellings always delete at least one character. Tests turn this off
  /// to check the zero-rate identity.
  bool guarantee_deletion = true;

  /// Throws kgr4::Error on rates outside [0, 1] or an empty span range.
  void validate() const;
};

struct PerturbedPair {
  Sentence clean;
  Sentence corrupted;
  ErrorKind kind = ErrorKind::Identity;
  // Repetition witness: tokens [span_start, span_start + span_len) were
  // duplicated right after themselves.
  std::size_t span_start = 0;
  std::size_t span_len = 0;
  // Misspelling tallies.
  std::size_t chars_deleted = 0;
  std::size_t spaces_deleted = 0;
};

/// Token sequence with tokens [start, start + len) repeated once, adjacently.
std::vector<std::string> repeat_span(const std::vector<std::string>& tokens, std::size_t start,
                                     std::size_t len);

/// `text` with the bytes at the given positions removed.
std::string delete_positions(std::string_view text, const std::vector<std::size_t>& positions);

/// Corrupts one sentence. Repetition picks a span length uniformly from the
/// feasible part of [rep_span_min, rep_span_max], then a start uniformly among
/// spans of non-punctuation tokens. Misspelling deletes each non-space
/// character and each space independently, redrawing when nothing was
/// deleted (if guaranteed).
PerturbedPair perturb(const Sentence& s, ErrorKind kind, const PerturbationSpec& spec, Rng& rng);

/// One pair per corpus sentence: a Bernoulli(instance_rate) sample is
/// perturbed (misspelled with probability misspell_share, repeated otherwise),
/// everything else becomes an identity pair.
///
/// Deletion masks for the misspelled subset are drawn together at the nominal
/// rates. A sentence left without a deletion receives one moved from a
/// sentence with two or more, so the subset totals keep their binomial
/// distribution; a fresh deletion is forced only when no donor exists.
std::vector<PerturbedPair> build_refiner_dataset(const Corpus& ext, const PerturbationSpec& spec);

void write_perturbed(const std::filesystem::path& path, const std::vector<PerturbedPair>& pairs);
std::vector<PerturbedPair> read_perturbed(const std::filesystem::path& path);

/// Encoder input for the refiner: the sentence words as a single segment.
SourceSeq encode_refiner_source(const Vocab& vocab, const Sentence& s, int max_src_len);

/// Trains a fresh denoising model (corrupted -> clean) on `data`.
Seq2SeqModel train_refiner(const std::vector<PerturbedPair>& data, const Seq2SeqConfig& model,
                           const Vocab& vocab, const FitConfig& fit, Rng& rng,
                           nn::TrainStats* stats = nullptr);

/// Teacher-forced NLL of `clean` given `corrupted`.
double refiner_loss(const Seq2SeqModel& m, const Sentence& corrupted, const Sentence& clean,
                    nn::Gradients* grads = nullptr);

/// Beam-decoded correction; the empty sentence maps to itself.
Sentence refine(const Seq2SeqModel& m, const Sentence& s, const DecodeConfig& decode = {});

}  // namespace kgr4
