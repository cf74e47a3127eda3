#pragma once

#include <string>
#include <vector>

#include "kgr4/seq2seq.hpp"

namespace kgr4::testing {

/// 20-token vocabulary: the six specials plus fourteen words.
inline Vocab micro_vocab() {
  std::vector<std::string> tokens{"<pad>", "<bos>", "<eos>", "<unk>", "[CONCEPTS]", "[PROTO]"};
  for (const char* w : {"dog", "cat", "run", "sit", "the", "a", "park", "mat", "on", "in", "big",
                        "red", "ball", "throw"}) {
    tokens.emplace_back(w);
  }
  return Vocab::from_tokens(tokens);
}

inline Seq2SeqConfig micro_config(bool tied = true, bool copy = true) {
  Seq2SeqConfig c;
  c.encoder_layers = 2;
  c.decoder_layers = 2;
  c.heads = 2;
  c.dim = 8;
  c.ff_dim = 16;
  c.max_src_len = 24;
  c.max_tgt_len = 8;
  c.tied_output = tied;
  c.copy_attention = copy;
  c.seed = 7;
  return c;
}

inline SourceSeq micro_source() {
  SourceSeq src;
  src.append_segment(0, std::vector<int>{4, 6, 8});
  src.append_segment(1, std::vector<int>{5, 10, 6, 14, 11, 13}, std::vector<int>{0, 1, 1, 0, 0, 0}, 1);
  src.append_segment(2, std::vector<int>{5, 11, 7, 9}, {}, 3);
  return src;
}

}  // namespace kgr4::testing
