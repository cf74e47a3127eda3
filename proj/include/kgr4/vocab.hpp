#pragma once

#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace kgr4 {

/// Word-level vocabulary with a character fallback.
///
/// Known words map to one id. Any other word is spelled with character
/// pieces: "<w>x" opens a word with character x, "<c>x" continues it. Pieces
/// exist for every character seen at build time plus lowercase ASCII letters
/// and digits, so every such word stays encodable.
class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;
  static constexpr int kConcepts = 4;
  static constexpr int kProto = 5;

  Vocab();
  static Vocab build(const std::set<std::string>& words);
  static Vocab from_tokens(std::vector<std::string> tokens);

  std::size_t size() const { return tokens_.size(); }
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  /// Whole-word id, or -1.
  int word_id(const std::string& word) const;
  bool is_piece(int id) const;
  bool is_special(int id) const { return id >= 0 && id <= kProto; }

  std::vector<int> encode_word(const std::string& word) const;
  std::vector<int> encode(const std::vector<std::string>& words) const;
  /// Inverse of encode; special tokens are dropped.
  std::vector<std::string> decode(std::span<const int> ids) const;

  std::string hash() const;

 private:
  void add(const std::string& token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

}  // namespace kgr4
