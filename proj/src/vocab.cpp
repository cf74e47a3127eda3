#include "kgr4/vocab.hpp"

#include "kgr4/error.hpp"
#include "kgr4/hash.hpp"

namespace kgr4 {

namespace {
const char* const kSpecialTokens[] = {"<pad>", "<bos>", "<eos>", "<unk>", "[CONCEPTS]", "[PROTO]"};
const std::string kOpen = "<w>";
const std::string kCont = "<c>";
}  // namespace

Vocab::Vocab() {
  for (const char* s : kSpecialTokens) add(s);
}

void Vocab::add(const std::string& token) {
  if (index_.emplace(token, static_cast<int>(tokens_.size())).second) tokens_.push_back(token);
}

Vocab Vocab::build(const std::set<std::string>& words) {
  Vocab v;
  std::set<char> chars;
  for (char c = 'a'; c <= 'z'; ++c) chars.insert(c);
  for (char c = '0'; c <= '9'; ++c) chars.insert(c);
  for (const auto& w : words) chars.insert(w.begin(), w.end());
  for (char c : chars) {
    v.add(kOpen + c);
    v.add(kCont + c);
  }
  for (const auto& w : words) {
    if (!w.empty()) v.add(w);
  }
  return v;
}

Vocab Vocab::from_tokens(std::vector<std::string> tokens) {
  Vocab v;
  if (tokens.size() < std::size(kSpecialTokens)) throw Error("vocabulary too small");
  for (std::size_t i = 0; i < std::size(kSpecialTokens); ++i) {
    if (tokens[i] != kSpecialTokens[i]) throw Error("vocabulary special tokens out of order");
  }
  for (auto& t : tokens) v.add(t);
  if (v.size() != tokens.size()) throw Error("vocabulary has duplicate tokens");
  return v;
}

int Vocab::word_id(const std::string& word) const {
  auto it = index_.find(word);
  if (it == index_.end() || is_special(it->second) || is_piece(it->second)) return -1;
  return it->second;
}

bool Vocab::is_piece(int id) const {
  const auto& t = token(id);
  return t.size() == 4 && (t.compare(0, 3, kOpen) == 0 || t.compare(0, 3, kCont) == 0);
}

std::vector<int> Vocab::encode_word(const std::string& word) const {
  if (int id = word_id(word); id >= 0) return {id};
  std::vector<int> out;
  for (std::size_t i = 0; i < word.size(); ++i) {
    auto it = index_.find((i == 0 ? kOpen : kCont) + word[i]);
    out.push_back(it == index_.end() ? kUnk : it->second);
  }
  return out;
}

std::vector<int> Vocab::encode(const std::vector<std::string>& words) const {
  std::vector<int> out;
  for (const auto& w : words) {
    auto ids = encode_word(w);
    out.insert(out.end(), ids.begin(), ids.end());
  }
  return out;
}

std::vector<std::string> Vocab::decode(std::span<const int> ids) const {
  std::vector<std::string> out;
  bool in_piece_word = false;
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= size()) throw Error("token id out of range");
    if (is_special(id)) {
      in_piece_word = false;
      continue;
    }
    if (is_piece(id)) {
      const auto& t = token(id);
      if (t.compare(0, 3, kOpen) == 0 || !in_piece_word) {
        out.emplace_back(1, t[3]);
      } else {
        out.back() += t[3];
      }
      in_piece_word = true;
    } else {
      out.push_back(token(id));
      in_piece_word = false;
    }
  }
  return out;
}

std::string Vocab::hash() const {
  Sha256 h;
  for (const auto& t : tokens_) h.update(t).update("\n");
  return h.hex();
}

}  // namespace kgr4
