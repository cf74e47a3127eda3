#include "kgr4/retrieval.hpp"

#include <algorithm>
#include <fstream>
#include <json.hpp>
#include <numeric>

#include "kgr4/error.hpp"
#include "kgr4/hash.hpp"

namespace kgr4 {

using nlohmann::json;

std::size_t InvertedIndex::doc_freq(const std::string& lemma) const {
  auto it = postings.find(lemma);
  return it == postings.end() ? 0 : it->second.size();
}

namespace {

json to_json(const InvertedIndex& index) {
  json postings = json::object();
  for (const auto& [lemma, ids] : index.postings) postings[lemma] = ids;
  return json{{"version", InvertedIndex::kVersion},
              {"corpus_hash", index.corpus_hash},
              {"lengths", index.lengths},
              {"postings", postings}};
}

}  // namespace

std::string InvertedIndex::structural_hash() const { return sha256_hex(to_json(*this).dump()); }

InvertedIndex build_index(const Corpus& corpus) {
  InvertedIndex index;
  index.corpus_hash = corpus.content_hash();
  index.lengths.reserve(corpus.size());
  for (const auto& s : corpus.sentences()) {
    const auto id = static_cast<std::uint32_t>(s.id);
    index.lengths.push_back(static_cast<std::uint32_t>(s.tokens.size()));
    for (const auto& lemma : s.lemmas) {
      auto& list = index.postings[lemma];
      // Ids arrive in increasing order, so only the tail can repeat.
      if (list.empty() || list.back() != id) list.push_back(id);
    }
  }
  return index;
}

void save_index(const std::filesystem::path& path, const InvertedIndex& index) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << to_json(index).dump() << '\n';
}

InvertedIndex load_index(const std::filesystem::path& path, const Corpus& corpus) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("index: ") + e.what(), 0);
  }
  if (j.value("version", 0) != InvertedIndex::kVersion) throw Error("index: unsupported version");
  InvertedIndex index;
  index.corpus_hash = j.at("corpus_hash").get<std::string>();
  if (index.corpus_hash != corpus.content_hash()) {
    throw Error("index: corpus hash mismatch (index built for a different corpus)");
  }
  index.lengths = j.at("lengths").get<std::vector<std::uint32_t>>();
  for (const auto& [lemma, ids] : j.at("postings").items()) {
    index.postings[lemma] = ids.get<std::vector<std::uint32_t>>();
  }
  return index;
}

Exclusion Exclusion::self(const Sentence& target) {
  Exclusion e;
  if (!target.is_sentinel()) e.words = target.words();
  return e;
}

std::vector<std::size_t> rough_search_ids(const InvertedIndex& index, const ConceptSet& x,
                                          std::size_t pool, const Exclusion& exclude) {
  std::vector<std::uint8_t> matched(index.num_sentences(), 0);
  std::vector<std::size_t> touched;
  for (const auto& lemma : x) {
    auto it = index.postings.find(lemma);
    if (it == index.postings.end()) continue;
    for (auto id : it->second) {
      if (matched[id]++ == 0) touched.push_back(id);
    }
  }
  for (auto id : exclude.ids) {
    if (id < matched.size()) matched[id] = 0;
  }
  std::erase_if(touched, [&](std::size_t id) { return matched[id] == 0; });
  auto better = [&](std::size_t a, std::size_t b) {
    if (matched[a] != matched[b]) return matched[a] > matched[b];
    if (index.lengths[a] != index.lengths[b]) return index.lengths[a] < index.lengths[b];
    return a < b;
  };
  std::sort(touched.begin(), touched.end(), better);
  if (touched.size() > pool) touched.resize(pool);
  return touched;
}

std::vector<Sentence> rough_search(const InvertedIndex& index, const Corpus& corpus,
                                   const ConceptSet& x, std::size_t pool,
                                   const Exclusion& exclude) {
  if (corpus.content_hash() != index.corpus_hash) throw Error("index does not match corpus");
  std::vector<Sentence> out;
  // Over-fetch so text-based exclusion still fills the pool.
  std::size_t want = pool;
  while (true) {
    auto ids = rough_search_ids(index, x, want, exclude);
    out.clear();
    for (auto id : ids) {
      const Sentence& s = corpus.at(id);
      if (exclude.words && s.tokens.size() == exclude.words->size() && s.words() == *exclude.words) {
        continue;
      }
      out.push_back(s);
      if (out.size() == pool) break;
    }
    if (out.size() == pool || ids.size() < want) break;
    want += pool;
  }
  return out;
}

PrototypeSet retrieve_prototypes(const InvertedIndex& index, const Corpus& corpus,
                                 const ConceptSet& x, const RelevanceFn* relevance,
                                 std::size_t pool, const Exclusion& exclude) {
  if (pool < 3) throw Error("candidate pool must be at least 3");
  auto candidates = rough_search(index, corpus, x, pool, exclude);
  std::vector<double> scores(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (relevance != nullptr) {
      scores[i] = (*relevance)(x, candidates[i]);
    } else {
      std::size_t hits = 0;
      for (const auto& c : x) {
        hits += std::find(candidates[i].lemmas.begin(), candidates[i].lemmas.end(), c) !=
                candidates[i].lemmas.end();
      }
      scores[i] = static_cast<double>(hits) / static_cast<double>(x.size());
    }
  }
  std::vector<std::size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  PrototypeSet out;
  for (std::size_t slot = 0; slot < 3; ++slot) {
    if (slot < order.size()) {
      out.prototypes[slot] = candidates[order[slot]];
      out.scores[slot] = scores[order[slot]];
    } else {
      out.prototypes[slot] = sentinel_sentence();
      out.scores[slot] = 0.0;
    }
  }
  return out;
}

}  // namespace kgr4
