#include "kgr4/corpus.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "kgr4/error.hpp"
#include "kgr4/hash.hpp"

namespace kgr4 {

using nlohmann::json;

ConceptSet ConceptSet::from(const std::vector<std::string>& raw, Provenance provenance) {
  ConceptSet out;
  out.provenance_ = provenance;
  for (const auto& r : raw) {
    std::string c = lemmatize(r);
    if (!c.empty()) out.items_.push_back(std::move(c));
  }
  std::sort(out.items_.begin(), out.items_.end());
  out.items_.erase(std::unique(out.items_.begin(), out.items_.end()), out.items_.end());
  if (out.items_.empty()) throw Error("concept set is empty");
  if (out.items_.size() > kMaxSize) {
    throw Error("concept set has " + std::to_string(out.items_.size()) + " concepts (max " +
                std::to_string(kMaxSize) + ")");
  }
  return out;
}

ConceptSet ConceptSet::parse(std::string_view csv) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : csv) {
    if (c == ',') {
      parts.push_back(cur);
      cur.clear();
    } else if (c != ' ' && c != '\t') {
      cur += c;
    }
  }
  parts.push_back(cur);
  return from(parts);
}

bool ConceptSet::contains(std::string_view lemma) const {
  return std::binary_search(items_.begin(), items_.end(), lemma,
                            [](auto a, auto b) { return std::string_view(a) < std::string_view(b); });
}

std::string ConceptSet::join(std::string_view sep) const {
  std::string out;
  for (std::size_t i = 0; i < items_.size(); ++i) {
    if (i) out += sep;
    out += items_[i];
  }
  return out;
}

std::string_view to_string(InstanceKind kind) {
  switch (kind) {
    case InstanceKind::Pretrain: return "PRETRAIN";
    case InstanceKind::Augmented: return "AUGMENTED";
    case InstanceKind::Edit: return "EDIT";
    case InstanceKind::Copy: return "COPY";
  }
  return "EDIT";
}

InstanceKind parse_instance_kind(std::string_view s) {
  if (s == "PRETRAIN") return InstanceKind::Pretrain;
  if (s == "AUGMENTED") return InstanceKind::Augmented;
  if (s == "EDIT") return InstanceKind::Edit;
  if (s == "COPY") return InstanceKind::Copy;
  throw Error("unknown instance kind '" + std::string(s) + "'");
}

const Sentence& Corpus::add(Sentence s) {
  s.id = sentences_.size();
  if (s.key.empty()) s.key = std::to_string(s.id);
  for (const auto& w : s.words()) vocab_.insert(w);
  sentences_.push_back(std::move(s));
  return sentences_.back();
}

std::string Corpus::content_hash() const {
  Sha256 h;
  for (const auto& s : sentences_) {
    h.update(s.key).update(std::string_view("\x1f", 1)).update(s.text).update("\n");
  }
  return h.hex();
}

CorpusFormat parse_corpus_format(std::string_view name) {
  if (name == "jsonl") return CorpusFormat::Jsonl;
  if (name == "plain-lines" || name == "plain") return CorpusFormat::PlainLines;
  if (name == "commongen-pairs") return CorpusFormat::CommonGenPairs;
  throw Error("unknown corpus format '" + std::string(name) + "'");
}

namespace {

template <typename Fn>
void for_each_line(const std::filesystem::path& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    fn(line, line_no);
  }
  if (in.bad()) throw IoError("read failed for " + path.string());
}

json parse_object(const std::string& line, std::size_t line_no) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("invalid JSON: ") + e.what(), line_no);
  }
  if (!j.is_object()) throw ParseError("expected a JSON object", line_no);
  return j;
}

std::string require_string(const json& j, const char* field, std::size_t line_no) {
  auto it = j.find(field);
  if (it == j.end() || !it->is_string()) {
    throw ParseError(std::string("missing string field '") + field + "'", line_no);
  }
  return it->get<std::string>();
}

ConceptPair parse_pair(const std::string& line, std::size_t line_no) {
  json j = parse_object(line, line_no);
  auto it = j.find("concepts");
  if (it == j.end() || !it->is_array()) throw ParseError("missing array field 'concepts'", line_no);
  std::vector<std::string> raw;
  for (const auto& c : *it) {
    if (!c.is_string()) throw ParseError("concepts must be strings", line_no);
    raw.push_back(c.get<std::string>());
  }
  ConceptPair p;
  try {
    p.concepts = ConceptSet::from(raw);
  } catch (const Error& e) {
    throw ParseError(e.what(), line_no);
  }
  std::string target = require_string(j, "target", line_no);
  if (tokenize(target).empty()) throw ParseError("empty target", line_no);
  p.target = analyze(target);
  return p;
}

void write_lines(const std::filesystem::path& path, const std::vector<std::string>& lines) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& l : lines) out << l << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace

Corpus ingest(const std::filesystem::path& path, CorpusFormat format) {
  Corpus corpus;
  std::set<std::string> keys;
  for_each_line(path, [&](const std::string& line, std::size_t line_no) {
    switch (format) {
      case CorpusFormat::PlainLines:
        corpus.add(analyze(line));
        break;
      case CorpusFormat::Jsonl: {
        json j = parse_object(line, line_no);
        std::string key = require_string(j, "id", line_no);
        std::string text = require_string(j, "text", line_no);
        if (tokenize(text).empty()) throw ParseError("empty text", line_no);
        if (!keys.insert(key).second) throw ParseError("duplicate id '" + key + "'", line_no);
        corpus.add(analyze(text, 0, key));
        break;
      }
      case CorpusFormat::CommonGenPairs:
        corpus.add(parse_pair(line, line_no).target);
        break;
    }
  });
  return corpus;
}

std::vector<ConceptPair> ingest_pairs(const std::filesystem::path& path) {
  std::vector<ConceptPair> out;
  for_each_line(path, [&](const std::string& line, std::size_t line_no) {
    out.push_back(parse_pair(line, line_no));
  });
  return out;
}

void write_pairs(const std::filesystem::path& path, const std::vector<ConceptPair>& pairs) {
  std::vector<std::string> lines;
  lines.reserve(pairs.size());
  for (const auto& p : pairs) {
    lines.push_back(json{{"concepts", p.concepts.items()}, {"target", p.target.text}}.dump());
  }
  write_lines(path, lines);
}

void write_corpus(const std::filesystem::path& path, const Corpus& corpus) {
  std::vector<std::string> lines;
  lines.reserve(corpus.size());
  for (const auto& s : corpus.sentences()) {
    lines.push_back(json{{"id", s.key.empty() ? std::to_string(s.id) : s.key}, {"text", s.text}}.dump());
  }
  write_lines(path, lines);
}

ConceptSet extract_pseudo_concepts(const Sentence& s, std::size_t k, Rng& rng) {
  if (k < 1 || k > ConceptSet::kMaxSize) {
    throw Error("pseudo-concept count must be in [1, " + std::to_string(ConceptSet::kMaxSize) +
                "]");
  }
  std::vector<std::string> eligible;
  for (std::size_t i = 0; i < s.lemmas.size(); ++i) {
    if (!is_content_tag(s.tags[i])) continue;
    if (std::find(eligible.begin(), eligible.end(), s.lemmas[i]) == eligible.end()) {
      eligible.push_back(s.lemmas[i]);
    }
  }
  if (eligible.empty()) throw Error("no content words");
  const std::size_t take = std::min(k, eligible.size());
  // Partial Fisher-Yates.
  for (std::size_t i = 0; i < take; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, eligible.size() - 1);
    std::swap(eligible[i], eligible[pick(rng)]);
  }
  eligible.resize(take);
  return ConceptSet::from(eligible, ConceptSet::Provenance::Pseudo);
}

std::vector<TrainingInstance> build_pretrain_set(const Corpus& ext, std::size_t k, Rng& rng,
                                                 const PrototypeProvider& prototypes) {
  if (ext.empty()) throw Error("pretraining corpus is empty");
  std::vector<TrainingInstance> out;
  out.reserve(ext.size());
  for (const auto& s : ext.sentences()) {
    TrainingInstance inst;
    try {
      inst.concepts = extract_pseudo_concepts(s, k, rng);
    } catch (const Error& e) {
      spdlog::warn("pretrain set: skipping sentence {}: {}", s.key, e.what());
      continue;
    }
    inst.prototypes = prototypes(inst.concepts, s);
    inst.target = s;
    inst.kind = InstanceKind::Pretrain;
    out.push_back(std::move(inst));
  }
  return out;
}

std::vector<TrainingInstance> as_edit_instances(const std::vector<ConceptPair>& train,
                                                const std::vector<PrototypeSlots>& prototypes_of) {
  if (train.size() != prototypes_of.size()) {
    throw Error("every training pair needs a prototype set");
  }
  std::vector<TrainingInstance> out;
  out.reserve(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) {
    out.push_back({train[i].concepts, prototypes_of[i], train[i].target, InstanceKind::Edit});
  }
  return out;
}

std::vector<TrainingInstance> build_retrospective_augmentation(
    const std::vector<ConceptPair>& train, const std::vector<PrototypeSlots>& prototypes_of,
    std::size_t k, Rng& rng, const PrototypeProvider& augmented_prototypes) {
  std::vector<TrainingInstance> out = as_edit_instances(train, prototypes_of);
  for (std::size_t i = 0; i < train.size(); ++i) {
    const Sentence& p3 = prototypes_of[i][2];
    if (p3.is_sentinel() || p3.empty()) continue;
    TrainingInstance inst;
    try {
      inst.concepts = extract_pseudo_concepts(p3, k, rng);
    } catch (const Error&) {
      continue;
    }
    inst.prototypes = augmented_prototypes(inst.concepts, p3);
    inst.target = p3;
    inst.kind = InstanceKind::Augmented;
    out.push_back(std::move(inst));
  }
  return out;
}

std::string serialize_instance(const TrainingInstance& inst) {
  json protos = json::array();
  for (const auto& p : inst.prototypes) protos.push_back(p.text);
  return json{{"kind", to_string(inst.kind)},
              {"concepts", inst.concepts.items()},
              {"prototypes", protos},
              {"target", inst.target.text}}
      .dump();
}

TrainingInstance deserialize_instance(std::string_view line, std::size_t line_no) {
  json j = parse_object(std::string(line), line_no);
  TrainingInstance inst;
  try {
    inst.kind = parse_instance_kind(require_string(j, "kind", line_no));
    inst.concepts = ConceptSet::from(j.at("concepts").get<std::vector<std::string>>());
    auto protos = j.at("prototypes").get<std::vector<std::string>>();
    if (protos.size() != 3) throw ParseError("expected exactly 3 prototypes", line_no);
    for (std::size_t i = 0; i < 3; ++i) {
      inst.prototypes[i] = tokenize(protos[i]).empty() ? sentinel_sentence() : analyze(protos[i]);
    }
    inst.target = analyze(require_string(j, "target", line_no));
  } catch (const ParseError&) {
    throw;
  } catch (const std::exception& e) {
    throw ParseError(e.what(), line_no);
  }
  return inst;
}

void write_dataset(const std::filesystem::path& path, const std::vector<TrainingInstance>& data) {
  std::vector<std::string> lines;
  lines.reserve(data.size());
  for (const auto& inst : data) lines.push_back(serialize_instance(inst));
  write_lines(path, lines);
}

std::vector<TrainingInstance> read_dataset(const std::filesystem::path& path) {
  std::vector<TrainingInstance> out;
  for_each_line(path, [&](const std::string& line, std::size_t line_no) {
    out.push_back(deserialize_instance(line, line_no));
  });
  return out;
}

}  // namespace kgr4
