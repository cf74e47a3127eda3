#include "kgr4/rethink_eval.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <sstream>

#include "kgr4/error.hpp"

namespace kgr4 {

using nlohmann::json;

namespace {

using NGramCounts = std::map<std::vector<std::string>, int>;

NGramCounts ngrams(const std::vector<std::string>& tokens, std::size_t n) {
  NGramCounts out;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    ++out[std::vector<std::string>(tokens.begin() + static_cast<long>(i),
                                   tokens.begin() + static_cast<long>(i + n))];
  }
  return out;
}

json metrics_json(const MetricSet& m) {
  json rep = json::object();
  for (auto [n, c] : m.rep_ngram) rep[std::to_string(n)] = c;
  json j{{"count", m.count},
         {"coverage", m.coverage},
         {"bleu4", m.bleu4},
         {"rep_ngram", rep},
         {"unk_words", m.unk_words}};
  if (!m.external.empty()) j["external"] = m.external;
  return j;
}

std::vector<std::pair<std::string, double>> flat_metrics(const MetricSet& m) {
  std::vector<std::pair<std::string, double>> out{{"count", double(m.count)},
                                                  {"coverage", m.coverage},
                                                  {"bleu4", m.bleu4}};
  for (auto [n, c] : m.rep_ngram) out.emplace_back("rep_" + std::to_string(n) + "gram", double(c));
  out.emplace_back("unk_words", double(m.unk_words));
  for (const auto& [k, v] : m.external) out.emplace_back(k, v);
  return out;
}

}  // namespace

std::size_t select_best(std::span<const double> scores, std::span<const double> lambdas) {
  if (scores.empty()) throw Error("rethink needs at least one candidate");
  if (scores.size() != lambdas.size()) throw Error("scores and lambdas differ in length");
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[best] || (scores[i] == scores[best] && lambdas[i] < lambdas[best])) {
      best = i;
    }
  }
  return best;
}

ScoredCandidate rethink_select(const ConceptSet& x, const std::vector<Candidate>& candidates,
                               const Scorer& scorer) {
  return rethink_select(x, candidates, [&](const ConceptSet& q, const Sentence& s) { return scorer.score(q, s); });
}

ScoredCandidate rethink_select(const ConceptSet& x, const std::vector<Candidate>& candidates,
                               const RelevanceFn& score) {
  if (candidates.empty()) throw Error("rethink needs at least one candidate");
  std::vector<double> scores, lambdas;
  for (const auto& c : candidates) {
    scores.push_back(score(x, c.sentence));
    lambdas.push_back(c.lambda);
  }
  const auto i = select_best(scores, lambdas);
  return {candidates[i].sentence, candidates[i].lambda, scores[i], i};
}

double coverage(const ConceptSet& x, const Sentence& s) {
  if (x.empty()) throw Error("coverage of an empty concept set");
  const std::set<std::string> lemmas(s.lemmas.begin(), s.lemmas.end());
  std::size_t hit = 0;
  for (const auto& c : x) hit += lemmas.count(c);
  return 100.0 * static_cast<double>(hit) / static_cast<double>(x.size());
}

bool has_repeated_ngram(const std::vector<std::string>& tokens, std::size_t n) {
  if (n == 0) throw Error("n-gram order must be at least 1");
  for (const auto& [gram, count] : ngrams(tokens, n)) {
    if (count >= 2) return true;
  }
  return false;
}

std::size_t rep_ngram(const std::vector<Sentence>& sentences, std::size_t n) {
  return static_cast<std::size_t>(std::count_if(sentences.begin(), sentences.end(), [n](const Sentence& s) {
    return has_repeated_ngram(s.words(), n);
  }));
}

std::size_t unk_words(const std::vector<Sentence>& sentences, const std::set<std::string>& known_vocab) {
  std::size_t count = 0;
  for (const auto& s : sentences) {
    for (const auto& w : s.words()) {
      if (!is_punctuation(w) && !known_vocab.contains(w)) {
        ++count;
        break;
      }
    }
  }
  return count;
}

double bleu4(const std::vector<Sentence>& predictions,
             const std::vector<std::vector<Sentence>>& references) {
  if (predictions.size() != references.size()) {
    throw Error("bleu4: predictions and references differ in length");
  }
  std::array<double, 4> matched{}, total{};
  double pred_len = 0.0, ref_len = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const auto hyp = predictions[i].words();
    std::vector<std::vector<std::string>> refs;
    for (const auto& r : references[i]) refs.push_back(r.words());
    if (refs.empty()) throw Error("bleu4: prediction without references");

    pred_len += double(hyp.size());
    std::size_t closest = refs.front().size();
    for (const auto& r : refs) {
      const auto d = std::abs(double(r.size()) - double(hyp.size()));
      const auto best = std::abs(double(closest) - double(hyp.size()));
      if (d < best || (d == best && r.size() < closest)) closest = r.size();
    }
    ref_len += double(closest);

    for (std::size_t n = 1; n <= 4; ++n) {
      NGramCounts max_ref;
      for (const auto& r : refs) {
        for (const auto& [g, c] : ngrams(r, n)) max_ref[g] = std::max(max_ref[g], c);
      }
      for (const auto& [g, c] : ngrams(hyp, n)) {
        auto it = max_ref.find(g);
        matched[n - 1] += std::min(c, it == max_ref.end() ? 0 : it->second);
        total[n - 1] += c;
      }
    }
  }
  double log_p = 0.0;
  for (std::size_t n = 0; n < 4; ++n) {
    if (matched[n] == 0.0) return 0.0;
    log_p += 0.25 * std::log(matched[n] / total[n]);
  }
  const double bp = pred_len > ref_len ? 1.0 : std::exp(1.0 - ref_len / pred_len);
  return bp * std::exp(log_p);
}

void ConceptGraph::connect(const std::string& a, const std::string& b) {
  if (a == b) return;
  pairs_.insert(a < b ? std::make_pair(a, b) : std::make_pair(b, a));
}

bool ConceptGraph::connected(const std::string& a, const std::string& b) const {
  return pairs_.contains(a < b ? std::make_pair(a, b) : std::make_pair(b, a));
}

ConceptGraph ConceptGraph::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  ConceptGraph g;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos) {
      throw ParseError("expected two tab-separated lemmas", line_no);
    }
    const auto a = lemmatize(line.substr(0, tab));
    const auto b = lemmatize(line.substr(tab + 1));
    if (a.empty() || b.empty()) throw ParseError("empty lemma", line_no);
    g.connect(a, b);
  }
  return g;
}

void ConceptGraph::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& [a, b] : pairs_) out << a << '\t' << b << '\n';
}

std::string_view to_string(Difficulty d) {
  switch (d) {
    case Difficulty::Easy: return "easy";
    case Difficulty::Normal: return "normal";
    case Difficulty::Hard: return "hard";
  }
  return "hard";
}

Difficulty bucket_for_connections(int connections) {
  if (connections < 0 || connections > 10) throw Error("connection count must lie in [0, 10]");
  if (connections <= 2) return Difficulty::Hard;
  if (connections <= 5) return Difficulty::Normal;
  return Difficulty::Easy;
}

int count_connections(const ConceptSet& x, const ConceptGraph& g) {
  const auto& c = x.items();
  int n = 0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    for (std::size_t j = i + 1; j < c.size(); ++j) n += g.connected(c[i], c[j]);
  }
  return n;
}

Difficulty difficulty_bucket(const ConceptSet& x, const ConceptGraph& g) {
  if (x.size() != 5) throw Error("difficulty buckets need exactly 5 concepts");
  return bucket_for_connections(count_connections(x, g));
}

MetricSet compute_metrics(const std::vector<EvalItem>& items, const std::set<std::string>& known_vocab,
                          const std::vector<std::size_t>& rep_ns) {
  MetricSet m;
  m.count = items.size();
  std::vector<Sentence> preds;
  std::vector<std::vector<Sentence>> refs;
  for (const auto& it : items) {
    m.coverage += coverage(it.concepts, it.prediction);
    preds.push_back(it.prediction);
    refs.push_back(it.references);
  }
  if (!items.empty()) m.coverage /= double(items.size());
  for (auto n : rep_ns) m.rep_ngram[n] = rep_ngram(preds, n);
  m.unk_words = unk_words(preds, known_vocab);
  bool have_refs = std::all_of(refs.begin(), refs.end(), [](const auto& r) { return !r.empty(); });
  m.bleu4 = (have_refs && !items.empty()) ? bleu4(preds, refs) : 0.0;
  return m;
}

EvalReport evaluate(const std::vector<EvalItem>& items, const std::set<std::string>& known_vocab,
                    const ConceptGraph* graph, const std::vector<std::size_t>& rep_ns) {
  EvalReport r;
  r.overall = compute_metrics(items, known_vocab, rep_ns);
  if (graph) {
    std::map<std::string, std::vector<EvalItem>> buckets;
    for (const auto& it : items) {
      if (it.concepts.size() == 5) {
        buckets[std::string(to_string(difficulty_bucket(it.concepts, *graph)))].push_back(it);
      }
    }
    for (const auto& [name, subset] : buckets) r.per_bucket[name] = compute_metrics(subset, known_vocab, rep_ns);
  }
  return r;
}

std::string EvalReport::to_json() const {
  json j{{"overall", metrics_json(overall)}};
  json buckets = json::object();
  for (const auto& [name, m] : per_bucket) buckets[name] = metrics_json(m);
  j["per_bucket"] = buckets;
  return j.dump(2);
}

std::string EvalReport::to_text() const {
  std::ostringstream out;
  out << std::fixed << std::setprecision(3);
  auto row = [&](const std::string& name, const MetricSet& m) {
    out << std::left << std::setw(10) << name;
    for (const auto& [k, v] : flat_metrics(m)) out << "  " << k << "=" << v;
    out << '\n';
  };
  row("overall", overall);
  for (const auto& [name, m] : per_bucket) row(name, m);
  return out.str();
}

std::string EvalReport::to_csv() const {
  std::ostringstream out;
  out << std::setprecision(10) << "bucket,metric,value\n";
  auto rows = [&](const std::string& name, const MetricSet& m) {
    for (const auto& [k, v] : flat_metrics(m)) out << name << ',' << k << ',' << v << '\n';
  };
  rows("overall", overall);
  for (const auto& [name, m] : per_bucket) rows(name, m);
  return out.str();
}

void attach_external_scores(EvalReport& report, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error("external scores: " + std::string(e.what()));
  }
  if (!j.is_object()) throw Error("external scores must be a JSON object");
  for (const auto& [k, v] : j.items()) {
    if (!v.is_number()) throw Error("external score '" + k + "' is not a number");
    report.overall.external[k] = v.get<double>();
  }
}

}  // namespace kgr4
