#include "kgr4/synth.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <set>
#include <string>

#include "kgr4/error.hpp"

namespace kgr4 {

namespace {

struct Action {
  std::string verb;
  std::vector<std::string> objects;
  std::vector<std::string> places;
  std::vector<std::string> tools;
};

const std::vector<Action>& actions() {
  static const std::vector<Action> kActions = {
      {"wash", {"dish", "plate", "car", "cup", "dog"}, {"sink", "kitchen", "garage", "yard"}, {"soap", "sponge", "towel"}},
      {"throw", {"ball", "frisbee", "stick"}, {"park", "beach", "field", "yard"}, {}},
      {"cut", {"bread", "cake", "tomato", "pizza", "paper"}, {"kitchen", "table"}, {"knife"}},
      {"ride", {"bike", "horse", "skateboard"}, {"street", "park", "beach", "road"}, {}},
      {"read", {"book", "newspaper", "letter", "map"}, {"library", "bench", "park", "cafe"}, {}},
      {"play", {"guitar", "piano", "drum", "violin"}, {"stage", "park", "room", "street"}, {}},
      {"kick", {"ball"}, {"field", "park", "yard", "street"}, {}},
      {"eat", {"apple", "sandwich", "pizza", "soup", "cake"}, {"table", "kitchen", "cafe", "park"}, {"fork", "spoon"}},
      {"paint", {"picture", "wall", "fence", "house"}, {"room", "yard", "garden"}, {"brush"}},
      {"climb", {"tree", "rock", "wall", "hill"}, {"park", "forest", "mountain"}, {"rope"}},
      {"cook", {"soup", "egg", "pasta", "rice", "meat"}, {"kitchen", "restaurant"}, {"pan", "pot"}},
      {"catch", {"ball", "frisbee", "fish"}, {"park", "beach", "river", "lake"}, {"net"}},
      {"carry", {"bag", "box", "basket", "bucket"}, {"street", "station", "farm"}, {}},
      {"drink", {"coffee", "tea", "water", "juice"}, {"cafe", "table", "kitchen"}, {"glass"}},
      {"fix", {"car", "bike", "fence", "sink"}, {"garage", "yard", "street"}, {"wrench", "hammer"}},
      {"feed", {"dog", "cat", "horse", "duck", "bird"}, {"farm", "yard", "park", "lake"}, {"bucket"}},
      {"sweep", {"floor", "sidewalk"}, {"kitchen", "station", "shop"}, {"broom"}},
      {"pour", {"water", "milk", "coffee", "juice"}, {"kitchen", "cafe", "table"}, {"bottle"}},
  };
  return kActions;
}

const std::vector<std::string> kPeople = {"man",     "woman",   "boy",    "girl",  "chef",
                                          "farmer",  "child",   "student", "player", "artist"};

const std::map<std::string, std::string>& place_prep() {
  static const std::map<std::string, std::string> kPrep = {
      {"sink", "in"},      {"kitchen", "in"},  {"garage", "in"},    {"yard", "in"},
      {"park", "in"},      {"beach", "on"},    {"field", "on"},     {"table", "at"},
      {"street", "on"},    {"road", "on"},     {"library", "in"},   {"bench", "on"},
      {"cafe", "at"},      {"stage", "on"},    {"room", "in"},      {"garden", "in"},
      {"forest", "in"},    {"mountain", "on"}, {"restaurant", "in"}, {"river", "near"},
      {"lake", "near"},    {"station", "at"},  {"farm", "on"},      {"shop", "in"},
  };
  return kPrep;
}

const std::set<std::string> kMass = {"bread", "soup", "rice", "meat", "pasta", "water",
                                     "milk",  "coffee", "tea", "juice", "paper", "fish"};

bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

bool is_vowel(char c) { return std::string_view("aeiou").find(c) != std::string_view::npos; }

std::string plural(const std::string& noun) {
  static const std::map<std::string, std::string> kIrregular = {
      {"man", "men"}, {"woman", "women"}, {"child", "children"}, {"knife", "knives"}};
  if (auto it = kIrregular.find(noun); it != kIrregular.end()) return it->second;
  if (kMass.contains(noun)) return noun;
  if (ends_with(noun, "s") || ends_with(noun, "sh") || ends_with(noun, "ch") || ends_with(noun, "x") ||
      ends_with(noun, "o")) {
    return noun + "es";
  }
  if (noun.size() > 1 && noun.back() == 'y' && !is_vowel(noun[noun.size() - 2])) {
    return noun.substr(0, noun.size() - 1) + "ies";
  }
  return noun + "s";
}

std::string third_person(const std::string& verb) {
  if (ends_with(verb, "sh") || ends_with(verb, "ch") || ends_with(verb, "x")) return verb + "es";
  if (verb.size() > 1 && verb.back() == 'y' && !is_vowel(verb[verb.size() - 2])) {
    return verb.substr(0, verb.size() - 1) + "ies";
  }
  return verb + "s";
}

std::string gerund(const std::string& verb) {
  static const std::set<std::string> kDouble = {"cut", "put", "run", "swim", "sit"};
  if (kDouble.contains(verb)) return verb + verb.back() + "ing";
  if (verb.size() > 2 && verb.back() == 'e' && verb[verb.size() - 2] != 'e') {
    return verb.substr(0, verb.size() - 1) + "ing";
  }
  return verb + "ing";
}

std::string article(const std::string& noun) {
  if (kMass.contains(noun)) return "some";
  return is_vowel(noun.front()) ? "an" : "a";
}

std::string capitalize(std::string s) {
  if (!s.empty()) s.front() = static_cast<char>(std::toupper(static_cast<unsigned char>(s.front())));
  return s;
}

struct Triple {
  std::size_t action;
  std::string object;
  std::string place;

  friend auto operator<=>(const Triple&, const Triple&) = default;
};

// A fully specified event; tool may be empty.
struct Event {
  Triple triple;
  std::string person;
  std::string tool;
};

template <typename T>
const T& pick(const std::vector<T>& v, Rng& rng) {
  return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
}

// Renders one event with a randomly chosen template.
std::string realize(const Event& e, Rng& rng) {
  const Action& a = actions()[e.triple.action];
  const std::string& obj = e.triple.object;
  const std::string tail = place_prep().at(e.triple.place) + " the " + e.triple.place + ".";
  std::vector<int> templates{0, 1, 2};
  if (!e.tool.empty()) templates = {3, 4};
  switch (pick(templates, rng)) {
    case 0:
      return capitalize(article(e.person)) + " " + e.person + " " + third_person(a.verb) + " the " + obj +
             " " + tail;
    case 1:
      return "The " + e.person + " is " + gerund(a.verb) + " " + article(obj) + " " + obj + " " + tail;
    case 2:
      return "Two " + plural(e.person) + " " + a.verb + " the " + plural(obj) + " " + tail;
    case 3:
      return capitalize(article(e.person)) + " " + e.person + " " + third_person(a.verb) + " the " + obj +
             " with " + article(e.tool) + " " + e.tool + " " + tail;
    default:
      return "The " + e.person + " uses " + article(e.tool) + " " + e.tool + " to " + a.verb + " the " +
             obj + " " + tail;
  }
}

std::vector<Triple> all_triples() {
  std::vector<Triple> out;
  for (std::size_t i = 0; i < actions().size(); ++i) {
    for (const auto& o : actions()[i].objects) {
      for (const auto& p : actions()[i].places) out.push_back({i, o, p});
    }
  }
  return out;
}

Event random_event(const std::vector<Triple>& triples, double tool_prob, Rng& rng) {
  Event e{pick(triples, rng), pick(kPeople, rng), {}};
  const auto& tools = actions()[e.triple.action].tools;
  if (!tools.empty() && std::bernoulli_distribution(tool_prob)(rng)) e.tool = pick(tools, rng);
  return e;
}

// Concepts named by an event: verb, object and place, plus the person when
// asked for and the tool when present.
ConceptSet concepts_of(const Event& e, bool with_person) {
  std::vector<std::string> raw{actions()[e.triple.action].verb, e.triple.object, e.triple.place};
  if (with_person) raw.push_back(e.person);
  if (!e.tool.empty()) raw.push_back(e.tool);
  return ConceptSet::from(raw);
}

Sentence checked_sentence(const std::string& text, const ConceptSet& must_cover, std::size_t id = 0) {
  Sentence s = analyze(text, id);
  for (const auto& c : must_cover) {
    if (std::find(s.lemmas.begin(), s.lemmas.end(), c) == s.lemmas.end()) {
      throw Error("toy sentence '" + text + "' does not lemmatize to concept '" + c + "'");
    }
  }
  return s;
}

// References for a concept set: distinct realizations of events sharing the
// concepts (person and tool vary when not part of the set).
std::vector<Sentence> references_for(const Event& base, bool with_person, std::size_t n, Rng& rng) {
  const ConceptSet x = concepts_of(base, with_person);
  std::vector<Sentence> out;
  std::set<std::string> seen;
  for (std::size_t attempt = 0; out.size() < n && attempt < 20 * n; ++attempt) {
    Event e = base;
    if (!with_person) e.person = pick(kPeople, rng);
    const std::string text = realize(e, rng);
    if (seen.insert(text).second) out.push_back(checked_sentence(text, x));
  }
  return out;
}

struct Split {
  std::vector<Triple> seen;
  std::vector<Triple> held_out;
};

Split split_triples(const ToyWorldConfig& config) {
  Rng rng(config.seed);
  auto triples = all_triples();
  std::shuffle(triples.begin(), triples.end(), rng);
  const auto held = static_cast<std::size_t>(config.held_out_fraction * double(triples.size()));
  Split s;
  s.held_out.assign(triples.begin(), triples.begin() + static_cast<long>(held));
  s.seen.assign(triples.begin() + static_cast<long>(held), triples.end());
  std::sort(s.held_out.begin(), s.held_out.end());
  std::sort(s.seen.begin(), s.seen.end());
  return s;
}

}  // namespace

ToyWorld make_toy_world(const ToyWorldConfig& config) {
  if (config.held_out_fraction <= 0.0 || config.held_out_fraction >= 1.0) {
    throw Error("held-out fraction must lie in (0, 1)");
  }
  const Split split = split_triples(config);
  Rng rng(config.seed + 1);
  ToyWorld w;

  for (std::size_t i = 0; i < config.corpus_size; ++i) {
    const Event e = random_event(split.seen, 0.3, rng);
    w.corpus.add(checked_sentence(realize(e, rng), concepts_of(e, true)));
  }

  std::set<ConceptSet> used;
  for (std::size_t i = 0, attempts = 0; i < config.train_sets && attempts < 50 * config.train_sets; ++attempts) {
    const Event e = random_event(split.seen, 0.3, rng);
    const bool with_person = std::bernoulli_distribution(0.4)(rng);
    const ConceptSet x = concepts_of(e, with_person);
    if (!used.insert(x).second) continue;
    const auto n = std::uniform_int_distribution<std::size_t>(1, 3)(rng);
    for (auto& s : references_for(e, with_person, n, rng)) w.train.push_back({x, std::move(s)});
    ++i;
  }

  for (std::size_t i = 0, attempts = 0; i < config.test_sets && attempts < 50 * config.test_sets; ++attempts) {
    // Sizes 3, 4 and 5 in roughly equal shares; size 5 needs a tool.
    const int size = std::uniform_int_distribution<int>(3, 5)(rng);
    Event e = random_event(split.held_out, size == 5 ? 1.0 : 0.0, rng);
    if (size == 5 && e.tool.empty()) continue;
    const bool with_person = size >= 4;
    if (size == 4 && !e.tool.empty()) e.tool.clear();
    const ConceptSet x = concepts_of(e, with_person);
    if (!used.insert(x).second) continue;
    w.test.push_back({x, references_for(e, with_person, 3, rng)});
    ++i;
  }

  // One-hop graph: compatible pairs, each kept with graph_edge_prob.
  std::bernoulli_distribution keep(config.graph_edge_prob);
  for (const auto& a : actions()) {
    for (const auto& o : a.objects) {
      if (keep(rng)) w.graph.connect(a.verb, o);
      for (const auto& p : a.places) {
        if (keep(rng)) w.graph.connect(o, p);
      }
      for (const auto& t : a.tools) {
        if (keep(rng)) w.graph.connect(o, t);
      }
    }
    for (const auto& p : a.places) {
      if (keep(rng)) w.graph.connect(a.verb, p);
    }
    for (const auto& t : a.tools) {
      if (keep(rng)) w.graph.connect(a.verb, t);
    }
    for (const auto& person : kPeople) {
      if (keep(rng) && keep(rng)) w.graph.connect(person, a.verb);
    }
  }
  return w;
}

std::vector<Sentence> sample_toy_sentences(const ToyWorldConfig& config, std::size_t n, std::uint64_t seed) {
  const Split split = split_triples(config);
  Rng rng(seed);
  std::vector<Sentence> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Event e = random_event(split.seen, 0.3, rng);
    out.push_back(checked_sentence(realize(e, rng), concepts_of(e, true), i));
  }
  return out;
}

void write_toy_world(const std::filesystem::path& dir, const ToyWorld& world) {
  std::filesystem::create_directories(dir);
  std::ofstream corpus(dir / "corpus.txt");
  if (!corpus) throw IoError("cannot write " + (dir / "corpus.txt").string());
  for (const auto& s : world.corpus.sentences()) corpus << s.text << '\n';
  corpus.close();
  write_pairs(dir / "train.jsonl", world.train);
  std::vector<ConceptPair> test;
  for (const auto& item : world.test) {
    for (const auto& r : item.references) test.push_back({item.concepts, r});
  }
  write_pairs(dir / "test.jsonl", test);
  world.graph.save(dir / "graph.tsv");
}

}  // namespace kgr4
