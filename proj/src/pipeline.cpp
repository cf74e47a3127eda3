#include "kgr4/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

#include "kgr4/error.hpp"
#include "kgr4/hash.hpp"
#include "kgr4/retrieval.hpp"

namespace kgr4 {

using nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------- toggles

Toggles Toggles::none() {
  Toggles t;
  for (const auto& n : names()) t.set(n, false);
  return t;
}

const std::vector<std::string>& Toggles::names() {
  static const std::vector<std::string> kNames = {"pretraining",
                                                  "retrieval",
                                                  "retrospective_training",
                                                  "retrospective_augmentation",
                                                  "refine",
                                                  "rethink"};
  return kNames;
}

namespace {

bool* toggle_ptr(Toggles& t, const std::string& name) {
  if (name == "pretraining") return &t.pretraining;
  if (name == "retrieval") return &t.retrieval;
  if (name == "retrospective_training") return &t.retrospective_training;
  if (name == "retrospective_augmentation") return &t.retrospective_augmentation;
  if (name == "refine") return &t.refine;
  if (name == "rethink") return &t.rethink;
  throw Error("unknown stage toggle '" + name + "'");
}

}  // namespace

void Toggles::set(const std::string& name, bool on) { *toggle_ptr(*this, name) = on; }

bool Toggles::get(const std::string& name) const {
  Toggles copy = *this;
  return *toggle_ptr(copy, name);
}

std::vector<std::string> Toggles::enabled() const {
  std::vector<std::string> out;
  for (const auto& n : names()) {
    if (get(n)) out.push_back(n);
  }
  return out;
}

// ---------------------------------------------------------------- config

namespace {

std::string format_name(CorpusFormat f) {
  switch (f) {
    case CorpusFormat::Jsonl: return "jsonl";
    case CorpusFormat::PlainLines: return "plain-lines";
    case CorpusFormat::CommonGenPairs: return "commongen-pairs";
  }
  return "plain-lines";
}

json seq2seq_json(const Seq2SeqConfig& c) {
  return {{"encoder_layers", c.encoder_layers}, {"decoder_layers", c.decoder_layers},
          {"heads", c.heads},                   {"dim", c.dim},
          {"ff_dim", c.ff_dim},                 {"max_src_len", c.max_src_len},
          {"max_tgt_len", c.max_tgt_len},       {"max_segments", c.max_segments},
          {"tied_output", c.tied_output},       {"copy_attention", c.copy_attention},
          {"seed", c.seed}};
}

Seq2SeqConfig seq2seq_from(const json& j) {
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

json fit_json(const FitConfig& c) {
  return {{"steps", c.steps},   {"batch_size", c.batch_size},         {"eval_every", c.eval_every},
          {"patience", c.patience}, {"lr", c.lr}, {"holdout_fraction", c.holdout_fraction},
          {"max_holdout", c.max_holdout}};
}

FitConfig fit_from(const json& j) {
  FitConfig c;
  c.steps = j.at("steps");
  c.batch_size = j.at("batch_size");
  c.eval_every = j.at("eval_every");
  c.patience = j.at("patience");
  c.lr = j.at("lr");
  c.holdout_fraction = j.at("holdout_fraction");
  c.max_holdout = j.at("max_holdout");
  return c;
}

json scorer_json(const ScorerConfig& c) {
  return {{"embed_dim", c.embed_dim}, {"hidden_dim", c.hidden_dim}, {"max_len", c.max_len},
          {"seed", c.seed},           {"steps", c.steps},           {"batch_size", c.batch_size},
          {"eval_every", c.eval_every}, {"patience", c.patience},   {"lr", c.lr},
          {"holdout_fraction", c.holdout_fraction}};
}

ScorerConfig scorer_from(const json& j) {
  ScorerConfig c;
  c.embed_dim = j.at("embed_dim");
  c.hidden_dim = j.at("hidden_dim");
  c.max_len = j.at("max_len");
  c.seed = j.at("seed");
  c.steps = j.at("steps");
  c.batch_size = j.at("batch_size");
  c.eval_every = j.at("eval_every");
  c.patience = j.at("patience");
  c.lr = j.at("lr");
  c.holdout_fraction = j.at("holdout_fraction");
  return c;
}

json spec_json(const PerturbationSpec& s) {
  return {{"instance_rate", s.instance_rate},
          {"misspell_share", s.misspell_share},
          {"char_removal_rate", s.char_removal_rate},
          {"space_removal_rate", s.space_removal_rate},
          {"rep_span_min", s.rep_span_min},
          {"rep_span_max", s.rep_span_max},
          {"seed", s.seed}};
}

PerturbationSpec spec_from(const json& j) {
  PerturbationSpec s;
  s.instance_rate = j.at("instance_rate");
  s.misspell_share = j.at("misspell_share");
  s.char_removal_rate = j.at("char_removal_rate");
  s.space_removal_rate = j.at("space_removal_rate");
  s.rep_span_min = j.at("rep_span_min");
  s.rep_span_max = j.at("rep_span_max");
  s.seed = j.at("seed");
  return s;
}

// Rejects keys of `given` that the defaults do not have.
void check_keys(const json& given, const json& defaults, const std::string& prefix) {
  if (!given.is_object()) return;
  for (const auto& [k, v] : given.items()) {
    const std::string path = prefix.empty() ? k : prefix + "." + k;
    if (!defaults.contains(k)) throw Error("unknown config key '" + path + "'");
    if (v.is_object() && defaults.at(k).is_object()) check_keys(v, defaults.at(k), path);
  }
}

fs::path resolve(const json& j, const char* key, const fs::path& base) {
  const auto s = j.at(key).get<std::string>();
  if (s.empty()) return {};
  fs::path p(s);
  return (p.is_absolute() || base.empty() ? p : base / p).lexically_normal();
}

}  // namespace

json default_config_json() {
  PipelineConfig c;
  c.refiner_model.max_segments = 1;
  return c.to_json();
}

json PipelineConfig::to_json() const {
  json toggles_json = json::object();
  for (const auto& n : Toggles::names()) toggles_json[n] = toggles.get(n);
  return {{"workdir", workdir.string()},
          {"data",
           {{"corpus", corpus.string()},
            {"corpus_format", format_name(corpus_format)},
            {"train", train.string()},
            {"test", test.string()},
            {"graph", graph.string()}}},
          {"seed", seed},
          {"pseudo_concepts", pseudo_concepts},
          {"neg_ratio", neg_ratio},
          {"pool", pool},
          {"scorer", scorer_json(scorer)},
          {"model", seq2seq_json(model)},
          {"pretrain", fit_json(pretrain)},
          {"finetune", fit_json(finetune)},
          {"refiner", {{"model", seq2seq_json(refiner_model)}, {"fit", fit_json(refiner_fit)}}},
          {"perturbation", spec_json(perturbation)},
          {"lambdas", lambdas},
          {"lambda_default", lambda_default},
          {"decode", {{"beam_size", decode.beam_size}, {"max_len", decode.max_len}}},
          {"toggles", toggles_json},
          {"rep_ngram_orders", rep_ns}};
}

PipelineConfig PipelineConfig::from_json(const json& given, const fs::path& base_dir) {
  const json defaults = default_config_json();
  check_keys(given, defaults, "");
  json j = defaults;
  j.merge_patch(given);
  PipelineConfig c;
  try {
    c.workdir = resolve(j, "workdir", base_dir);
    const json& d = j.at("data");
    c.corpus = resolve(d, "corpus", base_dir);
    c.corpus_format = parse_corpus_format(d.at("corpus_format").get<std::string>());
    c.train = resolve(d, "train", base_dir);
    c.test = resolve(d, "test", base_dir);
    c.graph = resolve(d, "graph", base_dir);
    c.seed = j.at("seed");
    c.pseudo_concepts = j.at("pseudo_concepts");
    c.neg_ratio = j.at("neg_ratio");
    c.pool = j.at("pool");
    c.scorer = scorer_from(j.at("scorer"));
    c.model = seq2seq_from(j.at("model"));
    c.pretrain = fit_from(j.at("pretrain"));
    c.finetune = fit_from(j.at("finetune"));
    c.refiner_model = seq2seq_from(j.at("refiner").at("model"));
    c.refiner_fit = fit_from(j.at("refiner").at("fit"));
    c.perturbation = spec_from(j.at("perturbation"));
    c.lambdas = j.at("lambdas").get<std::vector<double>>();
    c.lambda_default = j.at("lambda_default");
    c.decode.beam_size = j.at("decode").at("beam_size");
    c.decode.max_len = j.at("decode").at("max_len");
    for (const auto& n : Toggles::names()) c.toggles.set(n, j.at("toggles").at(n).get<bool>());
    c.rep_ns = j.at("rep_ngram_orders").get<std::vector<std::size_t>>();
  } catch (const json::exception& e) {
    throw Error(std::string("invalid config: ") + e.what());
  }
  return c;
}

std::string PipelineConfig::hash() const {
  // Location-independent: data files enter by content, the workdir not at all.
  json j = to_json();
  j.erase("workdir");
  for (const char* key : {"corpus", "train", "test", "graph"}) {
    const fs::path p = j["data"][key].get<std::string>();
    j["data"][key] = p.empty() ? std::string() : sha256_file(p);
  }
  return sha256_hex(j.dump()).substr(0, 16);
}

void PipelineConfig::validate() const {
  for (const auto& [name, p] : {std::pair{"corpus", corpus}, {"train", train}, {"test", test}}) {
    if (p.empty()) throw Error(std::string("config: data.") + name + " is not set");
    if (!fs::exists(p)) throw Error(std::string("config: data.") + name + " not found: " + p.string());
  }
  if (!graph.empty() && !fs::exists(graph)) throw Error("config: data.graph not found: " + graph.string());
  if (pseudo_concepts < 1 || pseudo_concepts > ConceptSet::kMaxSize) {
    throw Error("config: pseudo_concepts must lie in [1, 5]");
  }
  if (neg_ratio < 1) throw Error("config: neg_ratio must be at least 1");
  if (pool < 3) throw Error("config: pool must be at least 3");
  if (lambdas.empty()) throw Error("config: lambdas is empty");
  for (double l : lambdas) {
    if (!(l >= 0.0 && l <= 1.0)) throw Error("config: lambdas must lie in [0, 1]");
  }
  if (!(lambda_default >= 0.0 && lambda_default <= 1.0)) throw Error("config: lambda_default must lie in [0, 1]");
  if (decode.beam_size < 1 || decode.max_len < 1) throw Error("config: invalid decode settings");
  perturbation.validate();
  for (auto n : rep_ns) {
    if (n < 1) throw Error("config: rep_ngram_orders must be positive");
  }
}

std::vector<double> PipelineConfig::active_lambdas() const {
  if (!toggles.retrospective_training) return {0.0};
  if (!toggles.rethink) return {lambda_default};
  std::vector<double> out(lambdas);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

void apply_override(json& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw Error("override must look like key.path=value: " + assignment);
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  json* node = &config;
  std::istringstream parts(key);
  std::string part;
  std::vector<std::string> path;
  while (std::getline(parts, part, '.')) path.push_back(part);
  for (std::size_t i = 0; i + 1 < path.size(); ++i) {
    if (!node->is_object()) throw Error("override path '" + key + "' crosses a non-object");
    node = &(*node)[path[i]];
  }
  (*node)[path.back()] = value;
}

PipelineConfig load_config(const fs::path& file, const std::vector<std::string>& overrides) {
  json j = json::object();
  fs::path base;
  if (!file.empty()) {
    std::ifstream in(file);
    if (!in) throw IoError("cannot read config " + file.string());
    try {
      j = json::parse(in);
    } catch (const json::exception& e) {
      throw Error("config " + file.string() + ": " + e.what());
    }
    base = file.parent_path();
  }
  for (const auto& o : overrides) apply_override(j, o);
  return PipelineConfig::from_json(j, base);
}

// ---------------------------------------------------------------- manifest

const StageRecord* RunManifest::find(const std::string& name) const {
  for (const auto& s : stages) {
    if (s.name == name) return &s;
  }
  return nullptr;
}

json RunManifest::to_json() const {
  json st = json::array();
  for (const auto& s : stages) {
    json e{{"name", s.name}, {"key", s.key}, {"output_hash", s.output_hash}, {"status", s.status},
           {"seconds", s.seconds}};
    if (!s.error.empty()) e["error"] = s.error;
    st.push_back(e);
  }
  return {{"config_hash", config_hash}, {"ok", ok}, {"stages", st}};
}

fs::path artifact_dir(const PipelineConfig& config, const StageRecord& stage) {
  const auto dash = stage.name.find('@');
  const std::string base = dash == std::string::npos ? stage.name : stage.name.substr(0, dash);
  return config.workdir / "artifacts" / (base + "-" + stage.key);
}

// ---------------------------------------------------------------- run

namespace {

std::string key_of(const json& j) { return sha256_hex(j.dump()).substr(0, 16); }

std::uint64_t derive_seed(std::uint64_t seed, const std::string& stage) {
  const std::string h = sha256_hex(std::to_string(seed) + "/" + stage);
  return std::stoull(h.substr(0, 15), nullptr, 16);
}

std::string hash_dir(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().filename() != "done.json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  Sha256 h;
  for (const auto& f : files) h.update(f.filename().string()).update(sha256_file(f));
  return h.hex();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

std::string lambda_tag(double lam) {
  std::ostringstream s;
  s << lam;
  return s.str();
}

struct StageFailure : Error {
  using Error::Error;
};

struct TestItem {
  ConceptSet concepts;
  std::vector<Sentence> references;
};

std::vector<TestItem> group_test(const std::vector<ConceptPair>& pairs) {
  std::vector<TestItem> out;
  std::map<ConceptSet, std::size_t> where;
  for (const auto& p : pairs) {
    auto [it, fresh] = where.emplace(p.concepts, out.size());
    if (fresh) out.push_back({p.concepts, {}});
    out[it->second].references.push_back(p.target);
  }
  return out;
}

void write_predictions(const fs::path& path, const std::vector<TestItem>& items,
                       const std::vector<Sentence>& preds, double lam) {
  std::ostringstream out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    out << json{{"concepts", items[i].concepts.items()}, {"prediction", preds[i].text}, {"lambda", lam}}.dump()
        << '\n';
  }
  write_text(path, out.str());
}

std::vector<Sentence> read_predictions(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<Sentence> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto text = json::parse(line).at("prediction").get<std::string>();
    out.push_back(text.empty() ? Sentence{} : analyze(text));
  }
  return out;
}

std::vector<PrototypeSlots> read_slots(const fs::path& path) {
  std::vector<PrototypeSlots> out;
  for (const auto& inst : read_dataset(path)) out.push_back(inst.prototypes);
  return out;
}

void write_slots(const fs::path& path, const std::vector<TestItem>& items,
                 const std::vector<PrototypeSlots>& slots) {
  std::vector<TrainingInstance> data;
  for (std::size_t i = 0; i < items.size(); ++i) {
    // The first reference stands in as the target so the dataset format applies.
    data.push_back({items[i].concepts, slots[i], items[i].references.front(), InstanceKind::Edit});
  }
  write_dataset(path, data);
}

class Runner {
 public:
  Runner(const PipelineConfig& config, RunManifest& manifest) : config_(config), manifest_(manifest) {}

  /// Runs `build(dir)` unless the artifact for (name, key) already exists.
  template <typename Build>
  fs::path stage(const std::string& name, const std::string& key, Build&& build) {
    StageRecord rec{name, key, {}, {}, 0.0, {}};
    const fs::path dir = artifact_dir(config_, rec);
    const auto start = std::chrono::steady_clock::now();
    if (fs::exists(dir / "done.json")) {
      std::ifstream in(dir / "done.json");
      rec.output_hash = json::parse(in).at("output_hash").get<std::string>();
      rec.status = "cached";
      spdlog::info("stage {} cached ({})", name, key);
    } else {
      spdlog::info("stage {} running ({})", name, key);
      const fs::path tmp = dir.string() + ".tmp";
      fs::remove_all(tmp);
      fs::create_directories(tmp);
      try {
        build(tmp);
        rec.output_hash = hash_dir(tmp);
        write_text(tmp / "done.json", json{{"stage", name}, {"key", key}, {"output_hash", rec.output_hash}}.dump(2));
        fs::remove_all(dir);
        fs::rename(tmp, dir);
        rec.status = "ran";
      } catch (const std::exception& e) {
        rec.status = "failed";
        rec.error = e.what();
        rec.seconds = seconds_since(start);
        manifest_.stages.push_back(rec);
        throw StageFailure(name + ": " + e.what());
      }
    }
    rec.seconds = seconds_since(start);
    manifest_.stages.push_back(rec);
    return dir;
  }

  void note(const std::string& name, const std::string& status) {
    manifest_.stages.push_back({name, {}, {}, status, 0.0, {}});
  }

 private:
  static double seconds_since(std::chrono::steady_clock::time_point t) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
  }

  const PipelineConfig& config_;
  RunManifest& manifest_;
};

void write_manifest(const RunManifest& m) {
  fs::create_directories(m.run_dir);
  write_text(m.run_dir / "manifest.json", m.to_json().dump(2) + "\n");
}

}  // namespace

RunManifest run(const PipelineConfig& cfg) {
  cfg.validate();
  RunManifest manifest;
  manifest.config_hash = cfg.hash();
  manifest.run_dir = cfg.workdir / "runs" / manifest.config_hash;
  Runner runner(cfg, manifest);
  const Toggles& tg = cfg.toggles;

  try {
    // Inputs.
    const Corpus ext = ingest(cfg.corpus, cfg.corpus_format);
    const auto train = ingest_pairs(cfg.train);
    const auto test = group_test(ingest_pairs(cfg.test));
    if (train.empty()) throw StageFailure("training set is empty");
    if (test.empty()) throw StageFailure("test set is empty");
    const std::string corpus_hash = ext.content_hash();
    const std::string train_hash = sha256_file(cfg.train);
    const std::string test_hash = sha256_file(cfg.test);

    // Retrieval index over the external corpus.
    const std::string index_key = key_of({"index", corpus_hash, InvertedIndex::kVersion});
    const fs::path index_dir = runner.stage("index", index_key, [&](const fs::path& dir) {
      save_index(dir / "index.json", build_index(ext));
    });
    const InvertedIndex index = load_index(index_dir / "index.json", ext);

    // Scorer, used for prototype ranking and for rethink.
    std::optional<Scorer> scorer;
    std::string scorer_key = "none";
    if (tg.retrieval || tg.rethink) {
      scorer_key = key_of({"scorer", corpus_hash, train_hash, scorer_json(cfg.scorer), cfg.neg_ratio, cfg.seed});
      const fs::path dir = runner.stage("scorer", scorer_key, [&](const fs::path& d) {
        Rng rng(derive_seed(cfg.seed, "scorer"));
        const auto data = build_scorer_dataset(train, ext, cfg.neg_ratio, rng);
        nn::TrainStats stats;
        Scorer s = train_scorer(data, cfg.scorer, rng, &stats);
        s.save(d / "scorer", hash_examples(data));
      });
      scorer.emplace(Scorer::load(dir / "scorer"));
    } else {
      runner.note("scorer", "skipped");
    }
    RelevanceFn relevance;
    if (scorer) relevance = [&](const ConceptSet& x, const Sentence& s) { return scorer->score(x, s); };

    // Prototype providers.
    const PrototypeSlots empty_slots{sentinel_sentence(), sentinel_sentence(), sentinel_sentence()};
    PrototypeProvider rough = [&](const ConceptSet& x, const Sentence& target) {
      if (!tg.retrieval) return empty_slots;
      return retrieve_prototypes(index, ext, x, nullptr, cfg.pool, Exclusion::self(target)).prototypes;
    };
    PrototypeProvider ranked = [&](const ConceptSet& x, const Sentence& target) {
      if (!tg.retrieval) return empty_slots;
      return retrieve_prototypes(index, ext, x, &relevance, cfg.pool, Exclusion::self(target)).prototypes;
    };

    // D_ft: the training pairs with retrieved prototypes, plus augmentation.
    const std::string dft_key = key_of({"dft", index_key, tg.retrieval ? scorer_key : "none", tg.retrieval,
                                        tg.retrospective_augmentation, cfg.pseudo_concepts, cfg.pool, cfg.seed,
                                        train_hash});
    const fs::path dft_dir = runner.stage("dft", dft_key, [&](const fs::path& d) {
      std::vector<PrototypeSlots> slots;
      for (const auto& p : train) slots.push_back(ranked(p.concepts, p.target));
      Rng rng(derive_seed(cfg.seed, "augment"));
      const auto data = tg.retrospective_augmentation
                            ? build_retrospective_augmentation(train, slots, cfg.pseudo_concepts, rng, ranked)
                            : as_edit_instances(train, slots);
      write_dataset(d / "dft.jsonl", data);
    });
    const auto dft = read_dataset(dft_dir / "dft.jsonl");

    // Prototypes for the test concept sets.
    const std::string tp_key = key_of({"test-prototypes", index_key, tg.retrieval ? scorer_key : "none",
                                       tg.retrieval, cfg.pool, test_hash});
    const fs::path tp_dir = runner.stage("test_prototypes", tp_key, [&](const fs::path& d) {
      std::vector<PrototypeSlots> slots;
      for (const auto& item : test) slots.push_back(ranked(item.concepts, sentinel_sentence()));
      write_slots(d / "prototypes.jsonl", test, slots);
    });
    const auto test_slots = read_slots(tp_dir / "prototypes.jsonl");

    // Shared vocabulary.
    const Vocab vocab = build_vocab(ext, train);

    // Pretraining on D_pt.
    std::string init_key = key_of({"init", seq2seq_json(cfg.model), vocab.hash()});
    fs::path init_dir;
    if (tg.pretraining) {
      init_key = key_of({"pretrain", corpus_hash, vocab.hash(), seq2seq_json(cfg.model), fit_json(cfg.pretrain),
                         cfg.pseudo_concepts, cfg.pool, tg.retrieval, cfg.seed});
      init_dir = runner.stage("pretrain", init_key, [&](const fs::path& d) {
        Rng rng(derive_seed(cfg.seed, "pretrain"));
        const auto dpt = build_pretrain_set(ext, cfg.pseudo_concepts, rng, rough);
        Seq2SeqModel m(cfg.model, vocab);
        pretrain(m, dpt, cfg.pretrain, rng);
        m.save(d / "generator", "generator", key_of({corpus_hash, cfg.pseudo_concepts}));
      });
    } else {
      runner.note("pretrain", "skipped");
    }

    // Refiner.
    std::optional<Seq2SeqModel> refiner;
    std::string refiner_key = "none";
    if (tg.refine) {
      refiner_key = key_of({"refiner", corpus_hash, vocab.hash(), seq2seq_json(cfg.refiner_model),
                            fit_json(cfg.refiner_fit), spec_json(cfg.perturbation), cfg.seed});
      const fs::path dir = runner.stage("refiner", refiner_key, [&](const fs::path& d) {
        const auto pairs = build_refiner_dataset(ext, cfg.perturbation);
        write_perturbed(d / "perturbed.jsonl", pairs);
        Rng rng(derive_seed(cfg.seed, "refiner"));
        train_refiner(pairs, cfg.refiner_model, vocab, cfg.refiner_fit, rng).save(d / "refiner", "refiner");
      });
      refiner.emplace(Seq2SeqModel::load(dir / "refiner", "refiner"));
    } else {
      runner.note("refiner", "skipped");
    }

    // Per-lambda finetune, generate and refine.
    std::vector<Candidate> empty;
    std::vector<std::vector<Candidate>> candidates(test.size());
    for (double lam : cfg.active_lambdas()) {
      const std::string tag = "@" + lambda_tag(lam);
      const std::string ft_key =
          key_of({"finetune", init_key, dft_key, lam, fit_json(cfg.finetune), cfg.seed});
      const fs::path ft_dir = runner.stage("finetune" + tag, ft_key, [&](const fs::path& d) {
        Seq2SeqModel m = tg.pretraining ? Seq2SeqModel::load(init_dir / "generator", "generator")
                                        : Seq2SeqModel(cfg.model, vocab);
        Rng rng(derive_seed(cfg.seed, "finetune"));
        finetune(m, dft, lam, cfg.finetune, rng);
        m.save(d / "generator", "generator", dft_key);
      });

      const std::string gen_key = key_of({"generate", ft_key, tp_key, cfg.decode.beam_size, cfg.decode.max_len});
      const fs::path gen_dir = runner.stage("generate" + tag, gen_key, [&](const fs::path& d) {
        const auto m = Seq2SeqModel::load(ft_dir / "generator", "generator");
        std::vector<Sentence> preds;
        for (std::size_t i = 0; i < test.size(); ++i) {
          preds.push_back(generate(m, {test[i].concepts, test_slots[i]}, cfg.decode).sentence);
        }
        write_predictions(d / "predictions.jsonl", test, preds, lam);
      });
      auto preds = read_predictions(gen_dir / "predictions.jsonl");

      if (refiner) {
        const std::string ref_key = key_of({"refine", gen_key, refiner_key, cfg.decode.beam_size, cfg.decode.max_len});
        const fs::path ref_dir = runner.stage("refine" + tag, ref_key, [&](const fs::path& d) {
          std::vector<Sentence> refined;
          for (const auto& p : preds) refined.push_back(refine(*refiner, p, cfg.decode));
          write_predictions(d / "predictions.jsonl", test, refined, lam);
        });
        preds = read_predictions(ref_dir / "predictions.jsonl");
      }
      for (std::size_t i = 0; i < test.size(); ++i) candidates[i].push_back({preds[i], lam});
    }

    // Rethink and evaluate.
    std::ostringstream final_out;
    std::vector<EvalItem> eval_items;
    for (std::size_t i = 0; i < test.size(); ++i) {
      json row{{"concepts", test[i].concepts.items()}};
      Sentence chosen;
      if (tg.rethink && candidates[i].size() > 1) {
        const auto pick = rethink_select(test[i].concepts, candidates[i], *scorer);
        chosen = pick.sentence;
        row["lambda"] = pick.lambda_source;
        row["score"] = pick.score;
      } else {
        chosen = candidates[i].front().sentence;
        row["lambda"] = candidates[i].front().lambda;
      }
      row["prediction"] = chosen.text;
      final_out << row.dump() << '\n';
      eval_items.push_back({test[i].concepts, chosen, test[i].references});
    }
    std::set<std::string> known = ext.vocab();
    for (const auto& p : train) {
      for (const auto& w : p.target.words()) known.insert(w);
    }
    std::optional<ConceptGraph> graph;
    if (!cfg.graph.empty()) graph = ConceptGraph::load(cfg.graph);
    const EvalReport report = evaluate(eval_items, known, graph ? &*graph : nullptr, cfg.rep_ns);

    fs::create_directories(manifest.run_dir);
    write_text(manifest.run_dir / "predictions.jsonl", final_out.str());
    write_text(manifest.run_dir / "report.json", report.to_json() + "\n");
    write_text(manifest.run_dir / "report.txt", report.to_text());
    write_text(manifest.run_dir / "report.csv", report.to_csv());
    write_text(manifest.run_dir / "config.json", cfg.to_json().dump(2) + "\n");
    manifest.stages.push_back({"rethink_evaluate", {}, sha256_file(manifest.run_dir / "predictions.jsonl"), "ran", 0.0, {}});
  } catch (const StageFailure& e) {
    manifest.ok = false;
    if (manifest.stages.empty() || manifest.stages.back().status != "failed") {
      manifest.stages.push_back({"inputs", {}, {}, "failed", 0.0, e.what()});
    }
    spdlog::error("run aborted: {}", e.what());
  } catch (const std::exception& e) {
    manifest.ok = false;
    manifest.stages.push_back({"inputs", {}, {}, "failed", 0.0, e.what()});
    spdlog::error("run aborted: {}", e.what());
  }
  write_manifest(manifest);
  return manifest;
}

// ---------------------------------------------------------------- ablation

std::vector<Variant> ablation_variants(bool with_base) {
  std::vector<Variant> out;
  Toggles t = Toggles::none();
  if (with_base) out.push_back({"base", t});
  const std::vector<std::pair<std::string, std::string>> rows = {
      {"+pretraining", "pretraining"},
      {"+retrieval", "retrieval"},
      {"+retrospective training", "retrospective_training"},
      {"+retrospective augmentation", "retrospective_augmentation"},
      {"+refine", "refine"},
      {"+rethink", "rethink"}};
  for (const auto& [name, toggle] : rows) {
    t.set(toggle, true);
    out.push_back({name, t});
  }
  return out;
}

Variant parse_variant(const std::string& spec) {
  for (const auto& v : ablation_variants(true)) {
    if (v.name == spec) return v;
  }
  const auto eq = spec.find('=');
  if (eq == std::string::npos) throw Error("unknown ablation variant '" + spec + "'");
  Variant v{spec.substr(0, eq), Toggles::none()};
  std::istringstream parts(spec.substr(eq + 1));
  std::string name;
  while (std::getline(parts, name, '+')) {
    if (!name.empty()) v.toggles.set(name, true);
  }
  return v;
}

std::vector<AblationRow> ablation(const PipelineConfig& config, const std::vector<Variant>& variants) {
  std::vector<AblationRow> rows;
  for (const auto& v : variants) {
    PipelineConfig c = config;
    c.toggles = v.toggles;
    spdlog::info("ablation variant '{}'", v.name);
    const RunManifest m = run(c);
    AblationRow row{v.name, {}, m.run_dir, m.ok};
    if (m.ok) {
      std::ifstream in(m.run_dir / "report.json");
      const json r = json::parse(in).at("overall");
      row.metrics.count = r.at("count");
      row.metrics.coverage = r.at("coverage");
      row.metrics.bleu4 = r.at("bleu4");
      for (const auto& [n, count] : r.at("rep_ngram").items()) row.metrics.rep_ngram[std::stoul(n)] = count;
      row.metrics.unk_words = r.at("unk_words");
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string ablation_table(const std::vector<AblationRow>& rows) {
  std::ostringstream out;
  out << std::left;
  char line[256];
  std::snprintf(line, sizeof line, "%-30s %9s %8s %10s %9s\n", "variant", "coverage", "bleu4", "rep-2gram", "unk-words");
  out << line;
  for (const auto& r : rows) {
    if (!r.ok) {
      std::snprintf(line, sizeof line, "%-30s %s\n", r.variant.c_str(), "failed");
    } else {
      const auto rep = r.metrics.rep_ngram.contains(2) ? r.metrics.rep_ngram.at(2) : 0;
      std::snprintf(line, sizeof line, "%-30s %9.2f %8.4f %10zu %9zu\n", r.variant.c_str(), r.metrics.coverage,
                    r.metrics.bleu4, rep, r.metrics.unk_words);
    }
    out << line;
  }
  return out.str();
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::ostringstream out;
  out << std::setprecision(10) << "variant,ok,coverage,bleu4,rep_2gram,unk_words\n";
  for (const auto& r : rows) {
    const auto rep = r.metrics.rep_ngram.contains(2) ? r.metrics.rep_ngram.at(2) : 0;
    out << '"' << r.variant << "\"," << r.ok << ',' << r.metrics.coverage << ',' << r.metrics.bleu4 << ','
        << rep << ',' << r.metrics.unk_words << '\n';
  }
  return out.str();
}

}  // namespace kgr4
