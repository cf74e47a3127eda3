// Command-line front end: one subcommand per pipeline stage plus `run`,
// `ablation` and `make-toy`.

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include <fstream>
#include <iostream>
#include <map>
#include <set>

#include "kgr4/corpus.hpp"
#include "kgr4/error.hpp"
#include "kgr4/generator.hpp"
#include "kgr4/hash.hpp"
#include "kgr4/pipeline.hpp"
#include "kgr4/refiner.hpp"
#include "kgr4/retrieval.hpp"
#include "kgr4/rethink_eval.hpp"
#include "kgr4/scorer.hpp"
#include "kgr4/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace kgr4;

namespace {

struct Prediction {
  ConceptSet concepts;
  Sentence sentence;
  double lambda = 0.0;
};

std::vector<Prediction> read_prediction_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<Prediction> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      Prediction p;
      p.concepts = ConceptSet::from(j.at("concepts").get<std::vector<std::string>>());
      const auto text = j.at("prediction").get<std::string>();
      p.sentence = text.empty() ? Sentence{} : analyze(text);
      p.lambda = j.value("lambda", 0.0);
      out.push_back(std::move(p));
    } catch (const json::exception& e) {
      throw ParseError(path.string() + ": " + e.what(), line_no);
    }
  }
  return out;
}

void write_prediction_file(const fs::path& path, const std::vector<Prediction>& preds) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& p : preds) {
    out << json{{"concepts", p.concepts.items()}, {"prediction", p.sentence.text}, {"lambda", p.lambda}}.dump()
        << '\n';
  }
}

std::set<std::string> known_vocab(const fs::path& corpus, CorpusFormat format, const fs::path& train) {
  std::set<std::string> known;
  if (!corpus.empty()) known = ingest(corpus, format).vocab();
  if (!train.empty()) {
    for (const auto& p : ingest_pairs(train)) {
      for (const auto& w : p.target.words()) known.insert(w);
    }
  }
  return known;
}

// Shared --config/--set options for commands that take hyper-parameters.
struct ConfigOptions {
  std::string file;
  std::vector<std::string> sets;

  void attach(CLI::App* app) {
    app->add_option("--config", file, "Pipeline config (JSON)");
    app->add_option("--set", sets, "Override a config value, e.g. --set finetune.steps=200");
  }
  PipelineConfig load() const { return load_config(file, sets); }
};

struct CorpusOptions {
  std::string path;
  std::string format = "plain-lines";

  void attach(CLI::App* app, bool required = true) {
    auto* o = app->add_option("--corpus", path, "External corpus file");
    if (required) o->required();
    app->add_option("--format", format, "jsonl | plain-lines | commongen-pairs");
  }
  Corpus load() const { return ingest(path, parse_corpus_format(format)); }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Retrieve, retrospect, refine and rethink: concept-to-sentence generation toolkit"};
  app.require_subcommand(1);
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace | debug | info | warn | error");

  // ingest
  auto* ingest_cmd = app.add_subcommand("ingest", "Tokenize, lemmatize and tag a corpus");
  std::string ingest_in, ingest_format = "plain-lines", ingest_out;
  ingest_cmd->add_option("--input", ingest_in)->required();
  ingest_cmd->add_option("--format", ingest_format);
  ingest_cmd->add_option("--output", ingest_out)->required();

  // build-index
  auto* index_cmd = app.add_subcommand("build-index", "Build the concept inverted index");
  CorpusOptions index_corpus;
  std::string index_out;
  index_corpus.attach(index_cmd);
  index_cmd->add_option("--output", index_out)->required();

  // retrieve
  auto* retrieve_cmd = app.add_subcommand("retrieve", "Retrieve the top-3 prototypes for a concept set");
  CorpusOptions retrieve_corpus;
  std::string retrieve_index, retrieve_concepts, retrieve_scorer;
  std::size_t retrieve_pool = 100;
  retrieve_corpus.attach(retrieve_cmd);
  retrieve_cmd->add_option("--index", retrieve_index)->required();
  retrieve_cmd->add_option("--concepts", retrieve_concepts, "Comma-separated concepts")->required();
  retrieve_cmd->add_option("--scorer", retrieve_scorer, "Scorer checkpoint stem for re-ranking");
  retrieve_cmd->add_option("--pool", retrieve_pool);

  // train-scorer
  auto* scorer_cmd = app.add_subcommand("train-scorer", "Train the relevance scorer");
  ConfigOptions scorer_cfg;
  CorpusOptions scorer_corpus;
  std::string scorer_train, scorer_out;
  scorer_cfg.attach(scorer_cmd);
  scorer_corpus.attach(scorer_cmd);
  scorer_cmd->add_option("--train", scorer_train, "Concept/target pairs (JSONL)")->required();
  scorer_cmd->add_option("--out", scorer_out, "Checkpoint stem")->required();

  // build-dataset
  auto* dft_cmd = app.add_subcommand("build-dataset", "Build the finetuning set with retrieved prototypes");
  ConfigOptions dft_cfg;
  CorpusOptions dft_corpus;
  std::string dft_train, dft_index, dft_scorer, dft_out;
  bool dft_augment = false;
  dft_cfg.attach(dft_cmd);
  dft_corpus.attach(dft_cmd);
  dft_cmd->add_option("--train", dft_train)->required();
  dft_cmd->add_option("--index", dft_index)->required();
  dft_cmd->add_option("--scorer", dft_scorer, "Scorer stem; rough order when absent");
  dft_cmd->add_flag("--augment", dft_augment, "Add retrospective augmentation instances");
  dft_cmd->add_option("--output", dft_out)->required();

  // pretrain
  auto* pretrain_cmd = app.add_subcommand("pretrain", "Pretrain the generator on pseudo-concept instances");
  ConfigOptions pretrain_cfg;
  CorpusOptions pretrain_corpus;
  std::string pretrain_train, pretrain_out;
  pretrain_cfg.attach(pretrain_cmd);
  pretrain_corpus.attach(pretrain_cmd);
  pretrain_cmd->add_option("--train", pretrain_train, "Training pairs (vocabulary)")->required();
  pretrain_cmd->add_option("--out", pretrain_out)->required();

  // finetune
  auto* finetune_cmd = app.add_subcommand("finetune", "Finetune with the edit/copy mixture");
  ConfigOptions finetune_cfg;
  std::string finetune_init, finetune_data, finetune_out;
  double finetune_lambda = 0.1;
  finetune_cfg.attach(finetune_cmd);
  finetune_cmd->add_option("--init", finetune_init, "Pretrained generator stem")->required();
  finetune_cmd->add_option("--dataset", finetune_data, "Finetuning set (JSONL)")->required();
  finetune_cmd->add_option("--lambda", finetune_lambda)->check(CLI::Range(0.0, 1.0));
  finetune_cmd->add_option("--out", finetune_out)->required();

  // perturb
  auto* perturb_cmd = app.add_subcommand("perturb", "Synthesize perturbed refiner pairs");
  ConfigOptions perturb_cfg;
  CorpusOptions perturb_corpus;
  std::string perturb_out;
  perturb_cfg.attach(perturb_cmd);
  perturb_corpus.attach(perturb_cmd);
  perturb_cmd->add_option("--output", perturb_out)->required();

  // train-refiner
  auto* refiner_cmd = app.add_subcommand("train-refiner", "Train the denoising refiner");
  ConfigOptions refiner_cfg;
  CorpusOptions refiner_corpus;
  std::string refiner_train, refiner_pairs, refiner_out;
  refiner_cfg.attach(refiner_cmd);
  refiner_corpus.attach(refiner_cmd);
  refiner_cmd->add_option("--train", refiner_train, "Training pairs (vocabulary)")->required();
  refiner_cmd->add_option("--pairs", refiner_pairs, "Perturbed pairs; synthesized from the corpus when absent");
  refiner_cmd->add_option("--out", refiner_out)->required();

  // generate
  auto* generate_cmd = app.add_subcommand("generate", "Decode sentences for a dataset");
  std::string generate_model, generate_data, generate_out;
  double generate_lambda = 0.0;
  DecodeConfig generate_decode;
  generate_cmd->add_option("--model", generate_model)->required();
  generate_cmd->add_option("--dataset", generate_data, "Instances with prototypes (JSONL)")->required();
  generate_cmd->add_option("--lambda", generate_lambda, "Mixing weight recorded with the predictions");
  generate_cmd->add_option("--beam", generate_decode.beam_size)->check(CLI::PositiveNumber);
  generate_cmd->add_option("--max-len", generate_decode.max_len)->check(CLI::PositiveNumber);
  generate_cmd->add_option("--output", generate_out)->required();

  // refine
  auto* refine_cmd = app.add_subcommand("refine", "Correct predicted sentences with the refiner");
  std::string refine_model, refine_in, refine_out;
  DecodeConfig refine_decode;
  refine_cmd->add_option("--model", refine_model)->required();
  refine_cmd->add_option("--input", refine_in)->required();
  refine_cmd->add_option("--beam", refine_decode.beam_size)->check(CLI::PositiveNumber);
  refine_cmd->add_option("--max-len", refine_decode.max_len)->check(CLI::PositiveNumber);
  refine_cmd->add_option("--output", refine_out)->required();

  // rethink
  auto* rethink_cmd = app.add_subcommand("rethink", "Pick the best candidate per concept set");
  std::string rethink_scorer, rethink_out;
  std::vector<std::string> rethink_inputs;
  rethink_cmd->add_option("--scorer", rethink_scorer)->required();
  rethink_cmd->add_option("--inputs", rethink_inputs, "Aligned prediction files, one per lambda")->required();
  rethink_cmd->add_option("--output", rethink_out)->required();

  // evaluate
  auto* eval_cmd = app.add_subcommand("evaluate", "Compute coverage, BLEU-4, REP-n and UNK metrics");
  std::string eval_preds, eval_refs, eval_graph, eval_external, eval_out, eval_train;
  CorpusOptions eval_corpus;
  eval_cmd->add_option("--predictions", eval_preds)->required();
  eval_cmd->add_option("--references", eval_refs, "Concept/target pairs (JSONL)")->required();
  eval_corpus.attach(eval_cmd, false);
  eval_cmd->add_option("--train", eval_train, "Training pairs (known vocabulary)");
  eval_cmd->add_option("--graph", eval_graph, "Concept graph TSV for difficulty buckets");
  eval_cmd->add_option("--external", eval_external, "JSON object of external scores (SPICE, CIDEr)");
  eval_cmd->add_option("--out", eval_out, "Output prefix for .json/.txt/.csv");

  // run
  auto* run_cmd = app.add_subcommand("run", "Run the whole pipeline");
  ConfigOptions run_cfg;
  run_cfg.attach(run_cmd);

  // ablation
  auto* ablation_cmd = app.add_subcommand("ablation", "Run stage-toggle variants and compare");
  ConfigOptions ablation_cfg;
  std::vector<std::string> ablation_specs;
  bool ablation_base = false;
  std::string ablation_out;
  ablation_cfg.attach(ablation_cmd);
  ablation_cmd->add_option("--variant", ablation_specs,
                           "Row name or name=toggle+toggle; defaults to the six cumulative rows");
  ablation_cmd->add_flag("--with-base", ablation_base, "Prepend the all-off base row");
  ablation_cmd->add_option("--out", ablation_out, "Write the table as CSV");

  // make-toy
  auto* toy_cmd = app.add_subcommand("make-toy", "Write the synthetic toy benchmark");
  ToyWorldConfig toy;
  std::string toy_out;
  toy_cmd->add_option("--out", toy_out)->required();
  toy_cmd->add_option("--corpus-size", toy.corpus_size);
  toy_cmd->add_option("--train-sets", toy.train_sets);
  toy_cmd->add_option("--test-sets", toy.test_sets);
  toy_cmd->add_option("--seed", toy.seed);

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(spdlog::level::from_str(log_level));
  spdlog::set_default_logger(spdlog::default_logger());

  try {
    if (*ingest_cmd) {
      const auto format = parse_corpus_format(ingest_format);
      if (format == CorpusFormat::CommonGenPairs) {
        const auto pairs = ingest_pairs(ingest_in);
        write_pairs(ingest_out, pairs);
        std::cout << pairs.size() << " pairs\n";
      } else {
        const Corpus c = ingest(ingest_in, format);
        write_corpus(ingest_out, c);
        std::cout << c.size() << " sentences, " << c.vocab().size() << " word forms\n";
      }
    } else if (*index_cmd) {
      const Corpus c = index_corpus.load();
      const auto idx = build_index(c);
      save_index(index_out, idx);
      std::cout << idx.postings.size() << " lemmas over " << idx.num_sentences() << " sentences\n";
    } else if (*retrieve_cmd) {
      const Corpus c = retrieve_corpus.load();
      const auto idx = load_index(retrieve_index, c);
      const auto x = ConceptSet::parse(retrieve_concepts);
      std::optional<Scorer> scorer;
      RelevanceFn rel;
      if (!retrieve_scorer.empty()) {
        scorer.emplace(Scorer::load(retrieve_scorer));
        rel = [&](const ConceptSet& q, const Sentence& s) { return scorer->score(q, s); };
      }
      const auto ps = retrieve_prototypes(idx, c, x, scorer ? &rel : nullptr, retrieve_pool);
      for (std::size_t i = 0; i < 3; ++i) {
        std::cout << json{{"rank", i + 1}, {"score", ps.scores[i]}, {"text", ps.prototypes[i].text}}.dump() << '\n';
      }
    } else if (*scorer_cmd) {
      const auto cfg = scorer_cfg.load();
      const Corpus c = scorer_corpus.load();
      Rng rng(cfg.seed);
      const auto data = build_scorer_dataset(ingest_pairs(scorer_train), c, cfg.neg_ratio, rng);
      nn::TrainStats stats;
      const Scorer s = train_scorer(data, cfg.scorer, rng, &stats);
      s.save(scorer_out, hash_examples(data));
      std::cout << "trained on " << data.size() << " examples, " << stats.steps_run
                << " steps, accuracy " << scorer_accuracy(s, data) << '\n';
    } else if (*dft_cmd) {
      const auto cfg = dft_cfg.load();
      const Corpus c = dft_corpus.load();
      const auto idx = load_index(dft_index, c);
      const auto train = ingest_pairs(dft_train);
      std::optional<Scorer> scorer;
      RelevanceFn rel;
      if (!dft_scorer.empty()) {
        scorer.emplace(Scorer::load(dft_scorer));
        rel = [&](const ConceptSet& q, const Sentence& s) { return scorer->score(q, s); };
      }
      PrototypeProvider provider = [&](const ConceptSet& x, const Sentence& t) {
        return retrieve_prototypes(idx, c, x, scorer ? &rel : nullptr, cfg.pool, Exclusion::self(t)).prototypes;
      };
      std::vector<PrototypeSlots> slots;
      for (const auto& p : train) slots.push_back(provider(p.concepts, p.target));
      Rng rng(cfg.seed);
      const auto data = dft_augment
                            ? build_retrospective_augmentation(train, slots, cfg.pseudo_concepts, rng, provider)
                            : as_edit_instances(train, slots);
      write_dataset(dft_out, data);
      std::cout << data.size() << " instances\n";
    } else if (*pretrain_cmd) {
      const auto cfg = pretrain_cfg.load();
      const Corpus c = pretrain_corpus.load();
      const auto idx = build_index(c);
      PrototypeProvider rough = [&](const ConceptSet& x, const Sentence& t) {
        return retrieve_prototypes(idx, c, x, nullptr, cfg.pool, Exclusion::self(t)).prototypes;
      };
      Rng rng(cfg.seed);
      const auto dpt = build_pretrain_set(c, cfg.pseudo_concepts, rng, rough);
      Seq2SeqModel m(cfg.model, build_vocab(c, ingest_pairs(pretrain_train)));
      const auto stats = pretrain(m, dpt, cfg.pretrain, rng);
      m.save(pretrain_out, "generator", c.content_hash());
      std::cout << stats.steps_run << " steps, best held-out loss " << stats.best_holdout << '\n';
    } else if (*finetune_cmd) {
      const auto cfg = finetune_cfg.load();
      auto m = Seq2SeqModel::load(finetune_init, "generator");
      const auto data = read_dataset(finetune_data);
      Rng rng(cfg.seed);
      const auto stats = finetune(m, data, finetune_lambda, cfg.finetune, rng);
      m.save(finetune_out, "generator", sha256_file(finetune_data));
      std::cout << stats.steps_run << " steps, best held-out loss " << stats.best_holdout << '\n';
    } else if (*perturb_cmd) {
      const auto cfg = perturb_cfg.load();
      const auto pairs = build_refiner_dataset(perturb_corpus.load(), cfg.perturbation);
      write_perturbed(perturb_out, pairs);
      std::map<ErrorKind, std::size_t> counts;
      for (const auto& p : pairs) ++counts[p.kind];
      std::cout << counts[ErrorKind::Repetition] << " repetition, " << counts[ErrorKind::Misspelling]
                << " misspelling, " << counts[ErrorKind::Identity] << " identity\n";
    } else if (*refiner_cmd) {
      const auto cfg = refiner_cfg.load();
      const Corpus c = refiner_corpus.load();
      const auto pairs = refiner_pairs.empty() ? build_refiner_dataset(c, cfg.perturbation) : read_perturbed(refiner_pairs);
      Rng rng(cfg.seed);
      nn::TrainStats stats;
      const auto m = train_refiner(pairs, cfg.refiner_model, build_vocab(c, ingest_pairs(refiner_train)),
                                   cfg.refiner_fit, rng, &stats);
      m.save(refiner_out, "refiner");
      std::cout << stats.steps_run << " steps, best held-out loss " << stats.best_holdout << '\n';
    } else if (*generate_cmd) {
      const auto m = Seq2SeqModel::load(generate_model, "generator");
      std::vector<Prediction> preds;
      std::size_t degenerate = 0;
      for (const auto& inst : read_dataset(generate_data)) {
        const auto g = generate(m, {inst.concepts, inst.prototypes}, generate_decode);
        degenerate += g.degenerate;
        preds.push_back({inst.concepts, g.sentence, generate_lambda});
      }
      write_prediction_file(generate_out, preds);
      std::cout << preds.size() << " predictions (" << degenerate << " empty)\n";
    } else if (*refine_cmd) {
      const auto m = Seq2SeqModel::load(refine_model, "refiner");
      auto preds = read_prediction_file(refine_in);
      for (auto& p : preds) p.sentence = refine(m, p.sentence, refine_decode);
      write_prediction_file(refine_out, preds);
      std::cout << preds.size() << " refined\n";
    } else if (*rethink_cmd) {
      const Scorer scorer = Scorer::load(rethink_scorer);
      std::vector<std::vector<Prediction>> files;
      for (const auto& f : rethink_inputs) files.push_back(read_prediction_file(f));
      for (const auto& f : files) {
        if (f.size() != files.front().size()) throw Error("rethink inputs differ in length");
      }
      std::ofstream out(rethink_out);
      if (!out) throw IoError("cannot write " + rethink_out);
      for (std::size_t i = 0; i < files.front().size(); ++i) {
        std::vector<Candidate> cands;
        for (const auto& f : files) {
          if (!(f[i].concepts == files.front()[i].concepts)) throw Error("rethink inputs are not aligned");
          cands.push_back({f[i].sentence, f[i].lambda});
        }
        const auto pick = rethink_select(files.front()[i].concepts, cands, scorer);
        out << json{{"concepts", files.front()[i].concepts.items()}, {"prediction", pick.sentence.text},
                    {"lambda", pick.lambda_source}, {"score", pick.score}}.dump()
            << '\n';
      }
    } else if (*eval_cmd) {
      const auto preds = read_prediction_file(eval_preds);
      std::map<ConceptSet, std::vector<Sentence>> refs;
      for (const auto& p : ingest_pairs(eval_refs)) refs[p.concepts].push_back(p.target);
      std::vector<EvalItem> items;
      for (const auto& p : preds) {
        auto it = refs.find(p.concepts);
        if (it == refs.end()) throw Error("no references for concepts " + p.concepts.join());
        items.push_back({p.concepts, p.sentence, it->second});
      }
      std::optional<ConceptGraph> graph;
      if (!eval_graph.empty()) graph = ConceptGraph::load(eval_graph);
      const auto known = known_vocab(eval_corpus.path, parse_corpus_format(eval_corpus.format), eval_train);
      auto report = evaluate(items, known, graph ? &*graph : nullptr);
      if (!eval_external.empty()) attach_external_scores(report, eval_external);
      std::cout << report.to_text();
      if (!eval_out.empty()) {
        std::ofstream(eval_out + ".json") << report.to_json() << '\n';
        std::ofstream(eval_out + ".txt") << report.to_text();
        std::ofstream(eval_out + ".csv") << report.to_csv();
      }
    } else if (*run_cmd) {
      const auto m = run(run_cfg.load());
      std::cout << m.to_json().dump(2) << '\n';
      if (!m.ok) return 1;
      std::ifstream report(m.run_dir / "report.txt");
      std::cout << report.rdbuf() << "run directory: " << m.run_dir.string() << '\n';
    } else if (*ablation_cmd) {
      std::vector<Variant> variants;
      if (ablation_base) variants.push_back(ablation_variants(true).front());
      if (ablation_specs.empty()) {
        for (const auto& v : ablation_variants(false)) variants.push_back(v);
      }
      for (const auto& s : ablation_specs) variants.push_back(parse_variant(s));
      const auto rows = ablation(ablation_cfg.load(), variants);
      std::cout << ablation_table(rows);
      if (!ablation_out.empty()) std::ofstream(ablation_out) << ablation_csv(rows);
      for (const auto& r : rows) {
        if (!r.ok) return 1;
      }
    } else if (*toy_cmd) {
      const auto world = make_toy_world(toy);
      write_toy_world(toy_out, world);
      std::cout << world.corpus.size() << " corpus sentences, " << world.train.size() << " training pairs, "
                << world.test.size() << " test concept sets\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
