// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
// criterion fails. Criteria 4, 5, 6 and 10 train on the bundled toy benchmark.

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>

#include "kgr4/corpus.hpp"
#include "kgr4/generator.hpp"
#include "kgr4/pipeline.hpp"
#include "kgr4/refiner.hpp"
#include "kgr4/retrieval.hpp"
#include "kgr4/rethink_eval.hpp"
#include "kgr4/scorer.hpp"
#include "kgr4/synth.hpp"
#include "support/grad_check.hpp"
#include "support/micro.hpp"
#include "support/oracles.hpp"
#include "support/separable.hpp"

namespace fs = std::filesystem;
using namespace kgr4;
using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::map<int, Outcome> results;

void report(int id, bool pass, const std::string& detail) {
  results[id] = {pass, detail};
  std::cout << (pass ? "PASS" : "FAIL") << " criterion " << id << ": " << detail << std::endl;
}

std::string fixed(double v, int precision = 4) {
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(precision);
  s << v;
  return s.str();
}

std::string scientific(double v) {
  std::ostringstream s;
  s.setf(std::ios::scientific);
  s.precision(2);
  s << v;
  return s.str();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof(double)) == 0; }

// ------------------------------------------------------------------ 1

void gradient_correctness() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::string which;
  auto track = [&](const std::string& name, const kgr4::testing::GradCheck& c) {
    if (c.relative_error > worst || which.empty()) {
      worst = std::max(worst, c.relative_error);
      which = name;
    }
  };

  // Scorer: random head so every layer carries gradient.
  {
    ScorerConfig sc;
    sc.embed_dim = 4;
    sc.hidden_dim = 5;
    Scorer s(sc, {"dog", "run", "park", "the", "in"});
    std::mt19937_64 rng(1);
    std::normal_distribution<double> n(0.0, 0.5);
    for (std::size_t i = 0; i < s.params().size(); ++i) {
      auto& m = s.params()[i].value;
      for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) += n(rng);
    }
    for (bool label : {true, false}) {
      const ScorerExample ex{ConceptSet::parse("dog,park,run"), analyze("The dog runs in the park."), label};
      track("scorer", kgr4::testing::check_gradients(
                          s.params(), [&] { return s.loss(ex, nullptr); }, [&](nn::Gradients& g) { s.loss(ex, &g); }));
    }
  }

  // Pretraining NLL on a pseudo-concept instance.
  auto cfg = kgr4::testing::micro_config();
  cfg.max_src_len = 40;
  cfg.max_tgt_len = 10;
  const Vocab vocab = Vocab::build({"a", "dog", "runs", "in", "the", "park", "cat", "sits", "."});
  for (bool tied : {true, false}) {
    cfg.tied_output = tied;
    Seq2SeqModel m(cfg, vocab);
    const auto y = analyze("A dog runs in the park.");
    Rng rng(3);
    const GeneratorInput in{extract_pseudo_concepts(y, 5, rng),
                            {analyze("The cat sits."), analyze("A dog runs."), sentinel_sentence()}};
    track("pretraining nll", kgr4::testing::check_gradients(
                                 m.params(), [&] { return nll_loss(m, in, y); },
                                 [&](nn::Gradients& g) { nll_loss(m, in, y, &g); }));
  }

  // Refiner NLL.
  {
    auto rc = kgr4::testing::micro_config();
    rc.max_segments = 1;
    rc.max_src_len = 20;
    rc.max_tgt_len = 10;
    Seq2SeqModel m(rc, vocab);
    const auto corrupted = analyze("A dgo runs runs in thepark.");
    const auto clean = analyze("A dog runs in the park.");
    track("refiner nll", kgr4::testing::check_gradients(
                             m.params(), [&] { return refiner_loss(m, corrupted, clean); },
                             [&](nn::Gradients& g) { refiner_loss(m, corrupted, clean, &g); }));
  }
  const double secs = seconds_since(t0);
  report(1, worst < 1e-4 && secs < 60.0,
         "max relative error " + scientific(worst) + " (" + which + "), " + fixed(secs, 1) + " s");
}

// ------------------------------------------------------------------ 2

void mixture_identities() {
  auto cfg = kgr4::testing::micro_config();
  cfg.max_src_len = 40;
  cfg.max_tgt_len = 12;
  const Seq2SeqModel m(cfg, Vocab::build({"a", "dog", "runs", "in", "the", "park", "cat", "sits", "on", "mat", "."}));
  const std::vector<std::pair<const char*, std::array<const char*, 3>>> cases{
      {"A dog runs in the park.", {"A dog runs.", "The cat sits on the mat.", ""}},
      {"The cat sits on the mat.", {"A cat sits.", "", ""}},
      {"A cat runs in the park.", {"The dog sits in the park.", "A cat runs.", "The mat."}}};
  bool endpoints = true, convex = true;
  int checked = 0;
  for (const auto& [target, protos] : cases) {
    const auto y = analyze(target);
    PrototypeSlots slots;
    for (std::size_t i = 0; i < 3; ++i) slots[i] = *protos[i] ? analyze(protos[i]) : sentinel_sentence();
    const auto x = ConceptSet::from({"dog", "park"});
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const Rng start(seed);
      Rng peek = start;
      const auto slot = draw_copy_slot(peek);
      const double edit = nll_loss(m, {x, slots}, y);
      const double copy = nll_loss(m, make_copy({x, slots}, y, slot), y);
      Rng r0 = start, r1 = start;
      endpoints = endpoints && same_bits(retrospective_loss(m, x, slots, y, 0.0, r0), edit);
      endpoints = endpoints && same_bits(retrospective_loss(m, x, slots, y, 1.0, r1), copy);
      for (int i = 0; i <= 10; ++i) {
        const double lam = i / 10.0;
        Rng r = start;
        const double v = retrospective_loss(m, x, slots, y, lam, r);
        const double lo = std::min(edit, copy), hi = std::max(edit, copy);
        const double expected = (1.0 - lam) * edit + lam * copy;
        convex = convex && v >= lo - 1e-12 && v <= hi + 1e-12 && std::abs(v - expected) <= 1e-12 * std::abs(expected);
        ++checked;
      }
    }
  }
  report(2, endpoints && convex,
         std::string("endpoints bitwise ") + (endpoints ? "equal" : "DIFFER") + ", convex combination " +
             (convex ? "holds" : "VIOLATED") + " on " + std::to_string(checked) + " (instance, rng, lambda) triples");
}

// ------------------------------------------------------------------ 3

void retrieval_oracle() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2024);
  std::size_t queries = 0, mismatches = 0, max_size = 0;
  for (int c = 0; c < 50; ++c) {
    const Corpus corpus = kgr4::testing::random_corpus(rng, 1000);
    max_size = std::max(max_size, corpus.size());
    const auto idx = build_index(corpus);
    for (int q = 0; q < 200; ++q) {
      const auto x = kgr4::testing::random_concepts(rng);
      const std::size_t pool = std::uniform_int_distribution<std::size_t>(1, 150)(rng);
      std::vector<std::size_t> excluded;
      if (q % 4 == 0) excluded.push_back(rng() % corpus.size());
      const auto expected = kgr4::testing::brute_force_rough_search(corpus, x, pool, excluded);
      const auto got = rough_search(idx, corpus, x, pool, Exclusion{excluded, std::nullopt});
      bool same = got.size() == expected.size();
      for (std::size_t i = 0; same && i < got.size(); ++i) same = got[i].id == expected[i];
      mismatches += !same;
      ++queries;
    }
  }
  const double secs = seconds_since(t0);
  report(3, mismatches == 0 && secs < 120.0,
         std::to_string(mismatches) + " mismatches over " + std::to_string(queries) +
             " queries on 50 corpora (largest " + std::to_string(max_size) + " sentences), " + fixed(secs, 1) + " s");
}

// ------------------------------------------------------------------ 7

void perturbation_rates() {
  ToyWorldConfig toy;
  toy.corpus_size = 10000;
  const ToyWorld world = make_toy_world(toy);
  const PerturbationSpec spec;  // defaults: 5% / 50% / 1% / 10%
  const auto pairs = build_refiner_dataset(world.corpus, spec);

  std::size_t perturbed = 0, misspelled = 0, chars = 0, char_slots = 0, spaces = 0, space_slots = 0;
  for (const auto& p : pairs) {
    if (p.kind == ErrorKind::Identity) continue;
    ++perturbed;
    if (p.kind != ErrorKind::Misspelling) continue;
    ++misspelled;
    chars += p.chars_deleted;
    spaces += p.spaces_deleted;
    for (char c : p.clean.text) (c == ' ' ? space_slots : char_slots) += 1;
  }
  struct Rate {
    const char* name;
    double expected;
    std::size_t hits, trials;
  };
  const Rate rates[] = {{"instance", spec.instance_rate, perturbed, pairs.size()},
                        {"misspell share", spec.misspell_share, misspelled, perturbed},
                        {"char deletion", spec.char_removal_rate, chars, char_slots},
                        {"space deletion", spec.space_removal_rate, spaces, space_slots}};
  bool pass = pairs.size() == 10000;
  std::string detail;
  for (const auto& r : rates) {
    const double n = static_cast<double>(r.trials);
    const double observed = static_cast<double>(r.hits) / n;
    const double sigma = std::sqrt(r.expected * (1.0 - r.expected) / n);
    const bool ok = std::abs(observed - r.expected) <= 3.0 * sigma;
    pass = pass && ok;
    detail += std::string(detail.empty() ? "" : "; ") + r.name + " " + fixed(observed) + " (expected " +
              fixed(r.expected, 2) + " +/- " + fixed(3.0 * sigma) + ")";
  }
  report(7, pass, detail);
}

// ------------------------------------------------------------------ 8

void rethink_correctness() {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto x = ConceptSet::parse("dog,run");
  const std::vector<double> lambda_grid{0.0, 0.1, 0.5, 0.9, 1.0};

  // Random strictly increasing maps on [0, 1].
  std::vector<std::function<double(double)>> transforms;
  for (int k = 0; k < 20; ++k) {
    const double a = 0.1 + 10.0 * u(rng), b = 20.0 * u(rng) - 10.0, c = 0.5 + 3.0 * u(rng);
    switch (k % 5) {
      case 0: transforms.push_back([=](double s) { return a * s + b; }); break;
      case 1: transforms.push_back([=](double s) { return std::exp(c * s) + b; }); break;
      case 2: transforms.push_back([=](double s) { return std::pow(s + 0.5, c) * a; }); break;
      case 3: transforms.push_back([=](double s) { return std::log1p(a * s) - b; }); break;
      default: transforms.push_back([=](double s) { return std::atan(c * (s - 0.5)) * a + b; }); break;
    }
  }

  std::size_t argmax_ok = 0, invariant_ok = 0, ties = 0;
  const int vectors = 1000;
  for (int v = 0; v < vectors; ++v) {
    const std::size_t n = 1 + rng() % 8;
    std::vector<Candidate> cands;
    std::vector<double> scores;
    for (std::size_t i = 0; i < n; ++i) {
      cands.push_back({analyze("candidate number " + std::to_string(i)), lambda_grid[rng() % lambda_grid.size()]});
      // Every fourth vector is quantized so ties occur.
      scores.push_back(v % 4 == 0 ? std::floor(u(rng) * 4.0) / 4.0 : u(rng));
    }
    auto score_of = [&](const Sentence& s) {
      for (std::size_t i = 0; i < n; ++i) {
        if (cands[i].sentence.text == s.text) return scores[i];
      }
      throw std::logic_error("unknown candidate");
    };
    // Oracle: highest score, then lowest lambda among those, then first index.
    const double top = *std::max_element(scores.begin(), scores.end());
    double low_lambda = 2.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (scores[i] == top) low_lambda = std::min(low_lambda, cands[i].lambda);
    }
    std::size_t best = 0;
    while (!(scores[best] == top && cands[best].lambda == low_lambda)) ++best;
    ties += std::count(scores.begin(), scores.end(), top) > 1;

    const auto pick = rethink_select(x, cands, [&](const ConceptSet&, const Sentence& s) { return score_of(s); });
    argmax_ok += pick.index == best && pick.score == scores[best] && pick.lambda_source == cands[best].lambda;
    bool inv = true;
    for (const auto& f : transforms) {
      const auto t = rethink_select(x, cands, [&](const ConceptSet&, const Sentence& s) { return f(score_of(s)); });
      inv = inv && t.index == pick.index;
    }
    invariant_ok += inv;
  }
  report(8, argmax_ok == vectors && invariant_ok == vectors,
         std::to_string(argmax_ok) + "/1000 argmax (" + std::to_string(ties) + " with tied maxima), " +
             std::to_string(invariant_ok) + "/1000 invariant under 20 increasing transforms");
}

// ------------------------------------------------------------------ 9

void scorer_discrimination() {
  const auto items = kgr4::testing::separable_items(1200, 3, 99);
  const std::vector<kgr4::testing::SeparableItem> train(items.begin(), items.begin() + 1000);
  const std::vector<kgr4::testing::SeparableItem> held(items.begin() + 1000, items.end());
  ScorerConfig cfg;
  cfg.steps = 1500;
  Rng rng(5);
  const Scorer s = train_scorer(kgr4::testing::as_examples(train), cfg, rng);
  const double acc = scorer_accuracy(s, kgr4::testing::as_examples(held));
  const double rank = kgr4::testing::paired_rank_rate(s, held);
  report(9, acc >= 0.9 && rank >= 0.95,
         "held-out accuracy " + fixed(acc) + ", positive ranked first among 1+3 in " + fixed(100.0 * rank, 1) + "% of " +
             std::to_string(held.size()) + " sets");
}

// ------------------------------------------------------------------ toy benchmark

struct PredictionRow {
  ConceptSet concepts;
  Sentence sentence;
};

std::vector<PredictionRow> read_predictions(const fs::path& path) {
  std::vector<PredictionRow> out;
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    const auto text = j.at("prediction").get<std::string>();
    out.push_back({ConceptSet::from(j.at("concepts").get<std::vector<std::string>>()),
                   text.empty() ? Sentence{} : analyze(text)});
  }
  return out;
}

fs::path stage_dir(const PipelineConfig& config, const RunManifest& m, const std::string& stage) {
  const StageRecord* rec = m.find(stage);
  if (rec == nullptr) throw std::runtime_error("stage " + stage + " missing from manifest");
  return artifact_dir(config, *rec);
}

std::string lambda_name(double lam) {
  std::ostringstream s;
  s << lam;
  return s.str();
}

void copy_behavior(const PipelineConfig& config, const RunManifest& m) {
  const auto t0 = Clock::now();
  const double train_secs = m.find("finetune@1")->seconds;
  const auto model = Seq2SeqModel::load(stage_dir(config, m, "finetune@1") / "generator", "generator");
  const auto slots = read_dataset(stage_dir(config, m, "test_prototypes") / "prototypes.jsonl");
  std::map<ConceptSet, PrototypeSlots> slots_of;
  for (const auto& inst : slots) slots_of[inst.concepts] = inst.prototypes;

  // Held-out instances: unseen test concept sets whose reference sits in a
  // random prototype slot.
  Rng rng(404);
  std::size_t copied = 0, total = 0;
  for (const auto& pair : ingest_pairs(config.test)) {
    const GeneratorInput in = make_copy({pair.concepts, slots_of.at(pair.concepts)}, pair.target, draw_copy_slot(rng));
    const auto g = generate(model, in, config.decode);
    copied += g.sentence.words() == pair.target.words();
    ++total;
  }
  const double rate = double(copied) / double(total);
  const double secs = train_secs + seconds_since(t0);
  report(4, rate >= 0.9 && secs < 900.0,
         "lambda=1 generator reproduces the inserted target in " + std::to_string(copied) + "/" +
             std::to_string(total) + " held-out instances (" + fixed(100.0 * rate, 1) + "%), " + fixed(secs, 1) +
             " s training plus decoding");
}

void coverage_cliff(const PipelineConfig& config, const RunManifest& m) {
  std::map<double, double> cov;
  for (double lam : config.active_lambdas()) {
    const auto preds = read_predictions(stage_dir(config, m, "generate@" + lambda_name(lam)) / "predictions.jsonl");
    double sum = 0.0;
    for (const auto& p : preds) sum += coverage(p.concepts, p.sentence);
    cov[lam] = sum / double(preds.size());
  }
  const double low = cov.at(0.1), high = cov.at(1.0);
  std::string sweep;
  for (const auto& [lam, c] : cov) sweep += (sweep.empty() ? "" : ", ") + lambda_name(lam) + ":" + fixed(c, 2);
  report(5, high < low && low - high >= 2.0,
         "coverage at lambda=0.1 " + fixed(low, 2) + " vs lambda=1.0 " + fixed(high, 2) + " (gap " + fixed(low - high, 2) +
             " points; sweep " + sweep + ")");
}

void refiner_efficacy(const PipelineConfig& config, const RunManifest& m) {
  const auto t0 = Clock::now();
  const double train_secs = m.find("refiner")->seconds;
  const auto model = Seq2SeqModel::load(stage_dir(config, m, "refiner") / "refiner", "refiner");
  const Corpus ext = ingest(config.corpus, config.corpus_format);
  std::set<std::string> known = ext.vocab();
  for (const auto& p : ingest_pairs(config.train)) {
    for (const auto& w : p.target.words()) known.insert(w);
  }
  std::set<std::string> seen_text;
  for (const auto& s : ext.sentences()) seen_text.insert(s.text);

  // Fresh sentences that the refiner never saw, a third each repeated,
  // misspelled and left clean.
  ToyWorldConfig toy;
  std::vector<Sentence> fresh;
  std::set<std::string> taken;
  for (const auto& s : sample_toy_sentences(toy, 50000, 0xfeed)) {
    if (seen_text.count(s.text) || !taken.insert(s.text).second) continue;
    fresh.push_back(s);
    if (fresh.size() == 900) break;
  }
  PerturbationSpec spec = config.perturbation;
  Rng rng(606);
  std::vector<Sentence> before, after;
  std::size_t clean_total = 0, clean_kept = 0;
  std::vector<std::string> examples;
  for (std::size_t i = 0; i < fresh.size(); ++i) {
    const ErrorKind kind = i % 3 == 0 ? ErrorKind::Repetition : i % 3 == 1 ? ErrorKind::Misspelling : ErrorKind::Identity;
    const auto p = perturb(fresh[i], kind, spec, rng);
    const auto fixed = refine(model, p.corrupted, config.decode);
    before.push_back(p.corrupted);
    after.push_back(fixed);
    if (i < 2) examples.push_back("  \"" + p.corrupted.text + "\" -> \"" + fixed.text + "\"");
    if (kind == ErrorKind::Identity) {
      ++clean_total;
      clean_kept += fixed.words() == fresh[i].words();
    }
  }
  const auto rep_before = rep_ngram(before, 2), rep_after = rep_ngram(after, 2);
  const auto unk_before = unk_words(before, known), unk_after = unk_words(after, known);
  const double rep_cut = rep_before ? 1.0 - double(rep_after) / double(rep_before) : 0.0;
  const double unk_cut = unk_before ? 1.0 - double(unk_after) / double(unk_before) : 0.0;
  const double kept = double(clean_kept) / double(clean_total);
  const double secs = train_secs + seconds_since(t0);
  report(6, fresh.size() >= 500 && rep_cut >= 0.4 && unk_cut >= 0.5 && kept >= 0.95 && secs < 900.0,
         std::to_string(fresh.size()) + " held-out sentences: REP-2gram " + std::to_string(rep_before) + " -> " +
             std::to_string(rep_after) + " (-" + fixed(100.0 * rep_cut, 1) + "%), UNK " + std::to_string(unk_before) +
             " -> " + std::to_string(unk_after) + " (-" + fixed(100.0 * unk_cut, 1) + "%), clean preserved " +
             fixed(100.0 * kept, 1) + "%, " + fixed(secs, 1) + " s training plus refining");
  for (const auto& e : examples) std::cout << e << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance suite"};
  std::string config_path, workdir;
  std::set<int> only;
  app.add_option("--config", config_path, "Toy benchmark config")->required();
  app.add_option("--workdir", workdir, "Scratch directory for the end-to-end runs")->required();
  app.add_option("--only", only, "Run just these criteria");
  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(spdlog::level::warn);
  auto want = [&](int id) { return only.empty() || only.count(id) > 0; };

  try {
    if (want(1)) gradient_correctness();
    if (want(2)) mixture_identities();
    if (want(3)) retrieval_oracle();
    if (want(7)) perturbation_rates();
    if (want(8)) rethink_correctness();
    if (want(9)) scorer_discrimination();

    if (want(4) || want(5) || want(6) || want(10)) {
      const auto t0 = Clock::now();
      fs::remove_all(workdir);
      auto config_a = load_config(config_path, {"workdir=" + (fs::path(workdir) / "a").string()});
      auto config_b = load_config(config_path, {"workdir=" + (fs::path(workdir) / "b").string()});
      const RunManifest a = run(config_a);
      if (!a.ok) throw std::runtime_error("toy pipeline run failed: " + a.to_json().dump());
      if (want(4)) copy_behavior(config_a, a);
      if (want(5)) coverage_cliff(config_a, a);
      if (want(6)) refiner_efficacy(config_a, a);
      if (want(10)) {
        const RunManifest b = run(config_b);
        const bool same_preds = b.ok && slurp(a.run_dir / "predictions.jsonl") == slurp(b.run_dir / "predictions.jsonl");
        const bool same_report = b.ok && slurp(a.run_dir / "report.json") == slurp(b.run_dir / "report.json");
        const auto rows = ablation(config_a, ablation_variants());
        std::size_t ok_rows = 0;
        for (const auto& r : rows) ok_rows += r.ok && r.metrics.count > 0;
        const double secs = seconds_since(t0);
        std::cout << ablation_table(rows);
        report(10, same_preds && same_report && rows.size() == 6 && ok_rows == 6 && secs < 3600.0,
               std::string("predictions ") + (same_preds ? "identical" : "DIFFER") + ", reports " +
                   (same_report ? "identical" : "DIFFER") + " across two fresh runs; ablation emitted " +
                   std::to_string(ok_rows) + "/6 metric rows; " + fixed(secs / 60.0, 1) +
                   " min for both runs plus ablation");
      }
    }
  } catch (const std::exception& e) {
    std::cout << "FAIL acceptance aborted: " << e.what() << std::endl;
    return 1;
  }

  std::cout << "\nsummary\n";
  bool all = true;
  for (const auto& [id, o] : results) {
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << '\n';
    all = all && o.pass;
  }
  return all ? 0 : 1;
}
