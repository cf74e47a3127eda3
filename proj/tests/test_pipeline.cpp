#include <doctest.h>

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "kgr4/error.hpp"
#include "kgr4/pipeline.hpp"
#include "support/temp_dir.hpp"
#include "support/tiny_pipeline.hpp"

using namespace kgr4;
using nlohmann::json;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST_CASE("config precedence is defaults, file, overrides") {
  kgr4::testing::TempDir dir;
  std::ofstream(dir / "c.json") << R"({"seed": 5, "finetune": {"steps": 10}, "data": {"corpus": "corpus.txt"}})";
  const auto c = load_config(dir / "c.json", {"finetune.steps=20", "toggles.refine=false", "lambdas=[0.5]"});
  CHECK(c.seed == 5);
  CHECK(c.finetune.steps == 20);
  CHECK(c.finetune.batch_size == FitConfig{}.batch_size);
  CHECK_FALSE(c.toggles.refine);
  CHECK(c.lambdas == std::vector<double>{0.5});
  CHECK(c.corpus == dir / "corpus.txt");
  CHECK(load_config({}, {}).pretrain.steps == FitConfig{}.steps);
}

TEST_CASE("unknown keys and malformed overrides are rejected") {
  CHECK_THROWS_AS(load_config({}, {"finetune.stepz=3"}), Error);
  CHECK_THROWS_AS(load_config({}, {"nonsense"}), Error);
  CHECK_THROWS_AS(load_config({}, {"toggles.bogus=true"}), Error);
  CHECK_THROWS_AS(load_config("/nonexistent/config.json"), IoError);
}

TEST_CASE("config JSON round-trips") {
  auto c = load_config({}, {"seed=9", "decode.beam_size=3", "toggles.rethink=false"});
  const auto back = PipelineConfig::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());
}

TEST_CASE("active lambdas follow the toggles") {
  PipelineConfig c;
  c.lambdas = {0.9, 0.1, 0.1, 0.0};
  CHECK(c.active_lambdas() == std::vector<double>{0.0, 0.1, 0.9});
  c.toggles.rethink = false;
  CHECK(c.active_lambdas() == std::vector<double>{0.1});
  c.toggles.retrospective_training = false;
  CHECK(c.active_lambdas() == std::vector<double>{0.0});
}

TEST_CASE("ablation rows switch stages on cumulatively") {
  const auto rows = ablation_variants(true);
  REQUIRE(rows.size() == 7);
  CHECK(rows[0].toggles == Toggles::none());
  CHECK(rows[6].toggles == Toggles{});
  for (std::size_t i = 1; i < rows.size(); ++i) CHECK(rows[i].toggles.enabled().size() == i);
  CHECK(parse_variant("+refine").toggles.enabled().size() == 5);
  const auto custom = parse_variant("mine=retrieval+rethink");
  CHECK(custom.name == "mine");
  CHECK(custom.toggles.enabled() == std::vector<std::string>{"retrieval", "rethink"});
  CHECK_THROWS_AS(parse_variant("mine=warp"), Error);
  CHECK_THROWS_AS(parse_variant("unknown"), Error);
}

TEST_CASE("tiny pipeline runs, caches and reproduces") {
  kgr4::testing::TempDir dir("kgr4-pipe");
  const auto config = kgr4::testing::tiny_pipeline(dir.path());
  const auto first = run(config);
  REQUIRE(first.ok);
  for (const auto& s : first.stages) CHECK(s.status == "ran");
  const auto preds = slurp(first.run_dir / "predictions.jsonl");
  const auto report = slurp(first.run_dir / "report.json");
  CHECK(std::count(preds.begin(), preds.end(), '\n') == 8);
  CHECK(json::parse(report)["overall"]["count"] == 8);
  CHECK(first.find("finetune@1") != nullptr);
  CHECK(first.find("pretrain") != nullptr);

  const auto second = run(config);
  REQUIRE(second.ok);
  for (const auto& s : second.stages) {
    CAPTURE(s.name);
    CHECK(s.status == (s.name == "rethink_evaluate" ? "ran" : "cached"));
  }
  CHECK(slurp(second.run_dir / "predictions.jsonl") == preds);

  // A fresh workdir recomputes every stage to the same bytes.
  auto moved = config;
  moved.workdir = dir / "work2";
  const auto third = run(moved);
  REQUIRE(third.ok);
  CHECK(third.config_hash == first.config_hash);
  CHECK(slurp(third.run_dir / "predictions.jsonl") == preds);
  CHECK(slurp(third.run_dir / "report.json") == report);

  // Changing a finetuning setting reuses everything upstream.
  auto changed = config;
  changed.finetune.steps = 5;
  const auto fourth = run(changed);
  REQUIRE(fourth.ok);
  CHECK(fourth.find("pretrain")->status == "cached");
  CHECK(fourth.find("refiner")->status == "cached");
  CHECK(fourth.find("finetune@0.1")->status == "ran");
}

TEST_CASE("tiny ablation emits one row per variant") {
  kgr4::testing::TempDir dir("kgr4-abl");
  const auto config = kgr4::testing::tiny_pipeline(dir.path());
  const std::vector<Variant> variants{parse_variant("base"), parse_variant("+retrieval"), parse_variant("+rethink")};
  const auto rows = ablation(config, variants);
  REQUIRE(rows.size() == 3);
  for (const auto& r : rows) {
    CHECK(r.ok);
    CHECK(r.metrics.count == 8);
  }
  const auto table = ablation_table(rows);
  CHECK(table.find("+rethink") != std::string::npos);
  const auto csv = ablation_csv(rows);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
}

TEST_CASE("missing inputs fail validation") {
  kgr4::testing::TempDir dir;
  auto c = load_config({}, {"workdir=" + (dir / "w").string()});
  CHECK_THROWS_AS(c.validate(), Error);
  CHECK_THROWS_AS(run(c), Error);
}
