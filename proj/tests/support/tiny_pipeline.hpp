#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "kgr4/pipeline.hpp"
#include "kgr4/synth.hpp"

namespace kgr4::testing {

/// A toy world small enough for the whole pipeline to run in seconds.
inline PipelineConfig tiny_pipeline(const std::filesystem::path& dir) {
  ToyWorldConfig toy;
  toy.corpus_size = 300;
  toy.train_sets = 30;
  toy.test_sets = 8;
  write_toy_world(dir / "data", make_toy_world(toy));
  std::vector<std::string> overrides{
      "workdir=" + (dir / "work").string(),
      "data.corpus=" + (dir / "data" / "corpus.txt").string(),
      "data.train=" + (dir / "data" / "train.jsonl").string(),
      "data.test=" + (dir / "data" / "test.jsonl").string(),
      "data.graph=" + (dir / "data" / "graph.tsv").string(),
      "lambdas=[0.1, 1.0]",
      "scorer.steps=20",
      "model={\"dim\": 8, \"heads\": 2, \"ff_dim\": 16, \"encoder_layers\": 1, \"decoder_layers\": 1, "
      "\"max_src_len\": 48, \"max_tgt_len\": 16}",
      "refiner.model={\"dim\": 8, \"heads\": 2, \"ff_dim\": 16, \"encoder_layers\": 1, \"decoder_layers\": 1, "
      "\"max_src_len\": 24, \"max_tgt_len\": 16}",
      "pretrain.steps=4",
      "finetune.steps=4",
      "refiner.fit.steps=4",
      "perturbation.instance_rate=0.5",
      "decode.beam_size=2",
      "decode.max_len=8"};
  return load_config({}, overrides);
}

}  // namespace kgr4::testing
