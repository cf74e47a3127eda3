#pragma once

#include <functional>
#include <random>
#include <vector>

#include "kgr4/nn/adam.hpp"
#include "kgr4/nn/parameters.hpp"

namespace kgr4::nn {

struct TrainConfig {
  long steps = 1000;
  int batch_size = 16;
  int eval_every = 100;
  int patience = 3;  // evaluations without held-out improvement before stopping
  AdamConfig adam;
};

struct TrainStats {
  long steps_run = 0;
  long best_step = 0;
  double best_holdout = 0.0;
  bool stopped_early = false;
  std::vector<double> batch_losses;    // mean loss per step
  std::vector<double> holdout_losses;  // one per evaluation
};

/// Loss of training example `index`; adds its gradient into `grads`.
using ExampleLoss = std::function<double(std::size_t index, Gradients& grads, std::mt19937_64& rng)>;
/// Loss over the held-out split, evaluated without gradients.
using HoldoutLoss = std::function<double()>;

/// Minibatch Adam over `num_examples` with reshuffling every epoch and early
/// stopping on `holdout`. Gradients are averaged over the batch. The best
/// held-out checkpoint is restored at the end; without a held-out function the
/// final parameters are kept.
TrainStats train(ParameterSet& params, std::size_t num_examples, const ExampleLoss& loss,
                 const HoldoutLoss& holdout, const TrainConfig& config, std::mt19937_64& rng);

/// Deterministic split of [0, n) into (train, holdout) index lists.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(
    std::size_t n, double holdout_fraction, std::mt19937_64& rng);

}  // namespace kgr4::nn
