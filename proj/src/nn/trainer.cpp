#include "kgr4/nn/trainer.hpp"

#include <algorithm>
#include <numeric>

#include "kgr4/error.hpp"

namespace kgr4::nn {

TrainStats train(ParameterSet& params, std::size_t num_examples, const ExampleLoss& loss,
                 const HoldoutLoss& holdout, const TrainConfig& config, std::mt19937_64& rng) {
  TrainStats stats;
  if (config.steps <= 0) return stats;
  if (num_examples == 0) throw Error("no training examples");
  if (config.batch_size < 1) throw Error("batch size must be positive");

  Adam adam(params, config.adam);
  Gradients grads(params);
  std::vector<std::size_t> order(num_examples);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t cursor = 0;

  std::vector<double> best = params.flatten();
  stats.best_holdout = holdout ? holdout() : 0.0;
  if (holdout) stats.holdout_losses.push_back(stats.best_holdout);
  int bad_evals = 0;

  for (long step = 1; step <= config.steps; ++step) {
    grads.zero();
    double batch_loss = 0.0;
    for (int b = 0; b < config.batch_size; ++b) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      batch_loss += loss(order[cursor++], grads, rng);
    }
    grads.scale(1.0 / config.batch_size);
    adam.step(params, grads);
    stats.batch_losses.push_back(batch_loss / config.batch_size);
    stats.steps_run = step;

    if (holdout && (step % config.eval_every == 0 || step == config.steps)) {
      const double h = holdout();
      stats.holdout_losses.push_back(h);
      if (h < stats.best_holdout) {
        stats.best_holdout = h;
        stats.best_step = step;
        best = params.flatten();
        bad_evals = 0;
      } else if (++bad_evals >= config.patience) {
        stats.stopped_early = true;
        break;
      }
    }
  }
  if (holdout) {
    params.assign(best);
  } else {
    stats.best_step = stats.steps_run;
  }
  return stats;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(
    std::size_t n, double holdout_fraction, std::mt19937_64& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  auto held = static_cast<std::size_t>(static_cast<double>(n) * holdout_fraction);
  if (holdout_fraction > 0.0 && held == 0 && n >= 2) held = 1;
  std::vector<std::size_t> hold(idx.begin(), idx.begin() + static_cast<long>(held));
  std::vector<std::size_t> train(idx.begin() + static_cast<long>(held), idx.end());
  std::sort(hold.begin(), hold.end());
  std::sort(train.begin(), train.end());
  return {train, hold};
}

}  // namespace kgr4::nn
