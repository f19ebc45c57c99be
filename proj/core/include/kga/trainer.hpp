// Next-token cross-entropy training with hand-written backpropagation and an
// Adam update (beta1 0.9, beta2 0.999, eps 1e-8, bias-corrected). Single
// threaded and fully determined by the options seed.
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "kga/model.hpp"

namespace kga {

struct TrainOptions {
  std::size_t steps = 1000;
  double lr = 1e-3;
  std::size_t batch = 8;
  std::uint64_t seed = 1;  // drives batch sampling only
};

struct TrainResult {
  std::vector<double> loss_curve;  // one mean cross-entropy per step
};

// Trains in place. Zero steps leaves the model untouched. Throws
// std::invalid_argument on an empty corpus and std::runtime_error naming the
// step index when the loss stops being finite.
TrainResult train_lm(Model& model, const std::vector<std::vector<TokenId>>& corpus,
                     const TrainOptions& options);

// Mean next-token cross-entropy of the batch, forward only.
double lm_loss(const Model& model, std::span<const std::vector<TokenId>> batch);

// Analytic gradients of lm_loss accumulated into `grads` (zeroed first);
// returns the loss. Exposed so finite-difference checks can target it.
double lm_loss_grads(const Model& model, std::span<const std::vector<TokenId>> batch,
                     Model& grads);

}  // namespace kga
