#include <cmath>

#include "doctest.h"
#include "kga/model.hpp"
#include "kga/rng.hpp"
#include "kga/session.hpp"
#include "kga/trainer.hpp"

using namespace kga;

namespace {

Model grad_model(std::uint64_t seed = 21) {
  ModelConfig cfg;
  cfg.num_layers = 2;
  cfg.model_dim = 12;
  cfg.num_heads = 3;
  cfg.ffn_dim = 20;
  cfg.vocab_size = 17;
  cfg.max_seq_len = 32;
  cfg.seed = seed;
  return init_model(cfg);
}

std::vector<std::vector<TokenId>> grad_batch() {
  return {
      {5, 9, 3, 7, 12, 4, 6, 3},
      {8, 10, 11, 5, 16, 14},
  };
}

}  // namespace

TEST_CASE("analytic gradients match central finite differences") {
  Model model = grad_model();
  const auto batch = grad_batch();
  Model grads = zeros_like(model);
  lm_loss_grads(model, batch, grads);

  // Pointer tables in the canonical order, so a flat index picks a weight.
  std::vector<DenseMatrix*> params, g_params;
  for_each_param(model, [&](DenseMatrix& m, const std::string&) { params.push_back(&m); });
  for_each_param(grads, [&](DenseMatrix& m, const std::string&) { g_params.push_back(&m); });

  const double eps = 1e-5;
  SeededRng rng(99);
  std::size_t checked = 0;
  while (checked < 25) {
    const std::size_t p = rng.next_below(params.size());
    if (params[p]->size() == 0) continue;
    const std::size_t i = rng.next_below(params[p]->size());

    const double original = params[p]->data()[i];
    params[p]->data()[i] = original + eps;
    const double up = lm_loss(model, batch);
    params[p]->data()[i] = original - eps;
    const double down = lm_loss(model, batch);
    params[p]->data()[i] = original;

    const double fd = (up - down) / (2.0 * eps);
    const double analytic = g_params[p]->data()[i];
    // Relative comparison with an absolute floor below measurement noise.
    const double rel = std::abs(analytic - fd) / std::max({std::abs(analytic), std::abs(fd), 1e-6});
    CHECK(rel < 1e-4);
    ++checked;
  }
}

TEST_CASE("training memorizes a single sequence") {
  Model model = grad_model(33);
  const std::vector<std::vector<TokenId>> corpus{{6, 9, 13, 5, 11, 8, 7, 14, 10, 3}};

  const double initial = lm_loss(model, corpus);
  TrainOptions opts;
  opts.steps = 200;
  opts.lr = 3e-3;
  opts.batch = 1;
  opts.seed = 7;
  const auto result = train_lm(model, corpus, opts);
  REQUIRE(result.loss_curve.size() == 200);
  const double final = lm_loss(model, corpus);
  CHECK(final < 0.1 * initial);

  // The memorized continuation reproduces the training target.
  const auto& seq = corpus.front();
  const std::vector<TokenId> prompt(seq.begin(), seq.begin() + 3);
  const auto decoded = greedy_decode(model, prompt, seq.size() - 3);
  REQUIRE(decoded.continuation.size() == seq.size() - 3);
  for (std::size_t i = 0; i < decoded.continuation.size(); ++i) {
    CHECK(decoded.continuation[i] == seq[3 + i]);
  }
}

TEST_CASE("zero steps leave the model unchanged") {
  Model model = grad_model(44);
  const std::uint64_t before = model_checksum(model);
  TrainOptions opts;
  opts.steps = 0;
  train_lm(model, {{5, 6, 7, 8}}, opts);
  CHECK(model_checksum(model) == before);
}

TEST_CASE("empty corpus is rejected") {
  Model model = grad_model();
  CHECK_THROWS_AS(train_lm(model, {}, TrainOptions{}), std::invalid_argument);
}

TEST_CASE("divergence raises with the step index") {
  Model model = grad_model(55);
  // An absurd learning rate blows the loss up to NaN within a few steps.
  TrainOptions opts;
  opts.steps = 400;
  opts.lr = 1e6;
  opts.batch = 1;
  CHECK_THROWS_WITH_AS(train_lm(model, {{5, 6, 7, 8, 9, 10, 11, 12}}, opts),
                       doctest::Contains("step"), std::runtime_error);
}

TEST_CASE("training is deterministic for a fixed seed") {
  const auto corpus = grad_batch();
  TrainOptions opts;
  opts.steps = 30;
  opts.lr = 1e-3;
  opts.batch = 2;
  opts.seed = 5;

  Model a = grad_model(66);
  Model b = grad_model(66);
  const auto ra = train_lm(a, corpus, opts);
  const auto rb = train_lm(b, corpus, opts);
  CHECK(model_checksum(a) == model_checksum(b));
  CHECK(ra.loss_curve == rb.loss_curve);
}
