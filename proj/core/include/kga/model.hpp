// The host decoder-only transformer: configuration, weights, deterministic
// initialization, and the canonical parameter order used by the trainer and
// the checkpoint format.
//
// Blocks are pre-norm: h += Wo*MHA(LN1(h)); h += FFN(LN2(h)), with a final
// layer norm before the embedding-tied LM head. Positions are sinusoidal and
// restart at 0 after every SEP/ANS token, so each fact or question segment
// (and every independently encoded triple) carries its own position origin.
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "kga/matrix.hpp"
#include "kga/vocab.hpp"

namespace kga {

struct ModelConfig {
  std::size_t num_layers = 2;    // L, at least 2 so layer-wise traces are meaningful
  std::size_t model_dim = 64;    // D
  std::size_t num_heads = 4;     // H, D % H == 0
  std::size_t ffn_dim = 256;
  std::size_t vocab_size = 0;
  std::size_t max_seq_len = 256;
  std::uint64_t seed = 0;

  std::size_t head_dim() const { return model_dim / num_heads; }
  void validate() const;  // throws std::invalid_argument on a bad combination
};

struct LayerWeights {
  DenseMatrix ln1_gain, ln1_bias;  // 1 x D
  DenseMatrix wq, wk, wv, wo;      // D x D
  DenseMatrix ln2_gain, ln2_bias;  // 1 x D
  DenseMatrix ffn_in;              // D x ffn
  DenseMatrix ffn_out;             // ffn x D
};

struct Model {
  ModelConfig config;
  DenseMatrix embedding;  // vocab x D; doubles as the tied LM head
  std::vector<LayerWeights> layers;
  DenseMatrix final_gain, final_bias;  // 1 x D
};

// Weights drawn from N(0, 0.05^2) with the config seed; norm gains 1, biases 0.
Model init_model(const ModelConfig& config);

// Same shapes, all weights zero. Used for gradient and optimizer-state storage.
Model zeros_like(const Model& model);

// Visits every weight matrix in the canonical (checkpoint) order.
void for_each_param(Model& model,
                    const std::function<void(DenseMatrix&, const std::string&)>& fn);
void for_each_param(const Model& model,
                    const std::function<void(const DenseMatrix&, const std::string&)>& fn);

// FNV-1a over the little-endian bytes of all weights in canonical order.
// Stable across platforms; used as the cache key and for the
// parameter-preservation checks.
std::uint64_t model_checksum(const Model& model);

// Sinusoidal position encoding for one position, written into out (length D).
void position_encoding(std::size_t position, std::size_t dim, std::span<double> out);

// y = gain * (x - mean) / sqrt(var + 1e-5) + bias, row-wise over a vector.
void layer_norm(std::span<const double> x, const DenseMatrix& gain, const DenseMatrix& bias,
                std::span<double> out);

double gelu(double x);
double gelu_derivative(double x);

}  // namespace kga
