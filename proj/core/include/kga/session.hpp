// Incremental forward passes over the host model. A session owns the
// per-request state (hidden vectors, per-layer KV caches, optional attention
// traces) and appends one token at a time. Fused sessions additionally mix
// selected triple keys/values into every layer's attention under the joint
// softmax; with no triples attached the math (and the code path) is exactly
// causal self-attention.
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "kga/attention.hpp"
#include "kga/encoding.hpp"
#include "kga/matrix.hpp"
#include "kga/model.hpp"

namespace kga {

// Per-request inference state. Rows of `hidden[l]` are the inputs to layer l
// (hidden[L] holds the final pre-norm stream); kv[l] caches that layer's
// projected keys/values for every processed token.
struct LayerStates {
  std::size_t model_dim = 0;
  std::size_t num_heads = 0;

  std::vector<KvBuffer> kv;                        // size L
  std::vector<std::vector<double>> hidden;         // size L + 1, row-major N x D
  std::vector<std::vector<double>> last_mixture;   // size L, pre-projection mix at newest position

  // Retained only when tracing: per layer, per position, per head rows of the
  // joint attention weights (row length grows with the key set).
  bool tracing = false;
  std::vector<std::vector<std::vector<double>>> attn_rows;  // [layer][pos * H + h]

  std::size_t length() const { return kv.empty() ? 0 : kv.front().rows(); }
  std::span<const double> hidden_row(std::size_t layer, std::size_t pos) const;
};

class ForwardSession {
 public:
  struct Options {
    bool trace = false;
    AttentionMeter* meter = nullptr;
    std::span<const TripleEncoding* const> fused = {};  // triples mixed at every layer
    bool cross_only = false;  // ablation: attend to triple keys only (requires fused non-empty)
  };

  explicit ForwardSession(const Model& model);
  ForwardSession(const Model& model, Options options);

  // Appends one token and returns the next-token logits at its position.
  // Throws std::length_error past max_seq_len.
  std::vector<double> append(TokenId token);

  const LayerStates& states() const { return states_; }
  const Model& model() const { return *model_; }
  std::size_t length() const { return states_.length(); }

  // Exact bytes of retained keys/values: the input cache across all layers
  // plus the fused triples' K/V. Peak is tracked across the whole request.
  std::uint64_t kv_bytes() const;
  std::uint64_t kv_bytes_peak() const { return kv_bytes_peak_; }

  std::span<const TripleEncoding* const> fused() const { return fused_; }

 private:
  const Model* model_;
  LayerStates states_;
  std::vector<const TripleEncoding*> fused_;
  std::vector<std::vector<ExternalKv>> external_;  // per layer, one entry per fused triple
  AttentionMeter* meter_ = nullptr;
  bool cross_only_ = false;
  std::size_t next_segment_pos_ = 0;
  std::uint64_t kv_bytes_peak_ = 0;
};

// Full forward pass; returns per-position next-token logits (N x vocab) and
// the collected states.
struct ForwardResult {
  DenseMatrix logits;
  LayerStates states;
};
ForwardResult forward_lm(const Model& model, std::span<const TokenId> tokens, bool trace = false,
                         AttentionMeter* meter = nullptr);

// Attention output (after the output projection) for position `n` of `layer`,
// recomputed from retained states; the plain self-attention flow only.
// Throws std::logic_error when n is not populated.
std::vector<double> causal_self_attention(const Model& model, const LayerStates& states,
                                          std::size_t layer, std::size_t n,
                                          AttentionMeter* meter = nullptr);

// Greedy argmax decoding. Stops when the model emits SEP or ANS (the
// terminator is not part of the continuation), after max_new tokens, or at
// the model's capacity.
struct DecodeResult {
  std::vector<TokenId> continuation;
  std::uint64_t kv_bytes_peak = 0;
  std::uint64_t prompt_attn_flops = 0;  // attention flops spent on the prompt
  std::uint64_t decode_attn_flops = 0;  // attention flops spent on generated tokens
};
DecodeResult greedy_decode(const Model& model, std::span<const TokenId> prompt,
                           std::size_t max_new,
                           std::span<const TripleEncoding* const> fused = {},
                           bool cross_only = false);

}  // namespace kga
