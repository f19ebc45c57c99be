// The knowledge-fusion mechanism. Three attention flows share one joint
// softmax kernel:
//   outward  - input queries attend over causal self keys plus the selected
//              triples' keys, fusing knowledge into input representations;
//   inward   - triple queries attend non-causally over all input keys,
//              producing recalibrated rows used only for triple selection;
//   self     - the native causal flow, which outward reduces to when no
//              triples are attached.
// Selection runs once per request: a fusion-free pass scores every candidate
// through inward aggregation, consolidation against the triple's own
// last-token attention, and a dot product with the input's final-token
// attention mixture; the top-k winners are fused in a second pass. Model
// parameters are never touched.
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "kga/encoding.hpp"
#include "kga/matrix.hpp"
#include "kga/model.hpp"
#include "kga/session.hpp"

namespace kga {

enum class ScoreAggregation {
  kMeanOverLayers,  // default: average the per-layer scores
  kLastLayer,
  kNamedLayer,  // a single 1-based layer picked by FusionConfig::named_layer
};

struct FusionConfig {
  std::size_t k = 3;
  ScoreAggregation aggregation = ScoreAggregation::kMeanOverLayers;
  std::size_t named_layer = 1;     // 1-based, only read for kNamedLayer
  bool selection_bypass = false;   // fuse every provided triple, no screening

  void validate(std::size_t num_layers) const;
};

struct TripleScoreRecord {
  std::int64_t triple_id = -1;
  std::vector<std::vector<double>> consolidated;  // r-hat per layer, each length D
  std::vector<double> per_layer_score;            // s^(l), length L
  double aggregated_score = 0.0;
};

// Fused attention output (after the output projection) for position n of the
// given layer: one joint softmax over the causal self keys up to n and every
// token of every listed triple. With an empty triple list this is exactly
// causal_self_attention - the same code path.
std::vector<double> outward_attention(const Model& model, const LayerStates& states,
                                      std::size_t layer, std::size_t n,
                                      std::span<const TripleEncoding* const> triples,
                                      AttentionMeter* meter = nullptr);

// Non-causal recalibration: row m is the softmax of triple query m over all N
// input keys applied to the input values (heads concatenated, before any
// projection). Requires states from a fusion-free pass. Returns M x D.
DenseMatrix inward_attention(const Model& model, const TripleEncoding& enc,
                             const LayerStates& states, std::size_t layer,
                             AttentionMeter* meter = nullptr);

// r-hat = sum_j w_j * row_j; weights must have one entry per row and sum to 1.
std::vector<double> consolidate(const DenseMatrix& recalibrated,
                                std::span<const double> weights);

// Per-layer scores s^(l) = dot(r-hat^(l), xhat_N^(l)) plus the aggregate
// under the configured policy.
TripleScoreRecord score_triple(std::int64_t triple_id,
                               const std::vector<std::vector<double>>& rhat_per_layer,
                               const std::vector<std::vector<double>>& xhat_last_per_layer,
                               const FusionConfig& config);

// Full per-candidate scoring pipeline against a fusion-free pass.
TripleScoreRecord score_candidate(const Model& model, const TripleEncoding& enc,
                                  const LayerStates& pass1, const FusionConfig& config,
                                  AttentionMeter* meter = nullptr);

// Descending by aggregated score, ties by ascending triple id; k of them
// (all, when k exceeds the pool).
std::vector<std::int64_t> rank_and_select(std::span<const TripleScoreRecord> records,
                                          std::size_t k);

struct FusionMeters {
  AttentionMeter pass1;    // fusion-free input pass
  AttentionMeter inward;   // per-candidate scoring
  AttentionMeter pass2;    // fused forward
};

struct KgaResult {
  DenseMatrix logits;                     // N x vocab, from the fused pass
  std::vector<std::int64_t> selected;     // fused triple ids, selection order
  std::vector<TripleScoreRecord> scores;  // one per candidate (empty under bypass)
  std::uint64_t kv_bytes_peak = 0;        // input cache + fused triples, fused pass
};

// The two-pass pipeline. Pass 1 runs the model without fusion, scores every
// candidate, and selects top-k (skipped when bypassing: all candidates fuse,
// ascending id). Pass 2 re-runs the input with outward attention over the
// winners at every layer.
KgaResult kga_forward(const Model& model, std::span<const TokenId> tokens,
                      std::span<const TripleEncoding* const> candidates,
                      const FusionConfig& config, FusionMeters* meters = nullptr);

// Ablation baseline: every layer's attention reads the triple keys/values
// only - no input-to-input flow in the mixture. Throws std::domain_error
// with zero triples.
DenseMatrix cross_attention_forward(const Model& model, std::span<const TokenId> tokens,
                                    std::span<const TripleEncoding* const> triples,
                                    AttentionMeter* meter = nullptr);

}  // namespace kga
