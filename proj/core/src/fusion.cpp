#include "kga/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace kga {

void FusionConfig::validate(std::size_t num_layers) const {
  if (aggregation == ScoreAggregation::kNamedLayer &&
      (named_layer < 1 || named_layer > num_layers)) {
    throw std::invalid_argument("FusionConfig: named_layer " + std::to_string(named_layer) +
                                " outside [1, " + std::to_string(num_layers) + "]");
  }
}

namespace {

void check_encoding(const Model& model, const TripleEncoding& enc, std::size_t layer) {
  if (layer >= model.config.num_layers) {
    throw std::invalid_argument("fusion: layer " + std::to_string(layer) + " out of range");
  }
  if (enc.k.size() != model.config.num_layers || enc.k[layer].cols() != model.config.model_dim) {
    throw std::invalid_argument("fusion: triple encoding layer layout does not match the model");
  }
}

}  // namespace

std::vector<double> outward_attention(const Model& model, const LayerStates& states,
                                      std::size_t layer, std::size_t n,
                                      std::span<const TripleEncoding* const> triples,
                                      AttentionMeter* meter) {
  if (layer >= model.config.num_layers) {
    throw std::invalid_argument("outward_attention: layer out of range");
  }
  if (n >= states.kv[layer].rows()) {
    throw std::logic_error("outward_attention: position not populated");
  }
  std::vector<ExternalKv> external;
  external.reserve(triples.size());
  for (const TripleEncoding* enc : triples) {
    check_encoding(model, *enc, layer);
    external.push_back(ExternalKv{&enc->k[layer], &enc->v[layer]});
  }

  const auto& w = model.layers[layer];
  const std::size_t d = model.config.model_dim;
  std::vector<double> normed(d), mix(d);
  layer_norm(states.hidden_row(layer, n), w.ln1_gain, w.ln1_bias, normed);
  const auto q = vec_matmul(normed, w.wq);
  attention_mix_joint(q, model.config.num_heads, states.kv[layer], n + 1, external, mix, meter);
  return vec_matmul(mix, w.wo);
}

DenseMatrix inward_attention(const Model& model, const TripleEncoding& enc,
                             const LayerStates& states, std::size_t layer,
                             AttentionMeter* meter) {
  check_encoding(model, enc, layer);
  const std::size_t n = states.kv[layer].rows();
  if (n == 0) throw std::domain_error("inward_attention: no input positions");

  const std::size_t d = model.config.model_dim;
  DenseMatrix recalibrated(enc.token_count, d);
  std::vector<double> mix(d);
  for (std::size_t m = 0; m < enc.token_count; ++m) {
    // Full input visibility: every input key, no causal mask.
    attention_mix_joint(enc.q[layer].row(m), model.config.num_heads, states.kv[layer], n, {},
                        mix, meter);
    std::copy(mix.begin(), mix.end(), recalibrated.row(m).begin());
  }
  return recalibrated;
}

std::vector<double> consolidate(const DenseMatrix& recalibrated,
                                std::span<const double> weights) {
  if (weights.size() != recalibrated.rows()) {
    throw std::invalid_argument("consolidate: " + std::to_string(weights.size()) +
                                " weights for " + std::to_string(recalibrated.rows()) + " rows");
  }
  double sum = 0.0;
  for (double w : weights) sum += w;
  if (std::abs(sum - 1.0) > 1e-9) {
    throw std::invalid_argument("consolidate: weights sum to " + std::to_string(sum));
  }
  std::vector<double> out(recalibrated.cols(), 0.0);
  for (std::size_t j = 0; j < weights.size(); ++j) {
    const auto row = recalibrated.row(j);
    for (std::size_t c = 0; c < out.size(); ++c) out[c] += weights[j] * row[c];
  }
  return out;
}

namespace {

double aggregate(const std::vector<double>& per_layer, const FusionConfig& config) {
  switch (config.aggregation) {
    case ScoreAggregation::kMeanOverLayers:
      return std::accumulate(per_layer.begin(), per_layer.end(), 0.0) /
             static_cast<double>(per_layer.size());
    case ScoreAggregation::kLastLayer:
      return per_layer.back();
    case ScoreAggregation::kNamedLayer:
      return per_layer.at(config.named_layer - 1);
  }
  throw std::logic_error("aggregate: unknown policy");
}

}  // namespace

TripleScoreRecord score_triple(std::int64_t triple_id,
                               const std::vector<std::vector<double>>& rhat_per_layer,
                               const std::vector<std::vector<double>>& xhat_last_per_layer,
                               const FusionConfig& config) {
  if (rhat_per_layer.size() != xhat_last_per_layer.size() || rhat_per_layer.empty()) {
    throw std::invalid_argument("score_triple: layer count mismatch");
  }
  config.validate(rhat_per_layer.size());
  TripleScoreRecord record;
  record.triple_id = triple_id;
  record.consolidated = rhat_per_layer;
  record.per_layer_score.reserve(rhat_per_layer.size());
  for (std::size_t l = 0; l < rhat_per_layer.size(); ++l) {
    if (rhat_per_layer[l].size() != xhat_last_per_layer[l].size()) {
      throw std::invalid_argument("score_triple: dimension mismatch at layer " +
                                  std::to_string(l + 1));
    }
    record.per_layer_score.push_back(dot(rhat_per_layer[l], xhat_last_per_layer[l]));
  }
  record.aggregated_score = aggregate(record.per_layer_score, config);
  return record;
}

TripleScoreRecord score_candidate(const Model& model, const TripleEncoding& enc,
                                  const LayerStates& pass1, const FusionConfig& config,
                                  AttentionMeter* meter) {
  const std::size_t layers = model.config.num_layers;
  std::vector<std::vector<double>> rhat(layers);
  for (std::size_t l = 0; l < layers; ++l) {
    const DenseMatrix recalibrated = inward_attention(model, enc, pass1, l, meter);
    rhat[l] = consolidate(recalibrated, enc.last_row_attn[l]);
  }
  return score_triple(enc.triple_id, rhat, pass1.last_mixture, config);
}

std::vector<std::int64_t> rank_and_select(std::span<const TripleScoreRecord> records,
                                          std::size_t k) {
  std::vector<const TripleScoreRecord*> order;
  order.reserve(records.size());
  for (const auto& r : records) order.push_back(&r);
  std::sort(order.begin(), order.end(), [](const auto* a, const auto* b) {
    if (a->aggregated_score != b->aggregated_score) {
      return a->aggregated_score > b->aggregated_score;
    }
    return a->triple_id < b->triple_id;
  });
  std::vector<std::int64_t> selected;
  selected.reserve(std::min(k, order.size()));
  for (std::size_t i = 0; i < order.size() && i < k; ++i) {
    selected.push_back(order[i]->triple_id);
  }
  return selected;
}

KgaResult kga_forward(const Model& model, std::span<const TokenId> tokens,
                      std::span<const TripleEncoding* const> candidates,
                      const FusionConfig& config, FusionMeters* meters) {
  config.validate(model.config.num_layers);
  KgaResult result;

  std::vector<const TripleEncoding*> selected_encodings;
  if (config.selection_bypass) {
    // Direct fusion without screening; ascending id for determinism.
    selected_encodings.assign(candidates.begin(), candidates.end());
    std::sort(selected_encodings.begin(), selected_encodings.end(),
              [](const auto* a, const auto* b) { return a->triple_id < b->triple_id; });
    for (const auto* enc : selected_encodings) result.selected.push_back(enc->triple_id);
  } else if (!candidates.empty()) {
    ForwardSession pass1(model, {.meter = meters ? &meters->pass1 : nullptr});
    for (TokenId t : tokens) pass1.append(t);

    result.scores.reserve(candidates.size());
    for (const TripleEncoding* enc : candidates) {
      result.scores.push_back(score_candidate(model, *enc, pass1.states(), config,
                                              meters ? &meters->inward : nullptr));
    }
    result.selected = rank_and_select(result.scores, config.k);
    for (std::int64_t id : result.selected) {
      for (const TripleEncoding* enc : candidates) {
        if (enc->triple_id == id) {
          selected_encodings.push_back(enc);
          break;
        }
      }
    }
  }

  ForwardSession pass2(model, {.meter = meters ? &meters->pass2 : nullptr,
                               .fused = selected_encodings});
  result.logits = DenseMatrix(tokens.size(), model.config.vocab_size);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto row = pass2.append(tokens[i]);
    std::copy(row.begin(), row.end(), result.logits.row(i).begin());
  }
  result.kv_bytes_peak = pass2.kv_bytes_peak();
  return result;
}

DenseMatrix cross_attention_forward(const Model& model, std::span<const TokenId> tokens,
                                    std::span<const TripleEncoding* const> triples,
                                    AttentionMeter* meter) {
  if (triples.empty()) {
    throw std::domain_error("cross_attention_forward: requires at least one triple");
  }
  ForwardSession session(model, {.meter = meter, .fused = triples, .cross_only = true});
  DenseMatrix logits(tokens.size(), model.config.vocab_size);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto row = session.append(tokens[i]);
    std::copy(row.begin(), row.end(), logits.row(i).begin());
  }
  return logits;
}

}  // namespace kga
