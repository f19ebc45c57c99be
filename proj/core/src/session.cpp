#include "kga/session.hpp"

#include <cmath>
#include <stdexcept>

namespace kga {

std::span<const double> LayerStates::hidden_row(std::size_t layer, std::size_t pos) const {
  const auto& buf = hidden.at(layer);
  return {buf.data() + pos * model_dim, model_dim};
}

ForwardSession::ForwardSession(const Model& model) : ForwardSession(model, Options{}) {}

ForwardSession::ForwardSession(const Model& model, Options options)
    : model_(&model),
      fused_(options.fused.begin(), options.fused.end()),
      meter_(options.meter),
      cross_only_(options.cross_only) {
  const auto& cfg = model.config;
  cfg.validate();
  if (cross_only_ && fused_.empty()) {
    throw std::domain_error("ForwardSession: cross-only attention requires at least one triple");
  }

  states_.model_dim = cfg.model_dim;
  states_.num_heads = cfg.num_heads;
  states_.kv.resize(cfg.num_layers);
  for (auto& buf : states_.kv) buf.cols = cfg.model_dim;
  states_.hidden.resize(cfg.num_layers + 1);
  states_.last_mixture.assign(cfg.num_layers, std::vector<double>(cfg.model_dim, 0.0));
  states_.tracing = options.trace;
  if (options.trace) states_.attn_rows.resize(cfg.num_layers);

  external_.resize(cfg.num_layers);
  for (std::size_t l = 0; l < cfg.num_layers; ++l) {
    for (const TripleEncoding* enc : fused_) {
      if (enc->q.size() != cfg.num_layers || enc->k[l].cols() != cfg.model_dim) {
        throw std::invalid_argument("ForwardSession: triple encoding does not match model layout");
      }
      external_[l].push_back(ExternalKv{&enc->k[l], &enc->v[l]});
    }
  }
}

std::vector<double> ForwardSession::append(TokenId token) {
  const auto& cfg = model_->config;
  if (length() >= cfg.max_seq_len) {
    throw std::length_error("ForwardSession: sequence longer than max_seq_len " +
                            std::to_string(cfg.max_seq_len));
  }
  if (token >= cfg.vocab_size) {
    throw std::out_of_range("ForwardSession: token id " + std::to_string(token) +
                            " outside vocabulary");
  }
  const std::size_t d = cfg.model_dim;
  const std::size_t pos = next_segment_pos_;
  // Positions restart after segment markers, giving every fact, question and
  // triple the same origin it had in training.
  next_segment_pos_ = (token == kSepId || token == kAnsId) ? 0 : pos + 1;

  const double embed_scale = std::sqrt(static_cast<double>(d));
  std::vector<double> x(d);
  position_encoding(pos, d, x);
  {
    const auto row = model_->embedding.row(token);
    for (std::size_t i = 0; i < d; ++i) x[i] += row[i] * embed_scale;
  }

  std::vector<double> normed(d), mix(d), scratch(d);
  std::vector<double> trace_row;
  const std::size_t n_prev = length();

  for (std::size_t l = 0; l < cfg.num_layers; ++l) {
    const auto& w = model_->layers[l];
    states_.hidden[l].insert(states_.hidden[l].end(), x.begin(), x.end());

    layer_norm(x, w.ln1_gain, w.ln1_bias, normed);
    const auto q = vec_matmul(normed, w.wq);
    const auto k = vec_matmul(normed, w.wk);
    const auto v = vec_matmul(normed, w.wv);
    states_.kv[l].append(k, v);

    const std::size_t self_keys = cross_only_ ? 0 : n_prev + 1;
    attention_mix_joint(q, cfg.num_heads, states_.kv[l], self_keys, external_[l], mix, meter_,
                        states_.tracing ? &trace_row : nullptr);
    states_.last_mixture[l] = mix;
    if (states_.tracing) {
      const std::size_t total = trace_row.size() / cfg.num_heads;
      for (std::size_t h = 0; h < cfg.num_heads; ++h) {
        states_.attn_rows[l].emplace_back(trace_row.begin() + h * total,
                                          trace_row.begin() + (h + 1) * total);
      }
    }

    const auto attn_out = vec_matmul(mix, w.wo);
    for (std::size_t i = 0; i < d; ++i) x[i] += attn_out[i];

    layer_norm(x, w.ln2_gain, w.ln2_bias, normed);
    auto pre = vec_matmul(normed, w.ffn_in);
    for (double& p : pre) p = gelu(p);
    const auto f = vec_matmul(pre, w.ffn_out);
    for (std::size_t i = 0; i < d; ++i) x[i] += f[i];
  }
  states_.hidden[cfg.num_layers].insert(states_.hidden[cfg.num_layers].end(), x.begin(), x.end());

  kv_bytes_peak_ = std::max(kv_bytes_peak_, kv_bytes());

  layer_norm(x, model_->final_gain, model_->final_bias, scratch);
  std::vector<double> logits(cfg.vocab_size);
  for (std::size_t t = 0; t < cfg.vocab_size; ++t) {
    logits[t] = dot(scratch, model_->embedding.row(t));
  }
  return logits;
}

std::uint64_t ForwardSession::kv_bytes() const {
  std::uint64_t total = 0;
  for (const auto& buf : states_.kv) total += buf.bytes();
  for (const TripleEncoding* enc : fused_) {
    for (std::size_t l = 0; l < enc->k.size(); ++l) {
      total += (enc->k[l].size() + enc->v[l].size()) * sizeof(double);
    }
  }
  return total;
}

ForwardResult forward_lm(const Model& model, std::span<const TokenId> tokens, bool trace,
                         AttentionMeter* meter) {
  ForwardSession session(model, {.trace = trace, .meter = meter});
  DenseMatrix logits(tokens.size(), model.config.vocab_size);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto row = session.append(tokens[i]);
    std::copy(row.begin(), row.end(), logits.row(i).begin());
  }
  return {std::move(logits), session.states()};
}

std::vector<double> causal_self_attention(const Model& model, const LayerStates& states,
                                          std::size_t layer, std::size_t n,
                                          AttentionMeter* meter) {
  if (layer >= model.config.num_layers) {
    throw std::invalid_argument("causal_self_attention: layer out of range");
  }
  if (n >= states.kv[layer].rows()) {
    throw std::logic_error("causal_self_attention: position " + std::to_string(n) +
                           " not populated (have " + std::to_string(states.kv[layer].rows()) +
                           ")");
  }
  const auto& w = model.layers[layer];
  const std::size_t d = model.config.model_dim;
  std::vector<double> normed(d), mix(d);
  layer_norm(states.hidden_row(layer, n), w.ln1_gain, w.ln1_bias, normed);
  const auto q = vec_matmul(normed, w.wq);
  attention_mix_joint(q, model.config.num_heads, states.kv[layer], n + 1, {}, mix, meter);
  return vec_matmul(mix, w.wo);
}

DecodeResult greedy_decode(const Model& model, std::span<const TokenId> prompt,
                           std::size_t max_new, std::span<const TripleEncoding* const> fused,
                           bool cross_only) {
  if (prompt.empty()) throw std::domain_error("greedy_decode: empty prompt");
  AttentionMeter meter;
  ForwardSession session(model, {.meter = &meter, .fused = fused, .cross_only = cross_only});

  std::vector<double> logits;
  for (TokenId t : prompt) logits = session.append(t);
  DecodeResult result;
  result.prompt_attn_flops = meter.flops;

  while (result.continuation.size() < max_new) {
    TokenId best = 0;
    double best_v = logits[0];
    for (std::size_t t = 1; t < logits.size(); ++t) {
      if (logits[t] > best_v) {
        best_v = logits[t];
        best = static_cast<TokenId>(t);
      }
    }
    if (best == kSepId || best == kAnsId) break;
    result.continuation.push_back(best);
    if (result.continuation.size() == max_new) break;
    if (session.length() >= model.config.max_seq_len) break;
    logits = session.append(best);
  }
  result.kv_bytes_peak = session.kv_bytes_peak();
  result.decode_attn_flops = meter.flops - result.prompt_attn_flops;
  return result;
}

}  // namespace kga
