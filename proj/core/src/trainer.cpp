#include "kga/trainer.hpp"

#include <cmath>
#include <stdexcept>

#include "kga/rng.hpp"

namespace kga {

namespace {

constexpr double kLnEps = 1e-5;
constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

// Row-wise layer norm over an N x D matrix keeping what backward needs.
struct NormCache {
  DenseMatrix xhat;             // normalized rows before gain/bias
  std::vector<double> inv_std;  // per row
};

void norm_forward(const DenseMatrix& x, const DenseMatrix& gain, const DenseMatrix& bias,
                  NormCache& cache, DenseMatrix& out) {
  const std::size_t n = x.rows(), d = x.cols();
  cache.xhat = DenseMatrix(n, d);
  cache.inv_std.assign(n, 0.0);
  out = DenseMatrix(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += x(i, j);
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double c = x(i, j) - mean;
      var += c * c;
    }
    var /= static_cast<double>(d);
    const double inv_std = 1.0 / std::sqrt(var + kLnEps);
    cache.inv_std[i] = inv_std;
    for (std::size_t j = 0; j < d; ++j) {
      const double xh = (x(i, j) - mean) * inv_std;
      cache.xhat(i, j) = xh;
      out(i, j) = gain(0, j) * xh + bias(0, j);
    }
  }
}

// d_out is the gradient at the norm output; accumulates into d_x and the
// gain/bias gradients.
void norm_backward(const DenseMatrix& d_out, const NormCache& cache, const DenseMatrix& gain,
                   DenseMatrix& d_x, DenseMatrix& d_gain, DenseMatrix& d_bias) {
  const std::size_t n = d_out.rows(), d = d_out.cols();
  for (std::size_t i = 0; i < n; ++i) {
    double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double g = d_out(i, j);
      const double xh = cache.xhat(i, j);
      d_gain(0, j) += g * xh;
      d_bias(0, j) += g;
      const double dxh = g * gain(0, j);
      sum_dxhat += dxh;
      sum_dxhat_xhat += dxh * xh;
    }
    const double inv_n = 1.0 / static_cast<double>(d);
    for (std::size_t j = 0; j < d; ++j) {
      const double dxh = d_out(i, j) * gain(0, j);
      d_x(i, j) += cache.inv_std[i] *
                   (dxh - inv_n * sum_dxhat - cache.xhat(i, j) * inv_n * sum_dxhat_xhat);
    }
  }
}

// out += a^T * b
void acc_at_b(const DenseMatrix& a, const DenseMatrix& b, DenseMatrix& out) {
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double av = a(i, kk);
      if (av == 0.0) continue;
      for (std::size_t j = 0; j < m; ++j) out(kk, j) += av * b(i, j);
    }
  }
}

// out += a * b^T
void acc_a_bt(const DenseMatrix& a, const DenseMatrix& b, DenseMatrix& out) {
  const std::size_t n = a.rows(), k = a.cols(), m = b.rows();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (std::size_t kk = 0; kk < k; ++kk) s += a(i, kk) * b(j, kk);
      out(i, j) += s;
    }
  }
}

struct LayerCache {
  DenseMatrix h_in;  // layer input
  NormCache ln1;
  DenseMatrix q, k, v;
  std::vector<DenseMatrix> attn;  // per head, N x N lower-triangular weights
  DenseMatrix mix;                // pre-projection attention output
  DenseMatrix h_mid;              // after attention residual
  NormCache ln2;
  DenseMatrix ffn_pre;  // before activation
  DenseMatrix ffn_act;
};

struct SeqCache {
  std::vector<LayerCache> layers;
  DenseMatrix h_final;
  NormCache ln_final;
  DenseMatrix normed_final;
  DenseMatrix probs;  // N x V softmax rows
};

// Forward pass over one sequence retaining everything backward needs.
// Returns the summed cross-entropy over next-token predictions plus the count.
double seq_forward(const Model& model, const std::vector<TokenId>& tokens, SeqCache& cache) {
  const auto& cfg = model.config;
  const std::size_t n = tokens.size();
  const std::size_t d = cfg.model_dim;
  const std::size_t heads = cfg.num_heads;
  const std::size_t hd = cfg.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  const double embed_scale = std::sqrt(static_cast<double>(d));

  DenseMatrix x(n, d);
  std::size_t seg_pos = 0;
  for (std::size_t i = 0; i < n; ++i) {
    position_encoding(seg_pos, d, x.row(i));
    seg_pos = (tokens[i] == kSepId || tokens[i] == kAnsId) ? 0 : seg_pos + 1;
    const auto e = model.embedding.row(tokens[i]);
    for (std::size_t j = 0; j < d; ++j) x(i, j) += e[j] * embed_scale;
  }

  cache.layers.resize(cfg.num_layers);
  for (std::size_t l = 0; l < cfg.num_layers; ++l) {
    auto& lc = cache.layers[l];
    const auto& w = model.layers[l];
    lc.h_in = x;

    DenseMatrix normed;
    norm_forward(x, w.ln1_gain, w.ln1_bias, lc.ln1, normed);
    lc.q = matmul(normed, w.wq);
    lc.k = matmul(normed, w.wk);
    lc.v = matmul(normed, w.wv);

    lc.attn.assign(heads, DenseMatrix(n, n));
    lc.mix = DenseMatrix(n, d);
    std::vector<double> logits;
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t off = h * hd;
      for (std::size_t i = 0; i < n; ++i) {
        logits.assign(i + 1, 0.0);
        for (std::size_t j = 0; j <= i; ++j) {
          double s = 0.0;
          for (std::size_t c = 0; c < hd; ++c) s += lc.q(i, off + c) * lc.k(j, off + c);
          logits[j] = s * scale;
        }
        softmax_stable_inplace(logits);
        for (std::size_t j = 0; j <= i; ++j) {
          lc.attn[h](i, j) = logits[j];
          const double wgt = logits[j];
          for (std::size_t c = 0; c < hd; ++c) lc.mix(i, off + c) += wgt * lc.v(j, off + c);
        }
      }
    }

    const DenseMatrix proj = matmul(lc.mix, w.wo);
    lc.h_mid = DenseMatrix(n, d);
    for (std::size_t i = 0; i < n * d; ++i) lc.h_mid.data()[i] = x.data()[i] + proj.data()[i];

    DenseMatrix u;
    norm_forward(lc.h_mid, w.ln2_gain, w.ln2_bias, lc.ln2, u);
    lc.ffn_pre = matmul(u, w.ffn_in);
    lc.ffn_act = DenseMatrix(n, cfg.ffn_dim);
    for (std::size_t i = 0; i < n * cfg.ffn_dim; ++i) {
      lc.ffn_act.data()[i] = gelu(lc.ffn_pre.data()[i]);
    }
    const DenseMatrix f = matmul(lc.ffn_act, w.ffn_out);
    x = DenseMatrix(n, d);
    for (std::size_t i = 0; i < n * d; ++i) x.data()[i] = lc.h_mid.data()[i] + f.data()[i];
  }

  cache.h_final = x;
  norm_forward(x, model.final_gain, model.final_bias, cache.ln_final, cache.normed_final);

  cache.probs = DenseMatrix(n, cfg.vocab_size);
  double ce_sum = 0.0;
  std::vector<double> row(cfg.vocab_size);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t t = 0; t < cfg.vocab_size; ++t) {
      row[t] = dot(cache.normed_final.row(i), model.embedding.row(t));
    }
    softmax_stable_inplace(row);
    std::copy(row.begin(), row.end(), cache.probs.row(i).begin());
    if (i + 1 < n) {
      ce_sum += -std::log(std::max(cache.probs(i, tokens[i + 1]), 1e-300));
    }
  }
  return ce_sum;
}

// Backward for one sequence; d_weight is the loss weight of each counted
// prediction (1 / total predictions in the batch).
void seq_backward(const Model& model, const std::vector<TokenId>& tokens, const SeqCache& cache,
                  double d_weight, Model& grads) {
  const auto& cfg = model.config;
  const std::size_t n = tokens.size();
  const std::size_t d = cfg.model_dim;
  const std::size_t heads = cfg.num_heads;
  const std::size_t hd = cfg.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  const double embed_scale = std::sqrt(static_cast<double>(d));

  // Logits and tied head. d_logits(i,t) = w * (p - onehot); rows with no
  // target (the last position) contribute nothing.
  DenseMatrix d_normed(n, d);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const TokenId target = tokens[i + 1];
    for (std::size_t t = 0; t < cfg.vocab_size; ++t) {
      const double dl = d_weight * (cache.probs(i, t) - (t == target ? 1.0 : 0.0));
      if (dl == 0.0) continue;
      const auto e = model.embedding.row(t);
      auto de = grads.embedding.row(t);
      const auto g = cache.normed_final.row(i);
      for (std::size_t j = 0; j < d; ++j) {
        d_normed(i, j) += dl * e[j];
        de[j] += dl * g[j];
      }
    }
  }

  DenseMatrix d_h(n, d);
  norm_backward(d_normed, cache.ln_final, model.final_gain, d_h, grads.final_gain,
                grads.final_bias);

  for (std::size_t li = cfg.num_layers; li-- > 0;) {
    const auto& lc = cache.layers[li];
    const auto& w = model.layers[li];
    auto& gw = grads.layers[li];

    // FFN block: h_out = h_mid + gelu(LN2(h_mid) W1) W2
    DenseMatrix d_act(n, cfg.ffn_dim);
    acc_a_bt(d_h, w.ffn_out, d_act);  // d wrt activation
    acc_at_b(lc.ffn_act, d_h, gw.ffn_out);
    DenseMatrix d_pre(n, cfg.ffn_dim);
    for (std::size_t i = 0; i < n * cfg.ffn_dim; ++i) {
      d_pre.data()[i] = d_act.data()[i] * gelu_derivative(lc.ffn_pre.data()[i]);
    }
    // u = LN2 output, recomputed from the cached normalized rows
    DenseMatrix u(n, d);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < d; ++j) {
        u(i, j) = w.ln2_gain(0, j) * lc.ln2.xhat(i, j) + w.ln2_bias(0, j);
      }
    }
    acc_at_b(u, d_pre, gw.ffn_in);
    DenseMatrix d_u(n, d);
    acc_a_bt(d_pre, w.ffn_in, d_u);
    // residual: d_h continues to h_mid both directly and through LN2
    norm_backward(d_u, lc.ln2, w.ln2_gain, d_h, gw.ln2_gain, gw.ln2_bias);

    // Attention block: h_mid = h_in + mix Wo
    acc_at_b(lc.mix, d_h, gw.wo);
    DenseMatrix d_mix(n, d);
    acc_a_bt(d_h, w.wo, d_mix);

    DenseMatrix d_q(n, d), d_k(n, d), d_v(n, d);
    std::vector<double> d_w(n), d_s(n);
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t off = h * hd;
      for (std::size_t i = 0; i < n; ++i) {
        // d wrt attention weights, then softmax jacobian
        double dot_wd = 0.0;
        for (std::size_t j = 0; j <= i; ++j) {
          double s = 0.0;
          for (std::size_t c = 0; c < hd; ++c) s += d_mix(i, off + c) * lc.v(j, off + c);
          d_w[j] = s;
          dot_wd += lc.attn[h](i, j) * s;
        }
        for (std::size_t j = 0; j <= i; ++j) {
          d_s[j] = lc.attn[h](i, j) * (d_w[j] - dot_wd);
        }
        for (std::size_t j = 0; j <= i; ++j) {
          const double ds = d_s[j] * scale;
          const double wgt = lc.attn[h](i, j);
          for (std::size_t c = 0; c < hd; ++c) {
            d_q(i, off + c) += ds * lc.k(j, off + c);
            d_k(j, off + c) += ds * lc.q(i, off + c);
            d_v(j, off + c) += wgt * d_mix(i, off + c);
          }
        }
      }
    }

    // Projections back to the normed input
    DenseMatrix normed(n, d);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < d; ++j) {
        normed(i, j) = w.ln1_gain(0, j) * lc.ln1.xhat(i, j) + w.ln1_bias(0, j);
      }
    }
    acc_at_b(normed, d_q, gw.wq);
    acc_at_b(normed, d_k, gw.wk);
    acc_at_b(normed, d_v, gw.wv);
    DenseMatrix d_normed_l(n, d);
    acc_a_bt(d_q, w.wq, d_normed_l);
    acc_a_bt(d_k, w.wk, d_normed_l);
    acc_a_bt(d_v, w.wv, d_normed_l);
    norm_backward(d_normed_l, lc.ln1, w.ln1_gain, d_h, gw.ln1_gain, gw.ln1_bias);
  }

  for (std::size_t i = 0; i < n; ++i) {
    auto de = grads.embedding.row(tokens[i]);
    for (std::size_t j = 0; j < d; ++j) de[j] += d_h(i, j) * embed_scale;
  }
}

std::pair<double, std::size_t> batch_loss_sum(const Model& model,
                                              std::span<const std::vector<TokenId>> batch,
                                              std::vector<SeqCache>* caches) {
  double ce_sum = 0.0;
  std::size_t count = 0;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    if (batch[b].size() < 2) {
      throw std::invalid_argument("trainer: sequences need at least 2 tokens");
    }
    SeqCache local;
    SeqCache& cache = caches ? (*caches)[b] : local;
    ce_sum += seq_forward(model, batch[b], cache);
    count += batch[b].size() - 1;
  }
  return {ce_sum, count};
}

}  // namespace

double lm_loss(const Model& model, std::span<const std::vector<TokenId>> batch) {
  if (batch.empty()) throw std::invalid_argument("lm_loss: empty batch");
  const auto [ce, count] = batch_loss_sum(model, batch, nullptr);
  return ce / static_cast<double>(count);
}

double lm_loss_grads(const Model& model, std::span<const std::vector<TokenId>> batch,
                     Model& grads) {
  if (batch.empty()) throw std::invalid_argument("lm_loss_grads: empty batch");
  for_each_param(grads, [](DenseMatrix& m, const std::string&) {
    std::fill(m.data().begin(), m.data().end(), 0.0);
  });
  std::vector<SeqCache> caches(batch.size());
  const auto [ce, count] = batch_loss_sum(model, batch, &caches);
  const double d_weight = 1.0 / static_cast<double>(count);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    seq_backward(model, batch[b], caches[b], d_weight, grads);
  }
  return ce / static_cast<double>(count);
}

TrainResult train_lm(Model& model, const std::vector<std::vector<TokenId>>& corpus,
                     const TrainOptions& options) {
  if (corpus.empty()) throw std::invalid_argument("train_lm: empty corpus");
  TrainResult result;
  if (options.steps == 0) return result;

  SeededRng rng(options.seed);
  Model grads = zeros_like(model);
  Model m1 = zeros_like(model);
  Model m2 = zeros_like(model);

  std::vector<DenseMatrix*> params, g_params, m1_params, m2_params;
  auto collect = [](Model& m, std::vector<DenseMatrix*>& out) {
    for_each_param(m, [&out](DenseMatrix& p, const std::string&) { out.push_back(&p); });
  };
  collect(model, params);
  collect(grads, g_params);
  collect(m1, m1_params);
  collect(m2, m2_params);

  std::vector<std::vector<TokenId>> batch(std::min<std::size_t>(options.batch, corpus.size()));
  result.loss_curve.reserve(options.steps);

  for (std::size_t step = 0; step < options.steps; ++step) {
    for (auto& seq : batch) seq = corpus[rng.next_below(corpus.size())];
    double loss;
    try {
      loss = lm_loss_grads(model, batch, grads);
    } catch (const std::domain_error&) {
      // Non-finite activations surface as softmax domain errors mid-forward.
      throw std::runtime_error("train_lm: loss diverged at step " + std::to_string(step));
    }
    if (!std::isfinite(loss)) {
      throw std::runtime_error("train_lm: loss diverged at step " + std::to_string(step));
    }
    result.loss_curve.push_back(loss);

    const double t = static_cast<double>(step + 1);
    const double bc1 = 1.0 - std::pow(kBeta1, t);
    const double bc2 = 1.0 - std::pow(kBeta2, t);
    for (std::size_t p = 0; p < params.size(); ++p) {
      auto& w = params[p]->data();
      const auto& g = g_params[p]->data();
      auto& m = m1_params[p]->data();
      auto& v = m2_params[p]->data();
      for (std::size_t i = 0; i < w.size(); ++i) {
        m[i] = kBeta1 * m[i] + (1.0 - kBeta1) * g[i];
        v[i] = kBeta2 * v[i] + (1.0 - kBeta2) * g[i] * g[i];
        w[i] -= options.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + kAdamEps);
      }
    }
  }
  return result;
}

}  // namespace kga
