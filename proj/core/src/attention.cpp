#include "kga/attention.hpp"

#include <cmath>
#include <stdexcept>

namespace kga {

void KvBuffer::append(std::span<const double> k_row, std::span<const double> v_row) {
  if (cols == 0) cols = k_row.size();
  if (k_row.size() != cols || v_row.size() != cols) {
    throw std::invalid_argument("KvBuffer::append: row width mismatch");
  }
  keys.insert(keys.end(), k_row.begin(), k_row.end());
  values.insert(values.end(), v_row.begin(), v_row.end());
}

void attention_mix_joint(std::span<const double> query, std::size_t num_heads,
                         const KvBuffer& self_kv, std::size_t self_keys,
                         std::span<const ExternalKv> external, std::span<double> out,
                         AttentionMeter* meter, std::vector<double>* weights_out) {
  const std::size_t dim = query.size();
  if (num_heads == 0 || dim % num_heads != 0) {
    throw std::invalid_argument("attention_mix_joint: bad head partition");
  }
  const std::size_t head_dim = dim / num_heads;

  std::size_t external_keys = 0;
  for (const auto& block : external) {
    if (block.k->rows() != block.v->rows() || block.k->cols() != dim || block.v->cols() != dim) {
      throw std::invalid_argument("attention_mix_joint: external block shape mismatch, k " +
                                  block.k->shape_str() + " v " + block.v->shape_str());
    }
    external_keys += block.k->rows();
  }
  const std::size_t total_keys = self_keys + external_keys;
  if (total_keys == 0) throw std::domain_error("attention_mix_joint: empty key set");
  if (self_keys > self_kv.rows()) {
    throw std::logic_error("attention_mix_joint: self_keys exceeds populated cache");
  }

  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
  if (weights_out) weights_out->assign(num_heads * total_keys, 0.0);

  std::vector<double> logits(total_keys);
  for (std::size_t h = 0; h < num_heads; ++h) {
    const std::size_t off = h * head_dim;
    const double* q = query.data() + off;

    std::size_t idx = 0;
    for (std::size_t i = 0; i < self_keys; ++i, ++idx) {
      const double* k = self_kv.key_row(i).data() + off;
      double s = 0.0;
      for (std::size_t c = 0; c < head_dim; ++c) s += q[c] * k[c];
      logits[idx] = s * scale;
    }
    for (const auto& block : external) {
      for (std::size_t j = 0; j < block.k->rows(); ++j, ++idx) {
        const double* k = block.k->row(j).data() + off;
        double s = 0.0;
        for (std::size_t c = 0; c < head_dim; ++c) s += q[c] * k[c];
        logits[idx] = s * scale;
      }
    }

    softmax_stable_inplace(logits);

    double* o = out.data() + off;
    for (std::size_t c = 0; c < head_dim; ++c) o[c] = 0.0;
    idx = 0;
    for (std::size_t i = 0; i < self_keys; ++i, ++idx) {
      const double w = logits[idx];
      const double* v = self_kv.value_row(i).data() + off;
      for (std::size_t c = 0; c < head_dim; ++c) o[c] += w * v[c];
    }
    for (const auto& block : external) {
      for (std::size_t j = 0; j < block.v->rows(); ++j, ++idx) {
        const double w = logits[idx];
        const double* v = block.v->row(j).data() + off;
        for (std::size_t c = 0; c < head_dim; ++c) o[c] += w * v[c];
      }
    }

    if (weights_out) {
      std::copy(logits.begin(), logits.end(), weights_out->begin() + h * total_keys);
    }
  }
  if (meter) meter->add_query(num_heads, total_keys, head_dim);
}

}  // namespace kga
