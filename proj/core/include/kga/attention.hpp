// The joint-softmax attention primitive. One query row attends over the
// causal self keys and any number of external key/value blocks under a single
// normalization, per head. Plain causal self-attention, knowledge fusion, the
// non-causal recalibration flow, and the cross-attention ablation are all
// this kernel with different key sets, so their equivalences hold bit-exactly.
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "kga/matrix.hpp"

namespace kga {

// Exact attention work accounting. Per (query, key, head) pair the kernel
// performs one scaled dot product (2*head_dim), the softmax bookkeeping for
// that logit (3: subtract max, exp, divide), and one value accumulation
// (2*head_dim), so flops grow by (4*head_dim + 3) * keys * heads per query.
struct AttentionMeter {
  std::uint64_t flops = 0;

  void add_query(std::size_t heads, std::size_t keys, std::size_t head_dim) {
    flops += static_cast<std::uint64_t>(heads) * keys * (4 * head_dim + 3);
  }
};

// Growable per-layer key/value store; rows are positions, heads are
// contiguous column slices of width head_dim.
struct KvBuffer {
  std::size_t cols = 0;
  std::vector<double> keys;
  std::vector<double> values;

  std::size_t rows() const { return cols == 0 ? 0 : keys.size() / cols; }
  void append(std::span<const double> k_row, std::span<const double> v_row);
  std::span<const double> key_row(std::size_t r) const { return {keys.data() + r * cols, cols}; }
  std::span<const double> value_row(std::size_t r) const { return {values.data() + r * cols, cols}; }
  std::uint64_t bytes() const { return (keys.size() + values.size()) * sizeof(double); }
};

// One external block: a triple's projected keys/values at one layer (M x D).
struct ExternalKv {
  const DenseMatrix* k = nullptr;
  const DenseMatrix* v = nullptr;
};

// Joint softmax of `query` (length D) over self keys [0, self_keys) plus all
// external rows, applied to the matching values. `out` (length D) receives
// the mixed result with heads concatenated, before any output projection.
// Throws std::domain_error when the joint key set is empty.
//
// `weights_out`, when given, receives heads * total_keys weights, one row per
// head, self keys first then external rows in block order; each row sums to 1.
void attention_mix_joint(std::span<const double> query, std::size_t num_heads,
                         const KvBuffer& self_kv, std::size_t self_keys,
                         std::span<const ExternalKv> external, std::span<double> out,
                         AttentionMeter* meter = nullptr,
                         std::vector<double>* weights_out = nullptr);

}  // namespace kga
