// Model checkpoint I/O. Single binary file:
//   magic "KGA1" | u32 version | 7 little-endian u64 config fields
//   (num_layers, model_dim, num_heads, ffn_dim, vocab_size, max_seq_len,
//   seed) | all weight matrices as little-endian IEEE-754 doubles in the
//   canonical parameter order (per layer: ln1 gain/bias, wq, wk, wv, wo,
//   ln2 gain/bias, ffn_in, ffn_out; then final gain/bias; then embedding).
// The vocabulary travels separately as UTF-8 "token<TAB>id" lines.
#pragma once

#include <string>

#include "kga/model.hpp"

namespace kga {

void save_model(const Model& model, const std::string& path);
Model load_model(const std::string& path);

}  // namespace kga
