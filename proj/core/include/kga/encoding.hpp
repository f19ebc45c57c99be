// Independent per-triple encodings and their cache. A triple is encoded by a
// forward pass over its own tokens alone, so the result depends only on the
// model and the triple text: it can be computed offline, cached on disk, and
// reused across requests.
#pragma once

#include <cstdint>
#include <memory>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "kga/matrix.hpp"
#include "kga/model.hpp"

namespace kga {

class ForwardSession;
struct AttentionMeter;

struct TripleEncoding {
  std::int64_t triple_id = -1;
  std::size_t token_count = 0;      // M
  std::size_t num_heads = 0;
  std::uint64_t model_checksum = 0;

  // Indexed by layer, all M x D with heads as column slices.
  std::vector<DenseMatrix> hidden;  // layer-input hidden states Z
  std::vector<DenseMatrix> q, k, v;

  // Last-row causal self-attention of the triple, averaged over heads;
  // length M, sums to 1 at every layer.
  std::vector<std::vector<double>> last_row_attn;
};

// Forward pass over the triple tokens alone, positions starting at 0. Reuses
// the model's own projection weights; no other triple or input is visible.
// Throws std::domain_error on an empty token list and std::length_error when
// the triple exceeds the model's max sequence length.
TripleEncoding encode_triple(const Model& model, std::span<const TokenId> tokens,
                             std::int64_t triple_id = -1, AttentionMeter* meter = nullptr);

// FNV-1a over a triple's text; combined with the model checksum this keys the
// encoding cache.
std::uint64_t text_hash(std::string_view text);

// In-memory encoding cache with optional directory-backed persistence.
// Entries are keyed by (model checksum, triple text hash). Reads are shared,
// writes exclusive.
class EncodingCache {
 public:
  EncodingCache() = default;
  explicit EncodingCache(std::string directory) : directory_(std::move(directory)) {}

  // Returns the cached encoding, loading it from disk when persisted, or
  // encodes the triple text and stores the result. The meter only advances
  // on a miss; warm hits cost no attention work.
  std::shared_ptr<const TripleEncoding> get(const Model& model, std::uint64_t checksum,
                                            const std::string& triple_text, const Vocab& vocab,
                                            std::int64_t triple_id,
                                            AttentionMeter* meter = nullptr);

  std::size_t memory_entries() const;
  const std::string& directory() const { return directory_; }

 private:
  std::string cache_path(std::uint64_t checksum, std::uint64_t text) const;

  std::string directory_;
  mutable std::shared_mutex mutex_;
  std::unordered_map<std::string, std::shared_ptr<const TripleEncoding>> entries_;
};

// Binary serialization in the checkpoint convention (little-endian doubles).
void save_encoding(const TripleEncoding& enc, const std::string& path);
TripleEncoding load_encoding(const std::string& path);

}  // namespace kga
