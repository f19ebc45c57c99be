// Evaluation harness: the four pipeline modes over QA instances with exact
// attention-FLOP and KV-byte accounting, the recall-at-alpha metric, the
// three selection strategies, and layer-trace export.
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "kga/encoding.hpp"
#include "kga/fusion.hpp"
#include "kga/kg.hpp"
#include "kga/model.hpp"
#include "kga/synthetic.hpp"

namespace kga {

enum class PipelineMode { kZsl, kIcl, kKga, kCross };

const char* pipeline_mode_name(PipelineMode mode);
PipelineMode parse_pipeline_mode(const std::string& name);

struct PipelineOptions {
  PipelineMode mode = PipelineMode::kKga;
  FusionConfig fusion;
  std::size_t icl_cap = 100;  // in-context triples are capped per instance
  std::size_t max_new = 4;
  std::uint64_t seed = 0;     // recorded in reports
  bool collect_trace = false;
  EncodingCache* cache = nullptr;  // shared encoding cache; one is created if null
};

// Counter fields are exact integer tallies from the instrumented attention
// kernels and cache stores, never estimates. Wall-clock is reported for
// orientation only and is excluded from deterministic report files.
struct BenchReport {
  std::string mode;
  std::uint64_t seed = 0;
  std::size_t n_instances = 0;
  double accuracy = 0.0;

  std::uint64_t attn_flops_encode = 0;   // triple encoding (cache misses only)
  std::uint64_t attn_flops_pass1 = 0;    // fusion-free scoring pass
  std::uint64_t attn_flops_inward = 0;   // per-candidate recalibration
  std::uint64_t attn_flops_prefill = 0;  // prompt processing of the generating pass
  std::uint64_t attn_flops_decode = 0;   // generated tokens
  std::uint64_t decode_tokens = 0;
  std::uint64_t kv_bytes_peak = 0;       // largest retained K/V footprint across instances

  double wall_ms_total = 0.0;
};

// Per-(instance, triple, layer) selection score; layer is 1-based.
struct TraceRecord {
  std::int64_t instance_id = -1;
  std::int64_t triple_id = -1;
  std::size_t layer = 1;
  double score = 0.0;
};

struct PipelineResult {
  BenchReport report;
  std::vector<std::string> predictions;  // decoded answers, one per instance
  std::vector<TraceRecord> trace;        // filled when collect_trace is set
};

PipelineResult run_pipeline(const Model& model, const Vocab& vocab, const KnowledgeGraph& kg,
                            std::span<const QAInstance> instances,
                            const PipelineOptions& options);

// Recall(alpha): mean over instances of the gold fraction ranked within the
// top ceil(alpha * |gold|) positions. Instances with an empty gold set are
// skipped and counted.
struct RecallCurve {
  std::vector<double> alphas;
  std::vector<double> recall;  // aligned with alphas
  std::size_t skipped = 0;
};
RecallCurve recall_at_alpha(const std::vector<std::vector<std::int64_t>>& rankings,
                            const std::vector<std::vector<std::int64_t>>& gold,
                            std::span<const double> alphas);

// Full candidate rankings under the three selection strategies.
struct StrategyRankings {
  std::vector<std::vector<std::int64_t>> inward_enabled;   // recalibration scores
  std::vector<std::vector<std::int64_t>> module_disabled;  // mean-embedding dot products
  std::vector<std::vector<std::int64_t>> random_order;     // seeded shuffle
};
StrategyRankings baseline_strategies(const Model& model, const Vocab& vocab,
                                     const KnowledgeGraph& kg,
                                     std::span<const QAInstance> instances,
                                     const FusionConfig& config, std::uint64_t random_seed,
                                     EncodingCache* cache = nullptr);

// Line-delimited records sorted by (instance, layer, triple) with full double
// precision, plus a companion per-instance CSV matrix at "<path>.csv".
void export_trace(std::span<const TraceRecord> records, const std::string& path);
std::vector<TraceRecord> parse_trace(const std::string& path);

// Closed-form retained-KV footprint: keys and values for every layer over
// `tokens` positions plus the fused triple tokens, 8 bytes per scalar.
std::uint64_t kv_bytes_formula(std::size_t num_layers, std::size_t model_dim,
                               std::size_t tokens);

// Deterministic key=value serialization (wall-clock omitted by design).
std::string report_to_kv(const BenchReport& report);

}  // namespace kga
