#include "kga/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>

#include "kga/rng.hpp"
#include "kga/session.hpp"

namespace kga {

const char* pipeline_mode_name(PipelineMode mode) {
  switch (mode) {
    case PipelineMode::kZsl: return "zsl";
    case PipelineMode::kIcl: return "icl";
    case PipelineMode::kKga: return "kga";
    case PipelineMode::kCross: return "cross";
  }
  return "?";
}

PipelineMode parse_pipeline_mode(const std::string& name) {
  if (name == "zsl") return PipelineMode::kZsl;
  if (name == "icl") return PipelineMode::kIcl;
  if (name == "kga") return PipelineMode::kKga;
  if (name == "cross") return PipelineMode::kCross;
  throw std::invalid_argument("unknown pipeline mode '" + name + "'");
}

namespace {

std::vector<TokenId> icl_prompt(const QAInstance& inst, const KnowledgeGraph& kg,
                                const Vocab& vocab, std::size_t cap) {
  // All candidate triples flattened, in the given order, as one utterance.
  std::string prefix;
  std::size_t used = 0;
  for (std::int64_t id : inst.candidates) {
    if (used == cap) break;
    if (!prefix.empty()) prefix.push_back(' ');
    prefix += triple_to_text(kg.triple(id));
    ++used;
  }
  std::vector<TokenId> prompt = tokenize(prefix, vocab);
  prompt.push_back(kSepId);
  const auto q = question_prompt(inst);
  prompt.insert(prompt.end(), q.begin(), q.end());
  return prompt;
}

struct SelectedSet {
  std::vector<std::shared_ptr<const TripleEncoding>> owners;
  std::vector<const TripleEncoding*> raw;
  std::vector<TripleScoreRecord> scores;
  std::vector<std::int64_t> ids;
};

// Pass-1 scoring and selection over an instance's candidate pool.
SelectedSet select_for_instance(const Model& model, const Vocab& vocab,
                                const KnowledgeGraph& kg, const QAInstance& inst,
                                const PipelineOptions& options, EncodingCache& cache,
                                std::uint64_t checksum, BenchReport& report) {
  SelectedSet out;
  std::vector<std::shared_ptr<const TripleEncoding>> pool;
  std::vector<const TripleEncoding*> pool_raw;
  AttentionMeter encode_meter;
  for (std::int64_t id : inst.candidates) {
    auto enc = cache.get(model, checksum, triple_to_text(kg.triple(id)), vocab, id,
                         &encode_meter);
    pool_raw.push_back(enc.get());
    pool.push_back(std::move(enc));
  }
  report.attn_flops_encode += encode_meter.flops;

  if (options.fusion.selection_bypass) {
    out.owners = pool;
    out.raw = pool_raw;
    std::sort(out.raw.begin(), out.raw.end(),
              [](const auto* a, const auto* b) { return a->triple_id < b->triple_id; });
    for (const auto* enc : out.raw) out.ids.push_back(enc->triple_id);
    return out;
  }

  AttentionMeter pass1_meter, inward_meter;
  ForwardSession pass1(model, {.meter = &pass1_meter});
  for (TokenId t : question_prompt(inst)) pass1.append(t);
  for (const TripleEncoding* enc : pool_raw) {
    out.scores.push_back(
        score_candidate(model, *enc, pass1.states(), options.fusion, &inward_meter));
  }
  report.attn_flops_pass1 += pass1_meter.flops;
  report.attn_flops_inward += inward_meter.flops;

  out.ids = rank_and_select(out.scores, options.fusion.k);
  for (std::int64_t id : out.ids) {
    for (std::size_t i = 0; i < pool_raw.size(); ++i) {
      if (pool_raw[i]->triple_id == id) {
        out.raw.push_back(pool_raw[i]);
        out.owners.push_back(pool[i]);
        break;
      }
    }
  }
  return out;
}

}  // namespace

PipelineResult run_pipeline(const Model& model, const Vocab& vocab, const KnowledgeGraph& kg,
                            std::span<const QAInstance> instances,
                            const PipelineOptions& options) {
  const auto t_start = std::chrono::steady_clock::now();
  PipelineResult result;
  result.report.mode = pipeline_mode_name(options.mode);
  result.report.seed = options.seed;
  result.report.n_instances = instances.size();

  EncodingCache local_cache;
  EncodingCache& cache = options.cache ? *options.cache : local_cache;
  const std::uint64_t checksum = model_checksum(model);

  std::size_t correct = 0;
  for (const QAInstance& inst : instances) {
    DecodeResult decoded;
    switch (options.mode) {
      case PipelineMode::kZsl: {
        decoded = greedy_decode(model, question_prompt(inst), options.max_new);
        break;
      }
      case PipelineMode::kIcl: {
        decoded = greedy_decode(model, icl_prompt(inst, kg, vocab, options.icl_cap),
                                options.max_new);
        break;
      }
      case PipelineMode::kKga:
      case PipelineMode::kCross: {
        auto selected = select_for_instance(model, vocab, kg, inst, options, cache, checksum,
                                            result.report);
        if (options.collect_trace) {
          for (const auto& record : selected.scores) {
            for (std::size_t l = 0; l < record.per_layer_score.size(); ++l) {
              result.trace.push_back(TraceRecord{inst.id, record.triple_id, l + 1,
                                                 record.per_layer_score[l]});
            }
          }
        }
        decoded = greedy_decode(model, question_prompt(inst), options.max_new, selected.raw,
                                options.mode == PipelineMode::kCross);
        break;
      }
    }
    result.report.attn_flops_prefill += decoded.prompt_attn_flops;
    result.report.attn_flops_decode += decoded.decode_attn_flops;
    result.report.decode_tokens += decoded.continuation.size();
    result.report.kv_bytes_peak = std::max(result.report.kv_bytes_peak, decoded.kv_bytes_peak);

    std::string prediction = detokenize(decoded.continuation, vocab);
    if (normalize_text(prediction) == normalize_text(inst.answer)) ++correct;
    result.predictions.push_back(std::move(prediction));
  }

  if (!instances.empty()) {
    result.report.accuracy = static_cast<double>(correct) / static_cast<double>(instances.size());
  }
  result.report.wall_ms_total =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t_start)
          .count();
  return result;
}

RecallCurve recall_at_alpha(const std::vector<std::vector<std::int64_t>>& rankings,
                            const std::vector<std::vector<std::int64_t>>& gold,
                            std::span<const double> alphas) {
  if (rankings.size() != gold.size()) {
    throw std::invalid_argument("recall_at_alpha: rankings/gold size mismatch");
  }
  for (double a : alphas) {
    if (!(a > 0.0)) throw std::invalid_argument("recall_at_alpha: alpha must be positive");
  }
  RecallCurve curve;
  curve.alphas.assign(alphas.begin(), alphas.end());
  curve.recall.assign(alphas.size(), 0.0);

  std::size_t counted = 0;
  for (std::size_t i = 0; i < rankings.size(); ++i) {
    if (gold[i].empty()) {
      ++curve.skipped;
      continue;
    }
    ++counted;
    const std::set<std::int64_t> gold_set(gold[i].begin(), gold[i].end());
    for (std::size_t a = 0; a < alphas.size(); ++a) {
      const auto cutoff = static_cast<std::size_t>(
          std::ceil(alphas[a] * static_cast<double>(gold[i].size())));
      const std::size_t top = std::min(cutoff, rankings[i].size());
      std::size_t hit = 0;
      for (std::size_t r = 0; r < top; ++r) hit += gold_set.count(rankings[i][r]);
      curve.recall[a] += static_cast<double>(hit) / static_cast<double>(gold[i].size());
    }
  }
  if (counted > 0) {
    for (double& r : curve.recall) r /= static_cast<double>(counted);
  }
  return curve;
}

StrategyRankings baseline_strategies(const Model& model, const Vocab& vocab,
                                     const KnowledgeGraph& kg,
                                     std::span<const QAInstance> instances,
                                     const FusionConfig& config, std::uint64_t random_seed,
                                     EncodingCache* cache) {
  StrategyRankings out;
  EncodingCache local_cache;
  EncodingCache& enc_cache = cache ? *cache : local_cache;
  const std::uint64_t checksum = model_checksum(model);
  SeededRng rng(random_seed);

  const std::size_t d = model.config.model_dim;
  auto mean_embedding = [&](std::span<const TokenId> tokens) {
    std::vector<double> mean(d, 0.0);
    for (TokenId t : tokens) {
      const auto row = model.embedding.row(t);
      for (std::size_t j = 0; j < d; ++j) mean[j] += row[j];
    }
    if (!tokens.empty()) {
      for (double& v : mean) v /= static_cast<double>(tokens.size());
    }
    return mean;
  };

  for (const QAInstance& inst : instances) {
    // Inward-enabled: the full recalibration scores over the whole pool.
    std::vector<std::shared_ptr<const TripleEncoding>> pool;
    std::vector<TripleScoreRecord> scores;
    ForwardSession pass1(model);
    for (TokenId t : question_prompt(inst)) pass1.append(t);
    for (std::int64_t id : inst.candidates) {
      auto enc = enc_cache.get(model, checksum, triple_to_text(kg.triple(id)), vocab, id);
      scores.push_back(score_candidate(model, *enc, pass1.states(), config));
      pool.push_back(std::move(enc));
    }
    out.inward_enabled.push_back(rank_and_select(scores, inst.candidates.size()));

    // Module-disabled: mean triple-token embedding against the mean
    // question-token embedding, no recalibration or consolidation.
    const auto q_mean = mean_embedding(inst.question_tokens);
    std::vector<std::pair<double, std::int64_t>> flat;
    for (std::int64_t id : inst.candidates) {
      const auto toks = tokenize(triple_to_text(kg.triple(id)), vocab);
      flat.emplace_back(dot(mean_embedding(toks), q_mean), id);
    }
    std::sort(flat.begin(), flat.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    std::vector<std::int64_t> disabled;
    for (const auto& [score, id] : flat) disabled.push_back(id);
    out.module_disabled.push_back(std::move(disabled));

    // Random: seeded shuffle of the pool.
    std::vector<std::int64_t> shuffled = inst.candidates;
    for (std::size_t i = 0; i + 1 < shuffled.size(); ++i) {
      const std::size_t j = i + rng.next_below(shuffled.size() - i);
      std::swap(shuffled[i], shuffled[j]);
    }
    out.random_order.push_back(std::move(shuffled));
  }
  return out;
}

void export_trace(std::span<const TraceRecord> records, const std::string& path) {
  if (records.empty()) throw std::invalid_argument("export_trace: no records");
  std::vector<TraceRecord> sorted(records.begin(), records.end());
  std::sort(sorted.begin(), sorted.end(), [](const TraceRecord& a, const TraceRecord& b) {
    if (a.instance_id != b.instance_id) return a.instance_id < b.instance_id;
    if (a.layer != b.layer) return a.layer < b.layer;
    return a.triple_id < b.triple_id;
  });

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("export_trace: cannot open " + path);
  char line[160];
  for (const auto& r : sorted) {
    std::snprintf(line, sizeof(line), "instance=%" PRId64 " triple=%" PRId64
                  " layer=%zu score=%.17g\n", r.instance_id, r.triple_id, r.layer, r.score);
    out << line;
  }
  if (!out) throw std::runtime_error("export_trace: write failed for " + path);

  // Companion matrix: per instance, one row per layer, one column per triple.
  std::ofstream csv(path + ".csv", std::ios::binary);
  if (!csv) throw std::runtime_error("export_trace: cannot open " + path + ".csv");
  std::map<std::int64_t, std::map<std::size_t, std::map<std::int64_t, double>>> grid;
  for (const auto& r : sorted) grid[r.instance_id][r.layer][r.triple_id] = r.score;
  for (const auto& [instance, layers] : grid) {
    csv << "# instance " << instance << '\n';
    csv << "layer";
    const auto& first = layers.begin()->second;
    for (const auto& [triple, score] : first) csv << ",t" << triple;
    csv << '\n';
    for (const auto& [layer, row] : layers) {
      csv << layer;
      for (const auto& [triple, score] : row) {
        std::snprintf(line, sizeof(line), ",%.17g", score);
        csv << line;
      }
      csv << '\n';
    }
  }
}

std::vector<TraceRecord> parse_trace(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("parse_trace: cannot open " + path);
  std::vector<TraceRecord> records;
  std::string l;
  while (std::getline(in, l)) {
    if (l.empty() || l[0] == '#') continue;
    TraceRecord r;
    long long instance = 0, triple = 0;
    unsigned long layer = 0;
    double score = 0.0;
    if (std::sscanf(l.c_str(), "instance=%lld triple=%lld layer=%lu score=%lf", &instance,
                    &triple, &layer, &score) != 4) {
      throw std::runtime_error("parse_trace: malformed line '" + l + "'");
    }
    r.instance_id = instance;
    r.triple_id = triple;
    r.layer = layer;
    r.score = score;
    records.push_back(r);
  }
  return records;
}

std::uint64_t kv_bytes_formula(std::size_t num_layers, std::size_t model_dim,
                               std::size_t tokens) {
  return static_cast<std::uint64_t>(num_layers) * tokens * model_dim * 2 * sizeof(double);
}

std::string report_to_kv(const BenchReport& report) {
  char buf[512];
  std::string out;
  out += "mode=" + report.mode + "\n";
  std::snprintf(buf, sizeof(buf), "seed=%" PRIu64 "\n", report.seed);
  out += buf;
  std::snprintf(buf, sizeof(buf), "instances=%zu\n", report.n_instances);
  out += buf;
  std::snprintf(buf, sizeof(buf), "accuracy=%.17g\n", report.accuracy);
  out += buf;
  std::snprintf(buf, sizeof(buf), "attn_flops_encode=%" PRIu64 "\n", report.attn_flops_encode);
  out += buf;
  std::snprintf(buf, sizeof(buf), "attn_flops_pass1=%" PRIu64 "\n", report.attn_flops_pass1);
  out += buf;
  std::snprintf(buf, sizeof(buf), "attn_flops_inward=%" PRIu64 "\n", report.attn_flops_inward);
  out += buf;
  std::snprintf(buf, sizeof(buf), "attn_flops_prefill=%" PRIu64 "\n", report.attn_flops_prefill);
  out += buf;
  std::snprintf(buf, sizeof(buf), "attn_flops_decode=%" PRIu64 "\n", report.attn_flops_decode);
  out += buf;
  std::snprintf(buf, sizeof(buf), "decode_tokens=%" PRIu64 "\n", report.decode_tokens);
  out += buf;
  std::snprintf(buf, sizeof(buf), "kv_bytes_peak=%" PRIu64 "\n", report.kv_bytes_peak);
  out += buf;
  return out;
}

}  // namespace kga
