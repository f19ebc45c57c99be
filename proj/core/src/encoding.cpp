#include "kga/encoding.hpp"

#include <array>
#include <bit>
#include <filesystem>
#include <mutex>
#include <fstream>
#include <stdexcept>

#include "kga/session.hpp"

namespace kga {

TripleEncoding encode_triple(const Model& model, std::span<const TokenId> tokens,
                             std::int64_t triple_id, AttentionMeter* meter) {
  if (tokens.empty()) throw std::domain_error("encode_triple: empty triple");
  const auto& cfg = model.config;
  const std::size_t m = tokens.size();
  const std::size_t d = cfg.model_dim;

  ForwardSession session(model, {.trace = true, .meter = meter});
  for (TokenId t : tokens) session.append(t);
  const LayerStates& st = session.states();

  TripleEncoding enc;
  enc.triple_id = triple_id;
  enc.token_count = m;
  enc.num_heads = cfg.num_heads;
  enc.model_checksum = model_checksum(model);
  enc.hidden.reserve(cfg.num_layers);
  enc.q.reserve(cfg.num_layers);
  enc.k.reserve(cfg.num_layers);
  enc.v.reserve(cfg.num_layers);
  enc.last_row_attn.reserve(cfg.num_layers);

  std::vector<double> normed(d);
  for (std::size_t l = 0; l < cfg.num_layers; ++l) {
    enc.hidden.emplace_back(m, d, std::vector<double>(st.hidden[l]));
    enc.k.emplace_back(m, d, std::vector<double>(st.kv[l].keys));
    enc.v.emplace_back(m, d, std::vector<double>(st.kv[l].values));

    DenseMatrix q(m, d);
    const auto& w = model.layers[l];
    for (std::size_t i = 0; i < m; ++i) {
      layer_norm(st.hidden_row(l, i), w.ln1_gain, w.ln1_bias, normed);
      const auto row = vec_matmul(normed, w.wq);
      std::copy(row.begin(), row.end(), q.row(i).begin());
    }
    enc.q.push_back(std::move(q));

    // Last-row causal self-attention of the triple, averaged across heads.
    std::vector<double> last(m, 0.0);
    for (std::size_t h = 0; h < cfg.num_heads; ++h) {
      const auto& row = st.attn_rows[l][(m - 1) * cfg.num_heads + h];
      for (std::size_t j = 0; j < m; ++j) last[j] += row[j];
    }
    for (double& v : last) v /= static_cast<double>(cfg.num_heads);
    enc.last_row_attn.push_back(std::move(last));
  }
  return enc;
}

std::uint64_t text_hash(std::string_view text) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (char c : text) {
    hash ^= static_cast<std::uint8_t>(c);
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

namespace {

constexpr char kMagic[4] = {'K', 'G', 'A', 'E'};

void write_u64(std::ostream& out, std::uint64_t v) {
  std::array<char, 8> bytes;
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(bytes.data(), 8);
}

std::uint64_t read_u64(std::istream& in) {
  std::array<unsigned char, 8> bytes;
  in.read(reinterpret_cast<char*>(bytes.data()), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return v;
}

void write_doubles(std::ostream& out, const std::vector<double>& values) {
  for (double d : values) write_u64(out, std::bit_cast<std::uint64_t>(d));
}

void read_doubles(std::istream& in, std::vector<double>& values) {
  for (double& d : values) d = std::bit_cast<double>(read_u64(in));
}

}  // namespace

void save_encoding(const TripleEncoding& enc, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_encoding: cannot open " + path);
  out.write(kMagic, 4);
  write_u64(out, static_cast<std::uint64_t>(enc.triple_id));
  write_u64(out, enc.token_count);
  write_u64(out, enc.hidden.size());
  write_u64(out, enc.hidden.empty() ? 0 : enc.hidden.front().cols());
  write_u64(out, enc.num_heads);
  write_u64(out, enc.model_checksum);
  for (std::size_t l = 0; l < enc.hidden.size(); ++l) {
    write_doubles(out, enc.hidden[l].data());
    write_doubles(out, enc.q[l].data());
    write_doubles(out, enc.k[l].data());
    write_doubles(out, enc.v[l].data());
    write_doubles(out, enc.last_row_attn[l]);
  }
  if (!out) throw std::runtime_error("save_encoding: write failed for " + path);
}

TripleEncoding load_encoding(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_encoding: cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::string_view(magic, 4) != std::string_view(kMagic, 4)) {
    throw std::runtime_error("load_encoding: bad magic in " + path);
  }
  TripleEncoding enc;
  enc.triple_id = static_cast<std::int64_t>(read_u64(in));
  enc.token_count = read_u64(in);
  const std::size_t layers = read_u64(in);
  const std::size_t dim = read_u64(in);
  enc.num_heads = read_u64(in);
  enc.model_checksum = read_u64(in);
  for (std::size_t l = 0; l < layers; ++l) {
    std::vector<double> buf(enc.token_count * dim);
    read_doubles(in, buf);
    enc.hidden.emplace_back(enc.token_count, dim, buf);
    read_doubles(in, buf);
    enc.q.emplace_back(enc.token_count, dim, buf);
    read_doubles(in, buf);
    enc.k.emplace_back(enc.token_count, dim, buf);
    read_doubles(in, buf);
    enc.v.emplace_back(enc.token_count, dim, std::move(buf));
    std::vector<double> last(enc.token_count);
    read_doubles(in, last);
    enc.last_row_attn.push_back(std::move(last));
  }
  if (!in) throw std::runtime_error("load_encoding: truncated file " + path);
  return enc;
}

std::string EncodingCache::cache_path(std::uint64_t checksum, std::uint64_t text) const {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%016llx_%016llx.tenc",
                static_cast<unsigned long long>(checksum), static_cast<unsigned long long>(text));
  return directory_ + "/" + buf;
}

std::shared_ptr<const TripleEncoding> EncodingCache::get(const Model& model,
                                                         std::uint64_t checksum,
                                                         const std::string& triple_text,
                                                         const Vocab& vocab,
                                                         std::int64_t triple_id,
                                                         AttentionMeter* meter) {
  const std::uint64_t th = text_hash(triple_text);
  char key[64];
  std::snprintf(key, sizeof(key), "%016llx_%016llx", static_cast<unsigned long long>(checksum),
                static_cast<unsigned long long>(th));

  {
    std::shared_lock lock(mutex_);
    auto it = entries_.find(key);
    if (it != entries_.end()) {
      if (it->second->triple_id == triple_id) return it->second;
      // Duplicate triple text under a different id: share nothing mutable.
      auto copy = std::make_shared<TripleEncoding>(*it->second);
      copy->triple_id = triple_id;
      return copy;
    }
  }

  std::shared_ptr<TripleEncoding> enc;
  if (!directory_.empty()) {
    const std::string path = cache_path(checksum, th);
    if (std::filesystem::exists(path)) {
      enc = std::make_shared<TripleEncoding>(load_encoding(path));
      enc->triple_id = triple_id;
    }
  }
  if (!enc) {
    const auto tokens = tokenize(triple_text, vocab);
    enc = std::make_shared<TripleEncoding>(encode_triple(model, tokens, triple_id, meter));
    if (!directory_.empty()) {
      std::filesystem::create_directories(directory_);
      save_encoding(*enc, cache_path(checksum, th));
    }
  }

  std::unique_lock lock(mutex_);
  auto [it, inserted] = entries_.emplace(key, enc);
  return it->second;
}

std::size_t EncodingCache::memory_entries() const {
  std::shared_lock lock(mutex_);
  return entries_.size();
}

}  // namespace kga
