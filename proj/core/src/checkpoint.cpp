#include "kga/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <fstream>
#include <stdexcept>

namespace kga {

namespace {

constexpr char kMagic[4] = {'K', 'G', 'A', '1'};
constexpr std::uint32_t kVersion = 1;

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

void write_u32(std::ostream& out, std::uint32_t v) {
  std::array<char, 4> bytes;
  for (int i = 0; i < 4; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(bytes.data(), 4);
}

std::uint32_t read_u32(std::istream& in) {
  std::array<unsigned char, 4> bytes;
  in.read(reinterpret_cast<char*>(bytes.data()), 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[i]) << (8 * i);
  return v;
}

void write_matrix(std::ostream& out, const DenseMatrix& m) {
  for (double d : m.data()) write_u64(out, std::bit_cast<std::uint64_t>(d));
}

void read_matrix(std::istream& in, DenseMatrix& m) {
  for (double& d : m.data()) d = std::bit_cast<double>(read_u64(in));
}

}  // namespace

void save_model(const Model& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_model: cannot open " + path);
  out.write(kMagic, 4);
  write_u32(out, kVersion);
  const auto& c = model.config;
  for (std::uint64_t v : {static_cast<std::uint64_t>(c.num_layers),
                          static_cast<std::uint64_t>(c.model_dim),
                          static_cast<std::uint64_t>(c.num_heads),
                          static_cast<std::uint64_t>(c.ffn_dim),
                          static_cast<std::uint64_t>(c.vocab_size),
                          static_cast<std::uint64_t>(c.max_seq_len), c.seed}) {
    write_u64(out, v);
  }
  for_each_param(model,
                 [&out](const DenseMatrix& m, const std::string&) { write_matrix(out, m); });
  if (!out) throw std::runtime_error("save_model: write failed for " + path);
}

Model load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_model: cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::string_view(magic, 4) != std::string_view(kMagic, 4)) {
    throw std::runtime_error("load_model: bad magic in " + path);
  }
  const std::uint32_t version = read_u32(in);
  if (version != kVersion) {
    throw std::runtime_error("load_model: unsupported version " + std::to_string(version));
  }
  ModelConfig cfg;
  cfg.num_layers = read_u64(in);
  cfg.model_dim = read_u64(in);
  cfg.num_heads = read_u64(in);
  cfg.ffn_dim = read_u64(in);
  cfg.vocab_size = read_u64(in);
  cfg.max_seq_len = read_u64(in);
  cfg.seed = read_u64(in);
  cfg.validate();

  Model model = init_model(cfg);
  for_each_param(model, [&in](DenseMatrix& m, const std::string&) { read_matrix(in, m); });
  if (!in) throw std::runtime_error("load_model: truncated file " + path);
  for_each_param(model, [&path](const DenseMatrix& m, const std::string& name) {
    if (!m.all_finite()) {
      throw std::runtime_error("load_model: non-finite weights in " + name + " of " + path);
    }
  });
  return model;
}

}  // namespace kga
