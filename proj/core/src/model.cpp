#include "kga/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <numbers>
#include <stdexcept>

#include "kga/rng.hpp"

namespace kga {

namespace {
constexpr double kInitStd = 0.05;
constexpr double kLnEps = 1e-5;
}  // namespace

void ModelConfig::validate() const {
  if (num_layers < 2) throw std::invalid_argument("ModelConfig: num_layers must be >= 2");
  if (model_dim == 0 || num_heads == 0 || ffn_dim == 0 || vocab_size == 0 || max_seq_len == 0) {
    throw std::invalid_argument("ModelConfig: all counts must be >= 1");
  }
  if (model_dim % num_heads != 0) {
    throw std::invalid_argument("ModelConfig: model_dim " + std::to_string(model_dim) +
                                " not divisible by num_heads " + std::to_string(num_heads));
  }
}

Model init_model(const ModelConfig& config) {
  config.validate();
  SeededRng rng(config.seed);
  const std::size_t d = config.model_dim;

  auto ones = [d]() {
    DenseMatrix m(1, d);
    for (double& v : m.data()) v = 1.0;
    return m;
  };

  Model model;
  model.config = config;
  model.embedding = seeded_normal(rng, config.vocab_size, d, kInitStd);
  model.layers.resize(config.num_layers);
  for (auto& layer : model.layers) {
    layer.ln1_gain = ones();
    layer.ln1_bias = DenseMatrix(1, d);
    layer.wq = seeded_normal(rng, d, d, kInitStd);
    layer.wk = seeded_normal(rng, d, d, kInitStd);
    layer.wv = seeded_normal(rng, d, d, kInitStd);
    layer.wo = seeded_normal(rng, d, d, kInitStd);
    layer.ln2_gain = ones();
    layer.ln2_bias = DenseMatrix(1, d);
    layer.ffn_in = seeded_normal(rng, d, config.ffn_dim, kInitStd);
    layer.ffn_out = seeded_normal(rng, config.ffn_dim, d, kInitStd);
  }
  model.final_gain = ones();
  model.final_bias = DenseMatrix(1, d);
  return model;
}

Model zeros_like(const Model& model) {
  Model out;
  out.config = model.config;
  out.embedding = DenseMatrix(model.embedding.rows(), model.embedding.cols());
  out.layers.resize(model.layers.size());
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const auto& src = model.layers[l];
    auto& dst = out.layers[l];
    dst.ln1_gain = DenseMatrix(1, src.ln1_gain.cols());
    dst.ln1_bias = DenseMatrix(1, src.ln1_bias.cols());
    dst.wq = DenseMatrix(src.wq.rows(), src.wq.cols());
    dst.wk = DenseMatrix(src.wk.rows(), src.wk.cols());
    dst.wv = DenseMatrix(src.wv.rows(), src.wv.cols());
    dst.wo = DenseMatrix(src.wo.rows(), src.wo.cols());
    dst.ln2_gain = DenseMatrix(1, src.ln2_gain.cols());
    dst.ln2_bias = DenseMatrix(1, src.ln2_bias.cols());
    dst.ffn_in = DenseMatrix(src.ffn_in.rows(), src.ffn_in.cols());
    dst.ffn_out = DenseMatrix(src.ffn_out.rows(), src.ffn_out.cols());
  }
  out.final_gain = DenseMatrix(1, model.final_gain.cols());
  out.final_bias = DenseMatrix(1, model.final_bias.cols());
  return out;
}

namespace {

template <class ModelT, class Fn>
void visit_params(ModelT& model, const Fn& fn) {
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    auto& layer = model.layers[l];
    const std::string p = "layer" + std::to_string(l) + ".";
    fn(layer.ln1_gain, p + "ln1_gain");
    fn(layer.ln1_bias, p + "ln1_bias");
    fn(layer.wq, p + "wq");
    fn(layer.wk, p + "wk");
    fn(layer.wv, p + "wv");
    fn(layer.wo, p + "wo");
    fn(layer.ln2_gain, p + "ln2_gain");
    fn(layer.ln2_bias, p + "ln2_bias");
    fn(layer.ffn_in, p + "ffn_in");
    fn(layer.ffn_out, p + "ffn_out");
  }
  fn(model.final_gain, "final_gain");
  fn(model.final_bias, "final_bias");
  fn(model.embedding, "embedding");
}

}  // namespace

void for_each_param(Model& model,
                    const std::function<void(DenseMatrix&, const std::string&)>& fn) {
  visit_params(model, fn);
}

void for_each_param(const Model& model,
                    const std::function<void(const DenseMatrix&, const std::string&)>& fn) {
  visit_params(model, fn);
}

std::uint64_t model_checksum(const Model& model) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  auto mix_byte = [&hash](std::uint8_t b) {
    hash ^= b;
    hash *= 0x100000001b3ULL;
  };
  for_each_param(model, [&](const DenseMatrix& m, const std::string&) {
    for (double v : m.data()) {
      const auto bits = std::bit_cast<std::uint64_t>(v);
      for (int i = 0; i < 8; ++i) mix_byte(static_cast<std::uint8_t>(bits >> (8 * i)));
    }
  });
  return hash;
}

void position_encoding(std::size_t position, std::size_t dim, std::span<double> out) {
  const double p = static_cast<double>(position);
  for (std::size_t i = 0; i + 1 < dim; i += 2) {
    const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(dim));
    out[i] = std::sin(p * freq);
    out[i + 1] = std::cos(p * freq);
  }
  if (dim % 2 == 1) {
    const double freq = std::pow(10000.0, -static_cast<double>(dim - 1) / static_cast<double>(dim));
    out[dim - 1] = std::sin(p * freq);
  }
}

void layer_norm(std::span<const double> x, const DenseMatrix& gain, const DenseMatrix& bias,
                std::span<double> out) {
  const std::size_t d = x.size();
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(d);
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(d);
  const double inv_std = 1.0 / std::sqrt(var + kLnEps);
  for (std::size_t i = 0; i < d; ++i) {
    out[i] = gain(0, i) * (x[i] - mean) * inv_std + bias(0, i);
  }
}

double gelu(double x) {
  constexpr double c = 0.7978845608028654;  // sqrt(2/pi)
  const double t = c * (x + 0.044715 * x * x * x);
  return 0.5 * x * (1.0 + std::tanh(t));
}

double gelu_derivative(double x) {
  constexpr double c = 0.7978845608028654;
  const double t = c * (x + 0.044715 * x * x * x);
  const double th = std::tanh(t);
  const double sech2 = 1.0 - th * th;
  return 0.5 * (1.0 + th) + 0.5 * x * sech2 * c * (1.0 + 3.0 * 0.044715 * x * x);
}

}  // namespace kga
