#include "mepoly/conditioner.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace mepoly {

MlpParams make_mlp(std::vector<int> sizes, Rng& rng, bool zero_init_output) {
  if (sizes.size() < 2) throw std::invalid_argument("make_mlp: need at least input and output");
  for (int s : sizes)
    if (s < 1) throw std::invalid_argument("make_mlp: layer sizes must be positive");
  MlpParams params;
  params.sizes = std::move(sizes);
  const std::size_t layers = params.sizes.size() - 1;
  params.weights.resize(layers);
  params.biases.resize(layers);
  for (std::size_t l = 0; l < layers; ++l) {
    const auto fan_in = static_cast<std::size_t>(params.sizes[l]);
    const auto fan_out = static_cast<std::size_t>(params.sizes[l + 1]);
    params.weights[l].assign(fan_out * fan_in, 0.0);
    params.biases[l].assign(fan_out, 0.0);
    const bool zero = zero_init_output && l == layers - 1;
    if (!zero) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      for (double& w : params.weights[l]) w = rng.uniform(-bound, bound);
      for (double& b : params.biases[l]) b = rng.uniform(-bound, bound);
    }
  }
  return params;
}

namespace {

void forward_impl(const MlpParams& params, std::span<const double> input, MlpCache* cache,
                  std::vector<double>& out) {
  if (input.size() != static_cast<std::size_t>(params.input_size()))
    throw std::invalid_argument("mlp_forward: input length does not match first layer");
  const std::size_t layers = params.weights.size();
  if (cache) {
    cache->input.assign(input.begin(), input.end());
    cache->pre.assign(layers, {});
    cache->act.assign(layers, {});
  }
  std::vector<double> cur(input.begin(), input.end());
  for (std::size_t l = 0; l < layers; ++l) {
    const auto rows = static_cast<std::size_t>(params.sizes[l + 1]);
    const auto cols = static_cast<std::size_t>(params.sizes[l]);
    std::vector<double> next(rows);
    const double* w = params.weights[l].data();
    for (std::size_t r = 0; r < rows; ++r) {
      double acc = params.biases[l][r];
      const double* wr = w + r * cols;
      for (std::size_t c = 0; c < cols; ++c) acc += wr[c] * cur[c];
      next[r] = acc;
    }
    if (cache) cache->pre[l] = next;
    if (l + 1 < layers)
      for (double& v : next) v = v > 0.0 ? v : 0.0;
    if (cache) cache->act[l] = next;
    cur = std::move(next);
  }
  out = std::move(cur);
}

}  // namespace

std::vector<double> mlp_forward(const MlpParams& params, std::span<const double> input) {
  std::vector<double> out;
  forward_impl(params, input, nullptr, out);
  return out;
}

std::vector<double> mlp_forward(const MlpParams& params, std::span<const double> input,
                                MlpCache& cache) {
  std::vector<double> out;
  forward_impl(params, input, &cache, out);
  return out;
}

GradientBuffer make_gradient_buffer(const MlpParams& params) {
  GradientBuffer g;
  g.weights.resize(params.weights.size());
  g.biases.resize(params.biases.size());
  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    g.weights[l].assign(params.weights[l].size(), 0.0);
    g.biases[l].assign(params.biases[l].size(), 0.0);
  }
  return g;
}

void GradientBuffer::accumulate(const GradientBuffer& other) {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    for (std::size_t i = 0; i < weights[l].size(); ++i) weights[l][i] += other.weights[l][i];
    for (std::size_t i = 0; i < biases[l].size(); ++i) biases[l][i] += other.biases[l][i];
  }
}

void GradientBuffer::scale(double s) {
  for (auto& w : weights)
    for (double& v : w) v *= s;
  for (auto& b : biases)
    for (double& v : b) v *= s;
}

void mlp_backward(const MlpParams& params, const MlpCache& cache,
                  std::span<const double> upstream, GradientBuffer& grads) {
  const std::size_t layers = params.weights.size();
  if (cache.pre.size() != layers || cache.act.size() != layers ||
      cache.input.size() != static_cast<std::size_t>(params.input_size()))
    throw std::invalid_argument("mlp_backward: activation cache does not match parameters");
  if (upstream.size() != static_cast<std::size_t>(params.output_size()))
    throw std::invalid_argument("mlp_backward: upstream length does not match output");

  std::vector<double> delta(upstream.begin(), upstream.end());
  for (std::size_t l = layers; l-- > 0;) {
    const auto rows = static_cast<std::size_t>(params.sizes[l + 1]);
    const auto cols = static_cast<std::size_t>(params.sizes[l]);
    if (cache.pre[l].size() != rows)
      throw std::invalid_argument("mlp_backward: activation cache does not match parameters");
    const std::vector<double>& below =
        l == 0 ? cache.input : cache.act[l - 1];
    double* gw = grads.weights[l].data();
    for (std::size_t r = 0; r < rows; ++r) {
      const double d = delta[r];
      grads.biases[l][r] += d;
      double* gwr = gw + r * cols;
      for (std::size_t c = 0; c < cols; ++c) gwr[c] += d * below[c];
    }
    if (l == 0) break;
    std::vector<double> prev(cols, 0.0);
    const double* w = params.weights[l].data();
    for (std::size_t r = 0; r < rows; ++r) {
      const double d = delta[r];
      const double* wr = w + r * cols;
      for (std::size_t c = 0; c < cols; ++c) prev[c] += wr[c] * d;
    }
    // Rectifier pass-through: dead units block the gradient.
    for (std::size_t c = 0; c < cols; ++c)
      if (cache.pre[l - 1][c] <= 0.0) prev[c] = 0.0;
    delta = std::move(prev);
  }
}

AdamState make_adam_state(const MlpParams& params) {
  AdamState s;
  s.m_weights.resize(params.weights.size());
  s.v_weights.resize(params.weights.size());
  s.m_biases.resize(params.biases.size());
  s.v_biases.resize(params.biases.size());
  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    s.m_weights[l].assign(params.weights[l].size(), 0.0);
    s.v_weights[l].assign(params.weights[l].size(), 0.0);
    s.m_biases[l].assign(params.biases[l].size(), 0.0);
    s.v_biases[l].assign(params.biases[l].size(), 0.0);
  }
  return s;
}

namespace {

void adam_update(std::vector<double>& p, const std::vector<double>& g, std::vector<double>& m,
                 std::vector<double>& v, double lr, double beta1, double beta2, double eps,
                 double weight_decay, double bc1, double bc2) {
  for (std::size_t i = 0; i < p.size(); ++i) {
    m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
    v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
    const double mhat = m[i] / bc1;
    const double vhat = v[i] / bc2;
    p[i] -= lr * (mhat / (std::sqrt(vhat) + eps) + weight_decay * p[i]);
  }
}

}  // namespace

void adam_step(MlpParams& params, const GradientBuffer& grads, AdamState& state, double lr,
               double beta1, double beta2, double eps, double weight_decay) {
  state.t += 1;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    adam_update(params.weights[l], grads.weights[l], state.m_weights[l], state.v_weights[l], lr,
                beta1, beta2, eps, weight_decay, bc1, bc2);
    adam_update(params.biases[l], grads.biases[l], state.m_biases[l], state.v_biases[l], lr,
                beta1, beta2, eps, weight_decay, bc1, bc2);
  }
}

namespace {

constexpr char kMagic[4] = {'M', 'E', 'P', 'C'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ofstream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint32_t read_u32(std::ifstream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw std::runtime_error("checkpoint: truncated file");
  return v;
}

}  // namespace

void save_checkpoint(const MlpParams& params, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot open '" + path + "' for writing");
  out.write(kMagic, sizeof(kMagic));
  write_u32(out, kVersion);
  write_u32(out, static_cast<std::uint32_t>(params.sizes.size()));
  for (int s : params.sizes) write_u32(out, static_cast<std::uint32_t>(s));
  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    out.write(reinterpret_cast<const char*>(params.weights[l].data()),
              static_cast<std::streamsize>(params.weights[l].size() * sizeof(double)));
    out.write(reinterpret_cast<const char*>(params.biases[l].data()),
              static_cast<std::streamsize>(params.biases[l].size() * sizeof(double)));
  }
  if (!out) throw std::runtime_error("checkpoint: write failed for '" + path + "'");
}

MlpParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open '" + path + "'");
  char magic[4];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("checkpoint: bad magic bytes in '" + path + "'");
  const std::uint32_t version = read_u32(in);
  if (version != kVersion)
    throw std::runtime_error("checkpoint: unsupported version in '" + path + "'");
  const std::uint32_t n_sizes = read_u32(in);
  if (n_sizes < 2 || n_sizes > 64) throw std::runtime_error("checkpoint: corrupt layer count");
  MlpParams params;
  params.sizes.resize(n_sizes);
  for (auto& s : params.sizes) s = static_cast<int>(read_u32(in));
  params.weights.resize(n_sizes - 1);
  params.biases.resize(n_sizes - 1);
  for (std::size_t l = 0; l + 1 < n_sizes; ++l) {
    const auto rows = static_cast<std::size_t>(params.sizes[l + 1]);
    const auto cols = static_cast<std::size_t>(params.sizes[l]);
    params.weights[l].resize(rows * cols);
    params.biases[l].resize(rows);
    in.read(reinterpret_cast<char*>(params.weights[l].data()),
            static_cast<std::streamsize>(rows * cols * sizeof(double)));
    in.read(reinterpret_cast<char*>(params.biases[l].data()),
            static_cast<std::streamsize>(rows * sizeof(double)));
    if (!in) throw std::runtime_error("checkpoint: truncated payload in '" + path + "'");
  }
  return params;
}

MlpParams load_checkpoint(const std::string& path, std::span<const int> expected_sizes) {
  MlpParams params = load_checkpoint(path);
  if (params.sizes.size() != expected_sizes.size() ||
      !std::equal(expected_sizes.begin(), expected_sizes.end(), params.sizes.begin()))
    throw std::runtime_error("checkpoint: layer sizes in '" + path +
                             "' do not match the requested model");
  return params;
}

}  // namespace mepoly
