#pragma once

#include <span>
#include <string>
#include <vector>

#include "mepoly/numerics.hpp"

namespace mepoly {

// Fully-connected network, rectified-linear hidden layers, identity output.
// weights[l] is row-major (sizes[l+1] x sizes[l]).
struct MlpParams {
  std::vector<int> sizes;
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> biases;

  int input_size() const { return sizes.front(); }
  int output_size() const { return sizes.back(); }
};

// Uniform fan-in init on the hidden layers; the output layer is
// zero-initialized by default so a fresh policy head emits lambda = 0
// (exactly uniform).
MlpParams make_mlp(std::vector<int> sizes, Rng& rng, bool zero_init_output = true);

// Activations recorded by a forward pass, consumed by the matching backward
// pass. pre[l] holds pre-activation values of layer l, act[l] the rectified
// outputs.
struct MlpCache {
  std::vector<double> input;
  std::vector<std::vector<double>> pre;
  std::vector<std::vector<double>> act;
};

std::vector<double> mlp_forward(const MlpParams& params, std::span<const double> input);
std::vector<double> mlp_forward(const MlpParams& params, std::span<const double> input,
                                MlpCache& cache);

// Per-parameter gradient accumulators matching an MlpParams shape.
struct GradientBuffer {
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> biases;

  void accumulate(const GradientBuffer& other);
  void scale(double s);
};

GradientBuffer make_gradient_buffer(const MlpParams& params);

/// Exact reverse-mode gradients for the cached forward pass; accumulates into `grads`.
void mlp_backward(const MlpParams& params, const MlpCache& cache,
                  std::span<const double> upstream, GradientBuffer& grads);

struct AdamState {
  std::vector<std::vector<double>> m_weights, v_weights;
  std::vector<std::vector<double>> m_biases, v_biases;
  long t = 0;
};

AdamState make_adam_state(const MlpParams& params);

// AdamW step (descent on grads); weight decay defaults to 0.
void adam_step(MlpParams& params, const GradientBuffer& grads, AdamState& state, double lr,
               double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8,
               double weight_decay = 0.0);

// Checkpoint file: little-endian, header {magic, version, layer sizes},
// then the raw 64-bit parameter payload. Round-trips bit-exact.
void save_checkpoint(const MlpParams& params, const std::string& path);
MlpParams load_checkpoint(const std::string& path);
/// Load and require exact layer sizes; mismatches are a shape error.
MlpParams load_checkpoint(const std::string& path, std::span<const int> expected_sizes);

}  // namespace mepoly
