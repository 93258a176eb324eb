#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "osfi/matrix.hpp"

namespace osfi {

struct LinearLayer {
  Matrix weight;             // [out x in]
  std::vector<double> bias;  // [out]

  int in_dim() const { return weight.cols; }
  int out_dim() const { return weight.rows; }
};

struct BatchNormLayer {
  std::vector<double> gamma;
  std::vector<double> beta;
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double momentum = 0.1;
  double eps = 1e-5;

  int width() const { return static_cast<int>(gamma.size()); }
};

// Additive weight path y = Wx + b + Ax; A starts at zero so enabling an
// untrained adapter leaves the forward output unchanged.
struct ParallelAdapter {
  Matrix weight;  // [out x in]
  bool enabled = false;
};

enum class FinetuneMode { full, partial, adapter, bn_only };

const char* to_string(FinetuneMode mode);
FinetuneMode finetune_mode_from_string(const std::string& name);

struct EncoderBlock {
  LinearLayer linear;
  BatchNormLayer bn;
  ParallelAdapter adapter;
};

struct MLPEncoder {
  std::vector<EncoderBlock> blocks;  // (linear, BN, ReLU) each
  LinearLayer output_layer;
  ParallelAdapter output_adapter;
  FinetuneMode mode = FinetuneMode::full;

  int input_dim() const {
    return blocks.empty() ? output_layer.in_dim() : blocks[0].linear.in_dim();
  }
  int embed_dim() const { return output_layer.out_dim(); }
};

// Fan-in scaled uniform init for linears; BN gamma=1, beta=0, running stats
// at the identity. Adapters are zero and disabled.
MLPEncoder make_encoder(int input_dim, int hidden_width, int num_blocks,
                        int embed_dim, uint64_t seed);

struct LinearGrad {
  Matrix weight;
  std::vector<double> bias;
};

struct BlockGrad {
  LinearGrad linear;
  std::vector<double> gamma;
  std::vector<double> beta;
  Matrix adapter;
};

struct EncoderGrads {
  std::vector<BlockGrad> blocks;
  LinearGrad output;
  Matrix output_adapter;
};

struct BlockCache {
  Matrix input;   // block input, [B x in]
  Matrix xhat;    // normalized pre-affine activations
  Matrix bn_out;  // pre-ReLU
  std::vector<double> mu;
  std::vector<double> inv_std;  // 1/sqrt(var + eps)
};

struct ForwardCache {
  std::vector<BlockCache> blocks;
  Matrix output_in;  // input to the output layer
  int batch = 0;
  bool training = false;
};

// Training mode normalizes with batch statistics (biased variance) and
// folds them into the running stats with the layer momentum; eval mode uses
// the running stats. Training requires B >= 2. A cache captured here feeds
// encoder_backward.
Matrix encoder_forward(MLPEncoder& enc, const Matrix& batch, bool training,
                       ForwardCache* cache = nullptr);

// Eval-mode forward that leaves the encoder untouched.
Matrix encoder_eval(const MLPEncoder& enc, const Matrix& batch);

// Full backward pass, including the gradient through the batch statistics.
EncoderGrads encoder_backward(const MLPEncoder& enc, const ForwardCache& cache,
                              const Matrix& upstream);

struct ParamCount {
  long long total = 0;
  long long trainable = 0;
  std::vector<std::pair<std::string, long long>> trainable_by_layer;
};

// Applies the regime's trainable-parameter pattern. Adapter mode enables the
// adapters on the last two blocks and the output layer; every other mode
// disables them. Returns the parameter accounting for the regime.
ParamCount set_finetune_mode(MLPEncoder& enc, FinetuneMode mode);

ParamCount count_params(const MLPEncoder& enc);

}  // namespace osfi
