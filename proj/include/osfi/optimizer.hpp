#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "osfi/encoder.hpp"
#include "osfi/matrix.hpp"

namespace osfi {

// Flat view over one parameter tensor and its gradient. Frozen tensors are
// skipped entirely by the optimizer, so their values and state stay
// bit-identical.
struct ParamRef {
  std::string name;
  double* value = nullptr;
  const double* grad = nullptr;
  size_t size = 0;
  bool trainable = false;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  long step = 0;  // completed steps; bias correction uses step+1

  void reset(size_t total) {
    m.assign(total, 0.0);
    v.assign(total, 0.0);
    step = 0;
  }
};

// eta(t) = eta0 * (1 + cos(pi t / T)) / 2
double cosine_annealed_lr(double base_lr, long step_index, long total_steps);

size_t total_param_size(const std::vector<ParamRef>& params);

// One Adam update over the trainable refs. Throws NumericalError naming the
// offending tensor when a gradient is non-finite.
void adam_step(std::vector<ParamRef>& params, AdamState& state,
               const AdamConfig& cfg, double lr);

// Parameter registry for the encoder (and optionally the classifier head),
// with trainable flags implied by the encoder's fine-tune regime. The head,
// when present, is always trainable: every regime updates the classifier.
std::vector<ParamRef> collect_params(MLPEncoder& enc, EncoderGrads& grads,
                                     Matrix* head, const Matrix* head_grad);

}  // namespace osfi
