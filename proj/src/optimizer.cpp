#include "osfi/optimizer.hpp"

#include <cmath>

#include "osfi/errors.hpp"

namespace osfi {

double cosine_annealed_lr(double base_lr, long step_index, long total_steps) {
  if (total_steps <= 0) return base_lr;
  const double t = static_cast<double>(step_index) / total_steps;
  return base_lr * 0.5 * (1.0 + std::cos(3.141592653589793238462643 * t));
}

size_t total_param_size(const std::vector<ParamRef>& params) {
  size_t n = 0;
  for (const auto& p : params) n += p.size;
  return n;
}

void adam_step(std::vector<ParamRef>& params, AdamState& state,
               const AdamConfig& cfg, double lr) {
  const size_t total = total_param_size(params);
  if (state.m.size() != total) state.reset(total);
  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, state.step);
  const double bc2 = 1.0 - std::pow(cfg.beta2, state.step);

  size_t offset = 0;
  for (const auto& p : params) {
    if (p.trainable) {
      for (size_t i = 0; i < p.size; ++i) {
        const double g = p.grad[i];
        if (!std::isfinite(g)) {
          throw NumericalError("non-finite gradient in " + p.name);
        }
        double& m = state.m[offset + i];
        double& v = state.v[offset + i];
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
        const double mhat = m / bc1;
        const double vhat = v / bc2;
        p.value[i] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
      }
    }
    offset += p.size;
  }
}

namespace {

void push(std::vector<ParamRef>& out, const std::string& name,
          std::vector<double>& value, std::vector<double>& grad,
          bool trainable) {
  out.push_back({name, value.data(), grad.data(), value.size(), trainable});
}

void push(std::vector<ParamRef>& out, const std::string& name, Matrix& value,
          Matrix& grad, bool trainable) {
  out.push_back({name, value.a.data(), grad.a.data(), value.size(), trainable});
}

}  // namespace

std::vector<ParamRef> collect_params(MLPEncoder& enc, EncoderGrads& grads,
                                     Matrix* head, const Matrix* head_grad) {
  const size_t L = enc.blocks.size();
  const size_t first_partial = L >= 2 ? L - 2 : 0;
  std::vector<ParamRef> refs;

  for (size_t l = 0; l < L; ++l) {
    auto& block = enc.blocks[l];
    auto& g = grads.blocks[l];
    const std::string tag = "block" + std::to_string(l);
    const bool lin_tuned =
        enc.mode == FinetuneMode::full ||
        (enc.mode == FinetuneMode::partial && l >= first_partial);
    const bool bn_tuned = lin_tuned || enc.mode == FinetuneMode::bn_only;

    push(refs, tag + ".weight", block.linear.weight, g.linear.weight,
         lin_tuned);
    push(refs, tag + ".bias", block.linear.bias, g.linear.bias, lin_tuned);
    push(refs, tag + ".gamma", block.bn.gamma, g.gamma, bn_tuned);
    push(refs, tag + ".beta", block.bn.beta, g.beta, bn_tuned);
    if (block.adapter.enabled) {
      push(refs, tag + ".adapter", block.adapter.weight, g.adapter,
           enc.mode == FinetuneMode::adapter);
    }
  }

  const bool out_tuned =
      enc.mode == FinetuneMode::full || enc.mode == FinetuneMode::partial;
  push(refs, "output.weight", enc.output_layer.weight, grads.output.weight,
       out_tuned);
  push(refs, "output.bias", enc.output_layer.bias, grads.output.bias,
       out_tuned);
  if (enc.output_adapter.enabled) {
    push(refs, "output.adapter", enc.output_adapter.weight,
         grads.output_adapter, enc.mode == FinetuneMode::adapter);
  }

  if (head) {
    refs.push_back({"head.W", head->a.data(), head_grad->a.data(),
                    head->size(), true});
  }
  return refs;
}

}  // namespace osfi
