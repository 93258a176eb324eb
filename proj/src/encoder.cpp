#include "osfi/encoder.hpp"

#include <cmath>
#include <cstdint>

#include "osfi/errors.hpp"
#include "osfi/rng.hpp"

namespace osfi {

const char* to_string(FinetuneMode mode) {
  switch (mode) {
    case FinetuneMode::full: return "full";
    case FinetuneMode::partial: return "partial";
    case FinetuneMode::adapter: return "adapter";
    case FinetuneMode::bn_only: return "bn";
  }
  return "?";
}

FinetuneMode finetune_mode_from_string(const std::string& name) {
  if (name == "full") return FinetuneMode::full;
  if (name == "partial") return FinetuneMode::partial;
  if (name == "adapter" || name == "pa") return FinetuneMode::adapter;
  if (name == "bn" || name == "bn_only") return FinetuneMode::bn_only;
  throw ConfigError("unknown fine-tune mode '" + name +
                    "' (expected full, partial, adapter, or bn)");
}

namespace {

LinearLayer make_linear(int in, int out, Rng& rng) {
  LinearLayer l;
  l.weight = Matrix(out, in);
  l.bias.assign(out, 0.0);
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  for (auto& w : l.weight.a) w = (2.0 * rng.uniform() - 1.0) * bound;
  for (auto& b : l.bias) b = (2.0 * rng.uniform() - 1.0) * bound;
  return l;
}

BatchNormLayer make_bn(int n) {
  BatchNormLayer bn;
  bn.gamma.assign(n, 1.0);
  bn.beta.assign(n, 0.0);
  bn.running_mean.assign(n, 0.0);
  bn.running_var.assign(n, 1.0);
  return bn;
}

// y[b] = W x[b] + bias (+ A x[b] when the adapter is on)
void linear_forward(const LinearLayer& lin, const ParallelAdapter& ad,
                    const Matrix& x, Matrix& y) {
  const int out = lin.out_dim(), in = lin.in_dim();
  for (int b = 0; b < x.rows; ++b) {
    const double* xb = x.row(b);
    double* yb = y.row(b);
    for (int o = 0; o < out; ++o) {
      const double* w = lin.weight.row(o);
      double s = lin.bias[o];
      for (int i = 0; i < in; ++i) s += w[i] * xb[i];
      yb[o] = s;
    }
    if (ad.enabled) {
      for (int o = 0; o < out; ++o) {
        const double* w = ad.weight.row(o);
        double s = 0.0;
        for (int i = 0; i < in; ++i) s += w[i] * xb[i];
        yb[o] += s;
      }
    }
  }
}

// dW[o] += sum_b dy[b][o] x[b]; db[o] += sum_b dy[b][o]; dx[b] += W^T dy[b]
void linear_backward(const LinearLayer& lin, const ParallelAdapter& ad,
                     const Matrix& x, const Matrix& dy, LinearGrad& dlin,
                     Matrix& dadapter, Matrix& dx) {
  const int out = lin.out_dim(), in = lin.in_dim();
  for (int b = 0; b < x.rows; ++b) {
    const double* xb = x.row(b);
    const double* dyb = dy.row(b);
    double* dxb = dx.row(b);
    for (int o = 0; o < out; ++o) {
      const double g = dyb[o];
      if (g == 0.0) continue;
      double* dw = dlin.weight.row(o);
      const double* w = lin.weight.row(o);
      for (int i = 0; i < in; ++i) {
        dw[i] += g * xb[i];
        dxb[i] += g * w[i];
      }
      dlin.bias[o] += g;
    }
    if (ad.enabled) {
      for (int o = 0; o < out; ++o) {
        const double g = dyb[o];
        if (g == 0.0) continue;
        double* da = dadapter.row(o);
        const double* aw = ad.weight.row(o);
        for (int i = 0; i < in; ++i) {
          da[i] += g * xb[i];
          dxb[i] += g * aw[i];
        }
      }
    }
  }
}

bool all_finite(const Matrix& m) {
  for (double v : m.a) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace

MLPEncoder make_encoder(int input_dim, int hidden_width, int num_blocks,
                        int embed_dim, uint64_t seed) {
  if (input_dim < 1 || hidden_width < 1 || num_blocks < 1 || embed_dim < 1) {
    throw ConfigError("make_encoder: dimensions must be positive");
  }
  Rng rng(seed);
  MLPEncoder enc;
  enc.blocks.reserve(num_blocks);
  int in = input_dim;
  for (int l = 0; l < num_blocks; ++l) {
    EncoderBlock block;
    block.linear = make_linear(in, hidden_width, rng);
    block.bn = make_bn(hidden_width);
    block.adapter.weight = Matrix(hidden_width, in);
    in = hidden_width;
    enc.blocks.push_back(std::move(block));
  }
  enc.output_layer = make_linear(in, embed_dim, rng);
  enc.output_adapter.weight = Matrix(embed_dim, in);
  return enc;
}

Matrix encoder_forward(MLPEncoder& enc, const Matrix& batch, bool training,
                       ForwardCache* cache) {
  if (batch.cols != enc.input_dim()) {
    throw ProtocolError("encoder_forward: input dimension mismatch");
  }
  const int B = batch.rows;
  if (training && B < 2) {
    throw ConfigError("encoder_forward: training needs a batch of >= 2");
  }
  if (cache) {
    cache->blocks.assign(enc.blocks.size(), {});
    cache->batch = B;
    cache->training = training;
  }

  Matrix x = batch;
  for (size_t l = 0; l < enc.blocks.size(); ++l) {
    auto& block = enc.blocks[l];
    const int n = block.bn.width();
    Matrix z(B, n);
    linear_forward(block.linear, block.adapter, x, z);

    std::vector<double> mu(n, 0.0), inv_std(n, 0.0);
    if (training) {
      for (int b = 0; b < B; ++b) {
        const double* zb = z.row(b);
        for (int j = 0; j < n; ++j) mu[j] += zb[j];
      }
      for (int j = 0; j < n; ++j) mu[j] /= B;
      std::vector<double> var(n, 0.0);
      for (int b = 0; b < B; ++b) {
        const double* zb = z.row(b);
        for (int j = 0; j < n; ++j) {
          const double d = zb[j] - mu[j];
          var[j] += d * d;
        }
      }
      for (int j = 0; j < n; ++j) var[j] /= B;  // biased, matches running_var
      for (int j = 0; j < n; ++j) {
        inv_std[j] = 1.0 / std::sqrt(var[j] + block.bn.eps);
        block.bn.running_mean[j] = (1.0 - block.bn.momentum) *
                                       block.bn.running_mean[j] +
                                   block.bn.momentum * mu[j];
        block.bn.running_var[j] =
            (1.0 - block.bn.momentum) * block.bn.running_var[j] +
            block.bn.momentum * var[j];
      }
    } else {
      for (int j = 0; j < n; ++j) {
        mu[j] = block.bn.running_mean[j];
        inv_std[j] = 1.0 / std::sqrt(block.bn.running_var[j] + block.bn.eps);
      }
    }

    Matrix xhat(B, n), act(B, n);
    for (int b = 0; b < B; ++b) {
      const double* zb = z.row(b);
      double* xh = xhat.row(b);
      double* ab = act.row(b);
      for (int j = 0; j < n; ++j) {
        xh[j] = (zb[j] - mu[j]) * inv_std[j];
        const double y = block.bn.gamma[j] * xh[j] + block.bn.beta[j];
        ab[j] = y > 0.0 ? y : 0.0;  // ReLU
      }
    }

    if (cache) {
      auto& bc = cache->blocks[l];
      bc.input = std::move(x);
      bc.xhat = xhat;
      bc.mu = std::move(mu);
      bc.inv_std = std::move(inv_std);
      // bn_out reconstructed from xhat where needed; keep pre-ReLU values
      bc.bn_out = Matrix(B, n);
      for (int b = 0; b < B; ++b) {
        const double* xh = xhat.row(b);
        double* bo = bc.bn_out.row(b);
        for (int j = 0; j < n; ++j) {
          bo[j] = block.bn.gamma[j] * xh[j] + block.bn.beta[j];
        }
      }
    }
    x = std::move(act);
  }

  Matrix out(B, enc.embed_dim());
  linear_forward(enc.output_layer, enc.output_adapter, x, out);
  if (cache) cache->output_in = std::move(x);
  if (!all_finite(out)) {
    throw NumericalError("encoder_forward: non-finite activation");
  }
  return out;
}

Matrix encoder_eval(const MLPEncoder& enc, const Matrix& batch) {
  // Shares semantics with encoder_forward(training=false) but keeps the
  // encoder const for scoring paths.
  auto& mutable_enc = const_cast<MLPEncoder&>(enc);
  return encoder_forward(mutable_enc, batch, false, nullptr);
}

EncoderGrads encoder_backward(const MLPEncoder& enc, const ForwardCache& cache,
                              const Matrix& upstream) {
  if (!cache.training) {
    throw ProtocolError("encoder_backward: cache must come from training mode");
  }
  if (upstream.rows != cache.batch || upstream.cols != enc.embed_dim()) {
    throw ProtocolError("encoder_backward: upstream gradient shape mismatch");
  }
  const int B = cache.batch;

  EncoderGrads grads;
  grads.blocks.resize(enc.blocks.size());
  for (size_t l = 0; l < enc.blocks.size(); ++l) {
    const auto& block = enc.blocks[l];
    auto& g = grads.blocks[l];
    g.linear.weight = Matrix(block.linear.out_dim(), block.linear.in_dim());
    g.linear.bias.assign(block.linear.out_dim(), 0.0);
    g.gamma.assign(block.bn.width(), 0.0);
    g.beta.assign(block.bn.width(), 0.0);
    g.adapter = Matrix(block.adapter.weight.rows, block.adapter.weight.cols);
  }
  grads.output.weight =
      Matrix(enc.output_layer.out_dim(), enc.output_layer.in_dim());
  grads.output.bias.assign(enc.output_layer.out_dim(), 0.0);
  grads.output_adapter =
      Matrix(enc.output_adapter.weight.rows, enc.output_adapter.weight.cols);

  // Output layer.
  Matrix dx(B, enc.output_layer.in_dim());
  linear_backward(enc.output_layer, enc.output_adapter, cache.output_in,
                  upstream, grads.output, grads.output_adapter, dx);

  // Blocks in reverse: ReLU -> BN (through batch stats) -> linear.
  for (int l = static_cast<int>(enc.blocks.size()) - 1; l >= 0; --l) {
    const auto& block = enc.blocks[l];
    const auto& bc = cache.blocks[l];
    auto& g = grads.blocks[l];
    const int n = block.bn.width();

    // ReLU: pass gradient where the pre-ReLU activation was positive.
    Matrix dbn(B, n);
    for (int b = 0; b < B; ++b) {
      const double* bo = bc.bn_out.row(b);
      const double* dxb = dx.row(b);
      double* db = dbn.row(b);
      for (int j = 0; j < n; ++j) db[j] = bo[j] > 0.0 ? dxb[j] : 0.0;
    }

    // BN backward with batch statistics:
    //   dxhat = dy * gamma
    //   dz_i = inv_std * (dxhat_i - mean(dxhat) - xhat_i * mean(dxhat*xhat))
    std::vector<double> sum_dxhat(n, 0.0), sum_dxhat_xhat(n, 0.0);
    for (int b = 0; b < B; ++b) {
      const double* db = dbn.row(b);
      const double* xh = bc.xhat.row(b);
      for (int j = 0; j < n; ++j) {
        const double dxhat = db[j] * block.bn.gamma[j];
        sum_dxhat[j] += dxhat;
        sum_dxhat_xhat[j] += dxhat * xh[j];
        g.gamma[j] += db[j] * xh[j];
        g.beta[j] += db[j];
      }
    }
    Matrix dz(B, n);
    for (int b = 0; b < B; ++b) {
      const double* db = dbn.row(b);
      const double* xh = bc.xhat.row(b);
      double* dzb = dz.row(b);
      for (int j = 0; j < n; ++j) {
        const double dxhat = db[j] * block.bn.gamma[j];
        dzb[j] = bc.inv_std[j] *
                 (dxhat - sum_dxhat[j] / B - xh[j] * sum_dxhat_xhat[j] / B);
      }
    }

    dx = Matrix(B, block.linear.in_dim());
    linear_backward(block.linear, block.adapter, bc.input, dz, g.linear,
                    g.adapter, dx);
  }

  return grads;
}

namespace {

long long linear_count(const LinearLayer& l) {
  return static_cast<long long>(l.weight.size()) +
         static_cast<long long>(l.bias.size());
}

}  // namespace

ParamCount set_finetune_mode(MLPEncoder& enc, FinetuneMode mode) {
  enc.mode = mode;
  const size_t L = enc.blocks.size();
  const size_t first_adapted = L >= 2 ? L - 2 : 0;
  for (size_t l = 0; l < L; ++l) {
    enc.blocks[l].adapter.enabled =
        mode == FinetuneMode::adapter && l >= first_adapted;
  }
  enc.output_adapter.enabled = mode == FinetuneMode::adapter;
  return count_params(enc);
}

ParamCount count_params(const MLPEncoder& enc) {
  ParamCount pc;
  const size_t L = enc.blocks.size();
  const size_t first_partial = L >= 2 ? L - 2 : 0;

  for (size_t l = 0; l < L; ++l) {
    const auto& block = enc.blocks[l];
    const long long lin = linear_count(block.linear);
    const long long bn = 2LL * block.bn.width();  // gamma + beta
    pc.total += lin + bn;

    const std::string tag = "block" + std::to_string(l);
    const bool block_tuned = enc.mode == FinetuneMode::full ||
                             (enc.mode == FinetuneMode::partial &&
                              l >= first_partial);
    if (block_tuned) {
      pc.trainable += lin + bn;
      pc.trainable_by_layer.emplace_back(tag + ".linear", lin);
      pc.trainable_by_layer.emplace_back(tag + ".bn", bn);
    } else if (enc.mode == FinetuneMode::bn_only) {
      pc.trainable += bn;
      pc.trainable_by_layer.emplace_back(tag + ".bn", bn);
    }
    if (block.adapter.enabled) {
      const long long ad = static_cast<long long>(block.adapter.weight.size());
      pc.total += ad;
      if (enc.mode == FinetuneMode::adapter) {
        pc.trainable += ad;
        pc.trainable_by_layer.emplace_back(tag + ".adapter", ad);
      }
    }
  }

  const long long out = linear_count(enc.output_layer);
  pc.total += out;
  if (enc.mode == FinetuneMode::full || enc.mode == FinetuneMode::partial) {
    pc.trainable += out;
    pc.trainable_by_layer.emplace_back("output.linear", out);
  }
  if (enc.output_adapter.enabled) {
    const long long ad =
        static_cast<long long>(enc.output_adapter.weight.size());
    pc.total += ad;
    if (enc.mode == FinetuneMode::adapter) {
      pc.trainable += ad;
      pc.trainable_by_layer.emplace_back("output.adapter", ad);
    }
  }
  return pc;
}

}  // namespace osfi
