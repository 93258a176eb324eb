#include "osfi/head.hpp"

#include <algorithm>
#include <cmath>

#include "osfi/errors.hpp"
#include "osfi/geometry.hpp"
#include "osfi/rng.hpp"

namespace osfi {

namespace {
constexpr double kDegenerateNorm = 1e-9;
}

ClassifierWeights init_random(int num_classes, int dim, uint64_t seed) {
  if (num_classes < 1 || dim < 1) {
    throw ConfigError("init_random: C and d must be >= 1");
  }
  Rng rng(seed);
  ClassifierWeights cw;
  cw.W = Matrix(num_classes, dim);
  const double sigma = 1.0 / std::sqrt(static_cast<double>(dim));
  for (auto& w : cw.W.a) w = rng.normal() * sigma;
  return cw;
}

ClassifierWeights init_weight_imprint(
    const std::vector<LabeledEmbedding>& features, int num_classes) {
  const PrototypeSet protos = build_prototypes(features);
  if (protos.size() != num_classes) {
    throw ProtocolError("init_weight_imprint: expected " +
                        std::to_string(num_classes) + " classes, found " +
                        std::to_string(protos.size()));
  }
  for (int c = 0; c < num_classes; ++c) {
    if (protos.labels[c] != c) {
      throw ProtocolError("init_weight_imprint: labels must cover 0..C-1");
    }
  }
  ClassifierWeights cw;
  cw.W = Matrix(num_classes, protos.dim());
  for (int c = 0; c < num_classes; ++c) {
    std::copy(protos.prototypes[c].begin(), protos.prototypes[c].end(),
              cw.W.row(c));
  }
  return cw;
}

SoftmaxCEResult softmax_ce_loss(const Matrix& logits,
                                const std::vector<int>& labels) {
  const int B = logits.rows, C = logits.cols;
  if (static_cast<int>(labels.size()) != B) {
    throw ProtocolError("softmax_ce_loss: labels/batch mismatch");
  }
  SoftmaxCEResult res;
  res.dlogits = Matrix(B, C);
  double total = 0.0;
  for (int b = 0; b < B; ++b) {
    const int y = labels[b];
    if (y < 0 || y >= C) {
      throw ProtocolError("softmax_ce_loss: label out of range");
    }
    const double* z = logits.row(b);
    double zmax = z[0];
    for (int c = 1; c < C; ++c) zmax = std::max(zmax, z[c]);
    double denom = 0.0;
    for (int c = 0; c < C; ++c) denom += std::exp(z[c] - zmax);
    total += -(z[y] - zmax) + std::log(denom);

    double* d = res.dlogits.row(b);
    for (int c = 0; c < C; ++c) {
      d[c] = std::exp(z[c] - zmax) / denom / B;  // softmax - onehot, averaged
    }
    d[y] -= 1.0 / B;
  }
  res.loss = total / B;
  return res;
}

HeadLossGrads cosface_loss(const Matrix& features,
                           const std::vector<int>& labels, const Matrix& W,
                           const CosFaceConfig& cfg) {
  const int B = features.rows, d = features.cols, C = W.rows;
  if (W.cols != d) throw ProtocolError("cosface_loss: dimension mismatch");
  if (static_cast<int>(labels.size()) != B) {
    throw ProtocolError("cosface_loss: labels/batch mismatch");
  }

  // Normalize features and weight rows; cosines are the pairwise dots.
  std::vector<double> fnorm(B), wnorm(C);
  Matrix fu(B, d), wu(C, d);
  for (int b = 0; b < B; ++b) {
    double s = 0.0;
    const double* f = features.row(b);
    for (int i = 0; i < d; ++i) s += f[i] * f[i];
    fnorm[b] = std::sqrt(s);
    if (!(fnorm[b] > kDegenerateNorm)) {
      throw DegenerateInputError("cosface_loss: zero-norm feature in batch");
    }
    double* u = fu.row(b);
    for (int i = 0; i < d; ++i) u[i] = f[i] / fnorm[b];
  }
  for (int c = 0; c < C; ++c) {
    double s = 0.0;
    const double* w = W.row(c);
    for (int i = 0; i < d; ++i) s += w[i] * w[i];
    wnorm[c] = std::sqrt(s);
    if (!(wnorm[c] > kDegenerateNorm)) {
      throw DegenerateInputError("cosface_loss: zero-norm weight row " +
                                 std::to_string(c));
    }
    double* u = wu.row(c);
    for (int i = 0; i < d; ++i) u[i] = w[i] / wnorm[c];
  }

  Matrix logits(B, C);
  for (int b = 0; b < B; ++b) {
    const int y = labels[b];
    if (y < 0 || y >= C) throw ProtocolError("cosface_loss: label out of range");
    const double* u = fu.row(b);
    double* z = logits.row(b);
    for (int c = 0; c < C; ++c) {
      double cosv = 0.0;
      const double* w = wu.row(c);
      for (int i = 0; i < d; ++i) cosv += u[i] * w[i];
      z[c] = cfg.scale * (c == y ? cosv - cfg.margin : cosv);
    }
  }

  const SoftmaxCEResult ce = softmax_ce_loss(logits, labels);

  // Chain rule back to the raw tensors. dcos already includes the batch mean
  // and the scale (margin shifts do not affect the gradient of cos).
  HeadLossGrads out;
  out.loss = ce.loss;
  out.dfeatures = Matrix(B, d);
  out.dweights = Matrix(C, d);

  // d/du accumulations in the normalized spaces.
  Matrix dfu(B, d), dwu(C, d);
  for (int b = 0; b < B; ++b) {
    const double* dz = ce.dlogits.row(b);
    const double* u = fu.row(b);
    double* dfb = dfu.row(b);
    for (int c = 0; c < C; ++c) {
      const double dcos = cfg.scale * dz[c];
      if (dcos == 0.0) continue;
      const double* w = wu.row(c);
      double* dwc = dwu.row(c);
      for (int i = 0; i < d; ++i) {
        dfb[i] += dcos * w[i];
        dwc[i] += dcos * u[i];
      }
    }
  }
  // Through the normalization: dx = (dy - (dy . u) u) / ||x||.
  for (int b = 0; b < B; ++b) {
    const double* u = fu.row(b);
    const double* dy = dfu.row(b);
    double proj = 0.0;
    for (int i = 0; i < d; ++i) proj += dy[i] * u[i];
    double* dxb = out.dfeatures.row(b);
    for (int i = 0; i < d; ++i) dxb[i] = (dy[i] - proj * u[i]) / fnorm[b];
  }
  for (int c = 0; c < C; ++c) {
    const double* u = wu.row(c);
    const double* dy = dwu.row(c);
    double proj = 0.0;
    for (int i = 0; i < d; ++i) proj += dy[i] * u[i];
    double* dwc = out.dweights.row(c);
    for (int i = 0; i < d; ++i) dwc[i] = (dy[i] - proj * u[i]) / wnorm[c];
  }
  return out;
}

double cosine_accuracy(const std::vector<LabeledEmbedding>& features,
                       const Matrix& W) {
  if (features.empty()) return 0.0;
  const int C = W.rows, d = W.cols;
  std::vector<double> wnorm(C);
  for (int c = 0; c < C; ++c) {
    double s = 0.0;
    const double* w = W.row(c);
    for (int i = 0; i < d; ++i) s += w[i] * w[i];
    wnorm[c] = std::sqrt(s);
  }
  long correct = 0;
  for (const auto& e : features) {
    int best = -1;
    double best_sim = 0.0;
    for (int c = 0; c < C; ++c) {
      const double* w = W.row(c);
      double s = 0.0;
      for (int i = 0; i < d; ++i) s += w[i] * e.vec[i];
      const double sim = wnorm[c] > 0.0 ? s / wnorm[c] : s;
      if (best < 0 || sim > best_sim) {
        best = c;
        best_sim = sim;
      }
    }
    if (best == e.label) ++correct;
  }
  return static_cast<double>(correct) / features.size();
}

LinearProbeResult init_linear_probe(
    const std::vector<LabeledEmbedding>& features, int num_classes,
    const CosFaceConfig& loss_cfg, const LinearProbeConfig& cfg) {
  if (features.empty()) throw ProtocolError("init_linear_probe: no features");
  const int d = static_cast<int>(features.front().vec.size());

  LinearProbeResult res;
  res.weights = init_random(num_classes, d, cfg.seed);
  res.final_accuracy = cosine_accuracy(features, res.weights.W);

  Rng rng(cfg.seed);
  std::vector<double> m, v;
  m.assign(res.weights.W.size(), 0.0);
  v.assign(res.weights.W.size(), 0.0);
  long step = 0;

  std::vector<size_t> order(features.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < cfg.epoch_cap; ++epoch) {
    rng.shuffle(order);
    for (size_t start = 0; start < order.size();
         start += static_cast<size_t>(cfg.batch_size)) {
      const size_t stop =
          std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
      const int B = static_cast<int>(stop - start);
      Matrix batch(B, d);
      std::vector<int> labels(B);
      for (int b = 0; b < B; ++b) {
        const auto& e = features[order[start + b]];
        std::copy(e.vec.begin(), e.vec.end(), batch.row(b));
        labels[b] = e.label;
      }
      const HeadLossGrads g =
          cosface_loss(batch, labels, res.weights.W, loss_cfg);
      // Adam on W only, constant learning rate.
      ++step;
      const double bc1 = 1.0 - std::pow(0.9, step);
      const double bc2 = 1.0 - std::pow(0.999, step);
      for (size_t i = 0; i < res.weights.W.size(); ++i) {
        const double grad = g.dweights.a[i];
        m[i] = 0.9 * m[i] + 0.1 * grad;
        v[i] = 0.999 * v[i] + 0.001 * grad * grad;
        res.weights.W.a[i] -=
            cfg.learning_rate * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + 1e-8);
      }
    }
    res.epochs_run = epoch + 1;
    res.final_accuracy = cosine_accuracy(features, res.weights.W);
    if (res.final_accuracy >= cfg.target_accuracy) {
      res.converged = true;
      break;
    }
  }
  return res;
}

}  // namespace osfi
