#pragma once

#include <cstdint>
#include <vector>

#include "osfi/embedding.hpp"
#include "osfi/matrix.hpp"

namespace osfi {

// C-way classifier over encoder features; each row of W acts as a class
// center. Rows are re-normalized inside the cosine logit computation, never
// stored normalized (except by imprinting, which produces unit rows).
struct ClassifierWeights {
  Matrix W;  // [C x d]
  int num_classes() const { return W.rows; }
  int dim() const { return W.cols; }
};

struct CosFaceConfig {
  double scale = 32.0;
  double margin = 0.4;
};

// Seeded Gaussian(0, 1/d) entries.
ClassifierWeights init_random(int num_classes, int dim, uint64_t seed);

// Row c = re-normalized mean of class c's normalized features; identical to
// build_prototypes on the same inputs. Labels must cover 0..C-1.
ClassifierWeights init_weight_imprint(
    const std::vector<LabeledEmbedding>& features, int num_classes);

struct LinearProbeResult {
  ClassifierWeights weights;
  bool converged = false;   // reached the train-accuracy target
  int epochs_run = 0;
  double final_accuracy = 0.0;
};

struct LinearProbeConfig {
  double target_accuracy = 0.95;
  int epoch_cap = 500;
  int batch_size = 128;
  double learning_rate = 1e-3;
  uint64_t seed = 0;
};

// Trains only W with the CosFace loss on frozen features, stopping once the
// train accuracy reaches the target. Hitting the epoch cap is flagged, not
// fatal.
LinearProbeResult init_linear_probe(
    const std::vector<LabeledEmbedding>& features, int num_classes,
    const CosFaceConfig& loss_cfg, const LinearProbeConfig& cfg);

struct HeadLossGrads {
  double loss = 0.0;
  Matrix dfeatures;  // [B x d], w.r.t. the raw (unnormalized) features
  Matrix dweights;   // [C x d], w.r.t. the raw weight rows
};

// Mean cross-entropy over margin-adjusted scaled cosine logits:
// logit_j = s * (cos(f, w_j) - margin * [j == y]).
HeadLossGrads cosface_loss(const Matrix& features,
                           const std::vector<int>& labels, const Matrix& W,
                           const CosFaceConfig& cfg);

struct SoftmaxCEResult {
  double loss = 0.0;
  Matrix dlogits;  // [B x C]
};

// Numerically stabilized softmax cross-entropy (max-subtraction).
SoftmaxCEResult softmax_ce_loss(const Matrix& logits,
                                const std::vector<int>& labels);

// Rank-1 accuracy of cosine classification of features against W rows.
double cosine_accuracy(const std::vector<LabeledEmbedding>& features,
                       const Matrix& W);

}  // namespace osfi
