#pragma once

#include <cstdint>
#include <vector>

#include "osfi/encoder.hpp"
#include "osfi/head.hpp"
#include "osfi/protocol.hpp"

namespace osfi {

struct TrainConfig {
  int epochs = 20;
  int batch_size = 128;
  double learning_rate = 0.0;  // 0 = pick the regime default
  double input_jitter = 0.0;   // isotropic Gaussian sigma on inputs, off by default
  uint64_t seed = 1;
};

// 1e-3 for bn_only/partial, 1e-4 for full/adapter.
double default_learning_rate(FinetuneMode mode);

struct TrainTrace {
  std::vector<double> epoch_loss;      // mean per-step loss per epoch
  std::vector<double> epoch_accuracy;  // eval-mode train accuracy per epoch
  int epochs_run = 0;
  bool reached_target = false;  // only meaningful with an accuracy target
};

// Joint fine-tuning of the encoder (under its regime's trainable mask) and
// the classifier with the CosFace loss, Adam, and per-step cosine annealing
// over epochs * ceil(n / batch) steps. Deterministic per seed.
TrainTrace finetune(MLPEncoder& enc, ClassifierWeights& head,
                    const std::vector<LabeledEmbedding>& gallery,
                    const TrainConfig& cfg, FinetuneMode mode,
                    const CosFaceConfig& loss_cfg);

// Full-network training on the pretrain identities; stops early once the
// eval-mode train accuracy reaches target_accuracy.
TrainTrace pretrain(MLPEncoder& enc, ClassifierWeights& head,
                    const RawDataset& data, const TrainConfig& cfg,
                    const CosFaceConfig& loss_cfg,
                    double target_accuracy = 0.99);

// Eval-mode embeddings, unit-normalized, labels preserved.
std::vector<LabeledEmbedding> embed_normalized(
    const MLPEncoder& enc, const std::vector<LabeledEmbedding>& samples);

}  // namespace osfi
